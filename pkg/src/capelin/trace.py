"""Workload traces: ingestion, canonical serialization, and load-fraction sampling.

A workload is a set of VMs, each with static metadata (cores, memory,
submit time) and a CPU demand series aggregated into 300-second slices.
Demand is expressed in MHz averaged over a slice; 1 MHz sustained for one
second counts as 1 MFLOP, so one slice of `u` MHz contributes `u * 300`
MFLOP of load.
"""

from __future__ import annotations

import csv
import logging
import random
from dataclasses import dataclass, replace
from pathlib import Path

log = logging.getLogger("capelin.trace")

SLICE_S = 300

# Validation ceiling for per-core demand; exceeding it is suspicious but
# not fatal (warning), negative demand is a hard error.
MAX_MODELED_CLOCK_MHZ = 5000.0

META_HEADER = ["vm_id", "submit_time_s", "core_count", "memory_mb"]
USAGE_HEADER = ["vm_id", "slice_start_s", "usage_mhz"]
PLACEMENT_HEADER = ["vm_id", "host_id"]


class TraceParseError(ValueError):
    """A trace file violates the format contract; message names file and row."""


@dataclass(frozen=True)
class VmSliceUsage:
    slice_start: int
    usage_mhz: float


@dataclass(frozen=True)
class VmSpec:
    """One VM: metadata plus its per-slice CPU demand series."""

    vm_id: str
    submit_time: int
    core_count: int
    memory_mb: int
    slice_usages: tuple[VmSliceUsage, ...]

    def __post_init__(self):
        if self.core_count < 1:
            raise ValueError(f"vm {self.vm_id}: core_count must be >= 1")
        if self.memory_mb < 0:
            raise ValueError(f"vm {self.vm_id}: memory_mb must be >= 0")
        prev = None
        for s in self.slice_usages:
            if s.usage_mhz < 0:
                raise ValueError(f"vm {self.vm_id}: negative usage at {s.slice_start}")
            if (s.slice_start - self.submit_time) % SLICE_S != 0:
                raise ValueError(
                    f"vm {self.vm_id}: slice {s.slice_start} not aligned to "
                    f"{SLICE_S}s grid from submit time {self.submit_time}"
                )
            if prev is not None and s.slice_start <= prev:
                raise ValueError(f"vm {self.vm_id}: slice starts not strictly increasing")
            prev = s.slice_start

    @property
    def n_slices(self) -> int:
        return len(self.slice_usages)

    @property
    def end_time(self) -> int:
        """End of the last slice, or the submit time for an empty series."""
        if not self.slice_usages:
            return self.submit_time
        return self.slice_usages[-1].slice_start + SLICE_S

    @property
    def total_load_mflop(self) -> float:
        return sum(s.usage_mhz * SLICE_S for s in self.slice_usages)


@dataclass
class Workload:
    """A named set of VMs with unique ids, kept sorted by vm_id."""

    name: str
    vms: tuple[VmSpec, ...]

    def __post_init__(self):
        self.vms = tuple(sorted(self.vms, key=lambda v: v.vm_id))
        seen = set()
        for vm in self.vms:
            if vm.vm_id in seen:
                raise ValueError(f"duplicate vm_id {vm.vm_id!r} in workload {self.name!r}")
            seen.add(vm.vm_id)

    @property
    def total_load_mflop(self) -> float:
        return sum(vm.total_load_mflop for vm in self.vms)

    @property
    def duration_s(self) -> int:
        """Horizon covered by the trace: latest slice end over all VMs."""
        return max((vm.end_time for vm in self.vms), default=0)

    def vm_ids(self) -> list[str]:
        return [vm.vm_id for vm in self.vms]


def _fill_gaps(vm_id: str, submit: int, rows: list[tuple[int, float]]) -> tuple[VmSliceUsage, ...]:
    # A VM is idle, not absent, between submit and its last observed slice.
    if not rows:
        return ()
    by_index = {}
    for start, usage in rows:
        by_index[(start - submit) // SLICE_S] = usage
    last = max(by_index)
    return tuple(
        VmSliceUsage(submit + i * SLICE_S, by_index.get(i, 0.0)) for i in range(last + 1)
    )


def load_private_trace(path: str | Path) -> Workload:
    """Load a canonical trace directory (meta.csv + usage.csv).

    Usage rows are attached to their VmSpec sorted by slice start; gaps in
    a VM's series become 0-MHz slices so lifetimes stay contiguous.
    """
    root = Path(path)
    meta_path = root / "meta.csv"
    usage_path = root / "usage.csv"
    if not meta_path.is_file():
        raise TraceParseError(f"{meta_path}: missing metadata file")
    if not usage_path.is_file():
        raise TraceParseError(f"{usage_path}: missing usage file")

    meta: dict[str, tuple[int, int, int]] = {}
    with open(meta_path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != META_HEADER:
            raise TraceParseError(f"{meta_path}: expected header {','.join(META_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            vm_id = row["vm_id"]
            if vm_id in meta:
                raise TraceParseError(f"{meta_path}:{lineno}: duplicate vm_id {vm_id!r}")
            try:
                meta[vm_id] = (
                    int(row["submit_time_s"]),
                    int(row["core_count"]),
                    int(row["memory_mb"]),
                )
            except (TypeError, ValueError) as exc:
                raise TraceParseError(f"{meta_path}:{lineno}: {exc}") from exc

    usage_rows: dict[str, list[tuple[int, float]]] = {vm_id: [] for vm_id in meta}
    with open(usage_path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != USAGE_HEADER:
            raise TraceParseError(f"{usage_path}: expected header {','.join(USAGE_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            vm_id = row["vm_id"]
            if vm_id not in meta:
                raise TraceParseError(f"{usage_path}:{lineno}: unknown vm_id {vm_id!r}")
            try:
                start = int(row["slice_start_s"])
                usage = float(row["usage_mhz"])
            except (TypeError, ValueError) as exc:
                raise TraceParseError(f"{usage_path}:{lineno}: {exc}") from exc
            if usage < 0:
                raise TraceParseError(f"{usage_path}:{lineno}: negative usage_mhz")
            submit = meta[vm_id][0]
            if start < submit or (start - submit) % SLICE_S != 0:
                raise TraceParseError(
                    f"{usage_path}:{lineno}: slice_start_s {start} not on the "
                    f"{SLICE_S}s grid from submit time {submit}"
                )
            rows = usage_rows[vm_id]
            if rows and start <= rows[-1][0]:
                raise TraceParseError(
                    f"{usage_path}:{lineno}: non-monotone slice_start_s for vm {vm_id!r}"
                )
            rows.append((start, usage))

    vms = []
    for vm_id, (submit, cores, mem) in meta.items():
        slices = _fill_gaps(vm_id, submit, usage_rows[vm_id])
        for s in slices:
            if s.usage_mhz > cores * MAX_MODELED_CLOCK_MHZ:
                log.warning(
                    "vm %s: usage %.1f MHz exceeds %d cores x %.0f MHz",
                    vm_id, s.usage_mhz, cores, MAX_MODELED_CLOCK_MHZ,
                )
        vms.append(VmSpec(vm_id, submit, cores, mem, slices))
    return Workload(name=root.name, vms=tuple(vms))


def save_trace(workload: Workload, path: str | Path) -> None:
    """Write a workload as a canonical trace directory (all slices explicit)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "meta.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(META_HEADER)
        for vm in workload.vms:
            w.writerow([vm.vm_id, vm.submit_time, vm.core_count, vm.memory_mb])
    with open(root / "usage.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(USAGE_HEADER)
        for vm in workload.vms:
            for s in vm.slice_usages:
                w.writerow([vm.vm_id, s.slice_start, repr(s.usage_mhz)])


def _parse_azure_table(path: Path) -> dict[str, tuple[int, int, int]]:
    # Headerless public schema: vmid, subscriptionid, deploymentid, vmcreated,
    # vmdeleted, maxcpu, avgcpu, p95maxcpu, vmcategory, corecount, memory_gb.
    meta: dict[str, tuple[int, int, int]] = {}
    with open(path, newline="", encoding="utf-8") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row:
                continue
            if lineno == 1 and row[0].strip().lower() == "vmid":
                continue  # tolerate a header line
            if len(row) < 11:
                raise TraceParseError(f"{path}:{lineno}: expected 11 columns, got {len(row)}")
            vm_id = row[0].strip()
            if vm_id in meta:
                raise TraceParseError(f"{path}:{lineno}: duplicate vmid {vm_id!r}")
            try:
                created = int(float(row[3]))
                cores = int(row[9])
                memory_mb = int(round(float(row[10]) * 1024))
            except ValueError as exc:
                raise TraceParseError(f"{path}:{lineno}: {exc}") from exc
            if cores < 1:
                raise TraceParseError(f"{path}:{lineno}: core count must be >= 1")
            meta[vm_id] = (created, cores, memory_mb)
    return meta


def load_azure_trace(path: str | Path, assumed_clock_mhz: float = 3000.0) -> Workload:
    """Load a public-cloud trace directory (vmtable.csv + readings).

    Utilization readings range over [0, core_count]; each is scaled by the
    assumed clock to MHz and re-bucketed into 300 s slices by averaging.
    """
    root = Path(path)
    table_path = root / "vmtable.csv"
    if not table_path.is_file():
        raise TraceParseError(f"{table_path}: missing vmtable file")
    reading_files = sorted(root.glob("vm_cpu_readings*.csv"))
    if (root / "readings.csv").is_file():
        reading_files.insert(0, root / "readings.csv")
    if not reading_files:
        raise TraceParseError(f"{root}: no readings files (readings.csv or vm_cpu_readings*.csv)")

    meta = _parse_azure_table(table_path)

    # slice index -> (sum, count) per VM, for mean re-bucketing
    buckets: dict[str, dict[int, list[float]]] = {vm_id: {} for vm_id in meta}
    for rpath in reading_files:
        with open(rpath, newline="", encoding="utf-8") as f:
            for lineno, row in enumerate(csv.reader(f), start=1):
                if not row:
                    continue
                if lineno == 1 and row[0].strip().lower() == "timestamp":
                    continue
                if len(row) < 5:
                    raise TraceParseError(f"{rpath}:{lineno}: expected 5 columns, got {len(row)}")
                vm_id = row[1].strip()
                if vm_id not in meta:
                    raise TraceParseError(f"{rpath}:{lineno}: unknown vmid {vm_id!r}")
                try:
                    ts = int(float(row[0]))
                    util = float(row[4])
                except ValueError as exc:
                    raise TraceParseError(f"{rpath}:{lineno}: {exc}") from exc
                created, cores, _ = meta[vm_id]
                if util < 0 or util > cores:
                    raise TraceParseError(
                        f"{rpath}:{lineno}: utilization {util} outside [0, {cores}]"
                    )
                if ts < created:
                    raise TraceParseError(f"{rpath}:{lineno}: reading before VM creation")
                idx = (ts - created) // SLICE_S
                buckets[vm_id].setdefault(idx, []).append(util)

    vms = []
    for vm_id, (created, cores, memory_mb) in meta.items():
        rows = [
            (created + idx * SLICE_S, (sum(vals) / len(vals)) * assumed_clock_mhz)
            for idx, vals in sorted(buckets[vm_id].items())
        ]
        vms.append(VmSpec(vm_id, created, cores, memory_mb, _fill_gaps(vm_id, created, rows)))
    return Workload(name=root.name, vms=tuple(vms))


def _sample_vms(vms: list[VmSpec], fraction: float, total_load: float, rng: random.Random) -> list[VmSpec]:
    # Repeatedly remove a uniformly random VM; stop (excluding it) as soon
    # as accepting it would push the selected load share above `fraction`.
    pool = list(vms)
    selected: list[VmSpec] = []
    load = 0.0
    while pool:
        vm = pool.pop(rng.randrange(len(pool)))
        vm_load = vm.total_load_mflop
        if (load + vm_load) / total_load > fraction:
            return selected
        load += vm_load
        selected.append(vm)
    return selected


def sample_trace(workload: Workload, fraction: float, total_load: float, seed: int) -> Workload:
    """Sample VMs until the selected load reaches `fraction` of `total_load`.

    `total_load` is the reference total (the full trace's load), which the
    caller passes explicitly so sub-samples of different traces can share
    one denominator. Deterministic for a given seed; the draw order is a
    uniform removal from the remaining set.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    if total_load <= 0:
        raise ValueError(f"total_load must be positive, got {total_load}")
    rng = random.Random(seed)
    selected = _sample_vms(list(workload.vms), fraction, total_load, rng)
    return Workload(name=f"{workload.name}[{fraction:g}]", vms=tuple(selected))


def _prefixed(vm: VmSpec, prefix: str) -> VmSpec:
    return replace(vm, vm_id=f"{prefix}:{vm.vm_id}")


def sample_multiple_traces(
    private: Workload,
    frac_pri: float,
    public: Workload,
    frac_pub: float,
    seed: int,
) -> Workload:
    """Combine a private and a public trace by load-fraction sampling.

    Pre-samples 1% of the public VMs uniformly, then samples both sides
    against the private trace's total load as the shared denominator.
    VM ids are prefixed by source ("pri:"/"pub:") to guarantee uniqueness.
    Both traces must already be truncated to the same duration.
    """
    for frac, name in ((frac_pri, "frac_pri"), (frac_pub, "frac_pub")):
        if not 0.0 <= frac <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {frac}")
    if private.duration_s != public.duration_s:
        raise ValueError(
            f"duration mismatch: private {private.duration_s}s vs public "
            f"{public.duration_s}s (truncate both to equal length first)"
        )
    rng = random.Random(seed)
    pub_pool = list(public.vms)
    presample_n = int(round(0.01 * len(pub_pool)))
    pub_presample = rng.sample(pub_pool, presample_n)
    total_load = private.total_load_mflop
    if total_load <= 0:
        raise ValueError("private trace has no load; cannot define the sampling denominator")
    sel_pri = _sample_vms(list(private.vms), frac_pri, total_load, rng)
    sel_pub = _sample_vms(pub_presample, frac_pub, total_load, rng)
    vms = tuple(_prefixed(vm, "pri") for vm in sel_pri) + tuple(
        _prefixed(vm, "pub") for vm in sel_pub
    )
    return Workload(name=f"{private.name}+{public.name}", vms=vms)


def truncate_workload(workload: Workload, duration_s: int) -> Workload:
    """Clip a workload at a horizon: drop later submissions, cut series."""
    if duration_s < 0 or duration_s % SLICE_S != 0:
        raise ValueError(f"duration_s must be a non-negative multiple of {SLICE_S}")
    vms = []
    for vm in workload.vms:
        if vm.submit_time >= duration_s:
            continue
        kept = tuple(s for s in vm.slice_usages if s.slice_start + SLICE_S <= duration_s)
        vms.append(replace(vm, slice_usages=kept))
    return Workload(name=workload.name, vms=tuple(vms))


@dataclass(frozen=True)
class WorkloadRef:
    """A workload given by reference: trace directory plus sampling policy.

    `seed_policy` is "repetition" (sample with the repetition index) or a
    fixed integer seed. `fraction` 1.0 means the whole trace.
    """

    path: str
    format: str = "canonical"  # or "azure"
    fraction: float = 1.0
    truncate_s: int | None = None
    seed_policy: str | int = "repetition"

    def __post_init__(self):
        if self.format not in ("canonical", "azure"):
            raise ValueError(f"unknown trace format {self.format!r}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"fraction must be in [0, 1], got {self.fraction}")
        if isinstance(self.seed_policy, str) and self.seed_policy != "repetition":
            raise ValueError(f"seed_policy must be 'repetition' or an integer")


def load_workload_ref(ref: WorkloadRef) -> Workload:
    """Load (and optionally truncate) the trace a WorkloadRef points to.

    Fraction sampling is NOT applied here; it is per-repetition.
    """
    if ref.format == "azure":
        workload = load_azure_trace(ref.path)
    else:
        workload = load_private_trace(ref.path)
    if ref.truncate_s is not None:
        workload = truncate_workload(workload, ref.truncate_s)
    return workload


def load_placement_map(path: str | Path) -> tuple[dict[str, str], dict[str, float]]:
    """Read placement.csv: vm_id,host_id[,cpu_ready_fraction].

    Returns (vm_id -> host_id, vm_id -> ready fraction for rows that have one).
    """
    p = Path(path)
    placements: dict[str, str] = {}
    ready: dict[str, float] = {}
    with open(p, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != PLACEMENT_HEADER:
            raise TraceParseError(f"{p}: expected header vm_id,host_id[,cpu_ready_fraction]")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            vm_id = row[0]
            if vm_id in placements:
                raise TraceParseError(f"{p}:{lineno}: duplicate vm_id {vm_id!r}")
            placements[vm_id] = row[1]
            if len(row) > 2 and row[2] != "":
                try:
                    frac = float(row[2])
                except ValueError as exc:
                    raise TraceParseError(f"{p}:{lineno}: {exc}") from exc
                if not 0.0 <= frac <= 1.0:
                    raise TraceParseError(f"{p}:{lineno}: cpu_ready_fraction outside [0, 1]")
                ready[vm_id] = frac
    return placements, ready


def save_placement_map(placements: dict[str, str], path: str | Path) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(PLACEMENT_HEADER)
        for vm_id in sorted(placements):
            w.writerow([vm_id, placements[vm_id]])
