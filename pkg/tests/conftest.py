import csv
from pathlib import Path

import pytest

from capelin.topology import Cluster, MachineSpec, Topology
from capelin.trace import SLICE_S, VmSliceUsage, VmSpec, Workload


def make_vm(
    vm_id: str,
    usage_mhz,
    submit: int = 0,
    cores: int = 4,
    memory_mb: int = 4096,
) -> VmSpec:
    """VM with the given per-slice usage list (or a constant repeated)."""
    if isinstance(usage_mhz, (int, float)):
        usage_mhz = [float(usage_mhz)]
    slices = tuple(
        VmSliceUsage(submit + i * SLICE_S, float(u)) for i, u in enumerate(usage_mhz)
    )
    return VmSpec(vm_id, submit, cores, memory_mb, slices)


def make_workload(name: str, vms) -> Workload:
    return Workload(name=name, vms=tuple(vms))


def make_topology(
    name: str = "t",
    clusters: int = 2,
    machines: int = 2,
    cores: int = 8,
    clock: float = 2000.0,
    memory_mb: int = 16384,
) -> Topology:
    return Topology(
        name=name,
        clusters=tuple(
            Cluster(
                cluster_id=f"c{c}",
                machines=tuple(
                    MachineSpec(f"c{c}-h{m}", cores, clock, memory_mb) for m in range(machines)
                ),
            )
            for c in range(clusters)
        ),
    )


def write_canonical_trace(path: Path, meta_rows, usage_rows) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "meta.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["vm_id", "submit_time_s", "core_count", "memory_mb"])
        w.writerows(meta_rows)
    with open(path / "usage.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["vm_id", "slice_start_s", "usage_mhz"])
        w.writerows(usage_rows)
    return path


def write_azure_trace(path: Path, vmtable_rows, reading_rows) -> Path:
    """Headerless files following the public dataset column layout."""
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "vmtable.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        for vm_id, created, deleted, cores, memory_gb in vmtable_rows:
            w.writerow([vm_id, "sub1", "dep1", created, deleted, 0, 0, 0, "x", cores, memory_gb])
    with open(path / "readings.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        for ts, vm_id, avg in reading_rows:
            w.writerow([ts, vm_id, avg, avg, avg])
    return path


@pytest.fixture
def four_cluster_topology() -> Topology:
    """4 clusters x 8 machines x 32 cores (C=256 per cluster) @ 2400 MHz."""
    return Topology(
        name="fixture-dc",
        clusters=tuple(
            Cluster(
                cluster_id=f"c{c}",
                machines=tuple(
                    MachineSpec(f"c{c}-h{m:02d}", 32, 2400.0, 65536) for m in range(8)
                ),
            )
            for c in range(1, 5)
        ),
    )
