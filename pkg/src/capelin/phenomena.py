"""Operational phenomena: space-correlated machine failures and colocation
performance interference. Both are sampled from seeded rng streams and can
be switched independently per scenario.

Failures follow a lognormal model: inter-arrival time, duration, and group
size each drawn with mu = ln(scale) and sigma = ln(shape). All victims of
one event share a cluster (space correlation), and durations are clamped
to a 15-minute minimum.

Interference applies a recorded score in [0, 1] to a victim's request when
enough of a recorded contender set is colocated and the host is loaded
past the recorded level; each resident member is hit independently with
probability 1/N, N being all VMs on the host.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, TYPE_CHECKING

if TYPE_CHECKING:
    from capelin.topology import Topology

SLICE_S = 300
MIN_FAILURE_DURATION_S = 900

# Guard against lognormal overflow on extreme tail draws.
_MAX_DURATION_S = 1e18


@dataclass(frozen=True)
class FailureModelParams:
    """Lognormal failure model; the defaults are week-scale inter-arrivals,
    hour-scale durations with a heavy tail, and pair-sized groups."""

    interarrival_scale_h: float = 168.0  # 24 x 7
    interarrival_shape: float = 2.801
    duration_scale_min: float = 60.0
    duration_shape_min: float = 480.0  # 60 x 8
    group_size_scale: float = 2.0
    group_size_shape: float = 1.0
    min_duration_min: float = 15.0

    def __post_init__(self):
        for name in (
            "interarrival_scale_h",
            "interarrival_shape",
            "duration_scale_min",
            "duration_shape_min",
            "group_size_scale",
            "group_size_shape",
            "min_duration_min",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class FailureEvent:
    start: float
    duration_s: int
    victim_hosts: frozenset[str]

    def __post_init__(self):
        if self.duration_s < MIN_FAILURE_DURATION_S:
            raise ValueError(f"failure duration {self.duration_s}s below minimum")
        if not self.victim_hosts:
            raise ValueError("failure event needs at least one victim")

    @property
    def end(self) -> float:
        return self.start + self.duration_s


@dataclass(frozen=True)
class InterferenceGroup:
    members: frozenset[str]
    score: float
    load_threshold: float

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError("interference group needs at least two members")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        if not 0.0 <= self.load_threshold <= 1.0:
            raise ValueError(f"load_threshold must be in [0, 1], got {self.load_threshold}")


def _lognormal(rng: random.Random, scale: float, shape: float) -> float:
    return rng.lognormvariate(math.log(scale), math.log(shape))


def sample_failures(
    params: FailureModelParams,
    horizon_s: float,
    topology: "Topology",
    rng: random.Random,
) -> list[FailureEvent]:
    """Draw the failure event list for one run, sorted by start time.

    Group size is rounded to the nearest integer, at least 1, capped at the
    chosen cluster's machine count; victims are drawn uniformly without
    replacement from that single cluster.
    """
    events: list[FailureEvent] = []
    if horizon_s <= 0:
        return events
    clusters = topology.clusters
    min_duration_s = params.min_duration_min * 60.0
    t = 0.0
    while True:
        t += _lognormal(rng, params.interarrival_scale_h, params.interarrival_shape) * 3600.0
        if t >= horizon_s:
            return events
        duration = _lognormal(rng, params.duration_scale_min, params.duration_shape_min) * 60.0
        if not math.isfinite(duration) or duration > _MAX_DURATION_S:
            duration = _MAX_DURATION_S
        duration_s = int(round(max(duration, min_duration_s, MIN_FAILURE_DURATION_S)))
        size = _lognormal(rng, params.group_size_scale, params.group_size_shape)
        cluster = clusters[rng.randrange(len(clusters))]
        count = max(1, int(round(size)))
        count = min(count, len(cluster.machines))
        victims = rng.sample([m.host_id for m in cluster.machines], count)
        events.append(FailureEvent(t, duration_s, frozenset(victims)))


def mine_interference_groups(
    colocation_records: Iterable[tuple[frozenset[str] | set[str], float, float]],
    min_occurrences: int = 1,
) -> list[InterferenceGroup]:
    """Derive interference groups from colocation observations.

    Each record is (colocated vm ids, host CPU load fraction, CPU-ready
    fraction). Records group by (member set, load rounded to one decimal);
    the group's score is 1 minus the mean ready fraction. Groups observed
    fewer than `min_occurrences` times are dropped.
    """
    grouped: dict[tuple[frozenset[str], float], list[float]] = {}
    for members, load, ready in colocation_records:
        if not 0.0 <= load <= 1.0:
            raise ValueError(f"host load fraction {load} outside [0, 1]")
        if not 0.0 <= ready <= 1.0:
            raise ValueError(f"cpu_ready_fraction {ready} outside [0, 1]")
        members = frozenset(members)
        if len(members) < 2:
            raise ValueError("colocation record needs at least two members")
        grouped.setdefault((members, round(load, 1)), []).append(ready)

    groups = []
    for (members, threshold), readies in sorted(
        grouped.items(), key=lambda kv: (sorted(kv[0][0]), kv[0][1])
    ):
        if len(readies) < min_occurrences:
            continue
        score = 1.0 - sum(readies) / len(readies)
        groups.append(InterferenceGroup(members, score, threshold))
    return groups


def apply_interference(
    groups: list[InterferenceGroup],
    requests: Mapping[str, float],
    host_load: float,
    rng: random.Random,
) -> tuple[dict[str, float], dict[str, float]]:
    """Scale requests of interference victims on one host for one slice.

    A group is active when at least two of its members are resident and
    the host load (pre-interference demand over capacity) reaches its
    threshold. Returns (effective requests, interfered MHz per victim).
    """
    effective = dict(requests)
    interfered_mhz: dict[str, float] = {}
    if not groups or not requests:
        return effective, interfered_mhz
    n = len(requests)
    resident = set(requests)
    for group in groups:
        present = sorted(group.members & resident)
        if len(present) < 2 or host_load < group.load_threshold:
            continue
        for vm_id in present:
            if rng.random() < 1.0 / n:
                before = effective[vm_id]
                effective[vm_id] = before * group.score
                delta = before - effective[vm_id]
                if delta > 0:
                    interfered_mhz[vm_id] = interfered_mhz.get(vm_id, 0.0) + delta
    return effective, interfered_mhz


@dataclass(frozen=True)
class PhenomenaConfig:
    """Which phenomena a scenario enables, with parameter overrides.

    `interference_groups` are inline groups; `interference_path` points at
    an interference.json table. Both may be set; they concatenate.
    """

    mode: str = "none"  # none | failures | interference | all
    failure_params: FailureModelParams = FailureModelParams()
    interference_groups: tuple[InterferenceGroup, ...] = ()
    interference_path: str | None = None

    def __post_init__(self):
        if self.mode not in ("none", "failures", "interference", "all"):
            raise ValueError(f"unknown phenomena mode {self.mode!r}")

    def resolve_groups(self) -> list[InterferenceGroup]:
        groups = list(self.interference_groups)
        if self.interference_path is not None:
            groups.extend(load_interference_groups(self.interference_path))
        return groups


def load_interference_groups(path: str | Path) -> list[InterferenceGroup]:
    """Read an interference table: [{members, score, load_threshold}, ...]."""
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    if not isinstance(doc, list):
        raise ValueError(f"{path}: expected a JSON list of groups")
    return [
        InterferenceGroup(frozenset(entry["members"]), float(entry["score"]),
                          float(entry["load_threshold"]))
        for entry in doc
    ]


def save_interference_groups(groups: list[InterferenceGroup], path: str | Path) -> None:
    doc = [
        {"members": sorted(g.members), "score": g.score, "load_threshold": g.load_threshold}
        for g in groups
    ]
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def colocation_records_from_placement(
    workload,
    placements: Mapping[str, str],
    topology: "Topology",
    ready_fractions: Mapping[str, float],
) -> list[tuple[frozenset[str], float, float]]:
    """Build colocation records from static placement data.

    For every slice and host, the record holds the VMs whose series cover
    the slice, the host load implied by their summed demand, and the mean
    recorded ready fraction of the members. VMs without a ready fraction
    contribute 0 (never denied the CPU).
    """
    capacity = {m.host_id: m.capacity_mhz for _, m in topology.machines()}
    by_host: dict[str, list] = {}
    for vm in workload.vms:
        host = placements.get(vm.vm_id)
        if host is None or host not in capacity:
            continue
        by_host.setdefault(host, []).append(vm)

    records = []
    for host in sorted(by_host):
        vms = by_host[host]
        starts = [vm.submit_time for vm in vms]
        ends = [vm.end_time for vm in vms]
        t0, t1 = min(starts), max(ends)
        for t in range(t0, t1, SLICE_S):
            members = []
            demand = 0.0
            for vm in vms:
                idx = (t - vm.submit_time) // SLICE_S
                if 0 <= idx < vm.n_slices:
                    members.append(vm.vm_id)
                    demand += vm.slice_usages[idx].usage_mhz
            if len(members) < 2:
                continue
            load = min(demand / capacity[host], 1.0)
            ready = sum(ready_fractions.get(m, 0.0) for m in members) / len(members)
            records.append((frozenset(members), load, ready))
    return records
