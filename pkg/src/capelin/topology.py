"""Physical topology model and candidate-topology derivation.

Candidates are derived from a base topology along four dimensions: mode
(replace or expand half the clusters), quality (volume = machine/core
counts, velocity = clock speed), direction (horizontal = many small
machines, vertical = few large ones), and variance (homogeneous vs a
2/3-1/3 heterogeneous mix). Every derivation keeps at least the original
core count in the modified part and preserves per-cluster total memory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema

MODE_REPLACE = "replace"
MODE_EXPAND = "expand"
QUALITY_VOLUME = "volume"
QUALITY_VELOCITY = "velocity"
DIRECTION_HORIZONTAL = "horizontal"
DIRECTION_VERTICAL = "vertical"
VARIANCE_HOMOGENEOUS = "homogeneous"
VARIANCE_HETEROGENEOUS = "heterogeneous"

MODES = (MODE_REPLACE, MODE_EXPAND)
QUALITIES = (QUALITY_VOLUME, QUALITY_VELOCITY)
DIRECTIONS = (DIRECTION_HORIZONTAL, DIRECTION_VERTICAL)
VARIANCES = (VARIANCE_HOMOGENEOUS, VARIANCE_HETEROGENEOUS)

TOPOLOGY_SCHEMA = {
    "type": "object",
    "required": ["name", "clusters"],
    "properties": {
        "name": {"type": "string"},
        "clusters": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["cluster_id", "machines"],
                "properties": {
                    "cluster_id": {"type": "string"},
                    "machines": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["host_id", "core_count", "clock_mhz", "memory_mb"],
                            "properties": {
                                "host_id": {"type": "string"},
                                "core_count": {"type": "integer", "minimum": 1},
                                "clock_mhz": {"type": "number", "exclusiveMinimum": 0},
                                "memory_mb": {"type": "integer", "minimum": 1},
                            },
                        },
                    },
                },
            },
        },
    },
}


@dataclass(frozen=True)
class MachineSpec:
    host_id: str
    core_count: int
    clock_mhz: float
    memory_mb: int

    def __post_init__(self):
        if self.core_count < 1:
            raise ValueError(f"host {self.host_id}: core_count must be >= 1")
        if self.clock_mhz <= 0:
            raise ValueError(f"host {self.host_id}: clock_mhz must be > 0")
        if self.memory_mb < 1:
            raise ValueError(f"host {self.host_id}: memory_mb must be >= 1")

    @property
    def capacity_mhz(self) -> float:
        """Aggregate CPU capacity with all cores pooled."""
        return self.core_count * self.clock_mhz


@dataclass(frozen=True)
class Cluster:
    cluster_id: str
    machines: tuple[MachineSpec, ...]

    def __post_init__(self):
        if not self.machines:
            raise ValueError(f"cluster {self.cluster_id}: needs at least one machine")

    @property
    def total_cores(self) -> int:
        return sum(m.core_count for m in self.machines)

    @property
    def total_memory_mb(self) -> int:
        return sum(m.memory_mb for m in self.machines)

    @property
    def mean_cores_per_machine(self) -> float:
        return self.total_cores / len(self.machines)

    @property
    def core_weighted_clock_mhz(self) -> float:
        return sum(m.core_count * m.clock_mhz for m in self.machines) / self.total_cores


@dataclass(frozen=True)
class Topology:
    name: str
    clusters: tuple[Cluster, ...]

    def __post_init__(self):
        if not self.clusters:
            raise ValueError(f"topology {self.name}: needs at least one cluster")
        seen_clusters = set()
        seen_hosts = set()
        for c in self.clusters:
            if c.cluster_id in seen_clusters:
                raise ValueError(f"duplicate cluster_id {c.cluster_id!r}")
            seen_clusters.add(c.cluster_id)
            for m in c.machines:
                if m.host_id in seen_hosts:
                    raise ValueError(f"duplicate host_id {m.host_id!r}")
                seen_hosts.add(m.host_id)

    @property
    def total_cores(self) -> int:
        return sum(c.total_cores for c in self.clusters)

    @property
    def total_memory_mb(self) -> int:
        return sum(c.total_memory_mb for c in self.clusters)

    def machines(self) -> list[tuple[str, MachineSpec]]:
        """All machines as (cluster_id, spec), in declaration order."""
        return [(c.cluster_id, m) for c in self.clusters for m in c.machines]


@dataclass(frozen=True)
class CandidateDimensions:
    mode: str
    quality: str
    direction: str
    variance: str

    def __post_init__(self):
        for value, allowed, name in (
            (self.mode, MODES, "mode"),
            (self.quality, QUALITIES, "quality"),
            (self.direction, DIRECTIONS, "direction"),
            (self.variance, VARIANCES, "variance"),
        ):
            if value not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {value!r}")

    @property
    def label(self) -> str:
        return f"{self.mode}-{self.quality}-{self.direction}-{self.variance}"


@dataclass(frozen=True)
class ScalingConstants:
    horizontal_cores: int = 28
    vertical_cores: int = 128
    velocity_factor: float = 1.25

    def __post_init__(self):
        if not self.horizontal_cores < self.vertical_cores:
            raise ValueError("horizontal_cores must be < vertical_cores")
        if not self.velocity_factor > 1:
            raise ValueError("velocity_factor must be > 1")


def load_topology(path: str | Path) -> Topology:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    return topology_from_dict(doc)


def topology_from_dict(doc: dict) -> Topology:
    jsonschema.validate(doc, TOPOLOGY_SCHEMA)
    clusters = tuple(
        Cluster(
            cluster_id=c["cluster_id"],
            machines=tuple(
                MachineSpec(m["host_id"], m["core_count"], m["clock_mhz"], m["memory_mb"])
                for m in c["machines"]
            ),
        )
        for c in doc["clusters"]
    )
    return Topology(name=doc["name"], clusters=clusters)


def topology_to_dict(topology: Topology) -> dict:
    return {
        "name": topology.name,
        "clusters": [
            {
                "cluster_id": c.cluster_id,
                "machines": [
                    {
                        "host_id": m.host_id,
                        "core_count": m.core_count,
                        "clock_mhz": m.clock_mhz,
                        "memory_mb": m.memory_mb,
                    }
                    for m in c.machines
                ],
            }
            for c in topology.clusters
        ],
    }


def save_topology(topology: Topology, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(topology_to_dict(topology), f, indent=2, sort_keys=True)
        f.write("\n")


def select_half(topology: Topology, seed: int = 0) -> tuple[list[Cluster], list[Cluster]]:
    """Pick ⌊n/2⌋ clusters to modify, preferring average-sized ones.

    Preference: distance of the cluster's machine count to the topology
    mean, then distance of its mean cores-per-machine to the topology
    mean, then cluster_id. The rule is deterministic; the seed is part of
    the interface for alternative selection rules.
    """
    n = len(topology.clusters)
    if n < 2:
        raise ValueError(
            "topology has a single cluster; half-selection is undefined. "
            "Apply the modification to the whole topology instead."
        )
    mean_machines = sum(len(c.machines) for c in topology.clusters) / n
    total_machines = sum(len(c.machines) for c in topology.clusters)
    mean_cores = topology.total_cores / total_machines

    def preference(c: Cluster):
        return (
            abs(len(c.machines) - mean_machines),
            abs(c.mean_cores_per_machine - mean_cores),
            c.cluster_id,
        )

    ranked = sorted(topology.clusters, key=preference)
    chosen = set(c.cluster_id for c in ranked[: n // 2])
    selected = [c for c in topology.clusters if c.cluster_id in chosen]
    rest = [c for c in topology.clusters if c.cluster_id not in chosen]
    return selected, rest


def _scale_cluster_volume(
    cluster: Cluster, cores_per_machine: int, id_prefix: str
) -> Cluster:
    # Machine count rounds up so total cores never drop; per-cluster memory
    # is preserved by spreading it equally, rounding up per machine.
    count = math.ceil(cluster.total_cores / cores_per_machine)
    clock = cluster.core_weighted_clock_mhz
    memory_each = math.ceil(cluster.total_memory_mb / count)
    machines = tuple(
        MachineSpec(f"{id_prefix}-n{i:03d}", cores_per_machine, clock, memory_each)
        for i in range(count)
    )
    return Cluster(cluster_id=cluster.cluster_id, machines=machines)


def _scale_cluster_velocity(cluster: Cluster, factor: float, id_prefix: str | None) -> Cluster:
    machines = tuple(
        MachineSpec(
            m.host_id if id_prefix is None else f"{id_prefix}-n{i:03d}",
            m.core_count,
            m.clock_mhz * factor,
            m.memory_mb,
        )
        for i, m in enumerate(cluster.machines)
    )
    return Cluster(cluster_id=cluster.cluster_id, machines=machines)


def _modify_cluster(
    cluster: Cluster,
    quality: str,
    direction: str,
    constants: ScalingConstants,
    velocity_factor: float,
    id_prefix: str,
    fresh_ids: bool,
) -> Cluster:
    if quality == QUALITY_VOLUME:
        cores = (
            constants.horizontal_cores
            if direction == DIRECTION_HORIZONTAL
            else constants.vertical_cores
        )
        return _scale_cluster_volume(cluster, cores, id_prefix)
    return _scale_cluster_velocity(cluster, velocity_factor, id_prefix if fresh_ids else None)


def derive_candidate(
    topology: Topology,
    dims: CandidateDimensions,
    constants: ScalingConstants = ScalingConstants(),
    seed: int = 0,
) -> Topology:
    """Derive one candidate topology along the given dimensions."""
    selected, rest = select_half(topology, seed)

    # Heterogeneous variance: first ceil(2k/3) clusters (by id) get the
    # designated change, the remainder the opposite one on the same axis.
    ordered = sorted(selected, key=lambda c: c.cluster_id)
    designated_n = math.ceil(2 * len(ordered) / 3)
    designated = {c.cluster_id for c in ordered[:designated_n]}

    expand = dims.mode == MODE_EXPAND

    modified: dict[str, Cluster] = {}
    for cluster in selected:
        is_designated = dims.variance == VARIANCE_HOMOGENEOUS or cluster.cluster_id in designated
        if dims.quality == QUALITY_VOLUME:
            direction = dims.direction
            if not is_designated:
                direction = (
                    DIRECTION_VERTICAL
                    if dims.direction == DIRECTION_HORIZONTAL
                    else DIRECTION_HORIZONTAL
                )
            velocity = constants.velocity_factor
        else:
            direction = dims.direction
            velocity = constants.velocity_factor if is_designated else 1.0
        id_prefix = f"{cluster.cluster_id}-exp" if expand else cluster.cluster_id
        new = _modify_cluster(
            cluster, dims.quality, direction, constants, velocity, id_prefix, fresh_ids=expand
        )
        if expand:
            new = Cluster(cluster_id=f"{cluster.cluster_id}-exp", machines=new.machines)
        modified[cluster.cluster_id] = new

    name = f"{topology.name}/{dims.label}"
    if expand:
        clusters = tuple(topology.clusters) + tuple(
            modified[c.cluster_id] for c in topology.clusters if c.cluster_id in modified
        )
    else:
        clusters = tuple(
            modified.get(c.cluster_id, c) for c in topology.clusters
        )
    return Topology(name=name, clusters=clusters)


def enumerate_candidates(
    topology: Topology,
    constants: ScalingConstants = ScalingConstants(),
    seed: int = 0,
) -> list[tuple[CandidateDimensions, Topology]]:
    """All 12 candidates: volume varies direction, velocity collapses it."""
    out = []
    for mode in MODES:
        for quality in QUALITIES:
            directions = DIRECTIONS if quality == QUALITY_VOLUME else (DIRECTION_VERTICAL,)
            for direction in directions:
                for variance in VARIANCES:
                    dims = CandidateDimensions(mode, quality, direction, variance)
                    out.append((dims, derive_candidate(topology, dims, constants, seed)))
    return out
