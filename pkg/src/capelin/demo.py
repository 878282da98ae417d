"""Bundled desk-scale demo: a 4-cluster topology, a synthetic contended
workload, and a 3-scenario portfolio (base plus horizontal/vertical
volume replacements). Everything is generated deterministically so runs
and exports are reproducible byte for byte.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from capelin.phenomena import (
    FailureModelParams,
    InterferenceGroup,
    PhenomenaConfig,
    save_interference_groups,
)
from capelin.portfolio import Portfolio, Scenario, Slo, Targets
from capelin.topology import (
    CandidateDimensions,
    Cluster,
    MachineSpec,
    Topology,
    derive_candidate,
    save_topology,
)
from capelin.trace import SLICE_S, VmSliceUsage, VmSpec, Workload, save_trace

DEMO_SEED = 2024
DEMO_VMS = 48
DEMO_SLICES = 60

# Failure model scaled to the demo's ~5 h horizon (the defaults are
# week-scale and would almost never fire here).
DEMO_FAILURE_PARAMS = FailureModelParams(
    interarrival_scale_h=1.0,
    interarrival_shape=2.0,
    duration_scale_min=30.0,
    duration_shape_min=2.0,
)


def make_demo_topology() -> Topology:
    """4 identical clusters x 8 machines x 32 cores @ 2400 MHz, 64 GiB."""
    clusters = []
    for c in range(1, 5):
        machines = tuple(
            MachineSpec(
                host_id=f"c{c}-h{m:02d}",
                core_count=32,
                clock_mhz=2400.0,
                memory_mb=65536,
            )
            for m in range(8)
        )
        clusters.append(Cluster(cluster_id=f"c{c}", machines=machines))
    return Topology(name="demo-dc", clusters=tuple(clusters))


def make_demo_workload() -> Workload:
    """48 VMs with staggered submits and varying demand; dense enough that
    colocation, contention, and interference all occur on the demo topology."""
    rng = random.Random(DEMO_SEED)
    vms = []
    for i in range(DEMO_VMS):
        submit = rng.randrange(0, 8) * SLICE_S
        n_slices = rng.randrange(40, DEMO_SLICES + 1)
        level = rng.uniform(20000.0, 42000.0)
        slices = tuple(
            VmSliceUsage(
                slice_start=submit + k * SLICE_S,
                usage_mhz=round(max(0.0, level + rng.uniform(-4000.0, 4000.0)), 3),
            )
            for k in range(n_slices)
        )
        vms.append(
            VmSpec(
                vm_id=f"vm{i:03d}",
                submit_time=submit,
                core_count=16,
                memory_mb=24576,
                slice_usages=slices,
            )
        )
    return Workload(name="demo-trace", vms=tuple(vms))


def make_demo_interference() -> list[InterferenceGroup]:
    rng = random.Random(DEMO_SEED + 1)
    ids = [f"vm{i:03d}" for i in range(DEMO_VMS)]
    groups = []
    for _ in range(6):
        members = frozenset(rng.sample(ids, 2))
        groups.append(
            InterferenceGroup(
                members=members,
                score=round(rng.uniform(0.7, 0.95), 2),
                load_threshold=0.5,
            )
        )
    return groups


def make_demo_portfolio(repetitions: int = 32) -> Portfolio:
    """The demo portfolio with in-memory fixtures (no file IO)."""
    topo = make_demo_topology()
    workload = make_demo_workload()
    groups = tuple(make_demo_interference())
    phen = PhenomenaConfig(
        mode="all",
        failure_params=DEMO_FAILURE_PARAMS,
        interference_groups=groups,
    )

    def scenario(scenario_id: str, topology: Topology) -> Scenario:
        return Scenario(
            scenario_id=scenario_id,
            topology=topology,
            workload=workload,
            policy="active-servers",
            phenomena=phen,
        )

    hor = derive_candidate(
        topo, CandidateDimensions("replace", "volume", "horizontal", "homogeneous")
    )
    ver = derive_candidate(
        topo, CandidateDimensions("replace", "volume", "vertical", "homogeneous")
    )
    return Portfolio(
        base=scenario("base", topo),
        candidates=(
            scenario("replace-volume-horizontal", hor),
            scenario("replace-volume-vertical", ver),
        ),
        targets=Targets(
            slos=(Slo("total_failed_vm_slices", "<=", 100000.0),),
        ),
        repetitions=repetitions,
    )


def write_demo(out_dir: str | Path) -> Path:
    """Write the demo as files (trace dir, topology, interference table,
    portfolio.json) so the CLI walkthrough has something to chew on.
    Returns the portfolio path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    topo = make_demo_topology()
    workload = make_demo_workload()
    save_trace(workload, out / "trace")
    save_topology(topo, out / "topology.json")
    save_interference_groups(make_demo_interference(), out / "interference.json")

    def scenario_doc(scenario_id: str, topology: Topology) -> dict:
        return {
            "scenario_id": scenario_id,
            "topology": {
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
            },
            "workload": {"path": "trace", "format": "canonical", "fraction": 1.0},
            "policy": "active-servers",
            "phenomena": {
                "mode": "all",
                "failure_params": {
                    "interarrival_scale_h": DEMO_FAILURE_PARAMS.interarrival_scale_h,
                    "interarrival_shape": DEMO_FAILURE_PARAMS.interarrival_shape,
                    "duration_scale_min": DEMO_FAILURE_PARAMS.duration_scale_min,
                    "duration_shape_min": DEMO_FAILURE_PARAMS.duration_shape_min,
                },
                "interference": "interference.json",
            },
        }

    hor = derive_candidate(
        topo, CandidateDimensions("replace", "volume", "horizontal", "homogeneous")
    )
    ver = derive_candidate(
        topo, CandidateDimensions("replace", "volume", "vertical", "homogeneous")
    )
    doc = {
        "base": scenario_doc("base", topo),
        "candidates": [
            scenario_doc("replace-volume-horizontal", hor),
            scenario_doc("replace-volume-vertical", ver),
        ],
        "targets": {
            "slos": [
                {"metric": "total_failed_vm_slices", "comparator": "<=", "threshold": 100000}
            ]
        },
        "repetitions": 32,
    }
    portfolio_path = out / "portfolio.json"
    with open(portfolio_path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")
    return portfolio_path
