"""Acceptance suite: one test per criterion, each printing a PASS line
(run with `pytest tests/test_acceptance.py -v -s`). Tolerances are stated
inline; fixtures are synthetic and desk-scale.
"""

import math
import random
import time

import pytest

from capelin.demo import make_demo_portfolio, make_demo_topology, make_demo_workload
from capelin.engine import execute, fair_share
from capelin.metrics import METRIC_NAMES, PowerModel, host_power_w
from capelin.phenomena import (
    FailureModelParams,
    InterferenceGroup,
    PhenomenaConfig,
    apply_interference,
    sample_failures,
)
from capelin.portfolio import Portfolio, Scenario, export_results, run_portfolio
from capelin.scheduler import PolicyId
from capelin.topology import (
    CandidateDimensions,
    Cluster,
    MachineSpec,
    Topology,
    derive_candidate,
    enumerate_candidates,
)
from capelin.trace import SLICE_S, VmSliceUsage, VmSpec, Workload, sample_trace
from conftest import make_topology, make_vm, make_workload
from test_engine import simple_resolved


def _report(n: int, text: str) -> None:
    print(f"ACCEPTANCE criterion {n:02d} PASS - {text}")


def test_criterion_01_conservation_on_randomized_scenarios():
    rng = random.Random(101)
    start = time.monotonic()
    for case in range(200):
        n_clusters = rng.randint(1, 2)
        hosts_total = rng.randint(n_clusters, 4)
        per_cluster = [1] * n_clusters
        for _ in range(hosts_total - n_clusters):
            per_cluster[rng.randrange(n_clusters)] += 1
        clusters = []
        hid = 0
        for c, count in enumerate(per_cluster):
            machines = []
            for _ in range(count):
                machines.append(
                    MachineSpec(
                        f"h{hid}", rng.randint(2, 32), rng.uniform(1000, 3000),
                        rng.choice([8192, 16384, 32768]),
                    )
                )
                hid += 1
            clusters.append(Cluster(f"c{c}", tuple(machines)))
        topo = Topology(f"rand{case}", tuple(clusters))

        n_vms = rng.randint(1, 20)
        vms = []
        for v in range(n_vms):
            n_slices = rng.randint(1, 100)
            submit = rng.randrange(0, 10) * SLICE_S
            usage = [rng.uniform(0, 4000) for _ in range(n_slices)]
            vms.append(
                make_vm(f"v{v:02d}", usage, submit=submit, cores=rng.randint(1, 8),
                        memory_mb=rng.choice([512, 1024, 2048, 4096]))
            )
        wl = make_workload(f"w{case}", vms)

        ids = [vm.vm_id for vm in wl.vms]
        groups = tuple(
            InterferenceGroup(
                frozenset(rng.sample(ids, 2)), rng.uniform(0.5, 1.0),
                round(rng.uniform(0, 0.9), 1),
            )
            for _ in range(rng.randint(0, 3))
            if len(ids) >= 2
        )
        mode = rng.choice(["none", "failures", "interference", "all"])
        policy = rng.choice(["mem", "core-mem", "active-servers", "mem-inv", "random"])
        resolved = simple_resolved(
            topo, wl, policy=policy, phenomena_mode=mode,
            failure_params=FailureModelParams(
                interarrival_scale_h=0.5, interarrival_shape=2.0,
                duration_scale_min=20.0, duration_shape_min=3.0,
            ),
            interference_groups=groups if mode in ("interference", "all") else (),
        )
        report, _ = execute(resolved, seed=case)
        requested = report.total_requested_mflop
        recombined = report.total_granted_mflop + report.total_overcommitted_mflop
        assert abs(requested - recombined) <= 1e-9 * max(requested, 1.0), (
            f"case {case}: conservation violated"
        )
        assert report.total_interfered_mflop <= report.total_overcommitted_mflop + 1e-9
    elapsed = time.monotonic() - start
    assert elapsed < 30, f"200 scenarios took {elapsed:.1f}s (budget 30s)"
    _report(1, f"conservation held on 200 randomized scenarios in {elapsed:.1f}s")


def _water_level_oracle(capacity, requests):
    total = sum(requests)
    if total <= capacity:
        return list(requests)
    lo, hi = 0.0, max(requests)
    for _ in range(120):
        mid = (lo + hi) / 2
        if sum(min(r, mid) for r in requests) > capacity:
            hi = mid
        else:
            lo = mid
    return [min(r, lo) for r in requests]


def test_criterion_02_fair_share_oracle_10000_instances():
    rng = random.Random(202)
    for case in range(10_000):
        n = rng.randint(1, 10)
        requests = [rng.uniform(0, 100) if rng.random() > 0.1 else 0.0 for _ in range(n)]
        capacity = rng.uniform(0, 1.2 * max(sum(requests), 1.0))
        got = fair_share(capacity, requests)
        want = _water_level_oracle(capacity, requests)
        for g, w in zip(got, want):
            assert math.isclose(g, w, rel_tol=1e-12, abs_tol=1e-12), (
                f"case {case}: {g} vs oracle {w}"
            )
        perm = list(range(n))
        rng.shuffle(perm)
        permuted = fair_share(capacity, [requests[i] for i in perm])
        assert permuted == [got[i] for i in perm], f"case {case}: not order-independent"
    _report(2, "fair_share matched the water-level oracle on 10,000 instances")


def test_criterion_03_sampling_oracle_1000_triples():
    rng = random.Random(303)
    for case in range(1000):
        n = rng.randint(1, 12)
        loads = [rng.uniform(0, 50) for _ in range(n)]
        vms = [make_vm(f"v{i:02d}", loads[i] / SLICE_S) for i in range(n)]
        wl = make_workload(f"w{case}", vms)
        total = max(sum(loads), 1e-9)
        fraction = rng.random()
        seed = rng.randrange(1_000_000)

        got = set(sample_trace(wl, fraction, total, seed).vm_ids())

        # from-scratch re-execution of the removal/guard procedure
        oracle_rng = random.Random(seed)
        pool = sorted(wl.vms, key=lambda v: v.vm_id)
        selected, load = set(), 0.0
        while pool:
            vm = pool.pop(oracle_rng.randrange(len(pool)))
            if (load + vm.total_load_mflop) / total > fraction:
                break
            load += vm.total_load_mflop
            selected.add(vm.vm_id)
        assert got == selected, f"case {case}: id sets differ"
        assert load <= fraction * total + 1e-9, f"case {case}: load bound violated"
    _report(3, "sample_trace matched the re-implemented procedure on 1,000 triples")


def test_criterion_04_determinism_parallelism_and_runtime(tmp_path):
    start = time.monotonic()
    portfolio = make_demo_portfolio(repetitions=32)
    r_seq = run_portfolio(portfolio, parallelism=1)
    seq_path, _ = export_results(r_seq, tmp_path / "seq")
    r_par = run_portfolio(portfolio, parallelism=8)
    par_path, _ = export_results(r_par, tmp_path / "par")
    assert seq_path.read_bytes() == par_path.read_bytes(), "parallelism changed output"
    r_again = run_portfolio(portfolio, parallelism=1)
    again_path, _ = export_results(r_again, tmp_path / "again")
    assert seq_path.read_bytes() == again_path.read_bytes(), "repeat invocation differs"
    elapsed = time.monotonic() - start
    assert elapsed < 300, f"demo determinism check took {elapsed:.0f}s (budget 5 min)"
    _report(4, f"3 scenarios x 32 reps byte-identical at parallelism 1 vs 8 in {elapsed:.0f}s")


def test_criterion_05_power_model_exact():
    model = PowerModel()
    assert host_power_w(model, 0.0) == 200.0
    assert host_power_w(model, 0.5) == 275.0
    assert host_power_w(model, 1.0) == 350.0
    # zero-workload identity, exact: hosts x idle x horizon_h
    topo = make_topology(clusters=2, machines=3)  # 6 hosts
    horizon_s = 6 * 3600
    report, _ = execute(
        simple_resolved(topo, Workload("empty", ()), horizon_s=horizon_s), seed=0
    )
    n_slices = horizon_s // SLICE_S
    assert report.total_power_wh == 6 * n_slices * 200.0 / 12.0
    assert report.total_power_wh == 6 * 200.0 * (horizon_s / 3600)
    _report(5, "power endpoints {200, 275, 350} W and zero-workload identity exact")


def test_criterion_06_failure_model_10000_events(four_cluster_topology):
    cluster_of = {
        m.host_id: c.cluster_id
        for c in four_cluster_topology.clusters
        for m in c.machines
    }
    events = sample_failures(
        FailureModelParams(), 2e10, four_cluster_topology, random.Random(606)
    )
    assert len(events) >= 10_000, f"only {len(events)} events sampled"
    for ev in events[:10_000]:
        assert len(ev.victim_hosts) == 2, "group size must be exactly 2 (sigma = ln 1 = 0)"
        assert ev.duration_s >= 900
        assert len({cluster_of[h] for h in ev.victim_hosts}) == 1
    _report(6, "10,000 events: 2 victims each, duration >= 900 s, cluster-colocated")


def test_criterion_07_replay_round_trip():
    topo = make_demo_topology()
    wl = make_demo_workload()
    base = simple_resolved(topo, wl, policy="active-servers")
    first_report, recorded = execute(base, seed=0)
    replay = simple_resolved(topo, wl, policy=PolicyId("replay"), placement_map=recorded)
    replay_report, replayed = execute(replay, seed=0)
    assert replayed == recorded, "replay changed at least one placement"
    for name in (
        "total_requested_mflop",
        "total_granted_mflop",
        "total_overcommitted_mflop",
        "total_interfered_mflop",
        "mean_cpu_usage_mhz",
        "mean_cpu_demand_mhz",
    ):
        assert getattr(replay_report, name) == getattr(first_report, name), name
    _report(7, "replay reproduced every placement and all CPU metrics")


def test_criterion_08_candidate_generation(four_cluster_topology):
    candidates = enumerate_candidates(four_cluster_topology)
    assert len(candidates) == 12
    base_by_id = {c.cluster_id: c for c in four_cluster_topology.clusters}

    hor = derive_candidate(
        four_cluster_topology,
        CandidateDimensions("replace", "volume", "horizontal", "homogeneous"),
    )
    changed = [c for c in hor.clusters if c != base_by_id[c.cluster_id]]
    assert all(len(c.machines) == 10 for c in changed)  # ceil(256/28) = 10
    ver = derive_candidate(
        four_cluster_topology,
        CandidateDimensions("replace", "volume", "vertical", "homogeneous"),
    )
    changed = [c for c in ver.clusters if c != base_by_id[c.cluster_id]]
    assert all(len(c.machines) == 2 for c in changed)  # ceil(256/128) = 2

    for dims, candidate in candidates:
        if dims.quality != "volume":
            continue
        if dims.mode == "replace":
            pairs = [
                (c, base_by_id[c.cluster_id])
                for c in candidate.clusters
                if c != base_by_id.get(c.cluster_id)
            ]
        else:
            pairs = [
                (c, base_by_id[c.cluster_id[: -len("-exp")]])
                for c in candidate.clusters
                if c.cluster_id.endswith("-exp")
            ]
        for new, old in pairs:
            assert new.total_cores >= old.total_cores, f"{dims.label}: core floor"
            assert new.total_memory_mb >= old.total_memory_mb, f"{dims.label}: memory"
            assert new.total_memory_mb - old.total_memory_mb < len(new.machines)
    _report(8, "12 candidates; core floor, memory conservation, 10 and 2 machine counts")


def test_criterion_09_vertical_vs_horizontal_trend():
    # contended fixture: sustained demand ~1.2x base capacity
    topo = Topology(
        "trend",
        tuple(
            Cluster(
                f"c{c}",
                tuple(MachineSpec(f"c{c}-h{m:02d}", 32, 2400.0, 65536) for m in range(8)),
            )
            for c in range(2)
        ),
    )
    demand_mhz = 1.2 * topo.total_cores * 2400.0 / 32  # split over 32 VMs
    vms = [
        VmSpec(
            f"w{i:03d}", 0, 16, 4096,
            tuple(VmSliceUsage(k * SLICE_S, demand_mhz) for k in range(40)),
        )
        for i in range(32)
    ]
    wl = Workload("contended", tuple(vms))
    hor = derive_candidate(
        topo, CandidateDimensions("replace", "volume", "horizontal", "homogeneous")
    )
    ver = derive_candidate(
        topo, CandidateDimensions("replace", "volume", "vertical", "homogeneous")
    )
    portfolio = Portfolio(
        base=Scenario("base", topo, wl, "active-servers", PhenomenaConfig("none")),
        candidates=(
            Scenario("hor", hor, wl, "active-servers", PhenomenaConfig("none")),
            Scenario("ver", ver, wl, "active-servers", PhenomenaConfig("none")),
        ),
        repetitions=8,
    )
    res = run_portfolio(portfolio)
    over_h = res.aggregates["hor"]["total_overcommitted_mflop"].median
    over_v = res.aggregates["ver"]["total_overcommitted_mflop"].median
    power_h = res.aggregates["hor"]["total_power_wh"].median
    power_v = res.aggregates["ver"]["total_power_wh"].median
    assert over_v > over_h, f"vertical overcommission {over_v} not > horizontal {over_h}"
    assert power_v < power_h, f"vertical power {power_v} not < horizontal {power_h}"
    _report(9, "vertical replace: strictly higher overcommission, strictly lower power")


def test_criterion_10_interference_accounting():
    group = InterferenceGroup(frozenset({"a", "b"}), score=0.8, load_threshold=0.0)
    requests = {"a": 1000.0, "b": 800.0}
    n = len(requests)  # 2 collocated VMs -> hit probability 1/2
    rng = random.Random(1010)
    slices = 10_000
    totals = {"a": 0.0, "b": 0.0}
    for _ in range(slices):
        _, interfered = apply_interference([group], requests, 0.9, rng)
        for vm_id, mhz in interfered.items():
            totals[vm_id] += mhz
    for vm_id, request in requests.items():
        analytic = (1.0 / n) * (1.0 - group.score) * request
        empirical = totals[vm_id] / slices
        assert abs(empirical - analytic) <= 0.02 * analytic, (
            f"{vm_id}: empirical {empirical:.3f} vs analytic {analytic:.3f}"
        )
    _report(10, "empirical interfered fraction within 2% of (1/N) x (1 - score)")
