"""Discrete-event simulation kernel.

Time advances in 300 s slices. Each slice: failure events up to the slice
start are applied, due submissions enqueued, queued VMs placed by the
allocation policy, and every live host runs max-min fair-share CPU
allocation (cores pooled) over its residents' demand after the
interference hook. Failed hosts grant nothing; their residents accrue
failed slices with progress paused and resume after recovery.

A run is strictly single-threaded and deterministic for a given
(scenario, seed); repetitions parallelize outside with no shared state.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Sequence

from capelin import phenomena as ph
from capelin import scheduler, trace
from capelin.metrics import MetricsAccumulator, PowerModel, ScenarioReport
from capelin.topology import MachineSpec, Topology, load_topology
from capelin.trace import SLICE_S, Workload, WorkloadRef, load_workload_ref, sample_trace

if TYPE_CHECKING:
    from capelin.portfolio import Scenario

PHENOMENA_NONE = "none"
PHENOMENA_FAILURES = "failures"
PHENOMENA_INTERFERENCE = "interference"
PHENOMENA_ALL = "all"
PHENOMENA_MODES = (PHENOMENA_NONE, PHENOMENA_FAILURES, PHENOMENA_INTERFERENCE, PHENOMENA_ALL)


class VmPhase(Enum):
    QUEUED = "queued"
    RUNNING = "running"
    FAILED = "failed"
    FINISHED = "finished"


@dataclass
class HostState:
    spec: MachineSpec
    cluster_id: str
    resident: list[str] = field(default_factory=list)
    memory_used_mb: int = 0
    failed_until: float = 0.0

    @property
    def free_memory_mb(self) -> int:
        return self.spec.memory_mb - self.memory_used_mb

    def is_failed(self, t: float) -> bool:
        return self.failed_until > t


@dataclass
class VmState:
    spec: trace.VmSpec
    phase: VmPhase = VmPhase.QUEUED
    progress: int = 0
    placed_on: str | None = None


def fair_share(capacity_mhz: float, requests: Sequence[float]) -> list[float]:
    """Max-min fair (water-filling) allocation of one host's capacity.

    If total demand fits, everyone gets their request; otherwise the
    smallest requests are satisfied first and the residual capacity is
    split equally among the still-unsatisfied VMs. Order-independent:
    permuting the requests permutes the grants identically.
    """
    if capacity_mhz < 0:
        raise ValueError(f"capacity must be >= 0, got {capacity_mhz}")
    for r in requests:
        if r < 0:
            raise ValueError(f"requests must be >= 0, got {r}")
    n = len(requests)
    if n == 0:
        return []
    if sum(requests) <= capacity_mhz:
        return list(requests)
    order = sorted(range(n), key=lambda i: requests[i])
    grants = [0.0] * n
    remaining = capacity_mhz
    for pos, i in enumerate(order):
        share = remaining / (n - pos)
        if requests[i] <= share:
            grants[i] = requests[i]
            remaining -= requests[i]
        else:
            for j in order[pos:]:
                grants[j] = share
            break
    return grants


@dataclass
class ResolvedScenario:
    """A scenario with every reference loaded; the direct engine input.

    `workload` is the full (possibly truncated) trace; fraction sampling
    happens per repetition inside `execute` so each repetition seeds it
    with its own index.
    """

    scenario_id: str
    topology: Topology
    workload: Workload
    fraction: float
    seed_policy: str | int
    policy: scheduler.PolicyId
    phenomena_mode: str
    failure_params: ph.FailureModelParams
    interference_groups: tuple[ph.InterferenceGroup, ...]
    placement_map: dict[str, str] | None
    horizon_s: int | None
    power_model: PowerModel


def _floor_slice(t: int) -> int:
    return (t // SLICE_S) * SLICE_S


def _ceil_slice(t: int) -> int:
    return -(-t // SLICE_S) * SLICE_S


class Simulation:
    """One deterministic run over a fixed topology, workload, and phenomena."""

    def __init__(
        self,
        topology: Topology,
        workload: Workload,
        policy: scheduler.PolicyId,
        *,
        placement_map: dict[str, str] | None = None,
        interference_groups: Sequence[ph.InterferenceGroup] = (),
        failure_events: Sequence[ph.FailureEvent] = (),
        horizon_s: int | None = None,
        power_model: PowerModel = PowerModel(),
        policy_rng: random.Random | None = None,
        interference_rng: random.Random | None = None,
        window: tuple[int, int] | None = None,
    ):
        self.policy = policy
        self.placement_map = placement_map
        self.groups = list(interference_groups)
        self.policy_rng = policy_rng or random.Random(0)
        self.interference_rng = interference_rng or random.Random(0)
        self.window = window
        self.acc = MetricsAccumulator(power_model)

        self.hosts: list[HostState] = [
            HostState(spec=m, cluster_id=cid) for cid, m in topology.machines()
        ]
        self.hosts_by_id = {h.spec.host_id: h for h in self.hosts}
        self.cluster_by_host = {h.spec.host_id: h.cluster_id for h in self.hosts}
        self.max_host_memory = max((h.spec.memory_mb for h in self.hosts), default=0)

        self.vms = {vm.vm_id: VmState(spec=vm) for vm in workload.vms}
        self.submissions = sorted(workload.vms, key=lambda v: (v.submit_time, v.vm_id))
        self.next_submission = 0
        self.queue: list[str] = []
        self.active_vms = 0  # RUNNING or FAILED phase
        self.placements: dict[str, str] = {}

        self.events = sorted(failure_events, key=lambda e: (e.start, sorted(e.victim_hosts)))
        self.next_event = 0

        if workload.vms:
            self.t0 = _floor_slice(min(v.submit_time for v in workload.vms))
        else:
            self.t0 = 0
        self.explicit_end = self.t0 + horizon_s if horizon_s is not None else None

    def _in_window(self, t: int) -> bool:
        return self.window is None or self.window[0] <= t < self.window[1]

    def _work_remains(self, t: int) -> bool:
        if self.explicit_end is not None and t < self.explicit_end:
            return True
        if self.next_submission < len(self.submissions):
            return True
        if self.active_vms > 0:
            return True
        if any(h.failed_until > t for h in self.hosts):
            return True
        return any(
            self.vms[vm_id].spec.memory_mb <= self.max_host_memory for vm_id in self.queue
        )

    def run(self) -> tuple[ScenarioReport, dict[str, str]]:
        t = self.t0
        while self._work_remains(t):
            self.step_slice(t)
            t += SLICE_S
        return self.acc.finalize(), self.placements

    def step_slice(self, t: int) -> None:
        in_window = self._in_window(t)

        # Failure events due by this slice take effect now.
        while self.next_event < len(self.events) and self.events[self.next_event].start <= t:
            ev = self.events[self.next_event]
            self.next_event += 1
            for host_id in sorted(ev.victim_hosts):
                host = self.hosts_by_id.get(host_id)
                if host is not None:
                    host.failed_until = max(host.failed_until, ev.end)

        # Reconcile VM phases with their host's failure state.
        for host in self.hosts:
            failed = host.is_failed(t)
            for vm_id in host.resident:
                vm = self.vms[vm_id]
                if failed and vm.phase is VmPhase.RUNNING:
                    vm.phase = VmPhase.FAILED
                elif not failed and vm.phase is VmPhase.FAILED:
                    vm.phase = VmPhase.RUNNING

        # Due submissions join the queue in (submit_time, vm_id) order.
        arrived = 0
        while (
            self.next_submission < len(self.submissions)
            and self.submissions[self.next_submission].submit_time <= t
        ):
            self.queue.append(self.submissions[self.next_submission].vm_id)
            self.next_submission += 1
            arrived += 1
        if arrived and in_window:
            self.acc.record_submissions(arrived)

        self._placement_pass(t, in_window)
        if in_window:
            self.acc.record_queue_length(len(self.queue))

        for host in self.hosts:
            self._run_host_slice(host, t, in_window)

    def _placement_pass(self, t: int, in_window: bool) -> None:
        # Non-blocking FIFO: every queued VM gets an attempt each boundary.
        still_queued: list[str] = []
        for vm_id in self.queue:
            vm = self.vms[vm_id]
            eligible = [
                h
                for h in self.hosts
                if not h.is_failed(t) and h.free_memory_mb >= vm.spec.memory_mb
            ]
            host_id = scheduler.place(
                self.policy,
                eligible,
                vm.spec,
                placement_map=self.placement_map,
                rng=self.policy_rng,
                cluster_by_host=self.cluster_by_host,
            )
            if host_id is None:
                still_queued.append(vm_id)
                continue
            host = self.hosts_by_id[host_id]
            self.placements[vm_id] = host_id
            if vm.spec.n_slices == 0:
                vm.phase = VmPhase.FINISHED
                if in_window:
                    self.acc.record_finished()
                continue
            host.memory_used_mb += vm.spec.memory_mb
            assert host.memory_used_mb <= host.spec.memory_mb, (
                f"memory overcommitted on {host_id}"
            )
            host.resident.append(vm_id)
            vm.phase = VmPhase.RUNNING
            vm.placed_on = host_id
            self.active_vms += 1
        self.queue = still_queued

    def _run_host_slice(self, host: HostState, t: int, in_window: bool) -> None:
        if host.is_failed(t):
            if in_window and host.resident:
                self.acc.record_failed_host_slice(list(host.resident))
            return

        resident = list(host.resident)
        requests = {
            vm_id: self.vms[vm_id].spec.slice_usages[self.vms[vm_id].progress].usage_mhz
            for vm_id in resident
        }
        capacity = host.spec.capacity_mhz
        if self.groups and len(resident) >= 2:
            demand = sum(requests.values())
            host_load = min(demand / capacity, 1.0) if capacity > 0 else 1.0
            effective, _ = ph.apply_interference(
                self.groups, requests, host_load, self.interference_rng
            )
        else:
            effective = requests
        grants = fair_share(capacity, [effective[vm_id] for vm_id in resident])

        if in_window:
            self.acc.record_live_host_slice(
                capacity_mhz=capacity,
                requested_mhz=sum(requests.values()),
                effective_mhz=sum(effective.values()),
                granted_mhz=sum(grants),
                resident_count=len(resident),
            )

        for vm_id in resident:
            vm = self.vms[vm_id]
            vm.progress += 1
            if vm.progress >= vm.spec.n_slices:
                vm.phase = VmPhase.FINISHED
                host.resident.remove(vm_id)
                host.memory_used_mb -= vm.spec.memory_mb
                assert host.memory_used_mb >= 0
                self.active_vms -= 1
                if in_window:
                    self.acc.record_finished()


def resolve_scenario(scenario: "Scenario", base_dir: str | None = None) -> ResolvedScenario:
    """Load every reference a scenario carries; fails before simulation."""
    topo = scenario.topology
    if isinstance(topo, str):
        topo = load_topology(topo)

    workload = scenario.workload
    fraction = 1.0
    seed_policy: str | int = "repetition"
    if isinstance(workload, WorkloadRef):
        fraction = workload.fraction
        seed_policy = workload.seed_policy
        workload = load_workload_ref(workload)
    if not isinstance(workload, Workload):
        raise TypeError(f"scenario {scenario.scenario_id}: unsupported workload reference")

    policy = scenario.policy
    if isinstance(policy, str):
        policy = scheduler.parse_policy(policy)

    config = scenario.phenomena
    if config.mode not in PHENOMENA_MODES:
        raise ValueError(f"unknown phenomena mode {config.mode!r}")
    groups: tuple[ph.InterferenceGroup, ...] = ()
    if config.mode in (PHENOMENA_INTERFERENCE, PHENOMENA_ALL):
        groups = tuple(config.resolve_groups())

    placement_map = None
    if policy.base == scheduler.POLICY_REPLAY:
        placement_map = scenario.resolve_placements()

    return ResolvedScenario(
        scenario_id=scenario.scenario_id,
        topology=topo,
        workload=workload,
        fraction=fraction,
        seed_policy=seed_policy,
        policy=policy,
        phenomena_mode=config.mode,
        failure_params=config.failure_params,
        interference_groups=groups,
        placement_map=placement_map,
        horizon_s=scenario.horizon_s,
        power_model=PowerModel(),
    )


def execute(
    resolved: ResolvedScenario,
    seed: int,
    window: tuple[int, int] | None = None,
) -> tuple[ScenarioReport, dict[str, str]]:
    """Run one repetition. Every stochastic component is seeded with `seed`."""
    workload = resolved.workload
    if resolved.fraction < 1.0:
        sample_seed = seed if resolved.seed_policy == "repetition" else int(resolved.seed_policy)
        workload = sample_trace(
            workload, resolved.fraction, workload.total_load_mflop, sample_seed
        )

    failure_events: list[ph.FailureEvent] = []
    if resolved.phenomena_mode in (PHENOMENA_FAILURES, PHENOMENA_ALL):
        if workload.vms:
            t0 = _floor_slice(min(v.submit_time for v in workload.vms))
        else:
            t0 = 0
        trace_end = max(
            (_ceil_slice(v.submit_time) + v.n_slices * SLICE_S for v in workload.vms),
            default=t0,
        )
        if resolved.horizon_s is not None:
            trace_end = max(trace_end, t0 + resolved.horizon_s)
        raw = ph.sample_failures(
            resolved.failure_params, trace_end - t0, resolved.topology, random.Random(seed)
        )
        failure_events = [
            ph.FailureEvent(ev.start + t0, ev.duration_s, ev.victim_hosts) for ev in raw
        ]

    sim = Simulation(
        resolved.topology,
        workload,
        resolved.policy,
        placement_map=resolved.placement_map,
        interference_groups=resolved.interference_groups,
        failure_events=failure_events,
        horizon_s=resolved.horizon_s,
        power_model=resolved.power_model,
        policy_rng=random.Random(seed),
        interference_rng=random.Random(seed),
        window=window,
    )
    return sim.run()


def run_scenario(scenario: "Scenario", seed: int) -> ScenarioReport:
    """Resolve and run a scenario once; deterministic per (scenario, seed)."""
    report, _ = execute(resolve_scenario(scenario), seed)
    return report
