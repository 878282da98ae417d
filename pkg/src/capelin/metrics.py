"""The 14 per-run report metrics and the linear host power model.

MFLOP deltas are MHz x 300 s. Power is accumulated as watt-slices and
converted once at finalization (one slice = 1/12 h), which keeps the
zero-workload identity hosts x idle_w x horizon_h exact.
"""

from __future__ import annotations

from dataclasses import dataclass

SLICE_S = 300
SLICES_PER_HOUR = 12

METRIC_NAMES = (
    "total_requested_mflop",
    "total_granted_mflop",
    "total_overcommitted_mflop",
    "total_interfered_mflop",
    "total_power_wh",
    "total_failed_vm_slices",
    "mean_cpu_usage_mhz",
    "mean_cpu_demand_mhz",
    "mean_deployed_images_per_host",
    "max_deployed_images_per_host",
    "total_vms_submitted",
    "max_vms_queued",
    "total_vms_finished",
    "total_vms_failed",
)

INT_METRICS = frozenset(
    {
        "total_failed_vm_slices",
        "max_deployed_images_per_host",
        "total_vms_submitted",
        "max_vms_queued",
        "total_vms_finished",
        "total_vms_failed",
    }
)


@dataclass(frozen=True)
class PowerModel:
    """Linear machine power: idle baseline to maximum draw at full load."""

    idle_w: float = 200.0
    max_w: float = 350.0

    def __post_init__(self):
        if not 0 <= self.idle_w <= self.max_w:
            raise ValueError("power model requires 0 <= idle_w <= max_w")


def host_power_w(model: PowerModel, utilization: float) -> float:
    """Power draw at the given utilization (granted / capacity), clamped to [0, 1]."""
    u = min(max(utilization, 0.0), 1.0)
    return model.idle_w + (model.max_w - model.idle_w) * u


@dataclass(frozen=True)
class ScenarioReport:
    total_requested_mflop: float
    total_granted_mflop: float
    total_overcommitted_mflop: float
    total_interfered_mflop: float
    total_power_wh: float
    total_failed_vm_slices: int
    mean_cpu_usage_mhz: float
    mean_cpu_demand_mhz: float
    mean_deployed_images_per_host: float
    max_deployed_images_per_host: int
    total_vms_submitted: int
    max_vms_queued: int
    total_vms_finished: int
    total_vms_failed: int

    def values(self) -> tuple:
        return tuple(getattr(self, name) for name in METRIC_NAMES)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}


class MetricsAccumulator:
    """Per-run accumulator; one instance per simulation, never shared.

    Mean metrics are kept as (sum, live host-slice count) and finalized at
    report emission; max metrics are running maxima. Failed host-slices are
    excluded from the live denominators and contribute no power.
    """

    def __init__(self, power_model: PowerModel = PowerModel()):
        self.power_model = power_model
        self.requested_mflop = 0.0
        self.granted_mflop = 0.0
        self.overcommitted_mflop = 0.0
        self.interfered_mflop = 0.0
        self.power_watt_slices = 0.0
        self.failed_vm_slices = 0
        self.usage_mhz_sum = 0.0
        self.demand_mhz_sum = 0.0
        self.images_sum = 0
        self.images_max = 0
        self.live_host_slices = 0
        self.vms_submitted = 0
        self.max_queued = 0
        self.vms_finished = 0
        self.ever_failed_vms: set[str] = set()

    def record_live_host_slice(
        self,
        capacity_mhz: float,
        requested_mhz: float,
        effective_mhz: float,
        granted_mhz: float,
        resident_count: int,
    ) -> None:
        self.requested_mflop += requested_mhz * SLICE_S
        self.granted_mflop += granted_mhz * SLICE_S
        self.overcommitted_mflop += (requested_mhz - granted_mhz) * SLICE_S
        self.interfered_mflop += (requested_mhz - effective_mhz) * SLICE_S
        utilization = granted_mhz / capacity_mhz if capacity_mhz > 0 else 0.0
        self.power_watt_slices += host_power_w(self.power_model, utilization)
        self.usage_mhz_sum += granted_mhz
        self.demand_mhz_sum += requested_mhz
        self.images_sum += resident_count
        if resident_count > self.images_max:
            self.images_max = resident_count
        self.live_host_slices += 1

    def record_failed_host_slice(self, resident_vm_ids: list[str]) -> None:
        self.failed_vm_slices += len(resident_vm_ids)
        self.ever_failed_vms.update(resident_vm_ids)

    def record_submissions(self, count: int) -> None:
        self.vms_submitted += count

    def record_queue_length(self, length: int) -> None:
        if length > self.max_queued:
            self.max_queued = length

    def record_finished(self, count: int = 1) -> None:
        self.vms_finished += count

    def finalize(self) -> ScenarioReport:
        live = self.live_host_slices
        return ScenarioReport(
            total_requested_mflop=self.requested_mflop,
            total_granted_mflop=self.granted_mflop,
            total_overcommitted_mflop=self.overcommitted_mflop,
            total_interfered_mflop=self.interfered_mflop,
            total_power_wh=self.power_watt_slices / SLICES_PER_HOUR,
            total_failed_vm_slices=self.failed_vm_slices,
            mean_cpu_usage_mhz=self.usage_mhz_sum / live if live else 0.0,
            mean_cpu_demand_mhz=self.demand_mhz_sum / live if live else 0.0,
            mean_deployed_images_per_host=self.images_sum / live if live else 0.0,
            max_deployed_images_per_host=self.images_max,
            total_vms_submitted=self.vms_submitted,
            max_vms_queued=self.max_queued,
            total_vms_finished=self.vms_finished,
            total_vms_failed=len(self.ever_failed_vms),
        )
