"""Portfolios of scenarios: deterministic multi-repetition execution,
aggregation, SLO-based plan recommendation, and CSV export.

A portfolio is a base scenario, candidate scenarios, and targets. Every
scenario runs `repetitions` times; repetition r seeds every stochastic
component (sampling, failures, random placement, interference draws) with
r, and the same seed set is used across scenarios so comparisons are fair.
"""

from __future__ import annotations

import csv
import json
import statistics
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, field
from multiprocessing import get_context
from pathlib import Path
from typing import Callable

import jsonschema

from capelin import engine
from capelin.metrics import INT_METRICS, METRIC_NAMES, ScenarioReport
from capelin.phenomena import FailureModelParams, InterferenceGroup, PhenomenaConfig
from capelin.scheduler import PolicyId, parse_policy
from capelin.topology import Topology, topology_from_dict
from capelin.trace import Workload, WorkloadRef, load_placement_map

RESULTS_FILE = "results.csv"
SUMMARY_FILE = "summary.csv"


class ConfigurationError(Exception):
    """A scenario or portfolio reference cannot be resolved; nothing ran."""


@dataclass
class Scenario:
    """One point in the planning space: topology x workload x policy x phenomena."""

    scenario_id: str
    topology: Topology | str
    workload: Workload | WorkloadRef
    policy: PolicyId | str = "active-servers"
    phenomena: PhenomenaConfig = field(default_factory=PhenomenaConfig)
    placement_file: str | None = None
    placement_map: dict[str, str] | None = None
    horizon_s: int | None = None

    def resolve_placements(self) -> dict[str, str]:
        if self.placement_map is not None:
            return dict(self.placement_map)
        if self.placement_file is not None:
            placements, _ = load_placement_map(self.placement_file)
            return placements
        return {}


@dataclass(frozen=True)
class Slo:
    metric: str
    comparator: str  # "<=" or ">="
    threshold: float
    units: str | None = None

    def __post_init__(self):
        if self.metric not in METRIC_NAMES:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.comparator not in ("<=", ">="):
            raise ValueError(f"comparator must be <= or >=, got {self.comparator!r}")
        if not (self.threshold == self.threshold and abs(self.threshold) != float("inf")):
            raise ValueError("threshold must be finite")

    def satisfied_by(self, value: float) -> bool:
        return value <= self.threshold if self.comparator == "<=" else value >= self.threshold


@dataclass
class Targets:
    selected_metrics: tuple[str, ...] = METRIC_NAMES
    slos: tuple[Slo, ...] = ()
    time_range: tuple[int, int] | None = None

    def __post_init__(self):
        for m in self.selected_metrics:
            if m not in METRIC_NAMES:
                raise ValueError(f"unknown metric {m!r}")


@dataclass
class Portfolio:
    base: Scenario
    candidates: tuple[Scenario, ...] = ()
    targets: Targets = field(default_factory=Targets)
    repetitions: int = 32

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        ids = [s.scenario_id for s in self.scenarios()]
        if len(set(ids)) != len(ids):
            raise ValueError("scenario_ids must be unique within a portfolio")

    def scenarios(self) -> list[Scenario]:
        return [self.base, *self.candidates]


@dataclass(frozen=True)
class RunRow:
    scenario_id: str
    repetition: int
    report: ScenarioReport


@dataclass(frozen=True)
class MetricSummary:
    median: float
    mean: float
    std: float


@dataclass
class RunResults:
    rows: list[RunRow]
    aggregates: dict[str, dict[str, MetricSummary]]
    scenario_meta: dict[str, dict]


def _execute_repetition(args) -> tuple[int, int, ScenarioReport]:
    scenario_index, resolved, repetition, window = args
    report, _ = engine.execute(resolved, repetition, window)
    return scenario_index, repetition, report


def _aggregate(values: list[float]) -> MetricSummary:
    return MetricSummary(
        median=statistics.median(values),
        mean=statistics.mean(values),
        std=statistics.stdev(values) if len(values) > 1 else 0.0,
    )


def run_portfolio(
    portfolio: Portfolio,
    parallelism: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> RunResults:
    """Run every scenario x repetition; deterministic for any parallelism.

    All references are resolved up front so configuration errors abort
    before any simulation starts. Aggregates use the unbiased sample std.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    scenarios = portfolio.scenarios()
    resolved = []
    for scenario in scenarios:
        try:
            resolved.append(engine.resolve_scenario(scenario))
        except (OSError, ValueError, TypeError, KeyError) as exc:
            raise ConfigurationError(f"scenario {scenario.scenario_id!r}: {exc}") from exc

    window = portfolio.targets.time_range
    reps = portfolio.repetitions
    tasks = [
        (si, resolved[si], rep, window)
        for si in range(len(scenarios))
        for rep in range(reps)
    ]
    total = len(tasks)
    reports: dict[tuple[int, int], ScenarioReport] = {}

    if parallelism == 1:
        for done, task in enumerate(tasks, start=1):
            si, rep, report = _execute_repetition(task)
            reports[(si, rep)] = report
            if progress:
                progress(done, total)
    else:
        # spawn context: safe when launched from a service worker thread.
        with ProcessPoolExecutor(
            max_workers=parallelism, mp_context=get_context("spawn")
        ) as pool:
            pending = {pool.submit(_execute_repetition, task) for task in tasks}
            done = 0
            while pending:
                finished, pending = wait(pending, return_when=FIRST_COMPLETED)
                for fut in finished:
                    si, rep, report = fut.result()
                    reports[(si, rep)] = report
                    done += 1
                    if progress:
                        progress(done, total)

    rows = [
        RunRow(scenarios[si].scenario_id, rep, reports[(si, rep)])
        for si in range(len(scenarios))
        for rep in range(reps)
    ]
    aggregates: dict[str, dict[str, MetricSummary]] = {}
    for si, scenario in enumerate(scenarios):
        per_metric = {}
        for metric in METRIC_NAMES:
            values = [getattr(reports[(si, rep)], metric) for rep in range(reps)]
            per_metric[metric] = _aggregate(values)
        aggregates[scenario.scenario_id] = per_metric
    scenario_meta = {
        scenarios[si].scenario_id: {
            "total_cores": resolved[si].topology.total_cores,
            "topology_name": resolved[si].topology.name,
        }
        for si in range(len(scenarios))
    }
    return RunResults(rows=rows, aggregates=aggregates, scenario_meta=scenario_meta)


@dataclass(frozen=True)
class PlanEntry:
    rank: int
    scenario_id: str
    satisfies_slos: bool
    violated_slos: tuple[str, ...]
    total_cores: int
    justification: dict


@dataclass(frozen=True)
class PlanRecommendation:
    entries: tuple[PlanEntry, ...]
    best_effort: bool  # true when no scenario satisfied every SLO


def recommend_plan(results: RunResults, portfolio: Portfolio) -> PlanRecommendation:
    """Rank scenarios: SLO-satisfying ones by minimal capacity, then power.

    SLOs are evaluated on the median across repetitions. If nothing
    satisfies every SLO, the violating set is returned ranked by how few
    SLOs it violates (best effort, flagged).
    """
    slos = portfolio.targets.slos
    satisfying = []
    violating = []
    for scenario in portfolio.scenarios():
        sid = scenario.scenario_id
        agg = results.aggregates[sid]
        violated = tuple(
            f"{slo.metric} {slo.comparator} {slo.threshold:g}"
            for slo in slos
            if not slo.satisfied_by(agg[slo.metric].median)
        )
        cores = results.scenario_meta[sid]["total_cores"]
        justification = {
            "total_cores": cores,
            "median_total_power_wh": agg["total_power_wh"].median,
        }
        for slo in slos:
            justification[f"median_{slo.metric}"] = agg[slo.metric].median
        record = (sid, violated, cores, agg["total_power_wh"].median, justification)
        (satisfying if not violated else violating).append(record)

    def finalize(records, satisfies: bool) -> list[PlanEntry]:
        return [
            PlanEntry(
                rank=i + 1,
                scenario_id=sid,
                satisfies_slos=satisfies,
                violated_slos=violated,
                total_cores=cores,
                justification=justification,
            )
            for i, (sid, violated, cores, power, justification) in enumerate(records)
        ]

    if satisfying:
        satisfying.sort(key=lambda r: (r[2], r[3], r[0]))
        return PlanRecommendation(tuple(finalize(satisfying, True)), best_effort=False)
    violating.sort(key=lambda r: (len(r[1]), r[2], r[3], r[0]))
    return PlanRecommendation(tuple(finalize(violating, False)), best_effort=True)


def _format_number(value) -> str:
    if isinstance(value, int):
        return str(value)
    return format(value, ".17g")


def export_results(results: RunResults, out_dir: str | Path) -> tuple[Path, Path]:
    """Write results.csv (per-repetition rows) and summary.csv (aggregates)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / RESULTS_FILE
    with open(results_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["scenario_id", "repetition", *METRIC_NAMES])
        for row in results.rows:
            w.writerow(
                [row.scenario_id, row.repetition]
                + [_format_number(v) for v in row.report.values()]
            )
    summary_path = out / SUMMARY_FILE
    with open(summary_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["scenario_id", "metric", "median", "mean", "std"])
        for scenario_id, per_metric in results.aggregates.items():
            for metric in METRIC_NAMES:
                s = per_metric[metric]
                w.writerow(
                    [
                        scenario_id,
                        metric,
                        _format_number(s.median),
                        _format_number(s.mean),
                        _format_number(s.std),
                    ]
                )
    return results_path, summary_path


def load_results_rows(path: str | Path) -> list[RunRow]:
    """Re-read a results.csv written by export_results."""
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        for record in reader:
            values = {
                name: (int(record[name]) if name in INT_METRICS else float(record[name]))
                for name in METRIC_NAMES
            }
            rows.append(
                RunRow(record["scenario_id"], int(record["repetition"]), ScenarioReport(**values))
            )
    return rows


PORTFOLIO_SCHEMA = {
    "type": "object",
    "required": ["base"],
    "properties": {
        "base": {"$ref": "#/$defs/scenario"},
        "candidates": {"type": "array", "items": {"$ref": "#/$defs/scenario"}},
        "repetitions": {"type": "integer", "minimum": 1},
        "targets": {
            "type": "object",
            "properties": {
                "selected_metrics": {"type": "array", "items": {"type": "string"}},
                "slos": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["metric", "comparator", "threshold"],
                        "properties": {
                            "metric": {"type": "string"},
                            "comparator": {"enum": ["<=", ">="]},
                            "threshold": {"type": "number"},
                            "units": {"type": "string"},
                        },
                    },
                },
                "time_range": {
                    "type": ["array", "null"],
                    "items": {"type": "integer"},
                    "minItems": 2,
                    "maxItems": 2,
                },
            },
        },
    },
    "$defs": {
        "scenario": {
            "type": "object",
            "required": ["scenario_id", "topology", "workload"],
            "properties": {
                "scenario_id": {"type": "string"},
                "topology": {"type": ["string", "object"]},
                "workload": {
                    "type": "object",
                    "required": ["path"],
                    "properties": {
                        "path": {"type": "string"},
                        "format": {"enum": ["canonical", "azure"]},
                        "fraction": {"type": "number", "minimum": 0, "maximum": 1},
                        "truncate_s": {"type": ["integer", "null"]},
                        "seed_policy": {"type": ["string", "integer"]},
                    },
                },
                "policy": {"type": "string"},
                "phenomena": {
                    "type": "object",
                    "properties": {
                        "mode": {"enum": ["none", "failures", "interference", "all"]},
                        "failure_params": {"type": "object"},
                        "interference": {"type": ["string", "array"]},
                    },
                },
                "placement_file": {"type": ["string", "null"]},
                "horizon_s": {"type": ["integer", "null"]},
            },
        }
    },
}


def _scenario_from_dict(doc: dict, base_dir: Path) -> Scenario:
    topology = doc["topology"]
    if isinstance(topology, str):
        topology = str(base_dir / topology)
    else:
        topology = topology_from_dict(topology)

    wdoc = doc["workload"]
    workload = WorkloadRef(
        path=str(base_dir / wdoc["path"]),
        format=wdoc.get("format", "canonical"),
        fraction=wdoc.get("fraction", 1.0),
        truncate_s=wdoc.get("truncate_s"),
        seed_policy=wdoc.get("seed_policy", "repetition"),
    )

    pdoc = doc.get("phenomena", {})
    params = FailureModelParams(**pdoc.get("failure_params", {}))
    inline_groups: tuple[InterferenceGroup, ...] = ()
    interference_path = None
    interference = pdoc.get("interference")
    if isinstance(interference, str):
        interference_path = str(base_dir / interference)
    elif isinstance(interference, list):
        inline_groups = tuple(
            InterferenceGroup(
                frozenset(g["members"]), float(g["score"]), float(g["load_threshold"])
            )
            for g in interference
        )
    config = PhenomenaConfig(
        mode=pdoc.get("mode", "none"),
        failure_params=params,
        interference_groups=inline_groups,
        interference_path=interference_path,
    )

    placement_file = doc.get("placement_file")
    if placement_file is not None:
        placement_file = str(base_dir / placement_file)

    return Scenario(
        scenario_id=doc["scenario_id"],
        topology=topology,
        workload=workload,
        policy=parse_policy(doc.get("policy", "active-servers")),
        phenomena=config,
        placement_file=placement_file,
        horizon_s=doc.get("horizon_s"),
    )


def portfolio_from_dict(doc: dict, base_dir: str | Path = ".") -> Portfolio:
    """Build a Portfolio from its JSON document; paths resolve against base_dir."""
    jsonschema.validate(doc, PORTFOLIO_SCHEMA)
    base_dir = Path(base_dir)
    tdoc = doc.get("targets", {})
    time_range = tdoc.get("time_range")
    targets = Targets(
        selected_metrics=tuple(tdoc.get("selected_metrics", METRIC_NAMES)),
        slos=tuple(
            Slo(s["metric"], s["comparator"], float(s["threshold"]), s.get("units"))
            for s in tdoc.get("slos", [])
        ),
        time_range=tuple(time_range) if time_range else None,
    )
    return Portfolio(
        base=_scenario_from_dict(doc["base"], base_dir),
        candidates=tuple(
            _scenario_from_dict(c, base_dir) for c in doc.get("candidates", [])
        ),
        targets=targets,
        repetitions=doc.get("repetitions", 32),
    )


def load_portfolio(path: str | Path) -> Portfolio:
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    try:
        return portfolio_from_dict(doc, base_dir=path.parent)
    except jsonschema.ValidationError as exc:
        raise ConfigurationError(f"{path}: {exc.message}") from exc
    except ValueError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
