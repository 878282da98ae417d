"""Command-line interface: run portfolios, enumerate candidate topologies,
sample traces, write the bundled demo, and serve the HTTP API.

Exit codes: 0 success, 2 validation/configuration error, 1 runtime error.
`CAPELIN_LOG` (error|info|debug) controls verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from capelin import __version__
from capelin.portfolio import (
    ConfigurationError,
    export_results,
    load_portfolio,
    recommend_plan,
    run_portfolio,
)
from capelin.topology import enumerate_candidates, load_topology, save_topology
from capelin.trace import (
    TraceParseError,
    load_azure_trace,
    load_private_trace,
    sample_multiple_traces,
    sample_trace,
    save_trace,
    truncate_workload,
)

log = logging.getLogger("capelin.cli")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2


def _setup_logging() -> None:
    level_name = os.environ.get("CAPELIN_LOG", "error").lower()
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        level_name, logging.ERROR
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _load_trace(path: str, fmt: str):
    if fmt == "azure":
        return load_azure_trace(path)
    return load_private_trace(path)


def cmd_run(args: argparse.Namespace) -> int:
    path = Path(args.portfolio)
    if not path.is_file():
        print(f"error: portfolio file not found: {path}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        portfolio = load_portfolio(path)
        if args.repetitions is not None:
            portfolio.repetitions = args.repetitions
        results = run_portfolio(portfolio, parallelism=args.parallelism)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    results_path, summary_path = export_results(results, args.out)
    plan = recommend_plan(results, portfolio)

    scenario_ids = [s.scenario_id for s in portfolio.scenarios()]
    metrics = portfolio.targets.selected_metrics
    name_w = max(len(m) for m in metrics) + 2
    col_w = max(14, *(len(s) + 2 for s in scenario_ids))
    print(f"portfolio: {path}  repetitions: {portfolio.repetitions}")
    print("median per scenario")
    print(" " * name_w + "".join(s.rjust(col_w) for s in scenario_ids))
    for metric in metrics:
        row = [f"{results.aggregates[sid][metric].median:.6g}".rjust(col_w) for sid in scenario_ids]
        print(metric.ljust(name_w) + "".join(row))
    print()
    flag = " (best effort: no scenario satisfies all SLOs)" if plan.best_effort else ""
    print(f"recommended plan{flag}:")
    for entry in plan.entries:
        extras = ""
        if entry.violated_slos:
            extras = f"  violates: {'; '.join(entry.violated_slos)}"
        print(
            f"  {entry.rank}. {entry.scenario_id}  cores={entry.total_cores}  "
            f"median_power_wh={entry.justification['median_total_power_wh']:.6g}{extras}"
        )
    print(f"\nwrote {results_path} and {summary_path}")
    return EXIT_OK


def cmd_candidates(args: argparse.Namespace) -> int:
    path = Path(args.topology)
    if not path.is_file():
        print(f"error: topology file not found: {path}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        topology = load_topology(path)
        candidates = enumerate_candidates(topology, seed=args.seed)
    except Exception as exc:  # schema or shape errors are user input errors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for i, (dims, candidate) in enumerate(candidates, start=1):
        filename = f"candidate-{i:02d}-{dims.label}.json"
        save_topology(candidate, out / filename)
        index.append(
            {
                "file": filename,
                "label": dims.label,
                "mode": dims.mode,
                "quality": dims.quality,
                "direction": dims.direction,
                "variance": dims.variance,
                "total_cores": candidate.total_cores,
            }
        )
    with open(out / "index.json", "w", encoding="utf-8") as f:
        json.dump(index, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {len(candidates)} candidates and index.json to {out}")
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    try:
        workload = _load_trace(args.trace, args.format)
        if args.mix is None:
            total = workload.total_load_mflop
            if total <= 0:
                print("error: trace has no load to sample", file=sys.stderr)
                return EXIT_VALIDATION
            sampled = sample_trace(workload, args.fraction, total, args.seed)
        else:
            public = _load_trace(args.mix, args.mix_format)
            horizon = min(workload.duration_s, public.duration_s)
            workload = truncate_workload(workload, horizon)
            public = truncate_workload(public, horizon)
            total = workload.total_load_mflop
            sampled = sample_multiple_traces(
                workload, args.fraction, public, args.mix_fraction, args.seed
            )
    except (TraceParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    save_trace(sampled, args.out)
    achieved = sampled.total_load_mflop / total if total > 0 else 0.0
    print(
        f"selected {len(sampled.vms)} VMs; achieved load fraction "
        f"{achieved:.4f} of {total:.6g} MFLOP"
    )
    return EXIT_OK


def cmd_demo(args: argparse.Namespace) -> int:
    from capelin.demo import write_demo

    portfolio_path = write_demo(args.out)
    print(f"wrote demo fixtures; portfolio at {portfolio_path}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from capelin.service import create_app

    app = create_app(args.data_dir, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.addr, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capelin",
        description="Trace-driven capacity planning: evaluate portfolios of "
        "what-if scenarios for virtualized datacenters.",
    )
    parser.add_argument("--version", action="version", version=f"capelin {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a portfolio and export results")
    p_run.add_argument("--portfolio", required=True, help="portfolio JSON file")
    p_run.add_argument("--out", required=True, help="output directory for CSV results")
    p_run.add_argument("--repetitions", type=int, default=None, help="override repetitions")
    p_run.add_argument("--parallelism", type=int, default=1, help="concurrent runs")
    p_run.set_defaults(func=cmd_run)

    p_cand = sub.add_parser("candidates", help="enumerate candidate topologies")
    p_cand.add_argument("--topology", required=True, help="base topology JSON file")
    p_cand.add_argument("--out", required=True, help="output directory")
    p_cand.add_argument("--seed", type=int, default=0)
    p_cand.set_defaults(func=cmd_candidates)

    p_sample = sub.add_parser("sample", help="sample a workload trace by load fraction")
    p_sample.add_argument("--trace", required=True, help="input trace directory")
    p_sample.add_argument("--format", choices=["canonical", "azure"], default="canonical")
    p_sample.add_argument("--fraction", type=float, required=True)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--out", required=True, help="output trace directory")
    p_sample.add_argument("--mix", default=None, help="second (public) trace directory")
    p_sample.add_argument("--mix-fraction", type=float, default=0.0)
    p_sample.add_argument("--mix-format", choices=["canonical", "azure"], default="azure")
    p_sample.set_defaults(func=cmd_sample)

    p_demo = sub.add_parser("demo", help="write the bundled demo fixtures")
    p_demo.add_argument("--out", required=True, help="output directory")
    p_demo.set_defaults(func=cmd_demo)

    p_serve = sub.add_parser("serve", help="serve the HTTP API (and UI, if built)")
    p_serve.add_argument("--addr", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.add_argument("--data-dir", required=True, help="storage root directory")
    p_serve.add_argument("--ui-dir", default=None, help="directory of built UI assets")
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # anything unplanned is a runtime failure
        log.exception("unhandled error")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
