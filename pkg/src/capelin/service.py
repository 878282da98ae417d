"""HTTP/JSON facade over the portfolio engine with file-backed persistence.

Entities (topologies, trace refs, portfolios, runs) are JSON documents in
a data directory; run results are the same CSV files the CLI exports, so
both facades serve identical numbers. Runs execute asynchronously in a
background thread and are polled for progress.

Errors: 400 validation, 404 unknown id, 409 conflicting state, 500
internal — all with a {code, message} body.
"""

from __future__ import annotations

import json
import logging
import statistics
import threading
import time
import uuid
from dataclasses import asdict
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from capelin.metrics import METRIC_NAMES
from capelin.portfolio import (
    ConfigurationError,
    RESULTS_FILE,
    export_results,
    load_results_rows,
    portfolio_from_dict,
    recommend_plan,
    run_portfolio,
)
from capelin.topology import enumerate_candidates, topology_from_dict, topology_to_dict
from capelin.trace import load_azure_trace, load_private_trace

log = logging.getLogger("capelin.service")

RUN_PENDING = "pending"
RUN_RUNNING = "running"
RUN_DONE = "done"
RUN_FAILED = "failed"
ACTIVE_STATES = (RUN_PENDING, RUN_RUNNING)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _not_found(kind: str, entity_id: str) -> ApiError:
    return ApiError(404, "not_found", f"unknown {kind} id {entity_id!r}")


class Store:
    """Directory of JSON documents, one subdirectory per entity kind.

    Writes are serialized by a lock and performed atomically (tmp+rename)
    so a restart with the same directory preserves every entity.
    """

    KINDS = ("topologies", "traces", "portfolios", "runs")

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._lock = threading.Lock()
        for kind in self.KINDS:
            (self.root / kind).mkdir(parents=True, exist_ok=True)

    def _path(self, kind: str, entity_id: str) -> Path:
        return self.root / kind / f"{entity_id}.json"

    def put(self, kind: str, entity_id: str, doc: dict) -> None:
        path = self._path(kind, entity_id)
        with self._lock:
            tmp = path.with_suffix(".tmp")
            with open(tmp, "w", encoding="utf-8") as f:
                json.dump(doc, f, indent=2)
            tmp.replace(path)

    def get(self, kind: str, entity_id: str) -> dict | None:
        path = self._path(kind, entity_id)
        if not path.is_file():
            return None
        with open(path, encoding="utf-8") as f:
            return json.load(f)

    def list(self, kind: str) -> list[dict]:
        docs = []
        for path in sorted((self.root / kind).glob("*.json")):
            with open(path, encoding="utf-8") as f:
                docs.append(json.load(f))
        return docs

    def update(self, kind: str, entity_id: str, **fields) -> None:
        doc = self.get(kind, entity_id)
        if doc is None:
            raise _not_found(kind, entity_id)
        doc.update(fields)
        self.put(kind, entity_id, doc)

    def run_dir(self, run_id: str) -> Path:
        return self.root / "runs" / run_id


def _new_id() -> str:
    return uuid.uuid4().hex[:12]


def _execute_run(store: Store, run_id: str, portfolio, parallelism: int) -> None:
    def progress(done: int, total: int) -> None:
        store.update("runs", run_id, progress=done / total)

    try:
        store.update("runs", run_id, status=RUN_RUNNING)
        results = run_portfolio(portfolio, parallelism=parallelism, progress=progress)
        out_dir = store.run_dir(run_id)
        export_results(results, out_dir)
        plan = recommend_plan(results, portfolio)
        store.update(
            "runs",
            run_id,
            status=RUN_DONE,
            progress=1.0,
            recommendation={
                "best_effort": plan.best_effort,
                "entries": [asdict(e) for e in plan.entries],
            },
            scenario_meta=results.scenario_meta,
        )
    except Exception as exc:
        log.exception("run %s failed", run_id)
        store.update("runs", run_id, status=RUN_FAILED, error=str(exc))


def _aggregates_from_rows(rows) -> dict:
    by_scenario: dict[str, list] = {}
    for row in rows:
        by_scenario.setdefault(row.scenario_id, []).append(row.report)
    out = {}
    for scenario_id, reports in by_scenario.items():
        per_metric = {}
        for metric in METRIC_NAMES:
            values = [getattr(r, metric) for r in reports]
            per_metric[metric] = {
                "median": statistics.median(values),
                "mean": statistics.mean(values),
                "std": statistics.stdev(values) if len(values) > 1 else 0.0,
            }
        out[scenario_id] = per_metric
    return out


def create_app(data_dir: str | Path, ui_dir: str | Path | None = None) -> FastAPI:
    store = Store(data_dir)
    app = FastAPI(title="capelin", version="0.1.0")

    @app.exception_handler(ApiError)
    async def api_error_handler(_request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    @app.exception_handler(Exception)
    async def internal_error_handler(_request: Request, exc: Exception):
        log.exception("internal error")
        return JSONResponse(status_code=500, content={"code": "internal", "message": str(exc)})

    def _require(kind: str, entity_id: str) -> dict:
        doc = store.get(kind, entity_id)
        if doc is None:
            raise _not_found(kind[:-1], entity_id)
        return doc

    def _resolve_portfolio(doc: dict):
        # Scenario topologies may reference stored entities by id.
        body = json.loads(json.dumps(doc))  # deep copy
        for scenario in [body.get("base"), *body.get("candidates", [])]:
            if scenario is None:
                continue
            topo = scenario.get("topology")
            if isinstance(topo, dict) and "topology_id" in topo:
                stored = _require("topologies", topo["topology_id"])
                scenario["topology"] = stored["document"]
            wl = scenario.get("workload")
            if isinstance(wl, dict) and "trace_id" in wl:
                stored = _require("traces", wl["trace_id"])
                # the registered trace's path/format win over placeholders
                merged = {k: v for k, v in wl.items() if k != "trace_id"}
                merged.update(stored["document"])
                scenario["workload"] = merged
        try:
            return portfolio_from_dict(body, base_dir=".")
        except Exception as exc:
            raise ApiError(400, "invalid_portfolio", str(exc)) from exc

    # --- topologies ---------------------------------------------------

    @app.post("/topologies", status_code=201)
    async def post_topology(request: Request):
        body = await request.json()
        try:
            topology = topology_from_dict(body)
        except Exception as exc:
            raise ApiError(400, "invalid_topology", str(exc)) from exc
        entity_id = _new_id()
        store.put(
            "topologies",
            entity_id,
            {"id": entity_id, "kind": "topology", "document": topology_to_dict(topology)},
        )
        return {"id": entity_id}

    @app.get("/topologies")
    async def list_topologies():
        return {"items": store.list("topologies")}

    @app.get("/topologies/{entity_id}")
    async def get_topology(entity_id: str):
        return _require("topologies", entity_id)

    @app.post("/topologies/{entity_id}/candidates", status_code=201)
    async def post_candidates(entity_id: str, request: Request):
        body = {}
        if await request.body():
            body = await request.json()
        doc = _require("topologies", entity_id)
        try:
            base = topology_from_dict(doc["document"])
            candidates = enumerate_candidates(base, seed=int(body.get("seed", 0)))
        except ValueError as exc:
            raise ApiError(400, "invalid_topology", str(exc)) from exc
        items = []
        for dims, candidate in candidates:
            cand_id = _new_id()
            cand_doc = topology_to_dict(candidate)
            store.put(
                "topologies",
                cand_id,
                {
                    "id": cand_id,
                    "kind": "topology",
                    "document": cand_doc,
                    "derived_from": entity_id,
                    "dimensions": {
                        "mode": dims.mode,
                        "quality": dims.quality,
                        "direction": dims.direction,
                        "variance": dims.variance,
                        "label": dims.label,
                    },
                },
            )
            items.append(
                {
                    "id": cand_id,
                    "label": dims.label,
                    "mode": dims.mode,
                    "quality": dims.quality,
                    "direction": dims.direction,
                    "variance": dims.variance,
                    "total_cores": candidate.total_cores,
                    "name": candidate.name,
                }
            )
        return {"items": items}

    # --- trace refs ----------------------------------------------------

    @app.post("/traces", status_code=201)
    async def post_trace(request: Request):
        body = await request.json()
        path = body.get("path")
        fmt = body.get("format", "canonical")
        if not path or fmt not in ("canonical", "azure"):
            raise ApiError(400, "invalid_trace_ref", "need path and format canonical|azure")
        try:
            workload = (
                load_azure_trace(path) if fmt == "azure" else load_private_trace(path)
            )
        except Exception as exc:
            raise ApiError(400, "invalid_trace_ref", str(exc)) from exc
        entity_id = _new_id()
        store.put(
            "traces",
            entity_id,
            {
                "id": entity_id,
                "kind": "trace-ref",
                "document": {"path": str(path), "format": fmt},
                "vm_count": len(workload.vms),
                "total_load_mflop": workload.total_load_mflop,
                "duration_s": workload.duration_s,
            },
        )
        return {"id": entity_id}

    @app.get("/traces")
    async def list_traces():
        return {"items": store.list("traces")}

    @app.get("/traces/{entity_id}")
    async def get_trace(entity_id: str):
        return _require("traces", entity_id)

    # --- portfolios -----------------------------------------------------

    @app.post("/portfolios", status_code=201)
    async def post_portfolio(request: Request):
        body = await request.json()
        _resolve_portfolio(body)  # validation only; store the raw document
        entity_id = _new_id()
        store.put(
            "portfolios", entity_id, {"id": entity_id, "kind": "portfolio", "document": body}
        )
        return {"id": entity_id}

    @app.get("/portfolios")
    async def list_portfolios():
        return {"items": store.list("portfolios")}

    @app.get("/portfolios/{entity_id}")
    async def get_portfolio(entity_id: str):
        return _require("portfolios", entity_id)

    # --- runs ------------------------------------------------------------

    @app.post("/portfolios/{entity_id}/runs", status_code=202)
    async def post_run(entity_id: str, request: Request):
        body = {}
        if await request.body():
            body = await request.json()
        doc = _require("portfolios", entity_id)
        for run in store.list("runs"):
            if run.get("portfolio_id") == entity_id and run.get("status") in ACTIVE_STATES:
                raise ApiError(
                    409, "run_active", f"portfolio {entity_id} already has an active run"
                )
        portfolio = _resolve_portfolio(doc["document"])
        if "repetitions" in body:
            portfolio.repetitions = int(body["repetitions"])
        parallelism = int(body.get("parallelism", 1))
        try:
            # Fail fast on unresolvable references before going async.
            from capelin.engine import resolve_scenario

            for scenario in portfolio.scenarios():
                resolve_scenario(scenario)
        except (ConfigurationError, OSError, ValueError, TypeError, KeyError) as exc:
            raise ApiError(400, "invalid_portfolio", str(exc)) from exc
        run_id = _new_id()
        total = len(portfolio.scenarios()) * portfolio.repetitions
        store.put(
            "runs",
            run_id,
            {
                "id": run_id,
                "kind": "run",
                "portfolio_id": entity_id,
                "status": RUN_PENDING,
                "progress": 0.0,
                "total_units": total,
                "created_at": time.time(),
            },
        )
        thread = threading.Thread(
            target=_execute_run, args=(store, run_id, portfolio, parallelism), daemon=True
        )
        thread.start()
        return {"id": run_id, "status": RUN_PENDING, "progress": 0.0}

    @app.get("/runs")
    async def list_runs(portfolio_id: str | None = None):
        runs = store.list("runs")
        if portfolio_id is not None:
            runs = [r for r in runs if r.get("portfolio_id") == portfolio_id]
        return {"items": runs}

    @app.get("/runs/{run_id}")
    async def get_run(run_id: str):
        return _require("runs", run_id)

    @app.get("/runs/{run_id}/results")
    async def get_run_results(run_id: str):
        doc = _require("runs", run_id)
        if doc["status"] != RUN_DONE:
            raise ApiError(
                409, "run_not_done", f"run {run_id} is {doc['status']}; results not available"
            )
        rows = load_results_rows(store.run_dir(run_id) / RESULTS_FILE)
        return {
            "run_id": run_id,
            "portfolio_id": doc["portfolio_id"],
            "rows": [
                {
                    "scenario_id": row.scenario_id,
                    "repetition": row.repetition,
                    **row.report.as_dict(),
                }
                for row in rows
            ],
            "aggregates": _aggregates_from_rows(rows),
            "recommendation": doc.get("recommendation"),
            "scenario_meta": doc.get("scenario_meta"),
        }

    # --- misc -------------------------------------------------------------

    @app.get("/metrics/names")
    async def metric_names():
        return {"metrics": list(METRIC_NAMES)}

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
