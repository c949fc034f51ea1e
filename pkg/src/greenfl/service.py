"""HTTP facade over the recommender and validation pipeline.

Scenarios are stored by id; recommendation is synchronous; validation
runs execute on a small worker pool and are polled via /runs/{run_id}.
The same core functions back the CLI, so identical inputs give identical
outputs on either path.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from fastapi import Body, FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware

from . import scenarios as scn
from .errors import GreenFLError
from .recommender import Method
from .reducer import ReducerModel
from .stores import JsonlStore
from .telemetry import ledger_entries, ledger_totals_by_purpose

DEFAULT_DATA_DIR = "greenfl-data"


def _data_dir() -> Path:
    return Path(os.environ.get("GREENFL_DATA_DIR", DEFAULT_DATA_DIR))


class RunRegistry:
    """Tracks validation runs across their queued/running/done lifecycle."""

    def __init__(self, store: JsonlStore | None) -> None:
        self._lock = threading.Lock()
        self._runs: dict[str, dict] = {}
        self._store = store

    def create(self, run_id: str, scenario_id: str, reps: int) -> None:
        with self._lock:
            if run_id in self._runs:
                raise KeyError(run_id)
            self._runs[run_id] = {
                "run_id": run_id,
                "scenario_id": scenario_id,
                "reps": reps,
                "status": "queued",
                "submitted_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            }

    def transition(self, run_id: str, status: str, **extra) -> None:
        with self._lock:
            run = self._runs[run_id]
            run["status"] = status
            run.update(extra)
            if status in ("done", "failed") and self._store is not None:
                self._store.append(run)

    def get(self, run_id: str) -> dict | None:
        with self._lock:
            run = self._runs.get(run_id)
            return dict(run) if run else None


def create_app(data_dir: str | Path | None = None, model_path: str | Path | None = None) -> FastAPI:
    root = Path(data_dir) if data_dir is not None else _data_dir()
    app = FastAPI(title="greenfl", version="0.1.0")
    # The web console may be served from any static host, so the API answers
    # cross-origin requests. There is no auth to protect (see Non-goals).
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.data_dir = root
    app.state.ledger_path = root / "ledger.jsonl"
    app.state.model_path = Path(model_path) if model_path else root / "reducer_model.json"
    app.state.scenarios: dict[str, scn.ScenarioConfig] = {}
    app.state.runs = RunRegistry(JsonlStore(root / "runs.jsonl"))
    app.state.pool = ThreadPoolExecutor(max_workers=2, thread_name_prefix="greenfl-validate")

    def load_model() -> ReducerModel:
        path = app.state.model_path
        if not Path(path).exists():
            raise HTTPException(
                status_code=400,
                detail=f"no reducer model at {path}; train one first",
            )
        try:
            return ReducerModel.load(path)
        except (GreenFLError, json.JSONDecodeError, KeyError) as exc:
            raise HTTPException(status_code=400, detail=f"unusable reducer model: {exc}")

    def get_scenario(scenario_id: str) -> scn.ScenarioConfig:
        scenario = app.state.scenarios.get(scenario_id)
        if scenario is None:
            raise HTTPException(status_code=404, detail=f"unknown scenario {scenario_id}")
        return scenario

    @app.post("/scenarios")
    def post_scenario(payload: dict = Body(...)) -> dict:
        try:
            scenario = scn.scenario_from_json(payload)
        except GreenFLError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        scenario_id = uuid.uuid4().hex[:12]
        app.state.scenarios[scenario_id] = scenario
        return {"id": scenario_id}

    @app.get("/scenarios")
    def list_scenarios() -> dict:
        return {
            "scenarios": [
                {"id": sid, "name": s.name} for sid, s in sorted(app.state.scenarios.items())
            ]
        }

    @app.get("/scenarios/{scenario_id}")
    def get_scenario_route(scenario_id: str) -> dict:
        return get_scenario(scenario_id).to_json()

    @app.post("/scenarios/{scenario_id}/recommend")
    def recommend_route(scenario_id: str) -> dict:
        scenario = get_scenario(scenario_id)
        model = load_model()
        try:
            return scn.recommend_for_scenario(scenario, model).to_json()
        except GreenFLError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.post("/scenarios/{scenario_id}/validate")
    def validate_route(
        scenario_id: str,
        reps: int = Query(8, ge=1, le=64),
        methods: str | None = Query(None),
        run_id: str | None = Query(None),
    ) -> dict:
        scenario = get_scenario(scenario_id)
        model = load_model()
        wanted = None
        if methods:
            try:
                wanted = [Method(m.strip()) for m in methods.split(",") if m.strip()]
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=f"unknown method: {exc}")
        rid = run_id or uuid.uuid4().hex[:12]
        try:
            app.state.runs.create(rid, scenario_id, reps)
        except KeyError:
            raise HTTPException(status_code=409, detail=f"run id {rid} already exists")

        def work() -> None:
            app.state.runs.transition(rid, "running")
            try:
                result = scn.run_validation(
                    scenario, model, reps, wanted, ledger_path=app.state.ledger_path
                )
                app.state.runs.transition(rid, "done", result=result.to_json())
            except Exception as exc:  # failures must surface through polling
                app.state.runs.transition(rid, "failed", error=str(exc))

        app.state.pool.submit(work)
        return {"run_id": rid}

    @app.get("/runs/{run_id}")
    def run_status(run_id: str) -> dict:
        run = app.state.runs.get(run_id)
        if run is None:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id}")
        return run

    @app.get("/ledger")
    def ledger_route() -> dict:
        path = app.state.ledger_path
        entries = ledger_entries(path)
        return {
            "total_kg": sum(e["total_kg"] for e in entries),
            "total_kwh": sum(e["total_kwh"] for e in entries),
            "by_purpose": ledger_totals_by_purpose(path),
            "entries": len(entries),
        }

    @app.get("/bundled")
    def bundled_route() -> dict:
        return {"scenarios": scn.bundled_scenario_names()}

    @app.get("/bundled/{name}")
    def bundled_scenario_route(name: str) -> dict:
        try:
            return scn.load_bundled_scenario(name).to_json()
        except GreenFLError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    return app


app = create_app()
