"""Regenerate the canned service payloads used by the console tests.

Run from the repository root (the Python package must be installed):

    python3 frontend/scripts/make_fixtures.py

Drives the HTTP app in-process through the same endpoints the console
calls and freezes each response under frontend/tests/fixtures/, so the
UI tests exercise real wire payloads without a running service.
"""

from __future__ import annotations

import json
import tempfile
import time
from pathlib import Path

from fastapi.testclient import TestClient

from greenfl.datasets import DatasetMeta, DatasetType
from greenfl.exploration import Curve, CurveMetric, DataDimension, Experiment, Scope
from greenfl.reducer import RegressorKind, build_training_set, fit
from greenfl.service import create_app

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def write_volume_model(path: Path) -> None:
    """Train a small volume model so recommendations have real predictions."""
    curves = [
        Curve(Experiment(name, Scope.VERTICAL, DataDimension.VOLUME),
              CurveMetric.ACCURACY, a, b, r2=1.0, n_points=5)
        for name, a, b in (("ds0", 0.10, 0.90), ("ds1", 0.08, 0.85), ("ds2", 0.12, 0.92))
    ]
    metas = {
        "ds0": DatasetMeta("ds0", DatasetType.SENSOR, 2000, 2, 100),
        "ds1": DatasetMeta("ds1", DatasetType.IMAGE, 1500, 3, 60),
        "ds2": DatasetMeta("ds2", DatasetType.SIMULATED, 4000, 4, 200),
    }
    model = fit(RegressorKind.LINEAR, build_training_set(curves, metas), k_folds=5, seed=0)
    model.save(path)


def save(name: str, payload: object) -> None:
    path = FIXTURE_DIR / name
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {path}")


def main() -> None:
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        data_dir = Path(tmp)
        write_volume_model(data_dir / "reducer_model.json")
        client = TestClient(create_app(data_dir))

        bundled = client.get("/bundled").json()
        scenario = client.get("/bundled/configuration1").json()
        scenario_id = client.post("/scenarios", json=scenario).json()["id"]
        echo = client.get(f"/scenarios/{scenario_id}").json()
        assert echo == scenario, "stored scenario must round-trip unchanged"

        recommendation = client.post(f"/scenarios/{scenario_id}/recommend").json()
        run_id = client.post(
            f"/scenarios/{scenario_id}/validate",
            params={"reps": 8, "run_id": "fixture01"},
        ).json()["run_id"]
        while True:
            run = client.get(f"/runs/{run_id}").json()
            if run["status"] in ("done", "failed"):
                break
            time.sleep(0.2)
        assert run["status"] == "done", run.get("error")
        ledger = client.get("/ledger").json()

    save("bundled.json", bundled)
    save("configuration1.json", echo)
    save("recommendation1.json", recommendation)
    save("run_done.json", run)
    save("ledger.json", ledger)


if __name__ == "__main__":
    main()
