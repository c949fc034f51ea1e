"""Command-line front end: explore, train-reducer, recommend, validate, serve.

Exit codes: 0 success, 2 bad input or configuration, 3 internal failure.
All JSON outputs are deterministic for a fixed seed: no timestamps, keys
sorted, floats emitted by repr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import exploration, reducer, scenarios, telemetry
from .datasets import (
    DataDimension,
    DatasetMeta,
    DatasetType,
    LEVEL_GRID,
    Scope,
    SyntheticSpec,
    generate_synthetic,
    partition_evenly,
    split_train_test,
)
from .errors import GreenFLError
from .recommender import Method
from .seeding import stable_seed
from .stores import JsonlStore

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USER = 2
EXIT_INTERNAL = 3


def _data_dir(override: str | None) -> Path:
    if override:
        return Path(override)
    return Path(os.environ.get("GREENFL_DATA_DIR", "greenfl-data"))


def _dump_json(obj: dict, out: str | None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _parse_dataset_spec(spec: str) -> tuple[SyntheticSpec, DatasetType]:
    """NAME:SAMPLES:CLASSES:LENGTH:SEPARATION[:TYPE]"""
    parts = spec.split(":")
    if len(parts) not in (5, 6):
        raise GreenFLError(
            f"dataset spec {spec!r} must be NAME:SAMPLES:CLASSES:LENGTH:SEPARATION[:TYPE]"
        )
    name, n, k, length, sep = parts[:5]
    type_tag = DatasetType(parts[5]) if len(parts) == 6 else DatasetType.SYNTHETIC
    try:
        return (
            SyntheticSpec(
                n_samples=int(n),
                n_classes=int(k),
                sequence_length=int(length),
                class_separation=float(sep),
                seed=0,  # replaced per grid seed
                name=name,
            ),
            type_tag,
        )
    except ValueError as exc:
        raise GreenFLError(f"dataset spec {spec!r}: {exc}") from exc


def _load_scenario_arg(ref: str) -> scenarios.ScenarioConfig:
    if Path(ref).exists():
        return scenarios.load_scenario(ref)
    if ref in scenarios.bundled_scenario_names():
        return scenarios.load_bundled_scenario(ref)
    raise GreenFLError(
        f"scenario {ref!r} is neither a file nor a bundled name "
        f"({', '.join(scenarios.bundled_scenario_names())})"
    )


def _load_model_arg(path: str | None, data_dir: Path) -> reducer.ReducerModel:
    model_path = Path(path) if path else data_dir / "reducer_model.json"
    if not model_path.exists():
        raise GreenFLError(f"no reducer model at {model_path}; run `greenfl train-reducer` first")
    try:
        return reducer.ReducerModel.load(model_path)
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise GreenFLError(f"unusable reducer model {model_path}: {exc}") from exc


def cmd_explore(args: argparse.Namespace) -> int:
    if not args.datasets:
        raise GreenFLError("explore needs at least one --datasets spec")
    out_dir = _data_dir(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    specs = dict()
    types = dict()
    for raw in args.datasets:
        spec, type_tag = _parse_dataset_spec(raw)
        if spec.name in specs:
            raise GreenFLError(f"duplicate dataset name {spec.name!r}")
        specs[spec.name] = spec
        types[spec.name] = type_tag

    dims = [DataDimension(d) for d in args.dims]
    scopes = [Scope.HORIZONTAL if t == "H" else Scope.VERTICAL for t in args.types]
    levels = [float(v) for v in args.levels]
    grid = exploration.build_grid(sorted(specs), dims, scopes, levels, args.reps)

    fl_config = exploration.grid_fl_config(args.seed, args.rounds)
    energy_model = exploration.GRID_ENERGY_MODEL
    node_ids = [f"node{i}" for i in range(args.nodes)]
    profiles = exploration.uniform_profiles(node_ids)

    def partition_for(name: str):
        from dataclasses import replace

        base = generate_synthetic(replace(specs[name], seed=stable_seed(args.seed, name)))
        train, test = split_train_test(base, 0.2, stable_seed(args.seed, name, "test"))
        return partition_evenly(
            train, args.nodes, stable_seed(args.seed, name, "shards"), node_ids, test
        )

    store = JsonlStore(out_dir / "experiments.jsonl")
    records = exploration.run_grid(
        grid,
        partition_for,
        fl_config,
        energy_model,
        lambda name: profiles,
        store,
        ledger_path=out_dir / "ledger.jsonl",
    )

    curves = exploration.fit_curves(records)
    curves_path = out_dir / "curves.jsonl"
    curves_path.write_text(
        "".join(json.dumps(c.to_json(), sort_keys=True) + "\n" for c in curves),
        encoding="utf-8",
    )

    meta_path = out_dir / "datasets.jsonl"
    meta_lines = []
    for name in sorted(specs):
        spec = specs[name]
        meta = DatasetMeta(
            name=name,
            type_tag=types[name],
            train_size=spec.n_samples - int(round(0.2 * spec.n_samples)),
            num_classes=spec.n_classes,
            sequence_length=spec.sequence_length,
        )
        meta_lines.append(json.dumps(meta.to_json(), sort_keys=True) + "\n")
    meta_path.write_text("".join(meta_lines), encoding="utf-8")

    plots_dir = out_dir / "plots"
    plots_dir.mkdir(exist_ok=True)
    for curve in curves:
        e = curve.experiment
        fname = f"{e.dataset_name}_{e.scope.value}_{e.dimension.value}_{curve.metric.value}.csv"
        (plots_dir / fname).write_text(
            exploration.curve_points_csv(records, curve), encoding="utf-8"
        )

    failed = sum(1 for r in records if r.error is not None)
    print(f"explored {len(records)} runs ({failed} failed), {len(curves)} curves -> {out_dir}")
    return EXIT_OK


def cmd_train_reducer(args: argparse.Namespace) -> int:
    data_dir = _data_dir(None)
    curves_path = Path(args.curves) if args.curves else data_dir / "curves.jsonl"
    if not curves_path.exists():
        raise GreenFLError(f"no curves file at {curves_path}")
    meta_path = Path(args.datasets_meta) if args.datasets_meta else curves_path.parent / "datasets.jsonl"
    if not meta_path.exists():
        raise GreenFLError(f"no dataset metadata file at {meta_path}")

    curves = [exploration.Curve.from_json(obj) for obj in JsonlStore(curves_path)]
    meta_for = {}
    for obj in JsonlStore(meta_path):
        meta_for[obj["name"]] = DatasetMeta(
            name=obj["name"],
            type_tag=DatasetType(obj["type"]),
            train_size=obj["train_size"],
            num_classes=obj["classes"],
            sequence_length=obj["sequence_length"],
        )

    rows = reducer.build_training_set(curves, meta_for)
    if not rows:
        raise GreenFLError("no usable curves: nothing to train on")
    models = reducer.fit_all(rows, k_folds=min(args.folds, len(rows)), seed=args.seed)
    best = reducer.select_best(models)

    print(f"training rows: {len(rows)}")
    print(f"{'kind':<18} {'cv_rmse':>10}")
    for m in models:
        marker = " *" if m.kind is best.kind else ""
        print(f"{m.kind.value:<18} {m.cv_error:>10.6f}{marker}")

    out_path = Path(args.out) if args.out else curves_path.parent / "reducer_model.json"
    payload = best.to_json()
    payload["candidates"] = [
        {"kind": m.kind.value, "cv_error": m.cv_error} for m in models
    ]
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(f"selected {best.kind.value} -> {out_path}")
    return EXIT_OK


def _print_recommendation_table(rec_json: dict) -> None:
    print(f"{'method':<10} {'nodes':>5} {'n_hat':>5} {'V':>7} {'E':>7} {'pred kg':>10} {'short':>6}")
    for name in ("Baseline", "NS", "MSR", "SR"):
        rec = rec_json["methods"][name]
        print(
            f"{name:<10} {len(rec['selected']):>5} {rec['n_hat']:>5} "
            f"{rec['v_target']:>7.3f} {rec['e_effective']:>7.3f} "
            f"{rec['predicted_kg']:>10.5f} {str(rec['shortfall_flag']):>6}"
        )
    for warning in rec_json.get("warnings", []):
        print(f"warning: {warning}")


def cmd_recommend(args: argparse.Namespace) -> int:
    data_dir = _data_dir(None)
    scenario = _load_scenario_arg(args.scenario)
    model = _load_model_arg(args.model, data_dir)
    estimate = None
    if args.estimate:
        ledger = data_dir / "ledger.jsonl"
        estimate, est_kg = scenarios.run_estimation(scenario, ledger_path=ledger)
        print(f"single-node estimate: accuracy {estimate:.3f}, {est_kg:.5f} kg CO2e",
              file=sys.stderr)
    rec_set = scenarios.recommend_for_scenario(scenario, model, accuracy_estimate=estimate)
    payload = rec_set.to_json()
    payload["scenario"] = scenario.name
    if args.json or args.out:
        _dump_json(payload, args.out)
    else:
        _print_recommendation_table(payload)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    data_dir = _data_dir(None)
    scenario = _load_scenario_arg(args.scenario)
    model = _load_model_arg(args.model, data_dir)
    methods = None
    if args.methods:
        methods = [Method(m) for m in args.methods.split(",") if m]
    ledger = data_dir / "ledger.jsonl"
    result = scenarios.run_validation(scenario, model, args.reps, methods, ledger_path=ledger)

    payload = result.to_json()
    if args.json or args.out:
        _dump_json(payload, args.out)
    if not args.json:
        print(f"scenario {scenario.name}: threshold {scenario.accuracy_threshold}")
        print(f"{'method':<10} {'mean acc':>9} {'mean kg':>10} {'hit rate':>9}")
        for summary in result.methods:
            print(
                f"{summary.method.value:<10} {summary.mean_accuracy:>9.4f} "
                f"{summary.mean_kg:>10.5f} {summary.threshold_rate:>9.2%}"
            )
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(_data_dir(args.data_dir))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="greenfl",
        description="Carbon-aware federated learning simulator and configuration recommender.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explore", help="run the degradation grid and fit curves")
    p.add_argument("--datasets", nargs="+", required=False, default=[],
                   metavar="NAME:SAMPLES:CLASSES:LENGTH:SEPARATION[:TYPE]")
    p.add_argument("--dims", nargs="+", default=["volume"],
                   choices=[d.value for d in DataDimension])
    p.add_argument("--types", nargs="+", default=["H", "V"], choices=["H", "V"])
    p.add_argument("--levels", nargs="+", default=[str(v) for v in LEVEL_GRID])
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory (default: GREENFL_DATA_DIR)")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("train-reducer", help="fit volume-prediction models from curves")
    p.add_argument("--curves", help="curves.jsonl path")
    p.add_argument("--datasets-meta", help="datasets.jsonl path")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="model output path")
    p.set_defaults(func=cmd_train_reducer)

    p = sub.add_parser("recommend", help="recommend configurations for a scenario")
    p.add_argument("--scenario", required=True, help="scenario file or bundled name")
    p.add_argument("--model", help="reducer model path")
    p.add_argument("--estimate", action="store_true",
                   help="run the single-node accuracy estimation first")
    p.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    p.add_argument("--out", help="write JSON to this path")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("validate", help="execute recommended configurations in the simulator")
    p.add_argument("--scenario", required=True)
    p.add_argument("--model", help="reducer model path")
    p.add_argument("--methods", help="comma list among NS,MSR,SR (Baseline always runs)")
    p.add_argument("--reps", type=int, default=8)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", help="write JSON to this path")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--data-dir", help="store root (default: GREENFL_DATA_DIR)")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except GreenFLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception as exc:  # pragma: no cover - safety net
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
