"""Release acceptance suite: one criterion per test, one printed verdict each.

Every test emits `[acceptance] <label>: PASS|FAIL` even under output capture,
so a verbose run doubles as the release checklist. Numeric tolerances and
runtime budgets live next to the assertions they guard; expected values come
from hand arithmetic or from the independent reference implementations in
`oracles.py`, never from the code under test.
"""

from __future__ import annotations

import json
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from greenfl import learner, telemetry
from greenfl.cli import EXIT_OK, main
from greenfl.datasets import (
    DatasetMeta,
    DatasetType,
    Sample,
    SyntheticSpec,
    TimeSeriesDataset,
    empty_like,
    generate_synthetic,
    measure_quality,
    partition_evenly,
    split_train_test,
)
from greenfl.exploration import (
    GRID_ENERGY_MODEL,
    LEVEL_GRID,
    Curve,
    CurveMetric,
    DataDimension,
    Experiment,
    JsonlStore,
    Scope,
    build_grid,
    fit_curves,
    fit_log_curve,
    grid_fl_config,
    rank_dimensions,
    run_grid,
    stable_seed,
    uniform_profiles,
)
from greenfl.learner import ModelSpec, init_weights
from greenfl.recommender import (
    NoFeasibleNode,
    NodeProfile,
    ScoreWeights,
    predict_n_hat,
    score_nodes,
    select_msr,
    select_ns,
    select_sr,
    volume_targets,
)
from greenfl.reducer import (
    RegressorKind,
    ReducerFeatures,
    build_training_set,
    fit,
    invert_curve,
    predict_volume,
    select_best,
)
from oracles import exhaustive_feasible_top, finite_difference_gradient
from test_cli import write_curve_corpus, write_scenario_file
from test_recommender import const_model

TOL = 1e-9


@contextmanager
def verdict(capsys, label):
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"\n[acceptance] {label}: FAIL", flush=True)
        raise
    with capsys.disabled():
        print(f"\n[acceptance] {label}: PASS", flush=True)


def series(i, length=8):
    """A value pattern unique to index i, so no accidental duplicate groups."""
    vals = np.zeros(length)
    vals[0] = float(i)
    return vals


def dataset(samples, n_classes=2, length=8):
    return TimeSeriesDataset("unit", DatasetType.SYNTHETIC, tuple(samples), n_classes, length)


def node(node_id, power, intensity, volume=1.0, consistency=1.0, completeness=1.0):
    return NodeProfile(
        node_id=node_id, power_watts=power, location="Lab",
        carbon_intensity=intensity, data_volume_fraction=volume,
        consistency=consistency, completeness=completeness,
    )


class TestFormulaUnitSuite:
    """Quality measures, node score, and volume/node-count conversions on
    hand-computed cases, each exact to 1e-9, all inside a one-second budget."""

    def test_quality_and_scoring_formulas_pin_hand_computed_values(self, capsys):
        with verdict(capsys, "formula unit suite"):
            t0 = time.perf_counter()
            reference = dataset(Sample(series(i), i % 2, i) for i in range(100))

            # Volume: kept-sample share of the pre-degradation shard.
            kept80 = dataset(Sample(series(i), i % 2, i) for i in range(80))
            q = measure_quality(kept80, reference)
            assert abs(q.volume - 0.8) <= TOL
            assert abs(q.accuracy - 1.0) <= TOL
            assert abs(q.consistency - 1.0) <= TOL
            assert abs(q.completeness - 1.0) <= TOL
            assert abs(measure_quality(reference, reference).volume - 1.0) <= TOL
            assert abs(measure_quality(empty_like(reference), reference).volume - 0.0) <= TOL

            # Label accuracy: share of samples still carrying their true label.
            def relabeled(k):
                return dataset(
                    Sample(series(i), (i % 2) ^ (1 if i < k else 0), i) for i in range(100)
                )

            assert abs(measure_quality(relabeled(20), reference).accuracy - 0.8) <= TOL
            assert abs(measure_quality(relabeled(50), reference).accuracy - 0.5) <= TOL
            assert abs(measure_quality(relabeled(0), reference).accuracy - 1.0) <= TOL

            # Consistency: both members of a conflicting duplicate pair count.
            def with_duplicates(k, conflicting=True):
                extra = [
                    Sample(series(i), (i % 2) ^ (1 if conflicting else 0), 1000 + i)
                    for i in range(k)
                ]
                return dataset([Sample(series(i), i % 2, i) for i in range(100)] + extra)

            q = measure_quality(with_duplicates(10), reference)
            assert abs(q.consistency - 0.8) <= TOL
            assert abs(q.volume - 1.0) <= TOL  # duplicates carry new ids
            assert abs(measure_quality(with_duplicates(20), reference).consistency - 0.6) <= TOL
            same_label = measure_quality(with_duplicates(15, conflicting=False), reference)
            assert abs(same_label.consistency - 1.0) <= TOL

            # Completeness: share of samples without missing entries.
            def gapped(k):
                samples = []
                for i in range(100):
                    vals = series(i)
                    if i < k:
                        vals[2:6] = np.nan
                    samples.append(Sample(vals, i % 2, i))
                return dataset(samples)

            assert abs(measure_quality(gapped(30), reference).completeness - 0.7) <= TOL
            assert abs(measure_quality(gapped(100), reference).completeness - 0.0) <= TOL
            assert abs(measure_quality(gapped(0), reference).completeness - 1.0) <= TOL

            # Node score: emission-rate complement blended with quality.
            weights = ScoreWeights()  # 0.7 energy, 0.2 consistency, 0.1 completeness
            ranked = score_nodes(
                [node("dirty", 200.0, 0.5, consistency=0.9, completeness=0.9),
                 node("clean", 100.0, 0.25)],
                weights,
            )
            scores = {r.node.node_id: r.score for r in ranked}
            assert abs(scores["dirty"] - 0.27) <= TOL  # 0.7*0 + 0.2*0.9 + 0.1*0.9
            ranked = score_nodes(
                [node("green", 100.0, 0.0), node("dirty", 200.0, 0.5)], weights
            )
            scores = {r.node.node_id: r.score for r in ranked}
            assert abs(scores["green"] - 1.0) <= TOL  # zero-emission, perfect quality

            roster = [
                node("n0", 120.0, 0.8, consistency=0.7, completeness=0.9),
                node("n1", 350.0, 0.3, consistency=0.95, completeness=0.6),
                node("n2", 80.0, 0.1, consistency=0.85, completeness=0.85),
                node("n3", 220.0, 0.6, consistency=0.6, completeness=1.0),
            ]
            scaled = [
                node(n.node_id, n.power_watts, n.carbon_intensity * 3.7,
                     consistency=n.consistency, completeness=n.completeness)
                for n in roster
            ]
            base_rank = score_nodes(roster, weights)
            scaled_rank = score_nodes(scaled, weights)
            assert [r.node.node_id for r in base_rank] == [r.node.node_id for r in scaled_rank]
            for lhs, rhs in zip(base_rank, scaled_rank):
                assert abs(lhs.score - rhs.score) <= TOL  # rate ratios are scale-free

            # Equal-split volume arithmetic.
            v_n, v = volume_targets(10, 6)
            assert abs(v_n - 0.1) <= TOL and abs(v - 0.6) <= TOL
            assert abs(volume_targets(7, 7)[1] - 1.0) <= TOL
            v_n, v = volume_targets(10, 1)
            assert abs(v_n - 0.1) <= TOL and abs(v - 0.1) <= TOL

            # Predicted volume to node count: ceiling, clamped to [1, n_c].
            meta = DatasetMeta("unit", DatasetType.SYNTHETIC, 100, 2, 8)
            n_hat, vol = predict_n_hat(const_model(0.55), meta, 0.8, 10)
            assert n_hat == 6 and abs(vol - 0.55) <= TOL
            n_hat, vol = predict_n_hat(const_model(1.0), meta, 0.8, 4)
            assert n_hat == 4 and abs(vol - 1.0) <= TOL
            n_hat, vol = predict_n_hat(const_model(0.05), meta, 0.8, 10)
            assert n_hat == 1 and abs(vol - 0.1) <= TOL  # floor at the per-node share

            assert time.perf_counter() - t0 < 1.0


class TestSelectionOracle:
    """Greedy selection must match brute-force enumeration on random rosters,
    with the derived methods keeping their structural guarantees."""

    def test_greedy_node_selection_matches_exhaustive_enumeration(self, capsys):
        with verdict(capsys, "selection oracle"):
            t0 = time.perf_counter()
            rng = np.random.default_rng(7)
            weights = ScoreWeights()
            n_selected = n_infeasible = 0
            for _ in range(200):
                n = int(rng.integers(2, 9))
                roster, raw = [], []
                for i in range(n):
                    power = float(rng.uniform(50, 400))
                    intensity = float(rng.uniform(0.0, 1.0))
                    volume = float(rng.uniform(0.0, 0.6))
                    consistency = float(rng.uniform(0.5, 1.0))
                    completeness = float(rng.uniform(0.5, 1.0))
                    roster.append(node(f"n{i}", power, intensity, volume,
                                       consistency, completeness))
                    raw.append({
                        "node_id": f"n{i}", "power_watts": power,
                        "carbon_intensity": intensity, "data_volume": volume,
                        "consistency": consistency, "completeness": completeness,
                    })
                n_hat = int(rng.integers(1, n + 1))
                v_n = 1.0 / n
                expected = exhaustive_feasible_top(
                    raw, 0.7, {"consistency": 0.2, "completeness": 0.1}, n_hat, v_n
                )
                ranked = score_nodes(roster, weights)
                if not expected:
                    with pytest.raises(NoFeasibleNode):
                        select_ns(ranked, n_hat, v_n)
                    n_infeasible += 1
                    continue
                ns = select_ns(ranked, n_hat, v_n)
                assert [a.node_id for a in ns.selected] == expected
                assert all(
                    abs(a.allocated_volume_fraction - v_n) <= TOL for a in ns.selected
                )
                msr = select_msr(ranked, n_hat, v_n)
                assert [a.node_id for a in msr.selected] == [a.node_id for a in ns.selected]
                sr = select_sr(ranked, n_hat, v_n)
                assert sr.e_effective >= sr.v_target - TOL or sr.shortfall_flag
                n_selected += 1
            assert n_selected >= 100  # the generator exercised real selections
            assert n_infeasible >= 5  # ... and the no-feasible-node contract
            assert time.perf_counter() - t0 < 10.0


class TestGradientCheck:
    def test_learner_gradients_match_finite_differences(self, capsys):
        with verdict(capsys, "gradient check"):
            worst = 0.0
            for i in range(20):
                rng = np.random.default_rng(300 + i)
                spec = ModelSpec(
                    n_features=int(rng.integers(3, 9)),
                    n_classes=int(rng.integers(2, 5)),
                    hidden=int(rng.integers(2, 7)),
                )
                w = init_weights(spec, seed=i) + rng.normal(0.0, 0.3, spec.n_weights)
                x = rng.standard_normal((int(rng.integers(2, 7)), spec.n_features))
                y = rng.integers(0, spec.n_classes, len(x))
                analytic = learner.gradient(spec, w, x, y)
                numeric = finite_difference_gradient(
                    lambda wv: learner.loss(spec, wv, x, y), w
                )
                rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-8)
                worst = max(worst, float(rel.max()))
            assert worst <= 1e-4


class TestCurveRecovery:
    def test_log_curve_fit_recovers_known_coefficients(self, capsys):
        with verdict(capsys, "curve recovery"):
            xs = np.array([0.2, 0.4, 0.6, 0.8, 1.0])
            for a, b in ((0.1, 0.9), (0.05, 0.55), (0.3, 0.2)):
                curve = fit_log_curve(
                    [(float(x), float(a * math.log(x) + b)) for x in xs]
                )
                assert abs(curve.a - a) <= TOL
                assert abs(curve.b - b) <= TOL
                assert abs(curve.r2 - 1.0) <= TOL
            two = fit_log_curve(
                [(0.3, 0.2 * math.log(0.3) + 0.7), (0.9, 0.2 * math.log(0.9) + 0.7)]
            )
            assert abs(two.a - 0.2) <= TOL and abs(two.r2 - 1.0) <= TOL

            rng = np.random.default_rng(9)
            errors = []
            for _ in range(100):
                ys = 0.1 * np.log(xs) + 0.9 + rng.normal(0.0, 0.01, len(xs))
                noisy = fit_log_curve(list(zip(xs.tolist(), ys.tolist())))
                errors.append(abs(noisy.a - 0.1))
            assert max(errors) <= 0.05


def grid_partition(name, spec_args, seed):
    base = generate_synthetic(
        SyntheticSpec(*spec_args, seed=stable_seed(seed, "probe-data"), name=name)
    )
    train, test = split_train_test(base, 0.2, stable_seed(seed, "probe-test"))
    return partition_evenly(
        train, 10, stable_seed(seed, "probe-shards"), global_test=test
    )


class TestReductionTrend:
    """Concentrating a volume cut on whole nodes must beat spreading it
    thinly: strictly cheaper at every partial level, within 0.03 accuracy."""

    def test_node_removal_beats_uniform_thinning(self, capsys, tmp_path):
        with verdict(capsys, "reduction trend"):
            seed = 2026
            partition = grid_partition("trend", (500, 2, 24, 3.0), seed)
            nodes = uniform_profiles(sorted(partition.shards))
            subs = build_grid(
                ["trend"], [DataDimension.VOLUME],
                (Scope.HORIZONTAL, Scope.VERTICAL), LEVEL_GRID, n_reps=3,
            )
            records = run_grid(
                subs, lambda _: partition, grid_fl_config(seed, 10),
                GRID_ENERGY_MODEL, lambda _: nodes,
                JsonlStore(tmp_path / "trend.jsonl"),
            )
            assert len(records) == 30 and all(r.error is None for r in records)
            energy, accuracy = {}, {}
            for r in records:
                key = (r.sub.experiment.scope, r.sub.level)
                energy.setdefault(key, []).append(r.energy_kwh)
                accuracy.setdefault(key, []).append(r.accuracy)
            for level in LEVEL_GRID:
                h_energy = float(np.mean(energy[(Scope.HORIZONTAL, level)]))
                v_energy = float(np.mean(energy[(Scope.VERTICAL, level)]))
                h_acc = float(np.mean(accuracy[(Scope.HORIZONTAL, level)]))
                v_acc = float(np.mean(accuracy[(Scope.VERTICAL, level)]))
                if level > 0:
                    assert v_energy < h_energy
                assert v_acc >= h_acc - 0.03


class TestDimensionRanking:
    """Label noise and conflicting duplicates must hurt accuracy more than
    missing values on data the learner can only separate by clean labels."""

    def test_missing_values_rank_least_critical(self, capsys, tmp_path):
        with verdict(capsys, "dimension ranking"):
            dims = (
                DataDimension.ACCURACY,
                DataDimension.CONSISTENCY,
                DataDimension.COMPLETENESS,
            )
            wins = 0
            for seed in range(5):
                partition = grid_partition("rank", (600, 3, 32, 2.5), seed)
                nodes = uniform_profiles(sorted(partition.shards))
                subs = build_grid(["rank"], dims, (Scope.HORIZONTAL,),
                                  LEVEL_GRID, n_reps=3)
                records = run_grid(
                    subs, lambda _: partition, grid_fl_config(seed, 10),
                    GRID_ENERGY_MODEL, lambda _: nodes,
                    JsonlStore(tmp_path / f"rank{seed}.jsonl"),
                )
                assert all(r.error is None for r in records)
                ranked = rank_dimensions(fit_curves(records))
                assert len(ranked) == 3
                if ranked[-1][0] is DataDimension.COMPLETENESS:
                    wins += 1
            assert wins >= 4


#: Exploration corpus for the end-to-end replay: eight synthetic datasets
#: spanning sizes 1286-10295, lengths 24-1024, 2-7 classes, and three type
#: tags, disjoint from the bundled scenario datasets the model must serve.
REPLAY_CORPUS = (
    "StarlightCurves:10295:3:1024:0.04:Sensor",
    "ChlorineConcentration:4800:3:166:0.10:Simulated",
    "PhalangesOutlinesCorrect:2250:2:80:0.11:Image",
    "Yoga:3750:2:426:0.08:Image",
    "ItalyPowerDemand:1286:2:24:0.10:Sensor",
    "FordA:6151:2:500:0.06:Sensor",
    "TwoPatterns:6250:4:128:0.15:Simulated",
    "Fish:2736:7:463:0.21:Image",
)

BUNDLED_SCENARIOS = ("configuration1", "configuration2", "configuration3")


class TestScenarioReplay:
    """Full pipeline through the CLI: explore a corpus, train the volume
    model, then validate the three bundled scenarios at 8 repetitions each
    (96 simulated runs) and hold the recommender to its comparative claims."""

    def test_bundled_scenarios_replay_end_to_end(self, capsys, tmp_path, monkeypatch):
        with verdict(capsys, "scenario replay"):
            t0 = time.perf_counter()
            corpus = tmp_path / "corpus"
            val_dir = tmp_path / "validation"
            monkeypatch.setenv("GREENFL_DATA_DIR", str(corpus))
            assert main([
                "explore", "--datasets", *REPLAY_CORPUS,
                "--dims", "volume", "--types", "V",
                "--reps", "3", "--nodes", "10", "--rounds", "10",
                "--seed", "2026", "--out", str(corpus),
            ]) == EXIT_OK
            model = corpus / "reducer_model.json"
            assert main([
                "train-reducer",
                "--curves", str(corpus / "curves.jsonl"),
                "--datasets-meta", str(corpus / "datasets.jsonl"),
                "--seed", "0", "--out", str(model),
            ]) == EXIT_OK

            monkeypatch.setenv("GREENFL_DATA_DIR", str(val_dir))
            results = {}
            for name in BUNDLED_SCENARIOS:
                out = val_dir / f"{name}.json"
                assert main([
                    "validate", "--scenario", name, "--model", str(model),
                    "--reps", "8", "--json", "--out", str(out),
                ]) == EXIT_OK
                results[name] = json.loads(out.read_text())

            all_reps = []
            for name, result in results.items():
                by_method = {m["method"]: m for m in result["methods"]}
                assert set(by_method) == {"Baseline", "NS", "MSR", "SR"}
                assert all(len(m["reps"]) == 8 for m in result["methods"])
                baseline, ns, sr = by_method["Baseline"], by_method["NS"], by_method["SR"]

                # (a) selection wins on emissions in every repetition
                assert all(
                    n["kg"] < b["kg"] for n, b in zip(ns["reps"], baseline["reps"])
                ), name
                # (b) ... without giving up more than 0.05 mean accuracy
                assert ns["mean_accuracy"] >= baseline["mean_accuracy"] - 0.05, name
                # (c) the extended selection holds the threshold at least as
                # often as the plain one, give or take a single repetition
                ns_hits = sum(r["threshold_met"] for r in ns["reps"])
                sr_hits = sum(r["threshold_met"] for r in sr["reps"])
                assert sr_hits >= ns_hits - 1, name

                all_reps.extend(r for m in result["methods"] for r in m["reps"])

            # (d) the ledger carries exactly these 96 runs, totals matching
            assert len(all_reps) == 96
            entries = [
                e for e in telemetry.ledger_entries(val_dir / "ledger.jsonl")
                if e["purpose"] == "validation"
            ]
            assert len(entries) == 96
            reported_kg = math.fsum(r["kg"] for r in all_reps)
            assert math.fsum(e["total_kg"] for e in entries) == reported_kg
            assert math.fsum(e["total_kwh"] for e in entries) == math.fsum(
                r["kwh"] for r in all_reps
            )
            assert abs(telemetry.ledger_total(val_dir / "ledger.jsonl") - reported_kg) <= 1e-12

            assert time.perf_counter() - t0 < 900.0


class TestReducerSuite:
    def _rows(self, noise, seed=5, n_rows=36):
        rng = np.random.default_rng(seed)
        types = list(DatasetType)
        coefs = np.array([0.02, -0.03, 0.05, 0.01, -0.02, 0.04,
                          0.00005, -0.0003, 0.02, 0.4])
        rows = []
        for i in range(n_rows):
            feats = ReducerFeatures(
                type_tag=types[i % len(types)],
                n_train_samples=int(rng.integers(300, 6000)),
                sequence_length=int(rng.integers(16, 512)),
                n_classes=int(rng.integers(2, 8)),
                target_accuracy=float(rng.uniform(0.3, 0.95)),
            )
            y = float(feats.to_vector() @ coefs + 0.1)
            if noise:
                y += float(rng.normal(0.0, noise))
            rows.append((feats, y))
        return rows

    def test_volume_model_selection_and_curve_inversion(self, capsys):
        with verdict(capsys, "reducer suite"):
            # A target that IS a linear function of the features must be fit
            # to numerical precision.
            realizable = fit(RegressorKind.LINEAR, self._rows(noise=0.0),
                             k_folds=5, seed=0)
            assert realizable.cv_error <= 1e-6

            # Selection returns the candidate with the smallest CV error.
            noisy_rows = self._rows(noise=0.05, seed=11)
            models = [fit(kind, noisy_rows, k_folds=5, seed=0) for kind in RegressorKind]
            best = select_best(models)
            assert all(best.cv_error <= m.cv_error for m in models)

            # Inverting a noiseless curve recovers the volume that produced
            # each accuracy, and a deep tree memorizes the resulting table.
            curve = Curve(
                Experiment("d", Scope.VERTICAL, DataDimension.VOLUME),
                CurveMetric.ACCURACY, 0.1, 0.9, 1.0, 5,
            )
            for v in (0.2, 0.35, 0.5, 0.75, 1.0):
                got, saturated = invert_curve(curve, curve.predict(v))
                assert not saturated
                assert abs(got - v) <= TOL
            meta = DatasetMeta("d", DatasetType.SENSOR, 1000, 2, 50)
            rows = build_training_set([curve], {"d": meta})
            tree = fit(RegressorKind.DECISION_TREE, rows,
                       hyper_grid=[{"max_depth": 64}], k_folds=4, seed=0)
            for feats, volume in rows:
                assert abs(predict_volume(tree, feats, min_volume=1e-9) - volume) <= 1e-6


class TestDeterminism:
    """Repeating any CLI command with the same seed must reproduce every JSON
    artifact byte for byte."""

    def test_cli_repeat_runs_are_byte_identical(self, capsys, tmp_path, monkeypatch):
        with verdict(capsys, "determinism"):
            monkeypatch.setenv("GREENFL_DATA_DIR", str(tmp_path / "data"))

            def explore_args(out):
                return [
                    "explore", "--datasets", "tiny:120:2:12:2.5:Synthetic",
                    "--dims", "volume", "--types", "H", "V",
                    "--reps", "2", "--nodes", "4", "--rounds", "3",
                    "--seed", "11", "--out", str(out),
                ]

            first, second = tmp_path / "a", tmp_path / "b"
            assert main(explore_args(first)) == EXIT_OK
            assert main(explore_args(second)) == EXIT_OK
            for fname in ("curves.jsonl", "datasets.jsonl", "experiments.jsonl"):
                assert (first / fname).read_bytes() == (second / fname).read_bytes(), fname

            model_root = tmp_path / "model"
            model_root.mkdir()
            write_curve_corpus(model_root)
            payloads = []
            for tag in ("m1.json", "m2.json"):
                assert main([
                    "train-reducer",
                    "--curves", str(model_root / "curves.jsonl"),
                    "--datasets-meta", str(model_root / "datasets.jsonl"),
                    "--seed", "3", "--out", str(model_root / tag),
                ]) == EXIT_OK
                payloads.append((model_root / tag).read_bytes())
            assert payloads[0] == payloads[1]
            model = model_root / "m1.json"

            payloads = []
            for tag in ("r1.json", "r2.json"):
                assert main([
                    "recommend", "--scenario", "configuration2",
                    "--model", str(model), "--json", "--out", str(tmp_path / tag),
                ]) == EXIT_OK
                payloads.append((tmp_path / tag).read_bytes())
            assert payloads[0] == payloads[1]

            scenario = write_scenario_file(tmp_path)
            payloads = []
            for tag in ("v1.json", "v2.json"):
                assert main([
                    "validate", "--scenario", str(scenario),
                    "--model", str(model), "--reps", "2",
                    "--json", "--out", str(tmp_path / tag),
                ]) == EXIT_OK
                payloads.append((tmp_path / tag).read_bytes())
            assert payloads[0] == payloads[1]
