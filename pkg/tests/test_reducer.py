"""Volume-prediction regressors: curve inversion, CV selection, persistence."""

from __future__ import annotations

import math

import numpy as np
import pytest

from greenfl.datasets import DataDimension, DatasetMeta, DatasetType, Scope
from greenfl.errors import GreenFLError
from greenfl.exploration import Curve, CurveMetric, Experiment
from greenfl.reducer import (
    FEATURE_NAMES,
    InsufficientData,
    ReducerFeatures,
    ReducerModel,
    RegressorKind,
    build_training_set,
    fit,
    fit_all,
    invert_curve,
    predict_volume,
    select_best,
)

META = DatasetMeta(name="d", type_tag=DatasetType.SENSOR, train_size=1000,
                   num_classes=2, sequence_length=50)


def acc_curve(name="d", a=0.1, b=0.9, r2=1.0, scope=Scope.VERTICAL,
              metric=CurveMetric.ACCURACY):
    return Curve(Experiment(name, scope, DataDimension.VOLUME), metric, a, b, r2, 5)


def features(target=0.8, **kw):
    base = dict(type_tag=DatasetType.SENSOR, n_train_samples=1000,
                sequence_length=50, n_classes=2)
    base.update(kw)
    return ReducerFeatures(target_accuracy=target, **base)


class TestInvertCurve:
    def test_target_at_full_volume(self):
        v, saturated = invert_curve(acc_curve(), 0.9)
        assert v == pytest.approx(1.0, abs=1e-12)
        assert not saturated

    def test_closed_form(self):
        v, saturated = invert_curve(acc_curve(), 0.8)
        assert v == pytest.approx(math.exp(-1), abs=1e-9)
        assert not saturated

    def test_saturation_clamp(self):
        v, saturated = invert_curve(acc_curve(), 0.95)
        assert v == 1.0
        assert saturated

    def test_flat_curve_rejected(self):
        with pytest.raises(GreenFLError):
            invert_curve(acc_curve(a=0.0), 0.8)


class TestBuildTrainingSet:
    def test_rows_span_achievable_range(self):
        rows = build_training_set([acc_curve()], {"d": META})
        assert len(rows) == 8
        targets = [f.target_accuracy for f, _ in rows]
        curve = acc_curve()
        assert targets[0] == pytest.approx(curve.predict(0.2), abs=1e-9)
        assert targets[-1] == pytest.approx(curve.predict(1.0), abs=1e-9)
        for f, v in rows:
            assert v == pytest.approx(math.exp((f.target_accuracy - 0.9) / 0.1), rel=1e-9)
            assert 0 < v <= 1

    def test_low_r2_skipped(self):
        rows = build_training_set([acc_curve(r2=0.3)], {"d": META})
        assert rows == []

    def test_flat_or_decreasing_skipped(self):
        rows = build_training_set([acc_curve(a=-0.05)], {"d": META})
        assert rows == []

    def test_horizontal_and_energy_curves_ignored(self):
        curves = [
            acc_curve(scope=Scope.HORIZONTAL),
            acc_curve(metric=CurveMetric.ENERGY),
        ]
        assert build_training_set(curves, {"d": META}) == []

    def test_missing_metadata_rejected(self):
        with pytest.raises(GreenFLError):
            build_training_set([acc_curve()], {})


def linear_rows(n=60, seed=0):
    """Rows whose target is an exact linear function of the numeric features."""
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        f = features(
            target=float(rng.uniform(0.2, 0.95)),
            n_train_samples=int(rng.integers(100, 5000)),
            sequence_length=int(rng.integers(10, 200)),
            n_classes=int(rng.integers(2, 9)),
        )
        y = 0.0001 * f.n_train_samples + 0.001 * f.sequence_length + 0.5 * f.target_accuracy
        rows.append((f, y))
    return rows


def piecewise_rows(n=80, seed=1):
    """Step function of target accuracy: trees fit it, a line cannot."""
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        f = features(target=float(rng.uniform(0.1, 0.9)))
        y = 0.2 if f.target_accuracy < 0.5 else 0.9
        rows.append((f, y))
    return rows


class TestFit:
    def test_linear_realizable(self):
        model = fit(RegressorKind.LINEAR, linear_rows())
        assert model.cv_error <= 1e-6
        for f, y in linear_rows(n=10, seed=9):
            assert model.predict_raw(f) == pytest.approx(y, abs=1e-6)

    def test_constant_target_all_kinds(self):
        rows = [(features(target=0.2 + 0.01 * i), 0.42) for i in range(20)]
        for kind in RegressorKind:
            model = fit(kind, rows)
            assert model.predict_raw(features(target=0.66)) == pytest.approx(0.42, abs=1e-6)

    def test_boosting_beats_linear_on_piecewise(self):
        rows = piecewise_rows()
        gbm = fit(RegressorKind.GRADIENT_BOOSTING, rows)
        lin = fit(RegressorKind.LINEAR, rows)
        assert gbm.cv_error < lin.cv_error

    def test_too_few_rows(self):
        with pytest.raises(InsufficientData):
            fit(RegressorKind.LINEAR, linear_rows(n=3), k_folds=5)

    def test_cv_deterministic(self):
        rows = piecewise_rows(seed=7)
        a = fit(RegressorKind.DECISION_TREE, rows, seed=5)
        b = fit(RegressorKind.DECISION_TREE, rows, seed=5)
        assert a.cv_error == b.cv_error
        assert a.hyperparameters == b.hyperparameters


class TestSelectBest:
    def _stub(self, kind, err):
        return ReducerModel(kind=kind, hyperparameters={}, cv_error=err, _impl=None)

    def test_single(self):
        m = self._stub(RegressorKind.RIDGE, 0.5)
        assert select_best([m]) is m

    def test_lowest_error_wins(self):
        models = [
            self._stub(RegressorKind.LINEAR, 0.3),
            self._stub(RegressorKind.GRADIENT_BOOSTING, 0.1),
        ]
        assert select_best(models).kind is RegressorKind.GRADIENT_BOOSTING

    def test_tie_goes_to_earlier_kind(self):
        models = [
            self._stub(RegressorKind.GRADIENT_BOOSTING, 0.2),
            self._stub(RegressorKind.RIDGE, 0.2),
            self._stub(RegressorKind.LASSO, 0.2),
        ]
        assert select_best(models).kind is RegressorKind.RIDGE

    def test_best_not_worse_than_any_candidate(self):
        rows = piecewise_rows(seed=3)
        models = fit_all(rows, k_folds=4)
        best = select_best(models)
        assert all(best.cv_error <= m.cv_error for m in models)

    def test_empty_rejected(self):
        with pytest.raises(InsufficientData):
            select_best([])


class TestSerialization:
    @pytest.mark.parametrize("kind", list(RegressorKind))
    def test_round_trip_identical_predictions(self, kind, tmp_path):
        rows = piecewise_rows(seed=11) + linear_rows(n=20, seed=12)
        model = fit(kind, rows, k_folds=4)
        path = tmp_path / "model.json"
        model.save(path)
        back = ReducerModel.load(path)
        assert back.kind is model.kind
        assert back.cv_error == model.cv_error
        rng = np.random.default_rng(100)
        for _ in range(1000 // len(RegressorKind)):
            f = features(
                target=float(rng.uniform(0.05, 0.95)),
                n_train_samples=int(rng.integers(50, 10000)),
                sequence_length=int(rng.integers(5, 500)),
                n_classes=int(rng.integers(2, 20)),
            )
            assert back.predict_raw(f) == model.predict_raw(f)

    def test_schema_lists_features(self, tmp_path):
        model = fit(RegressorKind.LINEAR, linear_rows())
        obj = model.to_json()
        assert obj["feature_schema"] == list(FEATURE_NAMES)


class TestPredictVolume:
    def test_inversion_composition_identity(self):
        # A deep tree memorizes a single curve's rows, so predicting at the
        # row's own target returns the row's volume.
        curve = acc_curve(a=0.12, b=0.88)
        rows = build_training_set([curve], {"d": META})
        model = fit(RegressorKind.DECISION_TREE, rows,
                    hyper_grid=[{"max_depth": 64}], k_folds=4)
        for f, v in rows:
            assert predict_volume(model, f) == pytest.approx(v, abs=1e-6)

    def test_training_row_within_cv_error(self):
        rows = linear_rows(n=40, seed=21)
        rows = [(f, min(1.0, max(0.0, y))) for f, y in rows]
        model = fit(RegressorKind.RIDGE, rows)
        f, y = rows[0]
        assert abs(predict_volume(model, f) - y) <= max(model.cv_error * 10, 0.05)

    def test_clamps_to_bounds(self):
        rows = [(features(target=0.1 + 0.01 * i), -5.0 + 0.5 * i) for i in range(30)]
        model = fit(RegressorKind.LINEAR, rows)
        low = predict_volume(model, features(target=0.11), min_volume=0.1)
        high = predict_volume(model, features(target=0.39), min_volume=0.1)
        assert low == 0.1
        assert high == 1.0

    def test_monotone_for_boosting_on_monotone_data(self):
        rng = np.random.default_rng(31)
        rows = []
        for _ in range(120):
            t = float(rng.uniform(0.05, 0.95))
            rows.append((features(target=t), 0.1 + 0.8 * t))
        model = fit(RegressorKind.GRADIENT_BOOSTING, rows,
                    hyper_grid=[{"n_trees": 200, "max_depth": 2, "shrinkage": 0.1}],
                    k_folds=4)
        preds = [
            predict_volume(model, features(target=t))
            for t in np.linspace(0.05, 0.95, 100)
        ]
        diffs = np.diff(preds)
        assert (diffs >= -1e-9).all()


class TestFeatureValidation:
    def test_target_bounds(self):
        with pytest.raises(GreenFLError):
            features(target=0.0)
        with pytest.raises(GreenFLError):
            features(target=1.0)

    def test_counts_positive(self):
        with pytest.raises(GreenFLError):
            features(n_classes=0)

    def test_vector_layout(self):
        f = features(target=0.5)
        vec = f.to_vector()
        assert len(vec) == len(FEATURE_NAMES)
        assert vec[-1] == 0.5
        assert vec[:len(vec) - 4].sum() == 1.0
