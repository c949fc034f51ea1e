"""Regression models predicting the data-volume fraction needed to reach a
target accuracy on an unseen dataset.

Training rows come from inverting fitted accuracy curves. Candidate
regressors are implemented in-repo (the feature space is tiny and exact
split search keeps trees deterministic); k-fold cross-validation picks
hyperparameters and the winning model kind.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .datasets import DatasetMeta, DatasetType, Scope
from .errors import GreenFLError
from .exploration import Curve, CurveMetric
from .seeding import rng_for

log = logging.getLogger(__name__)

DEFAULT_R2_THRESHOLD = 0.5
TARGETS_PER_CURVE = 8


class InsufficientData(GreenFLError):
    pass


class RegressorKind(str, Enum):
    LINEAR = "Linear"
    RIDGE = "Ridge"
    LASSO = "Lasso"
    DECISION_TREE = "DecisionTree"
    GRADIENT_BOOSTING = "GradientBoosting"


_TYPE_ORDER = tuple(DatasetType)
FEATURE_NAMES = tuple(f"type_{t.value}" for t in _TYPE_ORDER) + (
    "n_train_samples",
    "sequence_length",
    "n_classes",
    "target_accuracy",
)


@dataclass(frozen=True)
class ReducerFeatures:
    type_tag: DatasetType
    n_train_samples: int
    sequence_length: int
    n_classes: int
    target_accuracy: float

    def __post_init__(self) -> None:
        if not 0.0 < self.target_accuracy < 1.0:
            raise GreenFLError("target_accuracy must lie in (0, 1)")
        if min(self.n_train_samples, self.sequence_length, self.n_classes) < 1:
            raise GreenFLError("dataset counts must be positive")

    def to_vector(self) -> np.ndarray:
        onehot = [1.0 if t is self.type_tag else 0.0 for t in _TYPE_ORDER]
        return np.array(
            onehot
            + [
                float(self.n_train_samples),
                float(self.sequence_length),
                float(self.n_classes),
                self.target_accuracy,
            ]
        )

    @staticmethod
    def from_meta(meta: DatasetMeta, target_accuracy: float) -> "ReducerFeatures":
        return ReducerFeatures(
            type_tag=meta.type_tag,
            n_train_samples=meta.train_size,
            sequence_length=meta.sequence_length,
            n_classes=meta.num_classes,
            target_accuracy=target_accuracy,
        )


def invert_curve(curve: Curve, target_accuracy: float) -> tuple[float, bool]:
    """Volume fraction where the fitted curve hits the target; clamps to 1
    (saturated) when even the full dataset falls short."""
    if curve.a <= 0:
        raise GreenFLError("cannot invert a non-increasing accuracy curve")
    v = math.exp((target_accuracy - curve.b) / curve.a)
    if v > 1.0:
        return 1.0, True
    return v, False


def build_training_set(
    curves: Sequence[Curve],
    meta_for: Mapping[str, DatasetMeta],
    r2_threshold: float = DEFAULT_R2_THRESHOLD,
) -> list[tuple[ReducerFeatures, float]]:
    """Rows of (dataset features + target accuracy) -> required volume.

    Uses vertical accuracy curves: their x-axis is the retained volume
    fraction, which is exactly the quantity the model must predict.
    """
    rows: list[tuple[ReducerFeatures, float]] = []
    for curve in curves:
        if curve.metric is not CurveMetric.ACCURACY:
            continue
        if curve.experiment.scope is not Scope.VERTICAL:
            continue
        if curve.r2 < r2_threshold:
            log.warning("curve %s: r2 %.3f below threshold, skipped",
                        curve.experiment.key(), curve.r2)
            continue
        if curve.a <= 0:
            log.warning("curve %s: accuracy not improving with volume (a=%.4f), skipped",
                        curve.experiment.key(), curve.a)
            continue
        meta = meta_for.get(curve.experiment.dataset_name)
        if meta is None:
            raise GreenFLError(f"no dataset metadata for {curve.experiment.dataset_name}")
        acc_lo = curve.predict(0.2)
        acc_hi = curve.predict(1.0)
        for target in np.linspace(acc_lo, acc_hi, TARGETS_PER_CURVE):
            target = float(min(max(target, 1e-6), 1.0 - 1e-6))
            volume, _ = invert_curve(curve, target)
            rows.append((ReducerFeatures.from_meta(meta, target), volume))
    return rows


def _design(rows: Sequence[tuple[ReducerFeatures, float]]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([f.to_vector() for f, _ in rows])
    y = np.array([v for _, v in rows], dtype=np.float64)
    return x, y


class _Standardizer:
    def __init__(self, mean: np.ndarray, std: np.ndarray) -> None:
        self.mean = mean
        self.std = np.where(std == 0, 1.0, std)

    @staticmethod
    def fit(x: np.ndarray) -> "_Standardizer":
        return _Standardizer(x.mean(axis=0), x.std(axis=0))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @staticmethod
    def from_json(obj: dict) -> "_Standardizer":
        return _Standardizer(np.array(obj["mean"]), np.array(obj["std"]))


class _LinearModel:
    """Least squares on standardized features; Ridge/Lasso add penalties."""

    def __init__(self, scaler: _Standardizer, coef: np.ndarray, intercept: float) -> None:
        self.scaler = scaler
        self.coef = coef
        self.intercept = intercept

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.scaler.apply(x) @ self.coef + self.intercept

    def to_json(self) -> dict:
        return {
            "scaler": self.scaler.to_json(),
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
        }

    @staticmethod
    def from_json(obj: dict) -> "_LinearModel":
        return _LinearModel(
            _Standardizer.from_json(obj["scaler"]), np.array(obj["coef"]), obj["intercept"]
        )


def _fit_linear(x: np.ndarray, y: np.ndarray, ridge_lambda: float = 0.0) -> _LinearModel:
    scaler = _Standardizer.fit(x)
    xs = scaler.apply(x)
    n, d = xs.shape
    if ridge_lambda > 0:
        gram = xs.T @ xs + ridge_lambda * np.eye(d)
        coef = np.linalg.solve(gram, xs.T @ (y - y.mean()))
    else:
        coef, *_ = np.linalg.lstsq(xs, y - y.mean(), rcond=None)
    intercept = float(y.mean())
    return _LinearModel(scaler, coef, intercept)


def _fit_lasso(x: np.ndarray, y: np.ndarray, lam: float, n_iter: int = 500) -> _LinearModel:
    """Coordinate descent with soft thresholding on standardized features."""
    scaler = _Standardizer.fit(x)
    xs = scaler.apply(x)
    n, d = xs.shape
    yc = y - y.mean()
    coef = np.zeros(d)
    col_sq = (xs**2).sum(axis=0)
    for _ in range(n_iter):
        max_step = 0.0
        for j in range(d):
            if col_sq[j] == 0:
                continue
            resid = yc - xs @ coef + xs[:, j] * coef[j]
            rho = xs[:, j] @ resid
            new = np.sign(rho) * max(abs(rho) - lam * n, 0.0) / col_sq[j]
            max_step = max(max_step, abs(new - coef[j]))
            coef[j] = new
        if max_step < 1e-10:
            break
    return _LinearModel(scaler, coef, float(y.mean()))


class _TreeNode:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, value: float) -> None:
        self.feature: int | None = None
        self.threshold = 0.0
        self.left: "_TreeNode | None" = None
        self.right: "_TreeNode | None" = None
        self.value = value

    def predict_one(self, x: np.ndarray) -> float:
        node = self
        while node.feature is not None:
            node = node.left if x[node.feature] <= node.threshold else node.right  # type: ignore[assignment]
        return node.value

    def to_json(self) -> dict:
        if self.feature is None:
            return {"value": self.value}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_json(),  # type: ignore[union-attr]
            "right": self.right.to_json(),  # type: ignore[union-attr]
            "value": self.value,
        }

    @staticmethod
    def from_json(obj: dict) -> "_TreeNode":
        node = _TreeNode(obj["value"])
        if "feature" in obj:
            node.feature = obj["feature"]
            node.threshold = obj["threshold"]
            node.left = _TreeNode.from_json(obj["left"])
            node.right = _TreeNode.from_json(obj["right"])
        return node


def _best_split(x: np.ndarray, y: np.ndarray) -> tuple[int, float, float] | None:
    """Exact search over all features and midpoints; returns (feature,
    threshold, sse_gain) or None when nothing splits."""
    n, d = x.shape
    base_sse = float(((y - y.mean()) ** 2).sum())
    best: tuple[int, float, float] | None = None
    for j in range(d):
        order = np.argsort(x[:, j], kind="stable")
        xv, yv = x[order, j], y[order]
        csum = np.cumsum(yv)
        csq = np.cumsum(yv**2)
        total, total_sq = csum[-1], csq[-1]
        for i in range(n - 1):
            if xv[i] == xv[i + 1]:
                continue
            nl = i + 1
            nr = n - nl
            sse_l = csq[i] - csum[i] ** 2 / nl
            sse_r = (total_sq - csq[i]) - (total - csum[i]) ** 2 / nr
            gain = base_sse - (sse_l + sse_r)
            if best is None or gain > best[2] + 1e-15:
                best = (j, (xv[i] + xv[i + 1]) / 2.0, gain)
    if best is None or best[2] <= 1e-12:
        return None
    return best


def _build_tree(x: np.ndarray, y: np.ndarray, depth: int, max_depth: int) -> _TreeNode:
    node = _TreeNode(float(y.mean()))
    if len(y) < 2 or depth >= max_depth:
        return node
    split = _best_split(x, y)
    if split is None:
        return node
    j, thr, _ = split
    mask = x[:, j] <= thr
    node.feature = j
    node.threshold = thr
    node.left = _build_tree(x[mask], y[mask], depth + 1, max_depth)
    node.right = _build_tree(x[~mask], y[~mask], depth + 1, max_depth)
    return node


class _TreeModel:
    def __init__(self, root: _TreeNode) -> None:
        self.root = root

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.root.predict_one(row) for row in x])

    def to_json(self) -> dict:
        return {"root": self.root.to_json()}

    @staticmethod
    def from_json(obj: dict) -> "_TreeModel":
        return _TreeModel(_TreeNode.from_json(obj["root"]))


class _BoostedModel:
    """Squared-loss gradient boosting: shallow trees on residuals."""

    def __init__(self, base: float, shrinkage: float, trees: list[_TreeNode]) -> None:
        self.base = base
        self.shrinkage = shrinkage
        self.trees = trees

    def predict(self, x: np.ndarray) -> np.ndarray:
        out = np.full(len(x), self.base)
        for tree in self.trees:
            out += self.shrinkage * np.array([tree.predict_one(row) for row in x])
        return out

    def to_json(self) -> dict:
        return {
            "base": self.base,
            "shrinkage": self.shrinkage,
            "trees": [t.to_json() for t in self.trees],
        }

    @staticmethod
    def from_json(obj: dict) -> "_BoostedModel":
        return _BoostedModel(
            obj["base"], obj["shrinkage"], [_TreeNode.from_json(t) for t in obj["trees"]]
        )


def _fit_boosted(
    x: np.ndarray, y: np.ndarray, n_trees: int, max_depth: int, shrinkage: float
) -> _BoostedModel:
    base = float(y.mean())
    pred = np.full(len(y), base)
    trees: list[_TreeNode] = []
    for _ in range(n_trees):
        resid = y - pred
        tree = _build_tree(x, resid, 0, max_depth)
        trees.append(tree)
        pred += shrinkage * np.array([tree.predict_one(row) for row in x])
    return _BoostedModel(base, shrinkage, trees)


DEFAULT_HYPER_GRID: dict[RegressorKind, list[dict]] = {
    RegressorKind.LINEAR: [{}],
    RegressorKind.RIDGE: [{"ridge_lambda": lam} for lam in (0.1, 1.0, 10.0)],
    RegressorKind.LASSO: [{"lasso_lambda": lam} for lam in (1e-4, 1e-3, 1e-2)],
    RegressorKind.DECISION_TREE: [{"max_depth": d} for d in (3, 25)],
    RegressorKind.GRADIENT_BOOSTING: [
        {"n_trees": t, "max_depth": d, "shrinkage": s}
        for t in (50, 200)
        for d in (2, 3)
        for s in (0.05, 0.1)
    ],
}


def _fit_one(kind: RegressorKind, x: np.ndarray, y: np.ndarray, params: dict):
    if kind is RegressorKind.LINEAR:
        return _fit_linear(x, y)
    if kind is RegressorKind.RIDGE:
        return _fit_linear(x, y, ridge_lambda=params["ridge_lambda"])
    if kind is RegressorKind.LASSO:
        return _fit_lasso(x, y, lam=params["lasso_lambda"])
    if kind is RegressorKind.DECISION_TREE:
        return _TreeModel(_build_tree(x, y, 0, params["max_depth"]))
    if kind is RegressorKind.GRADIENT_BOOSTING:
        return _fit_boosted(x, y, params["n_trees"], params["max_depth"], params["shrinkage"])
    raise GreenFLError(f"unknown regressor kind {kind}")


_MODEL_CODECS = {
    RegressorKind.LINEAR: _LinearModel,
    RegressorKind.RIDGE: _LinearModel,
    RegressorKind.LASSO: _LinearModel,
    RegressorKind.DECISION_TREE: _TreeModel,
    RegressorKind.GRADIENT_BOOSTING: _BoostedModel,
}


@dataclass(frozen=True)
class ReducerModel:
    kind: RegressorKind
    hyperparameters: dict
    cv_error: float
    _impl: object

    def predict_raw(self, features: ReducerFeatures) -> float:
        return float(self._impl.predict(features.to_vector()[None, :])[0])  # type: ignore[attr-defined]

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "hyperparameters": self.hyperparameters,
            "cv_error": self.cv_error,
            "feature_schema": list(FEATURE_NAMES),
            "parameters": self._impl.to_json(),  # type: ignore[attr-defined]
        }

    @staticmethod
    def from_json(obj: dict) -> "ReducerModel":
        kind = RegressorKind(obj["kind"])
        impl = _MODEL_CODECS[kind].from_json(obj["parameters"])
        return ReducerModel(
            kind=kind,
            hyperparameters=obj.get("hyperparameters", {}),
            cv_error=obj["cv_error"],
            _impl=impl,
        )

    def save(self, path) -> None:
        from pathlib import Path

        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n",
                              encoding="utf-8")

    @staticmethod
    def load(path) -> "ReducerModel":
        from pathlib import Path

        return ReducerModel.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _cv_rmse(
    kind: RegressorKind,
    x: np.ndarray,
    y: np.ndarray,
    params: dict,
    k_folds: int,
    seed: int,
) -> float:
    order = rng_for(seed, "cv-folds", kind.value).permutation(len(y))
    folds = np.array_split(order, k_folds)
    sq_errors: list[float] = []
    for i in range(k_folds):
        test_idx = folds[i]
        train_idx = np.concatenate([folds[j] for j in range(k_folds) if j != i])
        model = _fit_one(kind, x[train_idx], y[train_idx], params)
        pred = model.predict(x[test_idx])  # type: ignore[attr-defined]
        sq_errors.extend(((pred - y[test_idx]) ** 2).tolist())
    return float(np.sqrt(np.mean(sq_errors)))


def fit(
    kind: RegressorKind,
    rows: Sequence[tuple[ReducerFeatures, float]],
    hyper_grid: Sequence[dict] | None = None,
    k_folds: int = 5,
    seed: int = 0,
) -> ReducerModel:
    """Cross-validated hyperparameter search, then a refit on all rows."""
    if len(rows) < k_folds:
        raise InsufficientData(f"{len(rows)} rows for {k_folds}-fold CV")
    grid = list(hyper_grid) if hyper_grid is not None else DEFAULT_HYPER_GRID[kind]
    x, y = _design(rows)
    best_params: dict | None = None
    best_err = math.inf
    for params in grid:
        err = _cv_rmse(kind, x, y, params, k_folds, seed)
        if err < best_err:
            best_err = err
            best_params = params
    assert best_params is not None
    return ReducerModel(
        kind=kind,
        hyperparameters=best_params,
        cv_error=best_err,
        _impl=_fit_one(kind, x, y, best_params),
    )


def fit_all(
    rows: Sequence[tuple[ReducerFeatures, float]], k_folds: int = 5, seed: int = 0
) -> list[ReducerModel]:
    return [fit(kind, rows, None, k_folds, seed) for kind in RegressorKind]


def select_best(models: Sequence[ReducerModel]) -> ReducerModel:
    """Lowest CV error wins; ties go to the simpler kind (enum order)."""
    if not models:
        raise InsufficientData("no candidate models")
    kind_rank = {kind: i for i, kind in enumerate(RegressorKind)}
    return min(models, key=lambda m: (m.cv_error, kind_rank[m.kind]))


def predict_volume(
    model: ReducerModel, features: ReducerFeatures, min_volume: float = 1e-6
) -> float:
    """Predicted volume fraction, clamped to [min_volume, 1]."""
    return float(min(1.0, max(min_volume, model.predict_raw(features))))
