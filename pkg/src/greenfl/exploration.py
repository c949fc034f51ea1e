"""Degradation-grid experiments and log-curve analysis.

Builds the Cartesian grid of (dataset, reduction type, dimension, level,
repetition) runs, executes them through the federated engine with quality
injection, persists every record, and fits y = a*ln(x) + b curves of
accuracy and energy against the retained-data fraction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import telemetry
from .datasets import (
    DataDimension,
    DegradationSpec,
    FederatedPartition,
    LEVEL_GRID,
    Scope,
    inject,
)
from .engine import FLConfig, run_federated
from .errors import GreenFLError
from .seeding import stable_seed
from .stores import JsonlStore
from .telemetry import EnergyModel, NodeProfile

log = logging.getLogger(__name__)


class DegenerateFit(GreenFLError):
    pass


class CurveMetric(str, Enum):
    ACCURACY = "Accuracy"
    ENERGY = "Energy"


@dataclass(frozen=True)
class Experiment:
    dataset_name: str
    scope: Scope
    dimension: DataDimension

    def key(self) -> str:
        return f"{self.dataset_name}|{self.scope.value}|{self.dimension.value}"


@dataclass(frozen=True)
class SubExperiment:
    experiment: Experiment
    level: float
    repetition: int

    def __post_init__(self) -> None:
        if self.repetition < 0:
            raise GreenFLError("repetition must be >= 0")
        if not 0.0 <= self.level < 1.0:
            raise GreenFLError(f"grid level must lie in [0, 1), got {self.level}")

    def key(self) -> str:
        return f"{self.experiment.key()}|{self.level:.4f}|{self.repetition}"

    def seed(self, base_seed: int) -> int:
        # Scope is deliberately absent: horizontal and vertical runs of the
        # same (dataset, dimension, level, rep) share a seed, so they differ
        # only through injection and level 0 yields identical records.
        e = self.experiment
        return stable_seed(
            base_seed,
            e.dataset_name,
            e.dimension.value,
            f"{self.level:.4f}",
            self.repetition,
        )


@dataclass(frozen=True)
class ExperimentRecord:
    sub: SubExperiment
    accuracy: float
    energy_kwh: float
    emissions_kg: float
    rounds: int
    error: str | None = None

    def to_json(self) -> dict:
        e = self.sub.experiment
        return {
            "dataset": e.dataset_name,
            "type": "H" if e.scope is Scope.HORIZONTAL else "V",
            "dimension": e.dimension.value,
            "level": self.sub.level,
            "rep": self.sub.repetition,
            "accuracy": self.accuracy,
            "energy_kwh": self.energy_kwh,
            "emissions_kg": self.emissions_kg,
            "rounds": self.rounds,
            "error": self.error,
        }

    @staticmethod
    def from_json(obj: dict) -> "ExperimentRecord":
        exp = Experiment(
            dataset_name=obj["dataset"],
            scope=Scope.HORIZONTAL if obj["type"] == "H" else Scope.VERTICAL,
            dimension=DataDimension(obj["dimension"]),
        )
        return ExperimentRecord(
            sub=SubExperiment(experiment=exp, level=obj["level"], repetition=obj["rep"]),
            accuracy=obj["accuracy"],
            energy_kwh=obj["energy_kwh"],
            emissions_kg=obj["emissions_kg"],
            rounds=obj["rounds"],
            error=obj.get("error"),
        )


@dataclass(frozen=True)
class Curve:
    experiment: Experiment
    metric: CurveMetric
    a: float
    b: float
    r2: float
    n_points: int

    def predict(self, x: float) -> float:
        if x <= 0:
            raise GreenFLError("curve is defined for x > 0 only")
        return self.a * math.log(x) + self.b

    def to_json(self) -> dict:
        e = self.experiment
        return {
            "dataset": e.dataset_name,
            "type": "H" if e.scope is Scope.HORIZONTAL else "V",
            "dimension": e.dimension.value,
            "metric": self.metric.value,
            "a": self.a,
            "b": self.b,
            "r2": self.r2,
            "n_points": self.n_points,
        }

    @staticmethod
    def from_json(obj: dict) -> "Curve":
        exp = Experiment(
            dataset_name=obj["dataset"],
            scope=Scope.HORIZONTAL if obj["type"] == "H" else Scope.VERTICAL,
            dimension=DataDimension(obj["dimension"]),
        )
        return Curve(
            experiment=exp,
            metric=CurveMetric(obj["metric"]),
            a=obj["a"],
            b=obj["b"],
            r2=obj["r2"],
            n_points=obj["n_points"],
        )


def grid_fl_config(seed: int, n_rounds: int = 10) -> FLConfig:
    """Fixed round budget for grid runs.

    Disabling early stopping keeps round counts equal across the grid, so
    energy differences reflect data reduction alone and the horizontal vs
    vertical energy comparison is deterministic.
    """
    return FLConfig(
        n_rounds_max=n_rounds,
        local_epochs=2,
        early_stop_patience=n_rounds,
        seed=seed,
    )


#: Energy pricing used for grid runs: per-round node participation costs
#: the equivalent of 20 samples, making node count itself expensive.
GRID_ENERGY_MODEL = EnergyModel(seconds_per_sample=0.01, seconds_per_node_round=0.2)


def uniform_profiles(
    node_ids: Sequence[str], power_watts: float = 100.0, carbon_intensity: float = 0.4
) -> list[NodeProfile]:
    """Identical lab nodes for grid runs, where only workload varies."""
    return [
        NodeProfile(
            node_id=nid,
            power_watts=power_watts,
            location="Lab",
            carbon_intensity=carbon_intensity,
            data_volume_fraction=1.0 / max(1, len(node_ids)),
            consistency=1.0,
            completeness=1.0,
        )
        for nid in node_ids
    ]


def build_grid(
    dataset_names: Sequence[str],
    dimensions: Sequence[DataDimension],
    scopes: Sequence[Scope] = (Scope.HORIZONTAL, Scope.VERTICAL),
    levels: Sequence[float] = LEVEL_GRID,
    n_reps: int = 3,
) -> list[SubExperiment]:
    """Full Cartesian product in (dataset, scope, dimension, level, rep) order."""
    return [
        SubExperiment(Experiment(ds, scope, dim), level, rep)
        for ds in dataset_names
        for scope in scopes
        for dim in dimensions
        for level in levels
        for rep in range(n_reps)
    ]


def run_sub_experiment(
    sub: SubExperiment,
    base_partition: FederatedPartition,
    fl_config: FLConfig,
    energy_model: EnergyModel,
    nodes: Sequence[NodeProfile],
) -> ExperimentRecord:
    """Inject one degradation setting, run federated training, price the run."""
    seed = sub.seed(fl_config.seed)
    try:
        degraded = inject(
            base_partition,
            DegradationSpec(
                dimension=sub.experiment.dimension,
                level=sub.level,
                scope=sub.experiment.scope,
                seed=seed,
            ),
        )
        participating = {nid for nid in degraded.node_ids if len(degraded.shards[nid]) > 0}
        result = run_federated(degraded, fl_config.replace(seed=seed), participating)
        rep = telemetry.report(result, nodes, energy_model)
        return ExperimentRecord(
            sub=sub,
            accuracy=result.final_accuracy,
            energy_kwh=rep.total_kwh,
            emissions_kg=rep.total_kg,
            rounds=result.rounds_executed,
        )
    except GreenFLError as exc:
        log.warning("sub-experiment %s failed: %s", sub.key(), exc)
        return ExperimentRecord(
            sub=sub, accuracy=0.0, energy_kwh=0.0, emissions_kg=0.0, rounds=0, error=str(exc)
        )


def run_grid(
    subs: Iterable[SubExperiment],
    partition_for: Callable[[str], FederatedPartition],
    fl_config: FLConfig,
    energy_model: EnergyModel,
    nodes_for: Callable[[str], Sequence[NodeProfile]],
    store: JsonlStore,
    ledger_path: str | Path | None = None,
) -> list[ExperimentRecord]:
    """Execute every sub-experiment not already in the store; resumable."""
    done = {
        ExperimentRecord.from_json(obj).sub.key(): ExperimentRecord.from_json(obj)
        for obj in store
    }
    records: list[ExperimentRecord] = []
    partitions: dict[str, FederatedPartition] = {}
    for sub in subs:
        key = sub.key()
        if key in done:
            records.append(done[key])
            continue
        ds = sub.experiment.dataset_name
        if ds not in partitions:
            partitions[ds] = partition_for(ds)
        nodes = nodes_for(ds)
        rec = run_sub_experiment(sub, partitions[ds], fl_config, energy_model, nodes)
        store.append(rec.to_json())
        if ledger_path is not None and rec.error is None:
            result_like = _ReportStub(rec.energy_kwh, rec.emissions_kg)
            telemetry.ledger_append(result_like, "exploration", ledger_path)
        records.append(rec)
        done[key] = rec
    return records


class _ReportStub:
    """Minimal object exposing the totals the ledger needs."""

    def __init__(self, kwh: float, kg: float) -> None:
        self.total_kwh = kwh
        self.total_kg = kg


def fit_log_curve(
    points: Sequence[tuple[float, float]],
    experiment: Experiment | None = None,
    metric: CurveMetric = CurveMetric.ACCURACY,
) -> Curve:
    """Least-squares fit of y = a*ln(x) + b.

    x is a retained-data fraction in (0, 1]; r2 is 1 minus residual over
    total sum of squares (1.0 for a constant target fitted exactly).
    """
    if len(points) < 2:
        raise DegenerateFit("need at least 2 points")
    xs = np.array([p[0] for p in points], dtype=np.float64)
    ys = np.array([p[1] for p in points], dtype=np.float64)
    if (xs <= 0).any():
        raise DegenerateFit("x values must be > 0")
    if np.unique(xs).size < 2:
        raise DegenerateFit("need at least 2 distinct x values")
    lx = np.log(xs)
    a, b = np.polyfit(lx, ys, 1)
    resid = ys - (a * lx + b)
    ss_res = float(resid @ resid)
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 and ss_res < 1e-18 else 1.0 - ss_res / max(ss_tot, 1e-300)
    exp = experiment or Experiment("adhoc", Scope.HORIZONTAL, DataDimension.VOLUME)
    return Curve(experiment=exp, metric=metric, a=float(a), b=float(b), r2=float(r2),
                 n_points=len(points))


def _mean_points(
    records: Sequence[ExperimentRecord], value: Callable[[ExperimentRecord], float]
) -> list[tuple[float, float]]:
    by_level: dict[float, list[float]] = {}
    for rec in records:
        if rec.error is not None:
            continue
        by_level.setdefault(rec.sub.level, []).append(value(rec))
    return [
        (1.0 - level, float(np.mean(vals)))
        for level, vals in sorted(by_level.items())
        if 1.0 - level > 0
    ]


def fit_curves(records: Sequence[ExperimentRecord]) -> list[Curve]:
    """One accuracy and one energy curve per experiment, on rep-mean values."""
    by_exp: dict[Experiment, list[ExperimentRecord]] = {}
    for rec in records:
        by_exp.setdefault(rec.sub.experiment, []).append(rec)
    curves: list[Curve] = []
    for exp in sorted(by_exp, key=lambda e: e.key()):
        recs = by_exp[exp]
        for metric, value in (
            (CurveMetric.ACCURACY, lambda r: r.accuracy),
            (CurveMetric.ENERGY, lambda r: r.energy_kwh),
        ):
            points = _mean_points(recs, value)
            if len(points) < 2:
                log.warning("experiment %s: too few surviving levels for %s curve",
                            exp.key(), metric.value)
                continue
            curves.append(fit_log_curve(points, exp, metric))
    return curves


def compare_approaches(
    curves: Sequence[Curve], levels: Sequence[float] = LEVEL_GRID
) -> dict:
    """Horizontal vs vertical dominance on the Volume dimension.

    At each level both fitted curves are evaluated; vertical scores a point
    where its accuracy is >= and its energy is <= the horizontal value.
    """
    def pick(scope: Scope, metric: CurveMetric) -> Curve | None:
        for c in curves:
            if (
                c.experiment.dimension is DataDimension.VOLUME
                and c.experiment.scope is scope
                and c.metric is metric
            ):
                return c
        return None

    h_acc, v_acc = pick(Scope.HORIZONTAL, CurveMetric.ACCURACY), pick(Scope.VERTICAL, CurveMetric.ACCURACY)
    h_en, v_en = pick(Scope.HORIZONTAL, CurveMetric.ENERGY), pick(Scope.VERTICAL, CurveMetric.ENERGY)
    if None in (h_acc, v_acc, h_en, v_en):
        raise GreenFLError("compare_approaches needs H and V volume curves for both metrics")

    detail = []
    v_points = h_points = 0
    for level in levels:
        x = 1.0 - level
        if x <= 0:
            continue
        row = {
            "level": level,
            "h_accuracy": h_acc.predict(x),
            "v_accuracy": v_acc.predict(x),
            "h_energy": h_en.predict(x),
            "v_energy": v_en.predict(x),
        }
        v_dominates = row["v_accuracy"] >= row["h_accuracy"] and row["v_energy"] <= row["h_energy"]
        h_dominates = row["h_accuracy"] >= row["v_accuracy"] and row["h_energy"] <= row["v_energy"]
        if v_dominates and not h_dominates:
            v_points += 1
        elif h_dominates and not v_dominates:
            h_points += 1
        row["winner"] = "V" if v_dominates and not h_dominates else (
            "H" if h_dominates and not v_dominates else "tie")
        detail.append(row)

    if v_points == h_points:
        winner = "tie"
    else:
        winner = "V" if v_points > h_points else "H"
    return {"volume_winner": winner, "v_points": v_points, "h_points": h_points, "detail": detail}


def rank_dimensions(curves: Sequence[Curve]) -> list[tuple[DataDimension, float]]:
    """Order dimensions by accuracy impact: fitted drop from level 0 to 0.8."""
    x_low = 1.0 - LEVEL_GRID[-1]
    impacts: dict[DataDimension, list[float]] = {}
    for c in curves:
        if c.metric is not CurveMetric.ACCURACY:
            continue
        impacts.setdefault(c.experiment.dimension, []).append(c.predict(1.0) - c.predict(x_low))
    ranked = [(dim, float(np.mean(vals))) for dim, vals in impacts.items()]
    ranked.sort(key=lambda t: (-t[1], t[0].value))
    return ranked


def curve_points_csv(records: Sequence[ExperimentRecord], curve: Curve) -> str:
    """CSV of (x, mean y, fitted y) for external plotting of one curve."""
    value = (lambda r: r.accuracy) if curve.metric is CurveMetric.ACCURACY else (
        lambda r: r.energy_kwh)
    points = _mean_points(
        [r for r in records if r.sub.experiment == curve.experiment], value
    )
    lines = ["x,y,fitted"]
    for x, y in points:
        lines.append(f"{x:.6g},{y:.6g},{curve.predict(x):.6g}")
    return "\n".join(lines) + "\n"
