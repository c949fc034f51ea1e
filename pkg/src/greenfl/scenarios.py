"""Scenario configuration, replica data preparation, and validation replay.

A scenario declares a dataset shape, a node roster with per-node volume
and quality, score weights, and an accuracy threshold. Replay builds a
synthetic dataset matching the declared shape, distributes it according
to the roster, degrades each shard to its declared quality, and executes
recommended configurations end to end with emissions accounting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import telemetry
from .datasets import (
    DataDimension,
    DatasetMeta,
    DatasetType,
    FederatedPartition,
    SyntheticSpec,
    TimeSeriesDataset,
    degrade_dataset,
    generate_synthetic,
    partition_proportional,
)
from .datasets import _IdAllocator  # shared id sequencing during shard degradation
from .engine import FLConfig, estimate_baseline_accuracy, run_federated
from .errors import GreenFLError
from .recommender import (
    Method,
    Recommendation,
    RecommendationSet,
    ScoreWeights,
    recommend,
)
from .reducer import ReducerModel
from .seeding import rng_for, stable_seed
from .telemetry import EnergyModel, NodeProfile


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    meta: DatasetMeta
    class_separation: float
    test_size: int
    roster: tuple[NodeProfile, ...]
    weights: ScoreWeights
    accuracy_threshold: float
    seed: int
    fl: FLConfig
    energy: EnergyModel

    def __post_init__(self) -> None:
        if not 0.0 < self.accuracy_threshold < 1.0:
            raise GreenFLError("accuracy_threshold must lie in (0, 1)")
        if self.test_size < 1:
            raise GreenFLError("test_size must be positive")
        if not self.roster:
            raise GreenFLError("scenario roster is empty")

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "dataset": {
                **self.meta.to_json(),
                "class_separation": self.class_separation,
                "test_size": self.test_size,
            },
            "roster": [
                {
                    "node_id": p.node_id,
                    "power_watts": p.power_watts,
                    "location": p.location,
                    "data_volume": p.data_volume_fraction,
                    "consistency": p.consistency,
                    "completeness": p.completeness,
                }
                for p in self.roster
            ],
            "weights": self.weights.to_json(),
            "accuracy_threshold": self.accuracy_threshold,
            "seed": self.seed,
            "fl": {
                "n_rounds_max": self.fl.n_rounds_max,
                "local_epochs": self.fl.local_epochs,
                "batch_size": self.fl.batch_size,
                "learning_rate": self.fl.learning_rate,
                "early_stop_patience": self.fl.early_stop_patience,
                "early_stop_min_delta": self.fl.early_stop_min_delta,
                "val_fraction": self.fl.val_fraction,
                "hidden_units": self.fl.hidden_units,
            },
            "energy": {
                "seconds_per_sample": self.energy.seconds_per_sample,
                "server_overhead_kwh_per_round": self.energy.server_overhead_kwh_per_round,
                "seconds_per_node_round": self.energy.seconds_per_node_round,
            },
        }


def _roster_from_rows(
    rows: Sequence[Mapping], intensities: Mapping[str, float]
) -> tuple[NodeProfile, ...]:
    profiles = []
    for i, row in enumerate(rows):
        loc = row["location"]
        if loc not in intensities:
            raise GreenFLError(f"roster row {i + 1}: unknown location {loc!r}")
        profiles.append(
            NodeProfile(
                node_id=str(row["node_id"]),
                power_watts=float(row["power_watts"]),
                location=loc,
                carbon_intensity=intensities[loc],
                data_volume_fraction=float(row["data_volume"]),
                consistency=float(row["consistency"]),
                completeness=float(row["completeness"]),
            )
        )
    if len({p.node_id for p in profiles}) != len(profiles):
        raise GreenFLError("duplicate node_id in roster")
    return tuple(profiles)


def scenario_from_json(
    obj: Mapping,
    base_dir: Path | None = None,
    intensities: Mapping[str, float] | None = None,
) -> ScenarioConfig:
    """Build a scenario from its JSON form.

    `roster` may be a CSV path (resolved against base_dir) or an inline
    list of row objects; locations resolve against the intensity snapshot.
    """
    if intensities is None:
        intensities = telemetry.load_carbon_intensities()
    try:
        ds = obj["dataset"]
        meta = DatasetMeta(
            name=ds["name"],
            type_tag=DatasetType(ds["type"]),
            train_size=int(ds["train_size"]),
            num_classes=int(ds["classes"]),
            sequence_length=int(ds["sequence_length"]),
        )
        roster_ref = obj["roster"]
        if isinstance(roster_ref, str):
            path = Path(roster_ref)
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            roster = tuple(telemetry.load_roster_csv(path, intensities))
        else:
            roster = _roster_from_rows(roster_ref, intensities)
        seed = int(obj.get("seed", 0))
        fl = FLConfig(seed=seed, **obj.get("fl", {}))
        energy = EnergyModel(**obj.get("energy", {}))
        return ScenarioConfig(
            name=str(obj["name"]),
            meta=meta,
            class_separation=float(ds.get("class_separation", 1.0)),
            test_size=int(ds.get("test_size", max(1, round(0.25 * meta.train_size)))),
            roster=roster,
            weights=ScoreWeights.from_json(obj.get(
                "weights", {"energy": 0.7, "consistency": 0.2, "completeness": 0.1})),
            accuracy_threshold=float(obj["accuracy_threshold"]),
            seed=seed,
            fl=fl,
            energy=energy,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise GreenFLError(f"invalid scenario config: {exc}") from exc


def load_scenario(path: str | Path, intensities=None) -> ScenarioConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise GreenFLError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_json(obj, base_dir=path.parent, intensities=intensities)


def bundled_scenario_names() -> list[str]:
    root = resources.files("greenfl.data.scenarios")
    return sorted(
        p.name.removesuffix(".json") for p in root.iterdir() if p.name.endswith(".json")
    )


def load_bundled_scenario(name: str) -> ScenarioConfig:
    root = resources.files("greenfl.data.scenarios")
    ref = root.joinpath(f"{name}.json")
    if not ref.is_file():
        raise GreenFLError(
            f"no bundled scenario {name!r}; available: {', '.join(bundled_scenario_names())}"
        )
    with resources.as_file(ref) as path:
        return load_scenario(path)


def build_dataset(scenario: ScenarioConfig) -> tuple[TimeSeriesDataset, TimeSeriesDataset]:
    """Synthetic train and test sets matching the scenario's declared shape."""
    total = scenario.meta.train_size + scenario.test_size
    full = generate_synthetic(
        SyntheticSpec(
            n_samples=total,
            n_classes=scenario.meta.num_classes,
            sequence_length=scenario.meta.sequence_length,
            class_separation=scenario.class_separation,
            seed=stable_seed(scenario.seed, "scenario-data"),
            name=scenario.meta.name,
        )
    )
    train = full.with_samples(full.samples[: scenario.meta.train_size])
    test = full.with_samples(full.samples[scenario.meta.train_size :])
    return train, test


def prepare_partition(
    scenario: ScenarioConfig, train: TimeSeriesDataset, test: TimeSeriesDataset
) -> FederatedPartition:
    """Shard the train set by declared volumes and degrade each shard to its
    declared consistency and completeness.

    Completeness damage lands first; consistency duplicates are then drawn
    from intact samples only, so the two measurements stay independent.
    """
    fractions = {p.node_id: p.data_volume_fraction for p in scenario.roster}
    part = partition_proportional(
        train, fractions, stable_seed(scenario.seed, "scenario-partition"), global_test=test
    )
    max_id = max((s.id for s in train.samples), default=-1)
    max_id = max(max_id, max((s.id for s in test.samples), default=-1))
    id_alloc = _IdAllocator(max_id + 1)

    shards = {}
    for profile in scenario.roster:
        nid = profile.node_id
        shard = part.shards[nid]
        lvl_missing = 1.0 - profile.completeness
        if lvl_missing > 0 and len(shard) > 0:
            shard = degrade_dataset(
                shard,
                DataDimension.COMPLETENESS,
                lvl_missing,
                rng_for(scenario.seed, "prep-completeness", nid),
            )
        lvl_dup = 1.0 - profile.consistency
        if lvl_dup > 0 and len(shard) > 0:
            protected = {s.id for s in shard.samples if s.has_missing()}
            shard = degrade_dataset(
                shard,
                DataDimension.CONSISTENCY,
                lvl_dup,
                rng_for(scenario.seed, "prep-consistency", nid),
                id_alloc=id_alloc,
                protect=protected,
            )
        shards[nid] = shard
    return FederatedPartition(shards=shards, global_test=test)


@dataclass(frozen=True)
class MethodRepRecord:
    method: Method
    rep: int
    accuracy: float
    rounds: int
    kwh: float
    kg: float
    threshold_met: bool

    def to_json(self) -> dict:
        return {
            "method": self.method.value,
            "rep": self.rep,
            "accuracy": self.accuracy,
            "rounds": self.rounds,
            "kwh": self.kwh,
            "kg": self.kg,
            "threshold_met": self.threshold_met,
        }


@dataclass(frozen=True)
class MethodSummary:
    method: Method
    reps: tuple[MethodRepRecord, ...]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean([r.accuracy for r in self.reps]))

    @property
    def mean_kg(self) -> float:
        return float(np.mean([r.kg for r in self.reps]))

    @property
    def threshold_rate(self) -> float:
        return float(np.mean([1.0 if r.threshold_met else 0.0 for r in self.reps]))

    def to_json(self) -> dict:
        return {
            "method": self.method.value,
            "mean_accuracy": self.mean_accuracy,
            "mean_kg": self.mean_kg,
            "threshold_rate": self.threshold_rate,
            "reps": [r.to_json() for r in self.reps],
        }


@dataclass(frozen=True)
class ValidationResult:
    scenario_name: str
    threshold: float
    recommendations: RecommendationSet
    methods: tuple[MethodSummary, ...]

    def summary(self, method: Method) -> MethodSummary:
        for m in self.methods:
            if m.method is method:
                return m
        raise GreenFLError(f"no results for method {method.value}")

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario_name,
            "threshold": self.threshold,
            "recommendations": self.recommendations.to_json(),
            "methods": [m.to_json() for m in self.methods],
        }


def _capped_size(shard_len: int, cap: float) -> int:
    if cap >= 1.0 or shard_len == 0:
        return shard_len
    return max(1, int(np.floor(cap * shard_len + 0.5 + 1e-9)))


def execute_recommendation(
    scenario: ScenarioConfig,
    partition: FederatedPartition,
    rec: Recommendation,
    rep: int,
    ledger_path: str | Path | None = None,
) -> MethodRepRecord:
    """Run one recommended configuration once and price its emissions."""
    by_id = {p.node_id: p for p in scenario.roster}
    participating: set[str] = set()
    caps: dict[str, float] = {}
    use_clean = False
    for alloc in rec.selected:
        if alloc.allocated_volume_fraction <= 0:
            continue
        vol = by_id[alloc.node_id].data_volume_fraction
        if vol <= 0:
            continue
        participating.add(alloc.node_id)
        caps[alloc.node_id] = min(1.0, alloc.allocated_volume_fraction / vol)
        use_clean = use_clean or alloc.use_clean_only

    fl = scenario.fl.replace(
        seed=stable_seed(scenario.seed, "validate", rec.method.value, rep)
    )
    result = run_federated(partition, fl, participating, caps, use_clean)

    preprocessing = None
    if use_clean:
        preprocessing = {
            nid: _capped_size(len(partition.shards[nid]), caps[nid]) for nid in participating
        }
    report = telemetry.report(result, scenario.roster, scenario.energy, preprocessing)
    if ledger_path is not None:
        telemetry.ledger_append(report, "validation", ledger_path)
    return MethodRepRecord(
        method=rec.method,
        rep=rep,
        accuracy=result.final_accuracy,
        rounds=result.rounds_executed,
        kwh=report.total_kwh,
        kg=report.total_kg,
        threshold_met=result.final_accuracy >= scenario.accuracy_threshold,
    )


def run_estimation(
    scenario: ScenarioConfig, ledger_path: str | Path | None = None
) -> tuple[float, float]:
    """Single-node accuracy estimate plus its emissions in kg CO2e."""
    train, test = build_dataset(scenario)
    fl = scenario.fl.replace(seed=stable_seed(scenario.seed, "estimate-fl"))
    accuracy, work = estimate_baseline_accuracy(train, test, fl, len(scenario.roster))
    mean_power = float(np.mean([p.power_watts for p in scenario.roster]))
    mean_intensity = float(np.mean([p.carbon_intensity for p in scenario.roster]))
    kwh = (mean_power / 1000.0) * work * scenario.energy.seconds_per_sample / 3600.0
    kg = kwh * mean_intensity
    if ledger_path is not None:
        stub = telemetry.EmissionsReport(
            per_node_kwh={"estimation": kwh},
            per_node_kg={"estimation": kg},
            server_kwh=0.0,
            server_kg=0.0,
            includes_preprocessing=False,
        )
        telemetry.ledger_append(stub, "recommendation", ledger_path)
    return accuracy, kg


def recommend_for_scenario(
    scenario: ScenarioConfig,
    model: ReducerModel,
    accuracy_estimate: float | None = None,
) -> RecommendationSet:
    return recommend(
        roster=list(scenario.roster),
        meta=scenario.meta,
        threshold=scenario.accuracy_threshold,
        weights=scenario.weights,
        model=model,
        energy_model=scenario.energy,
        fl_config=scenario.fl,
        accuracy_estimate=accuracy_estimate,
    )


def run_validation(
    scenario: ScenarioConfig,
    model: ReducerModel,
    reps: int,
    methods: Sequence[Method] | None = None,
    ledger_path: str | Path | None = None,
) -> ValidationResult:
    """Execute every recommended configuration `reps` times.

    The Baseline is always executed: it is the comparator every other
    method is judged against.
    """
    if reps < 1:
        raise GreenFLError("reps must be >= 1")
    wanted = set(methods) if methods else set(Method)
    wanted.add(Method.BASELINE)

    rec_set = recommend_for_scenario(scenario, model)
    train, test = build_dataset(scenario)
    partition = prepare_partition(scenario, train, test)

    summaries = []
    for method in Method:  # fixed execution order
        if method not in wanted:
            continue
        rec = rec_set.recommendations[method]
        records = tuple(
            execute_recommendation(scenario, partition, rec, rep, ledger_path)
            for rep in range(reps)
        )
        summaries.append(MethodSummary(method=method, reps=records))
    return ValidationResult(
        scenario_name=scenario.name,
        threshold=scenario.accuracy_threshold,
        recommendations=rec_set,
        methods=tuple(summaries),
    )
