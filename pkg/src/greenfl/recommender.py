"""Node scoring and carbon-aware configuration selection.

Nodes are ranked by a weighted blend of normalized emission rate and
declared data quality. The selection methods walk that ranking: NS takes
the first feasible nodes, MSR additionally trains on clean data only, SR
keeps adding nodes until the clean volume covers the target. Baseline is
the all-nodes, all-data comparator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .datasets import DatasetMeta
from .engine import FLConfig
from .errors import GreenFLError
from .reducer import ReducerFeatures, ReducerModel, predict_volume
from .telemetry import EnergyModel, NodeProfile


class InvalidWeights(GreenFLError):
    pass


class NoFeasibleNode(GreenFLError):
    pass


class Method(str, Enum):
    BASELINE = "Baseline"
    NS = "NS"
    MSR = "MSR"
    SR = "SR"


@dataclass(frozen=True)
class ScoreWeights:
    """Blend weights for the node score; must sum to 1."""

    w_energy: float = 0.7
    w_quality: dict[str, float] = field(
        default_factory=lambda: {"consistency": 0.2, "completeness": 0.1}
    )

    def __post_init__(self) -> None:
        values = [self.w_energy, *self.w_quality.values()]
        if any(v < 0 for v in values):
            raise InvalidWeights("weights must be >= 0")
        total = sum(values)
        if abs(total - 1.0) > 1e-9:
            raise InvalidWeights(f"weights must sum to 1, got {total}")
        known = {"consistency", "completeness"}
        unknown = set(self.w_quality) - known
        if unknown:
            raise InvalidWeights(f"unknown quality dimensions: {sorted(unknown)}")

    def to_json(self) -> dict:
        return {"energy": self.w_energy, **dict(sorted(self.w_quality.items()))}

    @staticmethod
    def from_json(obj: Mapping[str, float]) -> "ScoreWeights":
        quality = {k: float(v) for k, v in obj.items() if k != "energy"}
        if "energy" not in obj:
            raise InvalidWeights("weights need an 'energy' entry")
        return ScoreWeights(w_energy=float(obj["energy"]), w_quality=quality)


@dataclass(frozen=True)
class RankedNode:
    node: NodeProfile
    co2_rate: float
    score: float


@dataclass(frozen=True)
class Allocation:
    node_id: str
    allocated_volume_fraction: float
    use_clean_only: bool

    def to_json(self) -> dict:
        return {
            "node_id": self.node_id,
            "allocated_volume_fraction": self.allocated_volume_fraction,
            "use_clean_only": self.use_clean_only,
        }


@dataclass(frozen=True)
class Recommendation:
    method: Method
    selected: tuple[Allocation, ...]
    n_hat: int
    v_n: float
    v_target: float
    e_effective: float
    predicted_kg: float
    shortfall_flag: bool

    def to_json(self) -> dict:
        return {
            "method": self.method.value,
            "selected": [a.to_json() for a in self.selected],
            "n_hat": self.n_hat,
            "v_n": self.v_n,
            "v_target": self.v_target,
            "e_effective": self.e_effective,
            "predicted_kg": self.predicted_kg,
            "shortfall_flag": self.shortfall_flag,
        }


def score_nodes(roster: Sequence[NodeProfile], weights: ScoreWeights) -> list[RankedNode]:
    """Rank nodes by blended emission-rate complement and quality, descending.

    Ties break toward the lower emission rate, then the smaller node_id.
    """
    if not roster:
        raise NoFeasibleNode("empty roster")
    max_co2 = max(n.co2_rate for n in roster)
    ranked = []
    for node in roster:
        energy_term = 1.0 if max_co2 == 0 else 1.0 - node.co2_rate / max_co2
        quality_term = sum(w * getattr(node, dim) for dim, w in weights.w_quality.items())
        ranked.append(
            RankedNode(node=node, co2_rate=node.co2_rate,
                       score=weights.w_energy * energy_term + quality_term)
        )
    ranked.sort(key=lambda r: (-r.score, r.co2_rate, r.node.node_id))
    return ranked


def volume_targets(n_c: int, n_hat: int) -> tuple[float, float]:
    """Per-node equal share and the total volume n_hat such shares cover."""
    if n_c < 1:
        raise GreenFLError("n_c must be >= 1")
    n_hat = min(max(n_hat, 1), n_c)
    v_n = 1.0 / n_c
    return v_n, n_hat * v_n


def predict_n_hat(
    model: ReducerModel, meta: DatasetMeta, threshold: float, n_c: int
) -> tuple[int, float]:
    """Nodes needed for the predicted volume at an equal per-node split."""
    if not 0.0 < threshold < 1.0:
        raise GreenFLError("accuracy threshold must lie in (0, 1)")
    volume = predict_volume(
        model,
        ReducerFeatures.from_meta(meta, threshold),
        min_volume=1.0 / n_c,
    )
    n_hat = int(math.ceil(volume * n_c - 1e-9))
    return min(max(n_hat, 1), n_c), volume


_FEASIBILITY_EPS = 1e-9


def _clean_fraction(node: NodeProfile) -> float:
    return node.consistency * node.completeness


def _walk(
    ranked: Sequence[RankedNode],
    n_hat: int,
    v_n: float,
    v_target: float,
    clean_aware: bool,
    extend_to_target: bool,
) -> tuple[list[Allocation], float, bool]:
    """Shared ranking walk for NS, MSR and SR."""
    selected: list[Allocation] = []
    e_effective = 0.0
    for r in ranked:
        if len(selected) >= n_hat and not (extend_to_target and e_effective < v_target - 1e-12):
            break
        if r.node.data_volume_fraction + _FEASIBILITY_EPS < v_n:
            continue  # not enough data to host an equal share
        selected.append(Allocation(r.node.node_id, v_n, clean_aware))
        if clean_aware:
            e_effective += min(v_n, r.node.data_volume_fraction * _clean_fraction(r.node))
        else:
            e_effective += v_n
    if not selected:
        raise NoFeasibleNode(f"no node holds the required per-node volume {v_n:.4f}")
    if extend_to_target:
        shortfall = e_effective < v_target - 1e-12
    else:
        shortfall = len(selected) < n_hat
    return selected, e_effective, shortfall


def select_ns(
    ranked: Sequence[RankedNode], n_hat: int, v_n: float, predicted_kg: float = 0.0
) -> Recommendation:
    """Top-scored feasible nodes, each allocated exactly the equal share."""
    v_target = n_hat * v_n
    selected, e_eff, shortfall = _walk(ranked, n_hat, v_n, v_target, False, False)
    return Recommendation(
        method=Method.NS,
        selected=tuple(selected),
        n_hat=n_hat,
        v_n=v_n,
        v_target=v_target,
        e_effective=e_eff,
        predicted_kg=predicted_kg,
        shortfall_flag=shortfall,
    )


def select_msr(
    ranked: Sequence[RankedNode], n_hat: int, v_n: float, predicted_kg: float = 0.0
) -> Recommendation:
    """NS node set, but training uses only each node's clean data."""
    v_target = n_hat * v_n
    selected, e_eff, shortfall = _walk(ranked, n_hat, v_n, v_target, True, False)
    return Recommendation(
        method=Method.MSR,
        selected=tuple(selected),
        n_hat=n_hat,
        v_n=v_n,
        v_target=v_target,
        e_effective=e_eff,
        predicted_kg=predicted_kg,
        shortfall_flag=shortfall,
    )


def select_sr(
    ranked: Sequence[RankedNode], n_hat: int, v_n: float, predicted_kg: float = 0.0
) -> Recommendation:
    """MSR walk extended past n_hat until clean volume covers the target."""
    v_target = n_hat * v_n
    selected, e_eff, shortfall = _walk(ranked, n_hat, v_n, v_target, True, True)
    return Recommendation(
        method=Method.SR,
        selected=tuple(selected),
        n_hat=n_hat,
        v_n=v_n,
        v_target=v_target,
        e_effective=e_eff,
        predicted_kg=predicted_kg,
        shortfall_flag=shortfall,
    )


def select_baseline(
    roster: Sequence[NodeProfile], n_c: int, predicted_kg: float = 0.0
) -> Recommendation:
    """Every node, its full declared volume, no cleaning."""
    allocations = tuple(
        Allocation(n.node_id, n.data_volume_fraction, False)
        for n in sorted(roster, key=lambda n: n.node_id)
    )
    total = sum(a.allocated_volume_fraction for a in allocations)
    return Recommendation(
        method=Method.BASELINE,
        selected=allocations,
        n_hat=len(roster),
        v_n=1.0 / n_c,
        v_target=total,
        e_effective=total,
        predicted_kg=predicted_kg,
        shortfall_flag=False,
    )


def _predict_kg(
    selected: Sequence[Allocation],
    roster_by_id: Mapping[str, NodeProfile],
    meta: DatasetMeta,
    energy_model: EnergyModel,
    fl_config: FLConfig,
) -> float:
    """Price expected work: allocated volume times dataset size, for the
    configured epochs and a full round budget."""
    rounds = fl_config.n_rounds_max
    total_kg = 0.0
    max_intensity = 0.0
    for alloc in selected:
        node = roster_by_id[alloc.node_id]
        work = alloc.allocated_volume_fraction * meta.train_size * fl_config.local_epochs * rounds
        seconds = work * energy_model.seconds_per_sample
        seconds += rounds * energy_model.seconds_per_node_round
        total_kg += node.power_kw * seconds / 3600.0 * node.carbon_intensity
        max_intensity = max(max_intensity, node.carbon_intensity)
    total_kg += energy_model.server_overhead_kwh_per_round * rounds * max_intensity
    return total_kg


@dataclass(frozen=True)
class RecommendationSet:
    recommendations: dict[Method, Recommendation]
    ranking: tuple[RankedNode, ...]
    predicted_volume: float
    threshold: float
    warnings: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "threshold": self.threshold,
            "predicted_volume": self.predicted_volume,
            "ranking": [
                {"node_id": r.node.node_id, "score": r.score, "co2_rate": r.co2_rate}
                for r in self.ranking
            ],
            "methods": {m.value: rec.to_json() for m, rec in sorted(
                self.recommendations.items(), key=lambda kv: kv[0].value)},
            "warnings": list(self.warnings),
        }


def recommend(
    roster: Sequence[NodeProfile],
    meta: DatasetMeta,
    threshold: float,
    weights: ScoreWeights,
    model: ReducerModel,
    energy_model: EnergyModel,
    fl_config: FLConfig | None = None,
    accuracy_estimate: float | None = None,
) -> RecommendationSet:
    """Evaluate all four methods against one roster and dataset."""
    if not roster:
        raise NoFeasibleNode("empty roster")
    fl_config = fl_config or FLConfig()
    n_c = len(roster)
    ranked = score_nodes(roster, weights)
    n_hat, predicted_volume = predict_n_hat(model, meta, threshold, n_c)
    v_n, _ = volume_targets(n_c, n_hat)
    by_id = {n.node_id: n for n in roster}

    def priced(rec: Recommendation) -> Recommendation:
        from dataclasses import replace

        return replace(
            rec, predicted_kg=_predict_kg(rec.selected, by_id, meta, energy_model, fl_config)
        )

    recs = {
        Method.BASELINE: priced(select_baseline(roster, n_c)),
        Method.NS: priced(select_ns(ranked, n_hat, v_n)),
        Method.MSR: priced(select_msr(ranked, n_hat, v_n)),
        Method.SR: priced(select_sr(ranked, n_hat, v_n)),
    }

    warnings: list[str] = []
    if accuracy_estimate is not None:
        if threshold <= accuracy_estimate:
            warnings.append(
                f"threshold {threshold:.2f} is already met by the single-node estimate "
                f"{accuracy_estimate:.2f}; any configuration should satisfy it"
            )
        elif threshold > accuracy_estimate + 0.3:
            warnings.append(
                f"threshold {threshold:.2f} is far above the single-node estimate "
                f"{accuracy_estimate:.2f}; it may be unreachable"
            )
    return RecommendationSet(
        recommendations=recs,
        ranking=tuple(ranked),
        predicted_volume=predicted_volume,
        threshold=threshold,
        warnings=tuple(warnings),
    )
