"""Deterministic federated averaging loop.

Each round, every participating node trains the shared MLP locally and the
server aggregates sample-weighted updates. Early stopping watches the
pooled validation loss. All randomness flows through per-(seed, node,
round) streams, so results do not depend on client execution order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import learner
from .datasets import FederatedPartition, TimeSeriesDataset, clean_dataset
from .errors import GreenFLError
from .learner import ModelSpec
from .seeding import rng_for, stable_seed


class NodeSkipped(GreenFLError):
    """Raised when a node has no usable data this round."""


class EmptyFederation(GreenFLError):
    pass


class AggregationError(GreenFLError):
    pass


@dataclass(frozen=True)
class FLConfig:
    n_rounds_max: int = 30
    local_epochs: int = 3
    batch_size: int = 16
    learning_rate: float = 0.01
    early_stop_patience: int = 3
    early_stop_min_delta: float = 1e-3
    seed: int = 0
    val_fraction: float = 0.10
    hidden_units: int = learner.HIDDEN_UNITS

    def __post_init__(self) -> None:
        if self.n_rounds_max < 1 or self.local_epochs < 1 or self.batch_size < 1:
            raise GreenFLError("rounds, epochs and batch size must be positive")
        if self.learning_rate < 0:
            raise GreenFLError("learning_rate must be >= 0")
        if self.early_stop_patience < 1:
            raise GreenFLError("early_stop_patience must be >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise GreenFLError("val_fraction must lie in (0, 1)")

    def replace(self, **kw) -> "FLConfig":
        from dataclasses import replace as _r

        return _r(self, **kw)


@dataclass(frozen=True)
class RoundLog:
    round_idx: int
    global_val_loss: float
    global_test_accuracy: float
    per_node_samples_processed: dict[str, int]
    stopped_early: bool

    def to_json(self) -> dict:
        return {
            "round_idx": self.round_idx,
            "global_val_loss": self.global_val_loss,
            "global_test_accuracy": self.global_test_accuracy,
            "per_node_samples_processed": dict(sorted(self.per_node_samples_processed.items())),
            "stopped_early": self.stopped_early,
        }


@dataclass(frozen=True)
class FLRunResult:
    final_accuracy: float
    rounds_executed: int
    round_logs: tuple[RoundLog, ...]
    per_node_work: dict[str, int]
    weights: np.ndarray = field(repr=False, compare=False, default=None)  # type: ignore[assignment]

    def total_work(self) -> int:
        return sum(self.per_node_work.values())

    def to_json(self) -> dict:
        return {
            "final_accuracy": self.final_accuracy,
            "rounds_executed": self.rounds_executed,
            "per_node_work": dict(sorted(self.per_node_work.items())),
            "round_logs": [r.to_json() for r in self.round_logs],
        }


def impute_missing(dataset: TimeSeriesDataset) -> TimeSeriesDataset:
    """Replace NaN entries with per-shard feature means; all-NaN features get 0."""
    if not dataset.samples:
        return dataset
    matrix = dataset.values_matrix()
    if not np.isnan(matrix).any():
        return dataset
    with np.errstate(invalid="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        means = np.nanmean(matrix, axis=0)
    means = np.nan_to_num(means, nan=0.0)
    filled = np.where(np.isnan(matrix), means, matrix)
    from dataclasses import replace as _r

    return dataset.with_samples(
        _r(s, values=filled[i]) for i, s in enumerate(dataset.samples)
    )


@dataclass(frozen=True)
class _NodeData:
    """Arrays a node trains on, prepared once per run."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    effective_size: int


def _prepare_node(
    shard: TimeSeriesDataset,
    config: FLConfig,
    node_id: str,
    cap: float,
    use_clean_only: bool,
) -> _NodeData | None:
    if not 0.0 < cap <= 1.0:
        raise GreenFLError(f"volume cap for {node_id} must lie in (0, 1], got {cap}")
    data = shard
    if cap < 1.0 and len(data) > 0:
        k = max(1, int(np.floor(cap * len(data) + 0.5 + 1e-9)))
        if k < len(data):
            keep = rng_for(config.seed, "volume-cap", node_id).choice(
                len(data), size=k, replace=False
            )
            data = data.with_samples(data.samples[i] for i in sorted(keep.tolist()))
    if use_clean_only:
        data = clean_dataset(data)
    data = impute_missing(data)
    n = len(data)
    if n == 0:
        return None

    x = data.values_matrix()
    y = data.labels()
    n_val = int(np.floor(config.val_fraction * n + 0.5 + 1e-9))
    order = rng_for(config.seed, "val-split", node_id).permutation(n)
    val_idx, train_idx = order[:n_val], order[n_val:]
    return _NodeData(
        x_train=x[train_idx],
        y_train=y[train_idx],
        x_val=x[val_idx],
        y_val=y[val_idx],
        effective_size=n,
    )


def train_local(
    weights: np.ndarray,
    shard: TimeSeriesDataset,
    config: FLConfig,
    node_id: str = "node0",
    round_idx: int = 0,
    use_clean_only: bool = False,
) -> tuple[np.ndarray, float, int]:
    """One node's round: local SGD epochs, then loss on its validation split.

    Deterministic per (weights, shard, config.seed, node_id, round_idx).
    """
    node = _prepare_node(shard, config, node_id, 1.0, use_clean_only)
    if node is None:
        raise NodeSkipped(f"node {node_id} has no usable samples")
    spec = ModelSpec(shard.sequence_length, shard.num_classes, config.hidden_units)
    w = _train_node_round(spec, weights, node, config, node_id, round_idx)
    vx, vy = (node.x_val, node.y_val) if len(node.x_val) else (node.x_train, node.y_train)
    return w, learner.loss(spec, w, vx, vy), node.effective_size * config.local_epochs


def _train_node_round(
    spec: ModelSpec,
    weights: np.ndarray,
    node: _NodeData,
    config: FLConfig,
    node_id: str,
    round_idx: int,
) -> np.ndarray:
    if len(node.x_train) == 0:
        return weights.copy()
    rng = rng_for(config.seed, "local-sgd", node_id, round_idx)
    w = weights
    for _ in range(config.local_epochs):
        w = learner.sgd_epoch(
            spec, w, node.x_train, node.y_train, config.learning_rate, config.batch_size, rng
        )
    return w


def aggregate(updates: Sequence[tuple[np.ndarray, int]]) -> np.ndarray:
    """Sample-count-weighted mean of parameter vectors."""
    if not updates:
        raise AggregationError("nothing to aggregate")
    shape = updates[0][0].shape
    total = sum(n for _, n in updates)
    if total <= 0:
        raise AggregationError("aggregate needs a positive total sample count")
    out = np.zeros(shape, dtype=np.float64)
    for w, n in updates:
        if w.shape != shape:
            raise AggregationError(f"parameter shape mismatch: {w.shape} vs {shape}")
        out += (n / total) * w
    return out


def run_federated(
    partition: FederatedPartition,
    config: FLConfig,
    participating: set[str] | None = None,
    per_node_volume_cap: Mapping[str, float] | None = None,
    use_clean_only: bool = False,
) -> FLRunResult:
    """Run the full FedAvg loop and report accuracy plus per-node work."""
    if participating is None:
        participating = set(partition.node_ids)
    unknown = participating - set(partition.node_ids)
    if unknown:
        raise EmptyFederation(f"participating nodes not in partition: {sorted(unknown)}")
    if len(partition.global_test) == 0:
        raise EmptyFederation("global test set is empty")
    caps = dict(per_node_volume_cap or {})

    nodes: dict[str, _NodeData] = {}
    for node_id in sorted(participating):
        prepared = _prepare_node(
            partition.shards[node_id], config, node_id, caps.get(node_id, 1.0), use_clean_only
        )
        if prepared is not None:
            nodes[node_id] = prepared
    if not nodes:
        raise EmptyFederation("no participating node holds usable data")

    spec = ModelSpec(partition.sequence_length, partition.num_classes, config.hidden_units)
    w_global = learner.init_weights(spec, stable_seed(config.seed, "global-init"))
    x_test = partition.global_test.values_matrix()
    y_test = partition.global_test.labels()

    val_x = [nodes[nid].x_val for nid in sorted(nodes) if len(nodes[nid].x_val)]
    val_y = [nodes[nid].y_val for nid in sorted(nodes) if len(nodes[nid].y_val)]
    if val_x:
        vx, vy = np.concatenate(val_x), np.concatenate(val_y)
    else:
        vx = np.concatenate([nodes[nid].x_train for nid in sorted(nodes)])
        vy = np.concatenate([nodes[nid].y_train for nid in sorted(nodes)])

    logs: list[RoundLog] = []
    per_node_work: dict[str, int] = {nid: 0 for nid in nodes}
    best_loss = np.inf
    rounds_without_improvement = 0

    for round_idx in range(config.n_rounds_max):
        updates: list[tuple[np.ndarray, int]] = []
        round_work: dict[str, int] = {}
        for node_id in sorted(nodes):
            node = nodes[node_id]
            w_local = _train_node_round(spec, w_global, node, config, node_id, round_idx)
            updates.append((w_local, max(1, len(node.x_train))))
            round_work[node_id] = node.effective_size * config.local_epochs
            per_node_work[node_id] += round_work[node_id]
        w_global = aggregate(updates)

        val_loss = learner.loss(spec, w_global, vx, vy)
        test_acc = learner.accuracy(spec, w_global, x_test, y_test)
        if val_loss < best_loss - config.early_stop_min_delta:
            best_loss = val_loss
            rounds_without_improvement = 0
        else:
            rounds_without_improvement += 1
        stop = rounds_without_improvement >= config.early_stop_patience
        logs.append(
            RoundLog(
                round_idx=round_idx,
                global_val_loss=val_loss,
                global_test_accuracy=test_acc,
                per_node_samples_processed=round_work,
                stopped_early=stop,
            )
        )
        if stop:
            break

    return FLRunResult(
        final_accuracy=logs[-1].global_test_accuracy,
        rounds_executed=len(logs),
        round_logs=tuple(logs),
        per_node_work=per_node_work,
        weights=w_global,
    )


def estimate_baseline_accuracy(
    train: TimeSeriesDataset,
    global_test: TimeSeriesDataset,
    config: FLConfig,
    n_reference_nodes: int = 10,
) -> tuple[float, int]:
    """Cheap accuracy estimate: one node trains a full cycle on one even shard."""
    from .datasets import FederatedPartition as _FP, partition_evenly

    part = partition_evenly(train, n_reference_nodes, stable_seed(config.seed, "estimate"))
    pick = int(rng_for(config.seed, "estimate-pick").integers(0, n_reference_nodes))
    node_id = part.node_ids[pick]
    solo = _FP(shards={node_id: part.shards[node_id]}, global_test=global_test)
    result = run_federated(solo, config)
    return result.final_accuracy, result.total_work()
