"""Time-series dataset model, federated partitioning, quality metrics and
degradation injection.

Datasets are immutable: every operation returns a new object and is a pure
function of its inputs plus an explicit seed. Missing entries are explicit
NaN markers inside fixed-length value vectors, never shorter vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import GreenFLError
from .seeding import rng_for


class InvalidPartition(GreenFLError):
    pass


class InvalidReference(GreenFLError):
    pass


class AllNodesDegraded(GreenFLError):
    pass


class InvalidSpec(GreenFLError):
    pass


class FormatError(GreenFLError):
    pass


class DatasetType(str, Enum):
    SENSOR = "Sensor"
    SIMULATED = "Simulated"
    IMAGE = "Image"
    ECG = "ECG"
    DEVICE = "Device"
    SYNTHETIC = "Synthetic"


class DataDimension(str, Enum):
    VOLUME = "volume"
    ACCURACY = "accuracy"
    CONSISTENCY = "consistency"
    COMPLETENESS = "completeness"


class Scope(str, Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"


# Fraction of a sequence blanked per sample by completeness degradation.
NULL_WINDOW_FRACTION = 0.5


def _round_count(x: float) -> int:
    """Half-up rounding with an epsilon guard against float noise."""
    return int(math.floor(x + 0.5 + 1e-9))


@dataclass(frozen=True, eq=False)
class Sample:
    """One labeled sequence; NaN entries mark missing values."""

    values: np.ndarray
    label: int
    id: int

    def has_missing(self) -> bool:
        return bool(np.isnan(self.values).any())

    def value_key(self) -> bytes:
        """Byte key for exact-duplicate grouping (NaN patterns compare equal)."""
        return self.values.tobytes()


@dataclass(frozen=True)
class DatasetMeta:
    name: str
    type_tag: DatasetType
    train_size: int
    num_classes: int
    sequence_length: int

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "type": self.type_tag.value,
            "train_size": self.train_size,
            "classes": self.num_classes,
            "sequence_length": self.sequence_length,
        }


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    """Fixed-length labeled sequences plus metadata.

    Shards produced by injection may be empty; loaders and generators
    reject empty inputs at the boundary instead.
    """

    name: str
    type_tag: DatasetType
    samples: tuple[Sample, ...]
    num_classes: int
    sequence_length: int

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise InvalidSpec(f"num_classes must be >= 2, got {self.num_classes}")
        if self.sequence_length < 1:
            raise InvalidSpec("sequence_length must be positive")
        seen: set[int] = set()
        for s in self.samples:
            if len(s.values) != self.sequence_length:
                raise InvalidSpec(
                    f"sample {s.id} has {len(s.values)} values, expected {self.sequence_length}"
                )
            if not 0 <= s.label < self.num_classes:
                raise InvalidSpec(f"sample {s.id} label {s.label} outside [0, {self.num_classes})")
            if s.id in seen:
                raise InvalidSpec(f"duplicate sample id {s.id}")
            seen.add(s.id)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def ids(self) -> frozenset[int]:
        return frozenset(s.id for s in self.samples)

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def values_matrix(self) -> np.ndarray:
        if not self.samples:
            return np.empty((0, self.sequence_length), dtype=np.float64)
        return np.stack([s.values for s in self.samples])

    def with_samples(self, samples: Iterable[Sample]) -> "TimeSeriesDataset":
        return replace(self, samples=tuple(samples))

    def meta(self) -> DatasetMeta:
        return DatasetMeta(
            name=self.name,
            type_tag=self.type_tag,
            train_size=len(self.samples),
            num_classes=self.num_classes,
            sequence_length=self.sequence_length,
        )

    def equals(self, other: "TimeSeriesDataset") -> bool:
        if (self.name, self.type_tag, self.num_classes, self.sequence_length) != (
            other.name,
            other.type_tag,
            other.num_classes,
            other.sequence_length,
        ):
            return False
        if len(self.samples) != len(other.samples):
            return False
        for a, b in zip(self.samples, other.samples):
            if a.id != b.id or a.label != b.label:
                return False
            if not np.array_equal(a.values, b.values, equal_nan=True):
                return False
        return True


def empty_like(dataset: TimeSeriesDataset) -> TimeSeriesDataset:
    return dataset.with_samples(())


@dataclass(frozen=True)
class FederatedPartition:
    """Per-node shards plus a disjoint global test set."""

    shards: dict[str, TimeSeriesDataset]
    global_test: TimeSeriesDataset

    def __post_init__(self) -> None:
        seen: set[int] = set(self.global_test.ids)
        for node_id in sorted(self.shards):
            shard_ids = self.shards[node_id].ids
            overlap = seen & shard_ids
            if overlap:
                raise InvalidPartition(
                    f"shard {node_id} shares sample ids with another shard or the test set"
                )
            seen |= shard_ids

    @property
    def node_ids(self) -> list[str]:
        return sorted(self.shards)

    @property
    def num_classes(self) -> int:
        return self.global_test.num_classes

    @property
    def sequence_length(self) -> int:
        return self.global_test.sequence_length

    def train_size(self) -> int:
        return sum(len(s) for s in self.shards.values())


@dataclass(frozen=True)
class QualityProfile:
    """Measured quality dimensions, each a fraction in [0, 1]."""

    volume: float
    accuracy: float
    consistency: float
    completeness: float

    def __post_init__(self) -> None:
        for field_name in ("volume", "accuracy", "consistency", "completeness"):
            v = getattr(self, field_name)
            if not 0.0 <= v <= 1.0:
                raise InvalidSpec(f"{field_name} must lie in [0, 1], got {v}")

    def get(self, dimension: DataDimension) -> float:
        return getattr(self, dimension.value)


#: Default degradation grid: 0% to 80% in 20% steps.
LEVEL_GRID = (0.0, 0.2, 0.4, 0.6, 0.8)


@dataclass(frozen=True)
class DegradationSpec:
    """One injection instruction: which dimension, how hard, and where."""

    dimension: DataDimension
    level: float
    scope: Scope
    seed: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.level <= 1.0:
            raise InvalidSpec(f"degradation level must lie in [0, 1], got {self.level}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a deterministic synthetic classification dataset."""

    n_samples: int
    n_classes: int
    sequence_length: int
    class_separation: float
    seed: int
    name: str = "synthetic"

    def __post_init__(self) -> None:
        if self.n_samples < self.n_classes:
            raise InvalidSpec("need at least one sample per class")
        if self.n_classes < 2:
            raise InvalidSpec("need at least two classes")
        if self.class_separation < 0:
            raise InvalidSpec("class_separation must be >= 0")


def generate_synthetic(spec: SyntheticSpec) -> TimeSeriesDataset:
    """Sinusoid class prototypes plus unit Gaussian noise.

    Separation scales the prototype amplitude: 0 makes classes
    indistinguishable, ~3 makes them linearly separable.
    """
    rng = rng_for(spec.seed, "synthetic")
    t = np.arange(spec.sequence_length, dtype=np.float64) / spec.sequence_length
    prototypes = np.stack(
        [
            spec.class_separation
            * np.sin(2.0 * np.pi * ((c + 1) * t + c / spec.n_classes))
            for c in range(spec.n_classes)
        ]
    )
    labels = np.arange(spec.n_samples, dtype=np.int64) % spec.n_classes
    order = rng.permutation(spec.n_samples)
    noise = rng.standard_normal((spec.n_samples, spec.sequence_length))
    samples = tuple(
        Sample(values=prototypes[labels[order[i]]] + noise[i], label=int(labels[order[i]]), id=i)
        for i in range(spec.n_samples)
    )
    return TimeSeriesDataset(
        name=spec.name,
        type_tag=DatasetType.SYNTHETIC,
        samples=samples,
        num_classes=spec.n_classes,
        sequence_length=spec.sequence_length,
    )


def load_ucr_tsv(
    path: str | Path,
    name: str | None = None,
    type_tag: DatasetType = DatasetType.SENSOR,
) -> TimeSeriesDataset:
    """Parse a UCR-layout file: one sample per line, label first.

    Tab- or comma-separated (autodetected on the first line). Labels are
    remapped to contiguous [0, num_classes) in sorted order.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty file")
    delim = "\t" if "\t" in lines[0] else ","

    raw_labels: list[float] = []
    rows: list[np.ndarray] = []
    width: int | None = None
    for i, line in enumerate(lines):
        fields = line.split(delim)
        if len(fields) < 2:
            raise FormatError(f"{path}:{i + 1}: expected a label plus at least one value")
        try:
            raw_labels.append(float(fields[0]))
            values = np.array([float(f) for f in fields[1:]], dtype=np.float64)
        except ValueError as exc:
            raise FormatError(f"{path}:{i + 1}: non-numeric field ({exc})") from exc
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise FormatError(
                f"{path}:{i + 1}: row has {len(values)} values, expected {width}"
            )
        rows.append(values)

    label_map = {lab: idx for idx, lab in enumerate(sorted(set(raw_labels)))}
    if len(label_map) < 2:
        raise FormatError(f"{path}: needs at least two distinct labels")
    samples = tuple(
        Sample(values=rows[i], label=label_map[raw_labels[i]], id=i) for i in range(len(rows))
    )
    return TimeSeriesDataset(
        name=name or path.stem,
        type_tag=type_tag,
        samples=samples,
        num_classes=len(label_map),
        sequence_length=width or 0,
    )


def split_train_test(
    dataset: TimeSeriesDataset, test_fraction: float, seed: int
) -> tuple[TimeSeriesDataset, TimeSeriesDataset]:
    """Deterministically carve a disjoint test set from a dataset."""
    if not 0.0 <= test_fraction < 1.0:
        raise InvalidSpec("test_fraction must lie in [0, 1)")
    n = len(dataset)
    n_test = _round_count(test_fraction * n)
    order = rng_for(seed, "train-test-split").permutation(n)
    test_idx = set(order[:n_test].tolist())
    train = dataset.with_samples(s for i, s in enumerate(dataset.samples) if i not in test_idx)
    test = dataset.with_samples(s for i, s in enumerate(dataset.samples) if i in test_idx)
    return train, test


def partition_evenly(
    dataset: TimeSeriesDataset,
    n_nodes: int,
    seed: int,
    node_ids: Sequence[str] | None = None,
    global_test: TimeSeriesDataset | None = None,
) -> FederatedPartition:
    """Distribute all samples across nodes with shard sizes differing by <= 1."""
    if n_nodes < 1:
        raise InvalidPartition("n_nodes must be positive")
    if n_nodes > len(dataset):
        raise InvalidPartition(f"cannot split {len(dataset)} samples across {n_nodes} nodes")
    if node_ids is None:
        node_ids = [f"node{i}" for i in range(n_nodes)]
    if len(node_ids) != n_nodes or len(set(node_ids)) != n_nodes:
        raise InvalidPartition("node_ids must be unique and match n_nodes")

    rng = rng_for(seed, "partition")
    order = rng.permutation(len(dataset))
    base, extra = divmod(len(dataset), n_nodes)
    node_order = rng.permutation(n_nodes)
    sizes = {node_ids[node_order[i]]: base + (1 if i < extra else 0) for i in range(n_nodes)}

    shards: dict[str, TimeSeriesDataset] = {}
    cursor = 0
    for node_id in node_ids:
        size = sizes[node_id]
        picked = sorted(order[cursor : cursor + size].tolist())
        shards[node_id] = dataset.with_samples(dataset.samples[i] for i in picked)
        cursor += size
    return FederatedPartition(
        shards=shards, global_test=global_test if global_test is not None else empty_like(dataset)
    )


def partition_proportional(
    dataset: TimeSeriesDataset,
    fractions: dict[str, float],
    seed: int,
    global_test: TimeSeriesDataset | None = None,
) -> FederatedPartition:
    """Distribute samples in proportion to per-node fractions (largest remainder)."""
    total = sum(fractions.values())
    if total <= 0:
        raise InvalidPartition("fractions must sum to a positive value")
    n = len(dataset)
    node_ids = sorted(fractions)
    quotas = {nid: n * fractions[nid] / total for nid in node_ids}
    sizes = {nid: int(math.floor(quotas[nid])) for nid in node_ids}
    remainders = sorted(node_ids, key=lambda nid: (quotas[nid] - sizes[nid], nid), reverse=True)
    for nid in remainders[: n - sum(sizes.values())]:
        sizes[nid] += 1

    order = rng_for(seed, "partition-proportional").permutation(n)
    shards: dict[str, TimeSeriesDataset] = {}
    cursor = 0
    for nid in node_ids:
        picked = sorted(order[cursor : cursor + sizes[nid]].tolist())
        shards[nid] = dataset.with_samples(dataset.samples[i] for i in picked)
        cursor += sizes[nid]
    return FederatedPartition(
        shards=shards, global_test=global_test if global_test is not None else empty_like(dataset)
    )


def _conflicting_duplicate_ids(samples: Sequence[Sample]) -> set[int]:
    """Ids of samples belonging to an identical-values group with >= 2 labels."""
    groups: dict[bytes, list[Sample]] = {}
    for s in samples:
        groups.setdefault(s.value_key(), []).append(s)
    dirty: set[int] = set()
    for members in groups.values():
        if len(members) > 1 and len({m.label for m in members}) > 1:
            dirty.update(m.id for m in members)
    return dirty


def measure_quality(
    shard: TimeSeriesDataset, reference: TimeSeriesDataset
) -> QualityProfile:
    """Measure the four quality dimensions of a shard against its pre-injection state.

    All denominators are the reference size. Injected duplicates carry new
    ids, so they are excluded from the volume numerator but do count as
    inconsistent when their group's labels conflict.
    """
    n_ref = len(reference)
    if n_ref == 0:
        raise InvalidReference("reference shard is empty")
    ref_labels = {s.id: s.label for s in reference.samples}

    n_kept = sum(1 for s in shard.samples if s.id in ref_labels)
    n_mislabeled = sum(
        1 for s in shard.samples if s.id in ref_labels and s.label != ref_labels[s.id]
    )
    n_inconsistent = len(_conflicting_duplicate_ids(shard.samples))
    n_missing = sum(1 for s in shard.samples if s.has_missing())

    clamp = lambda v: min(1.0, max(0.0, v))
    return QualityProfile(
        volume=clamp(n_kept / n_ref),
        accuracy=clamp(1.0 - n_mislabeled / n_ref),
        consistency=clamp(1.0 - n_inconsistent / n_ref),
        completeness=clamp(1.0 - n_missing / n_ref),
    )


class _IdAllocator:
    """Hands out fresh sample ids above everything already in a partition."""

    def __init__(self, start: int) -> None:
        self._next = start

    def take(self) -> int:
        nid = self._next
        self._next += 1
        return nid


def _wrong_label(label: int, num_classes: int, rng: np.random.Generator) -> int:
    shift = int(rng.integers(1, num_classes))
    return (label + shift) % num_classes


def degrade_dataset(
    dataset: TimeSeriesDataset,
    dimension: DataDimension,
    level: float,
    rng: np.random.Generator,
    id_alloc: _IdAllocator | None = None,
    protect: set[int] | None = None,
) -> TimeSeriesDataset:
    """Apply one dimension's degradation at `level` to a single shard.

    `protect` excludes sample ids from being picked (used when composing
    several dimensions so their measurements stay independent).
    """
    n = len(dataset)
    if n == 0 or level <= 0.0:
        return dataset
    eligible = [i for i, s in enumerate(dataset.samples) if not protect or s.id not in protect]

    if dimension is DataDimension.VOLUME:
        k = min(_round_count(level * n), len(eligible))
        drop = {eligible[i] for i in rng.choice(len(eligible), size=k, replace=False)}
        return dataset.with_samples(s for i, s in enumerate(dataset.samples) if i not in drop)

    if dimension is DataDimension.ACCURACY:
        k = min(_round_count(level * n), len(eligible))
        picked = {eligible[i] for i in rng.choice(len(eligible), size=k, replace=False)}
        out = [
            replace(s, label=_wrong_label(s.label, dataset.num_classes, rng))
            if i in picked
            else s
            for i, s in enumerate(dataset.samples)
        ]
        return dataset.with_samples(out)

    if dimension is DataDimension.CONSISTENCY:
        if id_alloc is None:
            id_alloc = _IdAllocator(max((s.id for s in dataset.samples), default=-1) + 1)
        k = min(_round_count(level * n / 2.0), len(eligible))
        picked = [eligible[i] for i in rng.choice(len(eligible), size=k, replace=False)]
        dups = [
            Sample(
                values=dataset.samples[i].values.copy(),
                label=_wrong_label(dataset.samples[i].label, dataset.num_classes, rng),
                id=id_alloc.take(),
            )
            for i in sorted(picked)
        ]
        return dataset.with_samples(list(dataset.samples) + dups)

    if dimension is DataDimension.COMPLETENESS:
        k = min(_round_count(level * n), len(eligible))
        picked = {eligible[i] for i in rng.choice(len(eligible), size=k, replace=False)}
        window = max(1, _round_count(NULL_WINDOW_FRACTION * dataset.sequence_length))
        out = []
        for i, s in enumerate(dataset.samples):
            if i in picked:
                offset = int(rng.integers(0, dataset.sequence_length - window + 1))
                values = s.values.copy()
                values[offset : offset + window] = np.nan
                out.append(replace(s, values=values))
            else:
                out.append(s)
        return dataset.with_samples(out)

    raise InvalidSpec(f"unknown dimension {dimension}")


def inject(partition: FederatedPartition, spec: DegradationSpec) -> FederatedPartition:
    """Degrade a partition as `spec` directs; the input is never modified.

    Horizontal applies `level` to every shard. Vertical fully degrades
    floor(level * n_nodes) seed-chosen shards (volume empties them) and
    leaves the rest untouched. The global test set is never altered.
    """
    node_ids = partition.node_ids
    max_id = max(
        (s.id for shard in partition.shards.values() for s in shard.samples),
        default=-1,
    )
    max_id = max(max_id, max((s.id for s in partition.global_test.samples), default=-1))
    id_alloc = _IdAllocator(max_id + 1)

    if spec.scope is Scope.HORIZONTAL:
        targets = {nid: spec.level for nid in node_ids}
    else:
        k = int(math.floor(spec.level * len(node_ids) + 1e-9))
        if k >= len(node_ids) and k > 0:
            raise AllNodesDegraded(
                f"vertical level {spec.level} would degrade all {len(node_ids)} nodes"
            )
        chosen_idx = rng_for(spec.seed, "vertical-pick").choice(
            len(node_ids), size=k, replace=False
        )
        targets = {node_ids[i]: 1.0 for i in chosen_idx}

    shards: dict[str, TimeSeriesDataset] = {}
    for nid in node_ids:
        lvl = targets.get(nid, 0.0)
        if lvl <= 0.0:
            shards[nid] = partition.shards[nid]
        else:
            shards[nid] = degrade_dataset(
                partition.shards[nid],
                spec.dimension,
                lvl,
                rng_for(spec.seed, "inject", nid),
                id_alloc,
            )
    return FederatedPartition(shards=shards, global_test=partition.global_test)


def clean_dataset(dataset: TimeSeriesDataset) -> TimeSeriesDataset:
    """Drop detectably dirty samples.

    Removes whole conflicting-duplicate groups (no ground truth says which
    member is right) and every sample containing missing values. Plain
    label noise is undetectable and passes through.
    """
    dirty = _conflicting_duplicate_ids(dataset.samples)
    return dataset.with_samples(
        s for s in dataset.samples if s.id not in dirty and not s.has_missing()
    )
