"""Federated loop: aggregation, early stopping, determinism, work accounting."""

from __future__ import annotations

import numpy as np
import pytest

from greenfl.datasets import (
    DataDimension,
    DegradationSpec,
    FederatedPartition,
    Scope,
    SyntheticSpec,
    generate_synthetic,
    inject,
    partition_evenly,
    split_train_test,
)
from greenfl.engine import (
    AggregationError,
    EmptyFederation,
    FLConfig,
    NodeSkipped,
    aggregate,
    estimate_baseline_accuracy,
    impute_missing,
    run_federated,
    train_local,
)

from oracles import central_train


def make_partition(n=400, classes=2, length=24, sep=3.0, seed=17, nodes=10):
    ds = generate_synthetic(
        SyntheticSpec(n_samples=n, n_classes=classes, sequence_length=length,
                      class_separation=sep, seed=seed, name="engine")
    )
    train, test = split_train_test(ds, 0.25, seed)
    return partition_evenly(train, nodes, seed, global_test=test)


class TestAggregate:
    def test_equal_weight_mean(self):
        out = aggregate([(np.array([1.0, 2.0]), 5), (np.array([3.0, 4.0]), 5)])
        np.testing.assert_allclose(out, [2.0, 3.0])

    def test_single_identity(self):
        w = np.array([0.5, -1.0, 2.0])
        np.testing.assert_array_equal(aggregate([(w, 3)]), w)

    def test_weighted(self):
        out = aggregate([(np.array([0.0, 0.0]), 1), (np.array([4.0, 4.0]), 3)])
        np.testing.assert_allclose(out, [3.0, 3.0])

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        updates = [(rng.standard_normal(20), int(rng.integers(1, 50))) for _ in range(6)]
        a = aggregate(updates)
        b = aggregate(list(reversed(updates)))
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(AggregationError):
            aggregate([(np.zeros(3), 1), (np.zeros(4), 1)])

    def test_empty(self):
        with pytest.raises(AggregationError):
            aggregate([])


class TestTrainLocal:
    def test_zero_lr_identity(self):
        part = make_partition()
        nid = part.node_ids[0]
        config = FLConfig(seed=1, learning_rate=0.0)
        w0 = np.zeros(
            (part.sequence_length + 1) * config.hidden_units
            + (config.hidden_units + 1) * part.num_classes
        )
        w, _, _ = train_local(w0, part.shards[nid], config, nid, 0)
        np.testing.assert_array_equal(w, w0)

    def test_deterministic(self):
        part = make_partition()
        nid = part.node_ids[2]
        config = FLConfig(seed=4)
        w0 = np.full(
            (part.sequence_length + 1) * config.hidden_units
            + (config.hidden_units + 1) * part.num_classes,
            0.01,
        )
        a = train_local(w0, part.shards[nid], config, nid, 3)
        b = train_local(w0, part.shards[nid], config, nid, 3)
        np.testing.assert_array_equal(a[0], b[0])
        assert a[1] == b[1] and a[2] == b[2]

    def test_work_is_shard_size_times_epochs(self):
        part = make_partition()
        nid = part.node_ids[0]
        config = FLConfig(seed=1, local_epochs=3)
        w0 = np.zeros(
            (part.sequence_length + 1) * config.hidden_units
            + (config.hidden_units + 1) * part.num_classes
        )
        _, _, work = train_local(w0, part.shards[nid], config, nid, 0)
        assert work == len(part.shards[nid]) * 3

    def test_empty_shard_skipped(self):
        part = make_partition()
        empty = part.shards[part.node_ids[0]].with_samples(())
        with pytest.raises(NodeSkipped):
            train_local(np.zeros(10), empty, FLConfig(seed=1), "n", 0)


class TestRunFederated:
    def test_single_node_matches_central_oracle(self):
        ds = generate_synthetic(
            SyntheticSpec(n_samples=300, n_classes=2, sequence_length=24,
                          class_separation=3.0, seed=23, name="central")
        )
        train, test = split_train_test(ds, 0.25, 23)
        part = partition_evenly(train, 1, 23, global_test=test)
        config = FLConfig(seed=23, n_rounds_max=10, early_stop_patience=10)
        fed = run_federated(part, config)
        central = central_train(
            train.values_matrix(), train.labels(), test.values_matrix(), test.labels(),
            n_classes=2, epochs=30, seed=23,
        )
        assert abs(fed.final_accuracy - central) <= 0.02

    def test_patience_one_constant_loss_stops_after_two_rounds(self):
        part = make_partition()
        config = FLConfig(seed=5, learning_rate=0.0, early_stop_patience=1, n_rounds_max=30)
        res = run_federated(part, config)
        assert res.rounds_executed == 2
        assert res.round_logs[-1].stopped_early

    def test_separable_ten_nodes_accurate(self):
        part = make_partition(n=400, sep=3.0, nodes=10)
        res = run_federated(part, FLConfig(seed=6))
        assert res.final_accuracy >= 0.9

    def test_determinism(self):
        part = make_partition()
        a = run_federated(part, FLConfig(seed=8))
        b = run_federated(part, FLConfig(seed=8))
        assert a.final_accuracy == b.final_accuracy
        assert a.rounds_executed == b.rounds_executed
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_participation_subset_ignores_other_nodes(self):
        part = make_partition()
        sub = {part.node_ids[0], part.node_ids[1]}
        res = run_federated(part, FLConfig(seed=9, n_rounds_max=3, early_stop_patience=3), sub)
        assert set(res.per_node_work) == sub

    def test_work_accounting_consistent(self):
        part = make_partition()
        res = run_federated(part, FLConfig(seed=10))
        recomputed = {}
        for log in res.round_logs:
            for nid, w in log.per_node_samples_processed.items():
                recomputed[nid] = recomputed.get(nid, 0) + w
        assert recomputed == res.per_node_work

    def test_early_stop_monotone_in_patience(self):
        part = make_partition(n=300, sep=1.0)
        rounds = []
        for patience in (1, 2, 4, 8):
            config = FLConfig(seed=11, early_stop_patience=patience, n_rounds_max=20)
            rounds.append(run_federated(part, config).rounds_executed)
        assert rounds == sorted(rounds)

    def test_empty_federation(self):
        part = make_partition()
        empty_shards = {nid: shard.with_samples(()) for nid, shard in part.shards.items()}
        empty = FederatedPartition(shards=empty_shards, global_test=part.global_test)
        with pytest.raises(EmptyFederation):
            run_federated(empty, FLConfig(seed=1))

    def test_volume_cap_reduces_work(self):
        part = make_partition()
        config = FLConfig(seed=12, n_rounds_max=3, early_stop_patience=3)
        full = run_federated(part, config)
        capped = run_federated(
            part, config, per_node_volume_cap={nid: 0.5 for nid in part.node_ids}
        )
        assert capped.total_work() < full.total_work()

    def test_clean_data_training_has_steadier_validation_loss(self):
        increases_dirty = 0
        increases_clean = 0
        for seed in range(5):
            part = make_partition(n=400, sep=1.5, seed=100 + seed)
            noisy = inject(
                part, DegradationSpec(DataDimension.CONSISTENCY, 0.6, Scope.HORIZONTAL, seed)
            )
            config = FLConfig(seed=seed, n_rounds_max=12, early_stop_patience=12)
            for use_clean in (False, True):
                res = run_federated(noisy, config, use_clean_only=use_clean)
                losses = [r.global_val_loss for r in res.round_logs]
                ups = sum(1 for i in range(1, len(losses)) if losses[i] > losses[i - 1])
                if use_clean:
                    increases_clean += ups
                else:
                    increases_dirty += ups
        assert increases_clean <= increases_dirty


class TestImpute:
    def test_fills_with_feature_means(self):
        part = make_partition(length=6)
        shard = part.shards[part.node_ids[0]]
        from dataclasses import replace

        samples = list(shard.samples)
        v = samples[0].values.copy()
        v[2] = np.nan
        samples[0] = replace(samples[0], values=v)
        broken = shard.with_samples(samples)
        fixed = impute_missing(broken)
        others = np.array([s.values[2] for s in broken.samples[1:]])
        assert fixed.samples[0].values[2] == pytest.approx(
            np.nanmean([np.nan] + others.tolist())
        )

    def test_all_nan_feature_becomes_zero(self):
        part = make_partition(length=4)
        shard = part.shards[part.node_ids[0]]
        from dataclasses import replace

        samples = []
        for s in shard.samples:
            v = s.values.copy()
            v[1] = np.nan
            samples.append(replace(s, values=v))
        fixed = impute_missing(shard.with_samples(samples))
        assert all(s.values[1] == 0.0 for s in fixed.samples)


class TestEstimate:
    def test_deterministic(self):
        ds = generate_synthetic(
            SyntheticSpec(n_samples=330, n_classes=2, sequence_length=24,
                          class_separation=3.0, seed=31, name="est")
        )
        train, test = split_train_test(ds, 0.25, 31)
        config = FLConfig(seed=31, n_rounds_max=6, early_stop_patience=6)
        a = estimate_baseline_accuracy(train, test, config)
        b = estimate_baseline_accuracy(train, test, config)
        assert a == b

    def test_separable_estimate_high(self):
        ds = generate_synthetic(
            SyntheticSpec(n_samples=600, n_classes=2, sequence_length=24,
                          class_separation=3.0, seed=32, name="est2")
        )
        train, test = split_train_test(ds, 0.25, 32)
        acc, work = estimate_baseline_accuracy(
            train, test, FLConfig(seed=32, n_rounds_max=10, early_stop_patience=10)
        )
        assert acc >= 0.8
        assert work > 0

    def test_zero_separation_estimate_chance(self):
        ds = generate_synthetic(
            SyntheticSpec(n_samples=600, n_classes=2, sequence_length=24,
                          class_separation=0.0, seed=33, name="est3")
        )
        train, test = split_train_test(ds, 0.25, 33)
        acc, _ = estimate_baseline_accuracy(
            train, test, FLConfig(seed=33, n_rounds_max=6, early_stop_patience=6)
        )
        assert abs(acc - 0.5) <= 0.1
