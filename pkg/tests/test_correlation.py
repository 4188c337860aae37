import numpy as np
import pytest

from corrdp.correlation import (
    CorrelationError,
    CorrelationMatrix,
    QueryFn,
    build_matrix,
    correlated_sensitivity,
    count_records_query,
    group_sensitivity,
    record_pearson,
)
from corrdp.publishing import AggQuery

from conftest import random_dataset, toy_dataset


def naive_pearson(a, b):
    ac = a - np.mean(a)
    bc = b - np.mean(b)
    return float(np.sum(ac * bc) / np.sqrt(np.sum(ac**2) * np.sum(bc**2)))


def mean_query(scope=None):
    def fn(ds, s):
        return float(np.mean(ds.values[list(s), 0]))

    return QueryFn(fn, scope=scope, name="mean-f0")


class TestRecordPearson:
    def test_self_correlation(self):
        ds = toy_dataset([[1, 2, 3, 4], [5, 5, 7, 8]])
        assert record_pearson(ds, 0, 0) == 1.0

    def test_negated_record(self):
        ds = toy_dataset([[1, 2, 3, 4], [-1, -2, -3, -4]])
        assert record_pearson(ds, 0, 1) == -1.0

    def test_hand_evaluated_formula(self):
        ds = toy_dataset([[1, 2, 3, 4], [2, 4, 6, 8]])
        assert record_pearson(ds, 0, 1) == pytest.approx(1.0, abs=1e-12)
        rng = np.random.default_rng(8)
        ds2 = toy_dataset(rng.uniform(size=(3, 6)), label=[1, -1, 1])
        expected = naive_pearson(ds2.values[0], ds2.values[2])
        assert record_pearson(ds2, 0, 2) == pytest.approx(expected, abs=1e-12)

    def test_zero_variance_record_defined_as_zero(self):
        ds = toy_dataset([[3, 3, 3], [1, 2, 4]])
        assert record_pearson(ds, 0, 1) == 0.0

    def test_bad_index(self):
        ds = toy_dataset([[1, 2], [3, 4]])
        with pytest.raises(CorrelationError):
            record_pearson(ds, 0, 5)


class TestBuildMatrix:
    def test_maximal_threshold_keeps_only_diagonal(self):
        rng = np.random.default_rng(0)
        ds = toy_dataset(rng.uniform(size=(6, 5)))
        corr = build_matrix(ds, 1.0)
        assert np.array_equal(corr.theta, np.eye(6))

    def test_traffic_duplicates_fully_correlated(self, traffic_dataset):
        corr = build_matrix(traffic_dataset, 0.9)
        assert corr.theta[0, 1] == 1.0
        assert corr.theta[1, 0] == 1.0

    def test_matches_per_pair_rule(self):
        rng = np.random.default_rng(17)
        ds = toy_dataset(rng.uniform(size=(6, 7)))
        theta0 = 0.3
        corr = build_matrix(ds, theta0)
        for i in range(6):
            for j in range(6):
                if i == j:
                    expected = 1.0
                else:
                    r = record_pearson(ds, i, j)
                    expected = r if abs(r) >= theta0 else 0.0
                assert corr.theta[i, j] == pytest.approx(expected, abs=1e-12)

    def test_symmetric_unit_diagonal_random(self):
        for seed in range(10):
            ds = random_dataset(np.random.default_rng(seed), 8, 4)
            corr = build_matrix(ds, 0.5)
            assert np.array_equal(corr.theta, corr.theta.T)
            assert np.all(np.diag(corr.theta) == 1.0)

    def test_zero_variance_record_flagged(self):
        ds = toy_dataset([[2, 2, 2], [1, 2, 3], [3, 1, 2]], label=[1, -1, 1])
        corr = build_matrix(ds, 0.0)
        assert corr.flagged == (0,)
        assert np.all(corr.theta[0, 1:] == 0)

    def test_threshold_validation(self):
        ds = toy_dataset([[1, 2], [3, 4]])
        with pytest.raises(CorrelationError):
            build_matrix(ds, 1.5)

    def test_csv_export(self, tmp_path, traffic_dataset):
        corr = build_matrix(traffic_dataset, 0.9)
        path = tmp_path / "theta.csv"
        corr.to_csv(path)
        rows = [line.split(",") for line in path.read_text().strip().splitlines()]
        loaded = np.array([[float(v) for v in row] for row in rows])
        assert np.array_equal(loaded, corr.theta)


class TestCorrelatedSensitivity:
    def test_identity_matrix_count_is_one(self):
        rng = np.random.default_rng(5)
        ds = toy_dataset(rng.uniform(size=(7, 3)))
        corr = CorrelationMatrix(theta=np.eye(7), threshold=1.0)
        assert correlated_sensitivity(corr, count_records_query(), ds) == 1.0

    def test_traffic_count_is_two(self, traffic_dataset):
        corr = build_matrix(traffic_dataset, 0.9)
        q = AggQuery(kind="count", feature="t1", op="=", value=2.0)
        assert correlated_sensitivity(corr, q, traffic_dataset) == 2.0
        # naive per-record sensitivity of a count is 1
        deltas = [q.delta_without(traffic_dataset, j) for j in range(4)]
        assert max(deltas) == 1.0

    def test_mean_query_brute_force(self):
        rng = np.random.default_rng(23)
        ds = toy_dataset(rng.uniform(size=(5, 4)))
        theta = np.array(
            [
                [1.0, 0.8, 0.0, 0.0, -0.9],
                [0.8, 1.0, 0.75, 0.0, 0.0],
                [0.0, 0.75, 1.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 1.0, 0.0],
                [-0.9, 0.0, 0.0, 0.0, 1.0],
            ]
        )
        corr = CorrelationMatrix(theta=theta, threshold=0.7)
        q = mean_query()
        got = correlated_sensitivity(corr, q, ds)
        # brute force over all (i, j): re-evaluate the query on each neighbor
        best = 0.0
        for i in range(5):
            total = 0.0
            for j in range(5):
                full = q.value(ds)
                reduced = q.value_without(ds, j)
                total += abs(theta[i, j]) * abs(full - reduced)
            best = max(best, total)
        assert got == pytest.approx(best, abs=1e-12)

    def test_scope_restricts_outer_max_only(self):
        ds = toy_dataset([[1, 2], [1, 2], [9, -3], [4, 4]])
        corr = build_matrix(ds, 0.9)
        scoped = count_records_query(scope=(2,))
        got = correlated_sensitivity(corr, scoped, ds)
        # record 2's row only has its diagonal entry; delta_j is 1 only for j=2
        assert got == 1.0

    def test_empty_scope_rejected(self, traffic_dataset):
        corr = build_matrix(traffic_dataset, 0.9)
        q = QueryFn(lambda ds, s: 0.0, scope=())
        with pytest.raises(CorrelationError, match="scope"):
            correlated_sensitivity(corr, q, traffic_dataset)

    def test_mismatched_matrix_rejected(self, traffic_dataset):
        corr = CorrelationMatrix(theta=np.eye(3), threshold=1.0)
        with pytest.raises(CorrelationError, match="record counts"):
            correlated_sensitivity(corr, count_records_query(), traffic_dataset)

    def test_raising_threshold_never_increases_count_sensitivity(self):
        rng = np.random.default_rng(77)
        for seed in range(20):
            ds = random_dataset(np.random.default_rng(seed), 10, 4)
            q = count_records_query()
            values = [
                correlated_sensitivity(build_matrix(ds, t), q, ds)
                for t in (0.0, 0.3, 0.6, 0.9, 1.0)
            ]
            assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))

    def test_uncorrelated_dataset_recovers_classical_count(self):
        rng = np.random.default_rng(11)
        ds = toy_dataset(rng.uniform(size=(9, 6)))
        corr = build_matrix(ds, 0.99)
        assert np.array_equal(corr.theta, np.eye(9))
        assert correlated_sensitivity(corr, count_records_query(), ds) == 1.0


class TestGroupSensitivity:
    def test_identity_count(self):
        ds = toy_dataset(np.random.default_rng(0).uniform(size=(5, 3)))
        corr = CorrelationMatrix(theta=np.eye(5), threshold=1.0)
        assert group_sensitivity(corr, count_records_query(), ds) == 1.0

    def test_traffic_count(self, traffic_dataset):
        corr = build_matrix(traffic_dataset, 0.9)
        q = AggQuery(kind="count", feature="t1", op="=", value=2.0)
        assert group_sensitivity(corr, q, traffic_dataset) == 2.0

    def test_dominates_correlated_sensitivity_randomized(self):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            ds = random_dataset(rng, int(rng.integers(3, 12)), int(rng.integers(2, 6)))
            corr = build_matrix(ds, float(rng.uniform(0, 1)))
            for q in (count_records_query(), mean_query()):
                cs = correlated_sensitivity(corr, q, ds)
                gs = group_sensitivity(corr, q, ds)
                assert cs <= gs + 1e-12


class TestClosedFormDeltas:
    def test_count_and_mean_match_reevaluation(self):
        rng = np.random.default_rng(4)
        ds = toy_dataset(rng.uniform(size=(8, 3)))
        queries = [
            AggQuery(kind="count", feature="f0", op=">=", value=0.3),
            AggQuery(kind="count", feature="f2", op="<", value=0.5, scope=(0, 2, 5)),
            AggQuery(kind="mean", feature="f1"),
            AggQuery(kind="mean", feature="f0", scope=(1, 3, 4, 6)),
        ]
        for q in queries:
            fast = q.deletion_deltas(ds)
            for j in range(ds.n_records):
                naive = abs(q.value_on(ds) - q.value_without(ds, j))
                assert q.delta_without(ds, j) == pytest.approx(naive, abs=1e-12)
                assert fast[j] == pytest.approx(naive, abs=1e-12)
