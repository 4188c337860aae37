"""Record-level correlation and correlation-aware query sensitivity.

The correlated degree matrix holds the pairwise Pearson correlation of
record feature-vectors, zeroed below a threshold so only strongly
correlated pairs remain. Correlated sensitivity weights each record's
single-deletion effect on a query by those degrees, capturing how far a
change ripples through correlated records; group sensitivity is the
looser baseline that just multiplies by the largest correlated-group
size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset


class CorrelationError(ValueError):
    """Invalid correlation input or mismatched matrix/dataset pair."""


@dataclass(frozen=True)
class CorrelationMatrix:
    """Thresholded record-correlation matrix with unit diagonal.

    Off-diagonal entries are either 0 or have absolute value at least the
    threshold. ``flagged`` lists zero-variance records, which correlate
    with nothing (no defensible estimate exists for them).
    """

    theta: np.ndarray
    threshold: float
    flagged: tuple[int, ...] = ()

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
            raise CorrelationError("theta must be square")
        if not np.array_equal(theta, theta.T):
            raise CorrelationError("theta must be symmetric")
        if not np.all(np.diag(theta) == 1.0):
            raise CorrelationError("diagonal entries must equal 1")
        off = theta[~np.eye(theta.shape[0], dtype=bool)]
        bad = (off != 0) & (np.abs(off) < self.threshold - 1e-12)
        if bad.any():
            raise CorrelationError("off-diagonal entries must be 0 or exceed the threshold")
        if np.abs(theta).max() > 1.0 + 1e-12:
            raise CorrelationError("correlation degrees must lie in [-1, 1]")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "flagged", tuple(self.flagged))

    @property
    def n_records(self) -> int:
        return self.theta.shape[0]

    def to_csv(self, path) -> None:
        """Dense row-major dump at 17 significant digits, for audit."""
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.theta:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


class QueryFn:
    """A deterministic scalar query over a dataset's records.

    ``scope`` declares which record indices the query touches (None means
    all records). ``value_without`` evaluates the query on the neighbor
    with record j deleted; the default re-evaluates the underlying
    function on the reduced dataset, while aggregation queries override
    ``delta_without`` with an exact closed form.
    """

    def __init__(self, fn, scope=None, name: str = "query"):
        self._fn = fn
        self.scope = None if scope is None else tuple(sorted(set(scope)))
        self.name = name

    def effective_scope(self, ds: Dataset) -> tuple[int, ...]:
        if self.scope is None:
            return tuple(range(ds.n_records))
        if self.scope and (min(self.scope) < 0 or max(self.scope) >= ds.n_records):
            raise CorrelationError(f"scope of {self.name!r} references records outside the dataset")
        return self.scope

    def value(self, ds: Dataset) -> float:
        return float(self._fn(ds, self.effective_scope(ds)))

    def value_without(self, ds: Dataset, j: int) -> float:
        reduced = ds.drop_record(j)
        scope = [i if i < j else i - 1 for i in self.effective_scope(ds) if i != j]
        return float(self._fn(reduced, tuple(scope)))

    def delta_without(self, ds: Dataset, j: int) -> float:
        """|Q(D) - Q(D without record j)|, the single-deletion effect."""
        return abs(self.value(ds) - self.value_without(ds, j))

    def deletion_deltas(self, ds: Dataset) -> np.ndarray:
        """Single-deletion effects for every record; override to vectorize."""
        return np.array([self.delta_without(ds, j) for j in range(ds.n_records)])


def count_records_query(scope=None) -> QueryFn:
    """The unit count query: how many records are in scope.

    Its single-deletion effect is 1 for every scoped record, so its
    correlated sensitivity is the largest absolute row sum of the degree
    matrix. This is the canonical query used to calibrate model releases.
    """
    q = QueryFn(lambda ds, s: float(len(s)), scope=scope, name="count_records")

    def _delta(ds, j, _q=q):
        return 1.0 if j in _q.effective_scope(ds) else 0.0

    def _deltas(ds, _q=q):
        out = np.zeros(ds.n_records)
        out[list(_q.effective_scope(ds))] = 1.0
        return out

    q.delta_without = _delta  # type: ignore[assignment]
    q.deletion_deltas = _deltas  # type: ignore[assignment]
    return q


def record_pearson(ds: Dataset, i: int, j: int) -> float:
    """Pearson correlation of the feature vectors of records i and j.

    A record whose feature vector has zero variance admits no correlation
    estimate; the defined value 0 is returned for any pair involving it.
    """
    l = ds.n_records
    if not (0 <= i < l and 0 <= j < l):
        raise CorrelationError(f"record index out of range: ({i}, {j})")
    a = ds.values[i]
    b = ds.values[j]
    ac = a - a.mean()
    bc = b - b.mean()
    da = float(np.dot(ac, ac))
    db = float(np.dot(bc, bc))
    if da == 0.0 or db == 0.0:
        return 0.0
    # sqrt(da * db) keeps identical (or exactly negated) rows at exactly +/-1
    r = float(np.dot(ac, bc) / np.sqrt(da * db))
    return min(1.0, max(-1.0, r))


def zero_variance_records(ds: Dataset) -> tuple[int, ...]:
    spread = ds.values.max(axis=1) - ds.values.min(axis=1)
    return tuple(int(i) for i in np.nonzero(spread == 0)[0])


def build_matrix(ds: Dataset, threshold: float) -> CorrelationMatrix:
    """Assemble the thresholded record-correlation matrix.

    Entries with |pearson| below the threshold are zeroed; the diagonal is
    forced to 1. Zero-variance records get 0 against all others and are
    flagged.
    """
    if not 0.0 <= threshold <= 1.0:
        raise CorrelationError(f"threshold must be in [0,1], got {threshold}")
    l = ds.n_records
    if l < 2:
        raise CorrelationError("need at least 2 records")
    flagged = zero_variance_records(ds)
    centered = ds.values - ds.values.mean(axis=1, keepdims=True)
    cov = centered @ centered.T
    d = np.diag(cov).copy()
    d[d == 0] = 1.0
    theta = np.clip(cov / np.sqrt(np.outer(d, d)), -1.0, 1.0)
    # BLAS accumulation order varies by cell, which can leave bit-identical
    # rows a few ulp short of 1; duplicates are exactly fully correlated
    groups: dict[bytes, list[int]] = {}
    for i in range(l):
        groups.setdefault(ds.values[i].tobytes(), []).append(i)
    for members in groups.values():
        if len(members) > 1:
            theta[np.ix_(members, members)] = 1.0
    theta[np.abs(theta) < threshold] = 0.0
    if flagged:
        theta[list(flagged), :] = 0.0
        theta[:, list(flagged)] = 0.0
    theta = np.triu(theta, 1)
    theta = theta + theta.T
    np.fill_diagonal(theta, 1.0)
    return CorrelationMatrix(theta=theta, threshold=threshold, flagged=flagged)


def _deletion_deltas(query, ds: Dataset) -> np.ndarray:
    if hasattr(query, "deletion_deltas"):
        return np.asarray(query.deletion_deltas(ds), dtype=float)
    return np.array([query.delta_without(ds, j) for j in range(ds.n_records)])


def _check_inputs(corr: CorrelationMatrix, query: QueryFn, ds: Dataset) -> tuple[int, ...]:
    if corr.n_records != ds.n_records:
        raise CorrelationError("correlation matrix and dataset record counts differ")
    scope = query.effective_scope(ds)
    if not scope:
        raise CorrelationError("query scope is empty")
    return scope


def correlated_sensitivity(corr: CorrelationMatrix, query: QueryFn, ds: Dataset) -> float:
    """Largest correlation-weighted sum of single-deletion query effects.

    For each scoped record i, sums |theta_ij| * |Q(D) - Q(D without j)|
    over all records j (correlation can reach outside the scope), and
    returns the maximum over i.
    """
    scope = _check_inputs(corr, query, ds)
    deltas = _deletion_deltas(query, ds)
    rows = np.abs(corr.theta[list(scope)]) @ deltas
    return float(rows.max())


def group_sensitivity(corr: CorrelationMatrix, query: QueryFn, ds: Dataset) -> float:
    """Largest correlated-group size times the per-record sensitivity.

    The baseline scheme: k is the maximal number of nonzero degrees in any
    record's row and the per-record sensitivity is the largest
    single-deletion effect of the query.
    """
    _check_inputs(corr, query, ds)
    deltas = _deletion_deltas(query, ds)
    k = int((corr.theta != 0).sum(axis=1).max())
    return float(k * deltas.max())
