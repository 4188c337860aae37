"""Random-forest feature importance and its differentially private release.

Trees are CART classifiers on bootstrap samples with the Gini split
criterion, grown depth-first with deterministic tie-breaking (lowest
feature index, then smallest left block) so a run is bitwise reproducible
under a seed. Importance is mean decrease in impurity, averaged over the
forest and normalized to sum 1.

The sensitivity of feature importance for one record is the range
(max - min) of the importance vector retrained without that record; the
dataset-level sensitivity is the maximum over records, and is always
bounded by 1 because importances live in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dataset import Dataset
from .mechanisms import MechanismError, NoiseSource, perturb_vector


class ImportanceError(ValueError):
    """Invalid forest configuration or degenerate training input."""


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 8
    min_samples_leaf: int = 2
    features_per_split: int | str = "sqrt"
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ImportanceError("n_trees must be at least 1")
        if self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ImportanceError("max_depth and min_samples_leaf must be positive")
        if isinstance(self.features_per_split, str) and self.features_per_split != "sqrt":
            raise ImportanceError("features_per_split must be an integer or 'sqrt'")

    def resolve_features_per_split(self, n_features: int) -> int:
        if self.features_per_split == "sqrt":
            return max(1, int(np.sqrt(n_features)))
        return min(int(self.features_per_split), n_features)


@dataclass(frozen=True)
class ImportanceVector:
    """Per-feature weights; when normalized they are >= 0 and sum to 1.

    ``flagged`` marks a uniform fallback (all raw importances were zero or
    every perturbed weight clamped to zero).
    """

    feature_names: tuple[str, ...]
    values: np.ndarray
    normalized: bool
    flagged: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (len(self.feature_names),):
            raise ImportanceError("importance length must match feature names")
        if self.normalized:
            if values.min() < 0:
                raise ImportanceError("normalized importances must be nonnegative")
            if abs(values.sum() - 1.0) > 1e-9:
                raise ImportanceError("normalized importances must sum to 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def ranking(self) -> tuple[str, ...]:
        """Feature names sorted by descending weight, index-stable on ties."""
        order = sorted(range(len(self.feature_names)), key=lambda i: (-self.values[i], i))
        return tuple(self.feature_names[i] for i in order)

    def to_json(self) -> str:
        import json

        return json.dumps(
            {name: float(f"{v:.17g}") for name, v in zip(self.feature_names, self.values)}
        )


@dataclass(frozen=True)
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None
    value: float = 1.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass(frozen=True)
class Forest:
    trees: tuple[_Node, ...]
    bootstrap_indices: tuple[np.ndarray, ...]
    feature_names: tuple[str, ...]
    tree_importances: np.ndarray
    degenerate: bool
    config: ForestConfig


def _gini(count1: float, n: float) -> float:
    p1 = count1 / n
    p0 = (n - count1) / n
    return 1.0 - p1 * p1 - p0 * p0


def _leaf(count1: int, n: int) -> _Node:
    return _Node(value=1.0 if 2 * count1 >= n else -1.0)


def _best_split(X, y01, idx, features, min_leaf):
    """Scan candidate features for the lowest weighted child impurity.

    Returns (cost, feature, threshold, left_mask_size) or None. Ties break
    toward the lower feature index and then the smaller left block; the
    threshold is the largest left-side value and routing uses <=.
    """
    n = idx.size
    best = None
    yv = y01[idx]
    for f in features:
        v = X[idx, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        c1 = np.cumsum(yv[order])
        total1 = c1[-1]
        sizes = np.arange(1, n)
        valid = (vs[:-1] != vs[1:]) & (sizes >= min_leaf) & (n - sizes >= min_leaf)
        if not valid.any():
            continue
        nl = sizes[valid].astype(float)
        nr = n - nl
        c1l = c1[:-1][valid].astype(float)
        c1r = total1 - c1l
        gl = 1.0 - (c1l / nl) ** 2 - ((nl - c1l) / nl) ** 2
        gr = 1.0 - (c1r / nr) ** 2 - ((nr - c1r) / nr) ** 2
        cost = (nl * gl + nr * gr) / n
        k = int(np.argmin(cost))
        if best is None or cost[k] < best[0]:
            left_size = int(nl[k])
            best = (float(cost[k]), int(f), float(vs[left_size - 1]), left_size)
    return best


def _grow(X, y01, idx, depth, cfg, rng, n_total, importances):
    n = idx.size
    count1 = int(y01[idx].sum())
    if depth >= cfg.max_depth or n < 2 * cfg.min_samples_leaf or count1 in (0, n):
        return _leaf(count1, n)
    n_features = X.shape[1]
    fps = cfg.resolve_features_per_split(n_features)
    if fps >= n_features:
        features = np.arange(n_features)
    else:
        features = np.sort(rng.choice(n_features, size=fps, replace=False))
    split = _best_split(X, y01, idx, features, cfg.min_samples_leaf)
    if split is None:
        return _leaf(count1, n)
    cost, f, threshold, _ = split
    decrease = _gini(count1, n) - cost
    if decrease <= 0:
        return _leaf(count1, n)
    importances[f] += (n / n_total) * decrease
    mask = X[idx, f] <= threshold
    left = _grow(X, y01, idx[mask], depth + 1, cfg, rng, n_total, importances)
    right = _grow(X, y01, idx[~mask], depth + 1, cfg, rng, n_total, importances)
    return _Node(feature=f, threshold=threshold, left=left, right=right, value=_leaf(count1, n).value)


def train_forest(ds: Dataset, cfg: ForestConfig, bootstrap_indices=None) -> Forest:
    """Fit bootstrap CART trees; deterministic under the config seed.

    A one-class dataset yields a degenerate stump forest with zero
    importances rather than an error, so callers can detect and flag it.
    """
    l = ds.n_records
    if l < 2 * cfg.min_samples_leaf:
        raise ImportanceError(
            f"need at least {2 * cfg.min_samples_leaf} records to split, got {l}"
        )
    X = ds.values
    y01 = (ds.label > 0).astype(float)
    classes = np.unique(ds.label)
    degenerate = classes.size < 2

    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees)
    trees, boots, per_tree = [], [], []
    for t in range(cfg.n_trees):
        rng = np.random.default_rng(seeds[t])
        if bootstrap_indices is not None:
            boot = np.array(bootstrap_indices[t], dtype=int)
        else:
            boot = rng.integers(0, l, size=l)
        imp = np.zeros(ds.n_features)
        if degenerate:
            node = _Node(value=float(classes[0]))
        else:
            node = _grow(X, y01, boot, 0, cfg, rng, boot.size, imp)
        trees.append(node)
        boots.append(boot)
        per_tree.append(imp)
    return Forest(
        trees=tuple(trees),
        bootstrap_indices=tuple(boots),
        feature_names=ds.feature_names,
        tree_importances=np.array(per_tree),
        degenerate=degenerate,
        config=cfg,
    )


def _predict_one(node: _Node, x) -> float:
    while not node.is_leaf:
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.value


def predict(forest: Forest, X) -> np.ndarray:
    """Majority vote over trees; voting ties resolve to +1."""
    X = np.asarray(X, dtype=float)
    votes = np.zeros(X.shape[0])
    for tree in forest.trees:
        votes += np.array([_predict_one(tree, x) for x in X])
    return np.where(votes >= 0, 1.0, -1.0)


def gini_importance(forest: Forest) -> ImportanceVector:
    """Raw impurity decreases averaged over trees, normalized to sum 1."""
    raw = forest.tree_importances.mean(axis=0)
    total = raw.sum()
    if total <= 0:
        n = len(forest.feature_names)
        return ImportanceVector(
            feature_names=forest.feature_names,
            values=np.full(n, 1.0 / n),
            normalized=True,
            flagged=True,
        )
    return ImportanceVector(
        feature_names=forest.feature_names, values=raw / total, normalized=True
    )


def record_sensitivity_fim(ds: Dataset, i: int, cfg: ForestConfig) -> float:
    """Range of the importance vector retrained without record i."""
    if ds.n_records < 3:
        raise ImportanceError("record sensitivity needs at least 3 records")
    imp = gini_importance(train_forest(ds.drop_record(i), cfg))
    return float(imp.values.max() - imp.values.min())


def sensitivity_fim(ds: Dataset, cfg: ForestConfig, mode: str = "bound") -> float:
    """Importance sensitivity: exact max over record deletions, or the 1 bound."""
    if mode == "bound":
        return 1.0
    if mode != "exact":
        raise ImportanceError(f"mode must be 'exact' or 'bound', got {mode!r}")
    return max(record_sensitivity_fim(ds, i, cfg) for i in range(ds.n_records))


def importance_shift_diagnostic(ds: Dataset, cfg: ForestConfig) -> float:
    """Max L1 shift of the importance vector under one record deletion.

    Diagnostic only; the privacy calibration uses ``sensitivity_fim``.
    """
    base = gini_importance(train_forest(ds, cfg)).values
    shift = 0.0
    for i in range(ds.n_records):
        other = gini_importance(train_forest(ds.drop_record(i), cfg)).values
        shift = max(shift, float(np.abs(base - other).sum()))
    return shift


def dp_importance(
    imp: ImportanceVector, delta: float, epsilon_1: float, src: NoiseSource
) -> ImportanceVector:
    """Release a noisy importance vector that still sums to 1.

    Each coordinate gets Laplace(delta / epsilon_1) noise; negatives are
    clamped to 0 before renormalizing. Zero sensitivity is the identity.
    If every coordinate clamps to zero the uniform vector is returned,
    flagged.
    """
    if not imp.normalized:
        raise ImportanceError("dp_importance requires a normalized importance vector")
    if epsilon_1 <= 0:
        raise MechanismError(f"epsilon must be positive, got {epsilon_1}")
    if delta < 0:
        raise MechanismError(f"sensitivity must be nonnegative, got {delta}")
    if delta == 0:
        return imp
    noisy = perturb_vector(imp.values, delta, epsilon_1, src)
    noisy = np.maximum(noisy, 0.0)
    total = noisy.sum()
    if total <= 0:
        n = len(imp.feature_names)
        return ImportanceVector(
            feature_names=imp.feature_names,
            values=np.full(n, 1.0 / n),
            normalized=True,
            flagged=True,
        )
    return replace(imp, values=noisy / total, normalized=True, flagged=False)
