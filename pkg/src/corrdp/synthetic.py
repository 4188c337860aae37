"""Seeded synthetic datasets with planted record-correlation structure.

Records are grouped into clusters; each record blends its cluster center
with individual noise, so the blend weight directly controls how strongly
same-cluster records correlate. An optional tail of per-record
independent features breaks that correlation when included, which is
exactly the structure the adjustment pass exploits. Labels follow a
planted linear rule with decaying weights over the leading features,
thresholded at the median so both classes are present.
"""

from __future__ import annotations

import numpy as np

from .dataset import Dataset


class SyntheticError(ValueError):
    """Inconsistent generator parameters."""


def make_synthetic(
    n_clusters: int,
    correlation: float,
    n_records: int,
    n_features: int,
    seed: int,
    independent_features: int = 0,
    label_features: int | None = None,
    label_decay: float = 0.5,
    label_noise: float = 0.0,
    independent_weight: float = 0.0,
    trap_features: int = 0,
    trap_corr: float = 0.85,
) -> Dataset:
    """Generate a correlated-cluster dataset with a planted linear label.

    Columns are laid out as [shared | traps | independent]. At
    correlation 1 same-cluster records are identical on the shared
    columns (exact unit blocks in the degree matrix); at 0 they are
    independent. Trap columns are noisy copies of the first shared column
    at pairwise correlation ``trap_corr``: collinear enough to soak up
    importance and degrade a linear fit, but below a 0.9 collinearity
    threshold. Independent columns are drawn fresh per record, so adding
    them weakens record-level correlation. The label rule weights shared
    columns geometrically (``label_decay ** i``, first ``label_features``
    of them) and independent columns at the flat ``independent_weight``,
    thresholded at the median; ``label_noise`` then flips that fraction
    of labels, which gives weakly informative features something to
    overfit.
    """
    if n_records < 2 or n_features < 2:
        raise SyntheticError("need at least 2 records and 2 features")
    if n_clusters < 1 or n_clusters > n_records:
        raise SyntheticError(f"cluster count must be in [1, {n_records}], got {n_clusters}")
    if not 0.0 <= correlation <= 1.0:
        raise SyntheticError(f"correlation strength must be in [0,1], got {correlation}")
    if independent_features < 0 or trap_features < 0:
        raise SyntheticError("feature-group counts must be nonnegative")
    if independent_features + trap_features >= n_features:
        raise SyntheticError("independent and trap columns must leave at least one shared column")
    if not 0.0 < label_decay <= 1.0:
        raise SyntheticError(f"label_decay must be in (0,1], got {label_decay}")
    if not 0.0 <= label_noise < 0.5:
        raise SyntheticError(f"label_noise must be in [0,0.5), got {label_noise}")
    if not 0.0 < trap_corr < 1.0:
        raise SyntheticError(f"trap_corr must be in (0,1), got {trap_corr}")

    rng = np.random.default_rng(seed)
    shared = n_features - independent_features - trap_features
    centers = rng.uniform(-1.0, 1.0, size=(n_clusters, shared))
    assignment = np.arange(n_records) % n_clusters
    individual = rng.uniform(-1.0, 1.0, size=(n_records, shared))
    values = np.empty((n_records, n_features))
    values[:, :shared] = correlation * centers[assignment] + (1.0 - correlation) * individual
    if trap_features:
        base = values[:, 0]
        sigma = float(base.std())
        mix = np.sqrt(1.0 / trap_corr**2 - 1.0) * sigma
        for t in range(trap_features):
            noise = rng.normal(scale=mix, size=n_records)
            col = base + noise
            peak = np.abs(col).max()
            values[:, shared + t] = col / peak if peak > 1.0 else col
    if independent_features:
        values[:, shared + trap_features:] = rng.uniform(
            -1.0, 1.0, size=(n_records, independent_features)
        )

    k = shared if label_features is None else min(label_features, shared)
    weights = np.zeros(n_features)
    weights[:k] = label_decay ** np.arange(k)
    if independent_features and independent_weight:
        weights[shared + trap_features:] = independent_weight
    z = values @ weights
    label = np.where(z > np.median(z), 1.0, -1.0)
    if label_noise > 0.0:
        flips = rng.random(n_records) < label_noise
        label = np.where(flips, -label, label)
    if np.unique(label).size < 2:
        label[int(np.argmax(z))] = 1.0

    names = tuple(f"f{j:02d}" for j in range(n_features))
    return Dataset(
        values=values,
        feature_names=names,
        label=label,
        missing_mask=np.zeros_like(values, dtype=bool),
    )


def cluster_assignment(n_records: int, n_clusters: int) -> np.ndarray:
    """The round-robin record-to-cluster map used by the generator."""
    return np.arange(n_records) % n_clusters
