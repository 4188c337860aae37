"""Feature selection that trades a little accuracy for less record correlation.

The pipeline filters collinear and unimportant features, releases a noisy
importance ranking, finds the feature set with the best non-private
validation accuracy (the best set), and then adjusts it: a forward pass
grows the best set with leftover features and a backward pass shrinks it,
both scored by the accuracy of an output-perturbed model whose noise is
calibrated to the candidate set's correlated sensitivity. Whichever pass
wins supplies the final adjusted set. Within a pass, candidates scoring
within a tolerance of the best are considered equally good and the
smallest one is kept.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .correlation import CorrelationMatrix, correlated_sensitivity, count_records_query
from .dataset import Dataset
from .importance import (
    ForestConfig,
    ImportanceVector,
    dp_importance,
    gini_importance,
    sensitivity_fim,
    train_forest,
)
from .learners import accuracy, perturb_model
from .mechanisms import NoiseSource, PrivacyBudget, spend


class SelectionError(ValueError):
    """Invalid threshold, misaligned importance vector, or empty survivor set."""


@dataclass(frozen=True)
class SelectionConfig:
    """Thresholds for the selection pipeline and its budget split.

    ``score_tolerance`` is the training-result difference under which two
    candidate sets count as equally good. ``sensitivity_mode`` picks how
    the importance sensitivity is computed: 'exact' retrains one forest
    per record, 'bound' uses the constant 1, 'auto' uses the bound once a
    dataset exceeds 500 records.
    """

    collinearity_threshold: float = 0.9
    importance_coverage: float = 0.9
    missing_threshold: float = 0.2
    score_tolerance: float = 0.01
    record_threshold: float = 0.9
    epsilon_1: float = 0.5
    epsilon_2: float = 0.5
    noise_repeats: int = 5
    sensitivity_mode: str = "auto"
    strict_accounting: bool = False

    def __post_init__(self):
        for name in ("collinearity_threshold", "importance_coverage", "missing_threshold",
                     "score_tolerance", "record_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SelectionError(f"{name} must be in [0,1], got {v}")
        if self.epsilon_1 <= 0 or self.epsilon_2 <= 0:
            raise SelectionError("epsilon_1 and epsilon_2 must be positive")
        if self.noise_repeats < 1:
            raise SelectionError("noise_repeats must be at least 1")
        if self.sensitivity_mode not in ("exact", "bound", "auto"):
            raise SelectionError(f"unknown sensitivity_mode {self.sensitivity_mode!r}")

    def resolve_sensitivity_mode(self, n_records: int) -> str:
        if self.sensitivity_mode == "auto":
            return "bound" if n_records > 500 else "exact"
        return self.sensitivity_mode


@dataclass(frozen=True)
class CandidateEval:
    """One scored candidate feature set from the selection search."""

    features: tuple[str, ...]
    phase: str
    score: float
    sensitivity: float | None = None
    corr: CorrelationMatrix | None = None


@dataclass(frozen=True)
class FeatureSets:
    """Best and adjusted feature sets plus the full search audit trail."""

    best: tuple[str, ...]
    adjusted: tuple[str, ...]
    removed_collinear: tuple[tuple[str, str], ...]
    removed_unimportant: tuple[tuple[str, str], ...]
    candidates: tuple[CandidateEval, ...]
    forward_choice: tuple[str, ...] | None = None
    backward_choice: tuple[str, ...] | None = None
    forward_score: float | None = None
    backward_score: float | None = None

    @property
    def scores(self) -> tuple[tuple[tuple[str, ...], float], ...]:
        return tuple((c.features, c.score) for c in self.candidates)

    @property
    def sensitivities(self) -> tuple[tuple[tuple[str, ...], float], ...]:
        return tuple(
            (c.features, c.sensitivity) for c in self.candidates if c.sensitivity is not None
        )

    def trace_dict(self) -> dict:
        """JSON-ready summary of the search (matrices omitted)."""
        return {
            "best": list(self.best),
            "adjusted": list(self.adjusted),
            "removed_collinear": [list(p) for p in self.removed_collinear],
            "removed_unimportant": [list(p) for p in self.removed_unimportant],
            "forward_choice": None if self.forward_choice is None else list(self.forward_choice),
            "backward_choice": None if self.backward_choice is None else list(self.backward_choice),
            "forward_score": self.forward_score,
            "backward_score": self.backward_score,
            "candidates": [
                {
                    "features": list(c.features),
                    "phase": c.phase,
                    "score": c.score,
                    "sensitivity": c.sensitivity,
                }
                for c in self.candidates
            ],
        }


def feature_pearson(ds: Dataset, m: str, n: str) -> float:
    """Pearson correlation between two feature columns over all records."""
    a = ds.column(m)
    b = ds.column(n)
    ac = a - a.mean()
    bc = b - b.mean()
    sa = float(np.sqrt(np.mean(ac * ac)))
    sb = float(np.sqrt(np.mean(bc * bc)))
    if sa == 0.0 or sb == 0.0:
        flat = m if sa == 0.0 else n
        raise SelectionError(f"feature {flat!r} has zero variance")
    r = float(np.mean(ac * bc) / (sa * sb))
    return min(1.0, max(-1.0, r))


def _check_alignment(ds: Dataset, imp: ImportanceVector) -> dict[str, float]:
    if set(imp.feature_names) != set(ds.feature_names):
        raise SelectionError("importance vector does not cover the dataset's features")
    return dict(zip(imp.feature_names, imp.values))


def remove_collinear(ds: Dataset, t_cf: float, imp: ImportanceVector) -> Dataset:
    """Greedily drop one member of every feature pair with |rho| > t_cf.

    Pairs are scanned in index order and the lower-importance member is
    removed (ties go to the higher index), so no surviving pair exceeds
    the threshold and the more predictive feature is kept.
    """
    if not 0.0 <= t_cf <= 1.0:
        raise SelectionError(f"collinearity threshold must be in [0,1], got {t_cf}")
    weight = _check_alignment(ds, imp)
    names = list(ds.feature_names)
    dropped: dict[str, str] = {}
    for m in range(len(names)):
        if names[m] in dropped:
            continue
        for n in range(m + 1, len(names)):
            if names[n] in dropped:
                continue
            rho = feature_pearson(ds, names[m], names[n])
            if abs(rho) <= t_cf:
                continue
            if weight[names[m]] < weight[names[n]]:
                dropped[names[m]] = names[n]
                break
            dropped[names[n]] = names[m]
    keep = [x for x in names if x not in dropped]
    if not keep:
        raise SelectionError("collinearity filter removed every feature")
    audit = ds.audit + tuple(
        (x, f"collinear with {partner!r} above {t_cf}") for x, partner in dropped.items()
    )
    return replace(ds.restrict(keep), audit=audit)


def remove_unimportant(ds: Dataset, imp: ImportanceVector, t_fi: float) -> Dataset:
    """Keep the smallest importance-descending prefix covering t_fi.

    Zero-importance features are removed regardless of the coverage
    target.
    """
    if not imp.normalized:
        raise SelectionError("importance vector must be normalized")
    if not 0.0 <= t_fi <= 1.0:
        raise SelectionError(f"importance coverage must be in [0,1], got {t_fi}")
    weight = _check_alignment(ds, imp)
    order = sorted(ds.feature_names, key=lambda x: (-weight[x], ds.feature_index(x)))
    prefix: list[str] = []
    cum = 0.0
    for name in order:
        prefix.append(name)
        cum += weight[name]
        if cum >= t_fi - 1e-12:
            break
    keep = [x for x in ds.feature_names if x in prefix and weight[x] > 0]
    if not keep:
        raise SelectionError("importance filter removed every feature")
    removed = [x for x in ds.feature_names if x not in keep]
    audit = ds.audit + tuple(
        (x, "zero importance" if weight[x] == 0 else f"importance below coverage {t_fi}")
        for x in removed
    )
    return replace(ds.restrict(keep), audit=audit)


def _removals(before: Dataset, after: Dataset) -> tuple[tuple[str, str], ...]:
    new = after.audit[len(before.audit):]
    return tuple((name, reason) for name, reason in new)


def best_feature_set(ds: Dataset, dp_imp: ImportanceVector, trainer) -> FeatureSets:
    """Search the nested prefixes of the noisy importance ranking.

    Deletes the least important remaining feature one step at a time,
    scoring each prefix with the non-private trainer; the best set is the
    highest-scoring prefix, with exact ties resolved toward the smaller
    set (deletion continues while it does not cost accuracy). The initial
    adjusted set is the complement, still in importance order.
    """
    _check_alignment(ds, dp_imp)
    ranked = [x for x in dp_imp.ranking() if x in set(ds.feature_names)]
    evals = []
    for k in range(len(ranked), 0, -1):
        features = tuple(ranked[:k])
        evals.append(CandidateEval(features=features, phase="best-search",
                                   score=float(trainer(features))))
    chosen = min(evals, key=lambda e: (-e.score, len(e.features)))
    k = len(chosen.features)
    return FeatureSets(
        best=chosen.features,
        adjusted=tuple(ranked[k:]),
        removed_collinear=(),
        removed_unimportant=(),
        candidates=tuple(evals),
    )


def _private_score(features, ds, cfg, corr_builder, trainer, src, budget, phase):
    sub = ds.restrict(features)
    corr = corr_builder(sub)
    dcs = correlated_sensitivity(corr, count_records_query(), sub)
    model, val = trainer(features)
    accs = []
    for _ in range(cfg.noise_repeats):
        if cfg.strict_accounting and budget is not None:
            budget = spend(budget, f"{phase}:{len(features)}", cfg.epsilon_2)
        noisy = perturb_model(model, dcs, cfg.epsilon_2, src.child())
        accs.append(accuracy(noisy, val))
    score = float(np.mean(accs))
    return CandidateEval(features=tuple(features), phase=phase, score=score,
                         sensitivity=float(dcs), corr=corr), budget


def _simplest(evals: list[CandidateEval], tolerance: float) -> CandidateEval:
    top = max(e.score for e in evals)
    eligible = [(i, e) for i, e in enumerate(evals) if e.score >= top - tolerance]
    return min(eligible, key=lambda pair: (len(pair[1].features), pair[0]))[1]


def adjust_features(
    sets: FeatureSets,
    ds: Dataset,
    cfg: SelectionConfig,
    corr_builder,
    trainer,
    src: NoiseSource,
    budget: PrivacyBudget | None = None,
) -> FeatureSets:
    """Grow and shrink the best set to cut correlated sensitivity.

    Forward pass: each candidate extends the best set with a prefix of the
    adjusted set; the record-correlation matrix is rebuilt on the
    candidate's features, the unit-count correlated sensitivity computed,
    and the candidate scored by the mean accuracy of the output-perturbed
    model over ``noise_repeats`` draws. Backward pass: the same scoring
    over one-by-one deletions from the best set. Each pass picks the
    simplest candidate within the score tolerance of its maximum; the
    final adjusted set is whichever pass scored higher (forward on ties).

    Candidates with fewer than 3 features are skipped: record-level
    Pearson over one coordinate is undefined and over two is always +/-1,
    so no meaningful correlated sensitivity exists for them.

    Under strict accounting, each perturbed evaluation charges epsilon_2
    to the supplied budget and the search aborts when it runs out.
    """
    forward: list[CandidateEval] = []
    for p in range(0, len(sets.adjusted) + 1):
        candidate = sets.best + sets.adjusted[:p]
        if len(candidate) < 3:
            continue
        ev, budget = _private_score(
            candidate, ds, cfg, corr_builder, trainer, src, budget, "forward"
        )
        forward.append(ev)
    if not forward:
        return replace(sets, forward_choice=sets.best, forward_score=None)
    pick_fwd = _simplest(forward, cfg.score_tolerance)

    backward: list[CandidateEval] = []
    for d in range(1, len(sets.best) - 2):
        ev, budget = _private_score(
            sets.best[: len(sets.best) - d], ds, cfg, corr_builder, trainer, src, budget, "backward"
        )
        backward.append(ev)
    pick_bwd = _simplest(backward, cfg.score_tolerance) if backward else None

    if pick_bwd is None or pick_fwd.score >= pick_bwd.score:
        final = pick_fwd
    else:
        final = pick_bwd
    return replace(
        sets,
        adjusted=final.features,
        candidates=sets.candidates + tuple(forward) + tuple(backward),
        forward_choice=pick_fwd.features,
        backward_choice=None if pick_bwd is None else pick_bwd.features,
        forward_score=pick_fwd.score,
        backward_score=None if pick_bwd is None else pick_bwd.score,
    )


@dataclass(frozen=True)
class SelectionResult:
    """Everything the pipeline produced on the way to the adjusted set."""

    sets: FeatureSets
    importance: ImportanceVector
    released_importance: ImportanceVector
    fim_sensitivity: float
    filtered: Dataset
    budget: PrivacyBudget | None


def select_features(
    ds: Dataset,
    cfg: SelectionConfig,
    forest_cfg: ForestConfig,
    plain_trainer,
    private_trainer,
    corr_builder,
    src: NoiseSource,
    budget: PrivacyBudget | None = None,
    private: bool = True,
) -> SelectionResult:
    """Run the whole selection pipeline on an already-preprocessed dataset.

    Collinearity and coverage filters run first (each guided by a forest
    retrained on the current features), then the importance ranking is
    released with Laplace noise scaled to its sensitivity, the best set is
    searched non-privately, and the adjustment passes rebalance it. With
    ``private=False`` the exact ranking is used, nothing is spent, and the
    adjustment passes are skipped (they only matter under noise).
    """
    imp0 = gini_importance(train_forest(ds, forest_cfg))
    ds1 = remove_collinear(ds, cfg.collinearity_threshold, imp0)
    imp1 = gini_importance(train_forest(ds1, forest_cfg))
    ds2 = remove_unimportant(ds1, imp1, cfg.importance_coverage)
    fim = gini_importance(train_forest(ds2, forest_cfg))

    if private:
        mode = cfg.resolve_sensitivity_mode(ds2.n_records)
        delta_fim = sensitivity_fim(ds2, forest_cfg, mode=mode)
        if budget is not None:
            budget = spend(budget, "selection", cfg.epsilon_1)
        released = dp_importance(fim, delta_fim, cfg.epsilon_1, src.child())
    else:
        delta_fim = 0.0
        released = fim

    sets = best_feature_set(ds2, released, plain_trainer)
    sets = replace(
        sets,
        removed_collinear=_removals(ds, ds1),
        removed_unimportant=_removals(ds1, ds2),
    )
    if private:
        sets = adjust_features(sets, ds2, cfg, corr_builder, private_trainer, src, budget)
    return SelectionResult(
        sets=sets,
        importance=fim,
        released_importance=released,
        fim_sensitivity=delta_fim,
        filtered=ds2,
        budget=budget,
    )
