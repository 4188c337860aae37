"""End-to-end experiment orchestration and result-file emission.

One experiment sweeps (epsilon, seed, scheme) cells over a dataset:
preprocessing, the private selection pipeline, model training with each
scheme's output perturbation, and a seeded count/mean query workload.
All schemes share the selection run of their (epsilon, seed) cell; they
differ in which feature set they train on and how their noise is
calibrated. Every cell is fully determined by the config, so repeated
runs produce byte-identical CSVs.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .correlation import build_matrix, correlated_sensitivity, count_records_query, group_sensitivity
from .dataset import (
    Dataset,
    DatasetError,
    PreprocessConfig,
    drop_missing_and_constant,
    load_csv,
    normalize,
    train_test_split,
)
from .importance import ForestConfig
from .learners import LINEAR_SVM, LOGISTIC, TrainConfig, accuracy, perturb_model, train
from .mechanisms import NoiseSource, PrivacyBudget, perturb_value, spend
from .publishing import evaluate, generate_workload, scheme_sensitivity
from .selection import SelectionConfig, SelectionResult, select_features
from .synthetic import make_synthetic

PRIVATE_SCHEMES = ("group", "zhu", "crfs")
ALL_SCHEMES = ("nonprivate",) + PRIVATE_SCHEMES


class PipelineError(RuntimeError):
    """A module failure, tagged with the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


def _stage(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(stage, exc) from exc


def derive_seed(*parts) -> int:
    """Deterministic child seed from a mix of ints and short strings."""
    ints = []
    for p in parts:
        if isinstance(p, str):
            ints.extend(ord(c) for c in p)
        else:
            ints.append(int(p))
    return int(np.random.SeedSequence(ints).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a full experiment needs, mirrored by the JSON config file."""

    csv_path: str | None = None
    label_column: str | None = None
    synthetic: dict | None = None
    subsample: int | None = None
    preprocess: PreprocessConfig = PreprocessConfig()
    selection: SelectionConfig = SelectionConfig()
    forest: ForestConfig = ForestConfig()
    train: TrainConfig = TrainConfig()
    learners: tuple[str, ...] = (LOGISTIC, LINEAR_SVM)
    selection_learner: str = LOGISTIC
    epsilons: tuple[float, ...] = tuple(round(0.1 * k, 1) for k in range(1, 11))
    seeds: tuple[int, ...] = tuple(range(20))
    budget_split: float = 0.5
    query_seed: int = 0
    n_count_queries: int = 50
    n_mean_queries: int = 50
    out_dir: str = "results"

    def __post_init__(self):
        if (self.csv_path is None) == (self.synthetic is None):
            raise DatasetError("config needs exactly one of csv_path or synthetic")
        if self.csv_path is not None and self.label_column is None:
            raise DatasetError("csv_path requires label_column")
        if any(e <= 0 for e in self.epsilons):
            raise DatasetError("epsilons must be positive")
        if not self.seeds:
            raise DatasetError("at least one seed is required")
        object.__setattr__(self, "epsilons", tuple(self.epsilons))
        object.__setattr__(self, "seeds", tuple(self.seeds))
        object.__setattr__(self, "learners", tuple(self.learners))

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        kwargs = dict(raw)
        for key, sub in (
            ("preprocess", PreprocessConfig),
            ("selection", SelectionConfig),
            ("forest", ForestConfig),
            ("train", TrainConfig),
        ):
            if key in kwargs and isinstance(kwargs[key], dict):
                kwargs[key] = sub(**kwargs[key])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        return out


def stratified_subsample(ds: Dataset, n: int, seed: int) -> Dataset:
    """Seeded proportional subsample keeping both classes populated."""
    if n >= ds.n_records:
        return ds
    rng = np.random.default_rng(seed)
    picked: list[int] = []
    for cls in (-1.0, 1.0):
        members = np.nonzero(ds.label == cls)[0]
        share = max(2, int(round(n * members.size / ds.n_records)))
        share = min(share, members.size)
        picked.extend(rng.permutation(members)[:share])
    return ds.take_records(sorted(picked[:max(n, 4)]))


@dataclass(frozen=True)
class PreparedData:
    full: Dataset
    train: Dataset
    test: Dataset
    n_original_features: int


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    """Load, clean, normalize, and split the experiment's dataset."""
    if cfg.csv_path is not None:
        raw = _stage("load", load_csv, cfg.csv_path, cfg.label_column)
    else:
        raw = _stage("synthetic", make_synthetic, **cfg.synthetic)
    n_original = raw.n_features
    ds = _stage("preprocess", drop_missing_and_constant, raw, cfg.preprocess)
    if cfg.subsample is not None:
        ds = _stage("subsample", stratified_subsample, ds, cfg.subsample,
                    derive_seed(cfg.preprocess.seed, "subsample"))
    ds = _stage("normalize", normalize, ds)
    train_ds, test_ds = _stage("split", train_test_split, ds, cfg.preprocess)
    return PreparedData(full=ds, train=train_ds, test=test_ds,
                        n_original_features=n_original)


def _make_trainers(cfg: ExperimentConfig, fit: Dataset, val: Dataset, train_seed: int):
    tcfg = replace(cfg.train, seed=train_seed)

    def plain_trainer(features):
        model = train(fit.restrict(features), tcfg, cfg.selection_learner)
        return accuracy(model, val.restrict(features))

    def private_trainer(features):
        model = train(fit.restrict(features), tcfg, cfg.selection_learner)
        return model, val.restrict(features)

    return plain_trainer, private_trainer


def run_selection(
    cfg: ExperimentConfig,
    data: PreparedData,
    epsilon: float,
    seed: int,
    private: bool = True,
) -> SelectionResult:
    """The selection pipeline for one (epsilon, seed) cell.

    The training split is re-divided into fit/validation folds with a
    seed-derived split so selection never sees the test set.
    """
    inner = replace(cfg.preprocess, seed=derive_seed(cfg.preprocess.seed, seed, "val"))
    fit, val = _stage("selection-split", train_test_split, data.train, inner)
    plain_trainer, private_trainer = _make_trainers(cfg, fit, val, derive_seed(seed, "train"))
    budget = PrivacyBudget.split(epsilon, cfg.budget_split)
    sel_cfg = replace(cfg.selection, epsilon_1=budget.epsilon_1, epsilon_2=budget.epsilon_2)
    forest_cfg = replace(cfg.forest, seed=derive_seed(cfg.forest.seed, seed, "forest"))
    src = NoiseSource(derive_seed(seed, int(round(epsilon * 1e6)), "selection"))

    def corr_builder(sub: Dataset):
        return build_matrix(sub, sel_cfg.record_threshold)

    return _stage(
        "selection",
        select_features,
        fit,
        sel_cfg,
        forest_cfg,
        plain_trainer,
        private_trainer,
        corr_builder,
        src,
        budget=None,
        private=private,
    )


def _scheme_feature_set(scheme: str, private_sel: SelectionResult, plain_sel: SelectionResult):
    if scheme == "nonprivate":
        return plain_sel.sets.best
    if scheme in ("group", "zhu"):
        return private_sel.sets.best
    return private_sel.sets.adjusted


def _training_sensitivity(scheme: str, sub: Dataset, theta0: float) -> float:
    corr = build_matrix(sub, theta0)
    q = count_records_query()
    if scheme == "group":
        return group_sensitivity(corr, q, sub)
    return correlated_sensitivity(corr, q, sub)


def analysis_rows(
    cfg: ExperimentConfig,
    data: PreparedData,
    epsilon: float,
    seed: int,
    private_sel: SelectionResult,
    plain_sel: SelectionResult,
):
    """Accuracy rows for every (scheme, learner) at one (epsilon, seed)."""
    rows = []
    ledgers = []
    budget_template = PrivacyBudget.split(epsilon, cfg.budget_split)
    eps2 = budget_template.epsilon_2
    tcfg = replace(cfg.train, seed=derive_seed(seed, "final-train"))
    src = NoiseSource(derive_seed(seed, int(round(epsilon * 1e6)), "analysis"))
    model_cache: dict = {}
    for scheme in ALL_SCHEMES:
        features = _scheme_feature_set(scheme, private_sel, plain_sel)
        sub_train = data.train.restrict(features)
        for learner in cfg.learners:
            key = (features, learner)
            if key not in model_cache:
                model_cache[key] = _stage("train", train, sub_train, tcfg, learner)
            model = model_cache[key]
            if scheme == "nonprivate":
                sens = 0.0
                released = model
            else:
                sens = _stage(
                    "sensitivity", _training_sensitivity, scheme, sub_train,
                    cfg.selection.record_threshold,
                )
                released = perturb_model(model, sens, eps2, src.child())
                budget = spend(budget_template, "selection", budget_template.epsilon_1)
                budget = spend(budget, "training release", eps2)
                ledgers.append(
                    {
                        "epsilon": epsilon,
                        "seed": seed,
                        "scheme": scheme,
                        "learner": learner,
                        "product": "analysis",
                        "entries": [{"label": lab, "epsilon": e} for lab, e in budget.ledger],
                        "total_spent": budget.spent,
                    }
                )
            acc = _stage("score", accuracy, released, data.test.restrict(features))
            rows.append(
                {
                    "scheme": scheme,
                    "learner": learner,
                    "epsilon": epsilon,
                    "seed": seed,
                    "accuracy": acc,
                    "sensitivity": sens,
                    "noise_scale": 0.0 if scheme == "nonprivate" else sens / eps2,
                }
            )
    return rows, ledgers


def query_rows(
    cfg: ExperimentConfig,
    data: PreparedData,
    epsilon: float,
    seed: int,
    private_sel: SelectionResult,
    plain_sel: SelectionResult,
):
    """Released query rows for every scheme at one (epsilon, seed).

    The workload is drawn over features common to the best and adjusted
    sets so every scheme can answer every query; private schemes release
    at the post-selection budget epsilon_2.
    """
    best = private_sel.sets.best
    adjusted = private_sel.sets.adjusted
    pool = tuple(x for x in best if x in set(adjusted)) or best
    workload = generate_workload(
        data.full.restrict(pool), cfg.n_count_queries, cfg.n_mean_queries, cfg.query_seed
    )
    eps2 = PrivacyBudget.split(epsilon, cfg.budget_split).epsilon_2
    src = NoiseSource(derive_seed(seed, int(round(epsilon * 1e6)), "queries"))
    scheme_ctx = {"nonprivate": (data.full, None)}
    for scheme in PRIVATE_SCHEMES:
        features = _scheme_feature_set(scheme, private_sel, plain_sel)
        sub = data.full.restrict(features)
        scheme_ctx[scheme] = (sub, build_matrix(sub, cfg.selection.record_threshold))

    sub_best = data.full.restrict(best)
    sub_adj = data.full.restrict(adjusted)
    rows = []
    for qid, query in enumerate(workload):
        true_best = evaluate(sub_best, query)
        true_adj = evaluate(sub_adj, query)
        for scheme in ALL_SCHEMES:
            sub, corr = scheme_ctx[scheme]
            true_value = evaluate(sub, query)
            if scheme == "nonprivate":
                sens, released = 0.0, true_value
            else:
                sens = scheme_sensitivity(scheme, sub, query, corr)
                released = perturb_value(true_value, sens, eps2, src.child())
            rows.append(
                {
                    "query_id": qid,
                    "kind": query.kind,
                    "scheme": scheme,
                    "epsilon": epsilon,
                    "seed": seed,
                    "true": true_value,
                    "released": released,
                    "abs_error": abs(released - true_value),
                    "sensitivity": sens,
                    "true_best": true_best,
                    "true_adjusted": true_adj,
                }
            )
    return rows


def aggregate_mae(rows, kind: str):
    """Per (scheme, epsilon, seed) MAE rows for one query kind."""
    groups: dict = {}
    for r in rows:
        if r["kind"] != kind:
            continue
        groups.setdefault((r["scheme"], r["epsilon"], r["seed"]), []).append(r)
    out = []
    for (scheme, epsilon, seed), members in sorted(groups.items()):
        plain = float(np.mean([abs(m["released"] - m["true"]) for m in members]))
        adjusted = float(
            np.mean([abs(m["released"] - (m["true_best"] - m["true_adjusted"])) for m in members])
        )
        out.append(
            {
                "scheme": scheme,
                "epsilon": epsilon,
                "seed": seed,
                "mae": plain,
                "mae_adjusted": adjusted,
                "n_queries": len(members),
            }
        )
    return out


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_csv(path, rows, columns) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")


def correlation_rows(epsilon: float, seed: int, private_sel: SelectionResult):
    rows = []
    for cand in private_sel.sets.candidates:
        if cand.corr is None:
            continue
        theta = cand.corr.theta
        off = theta[~np.eye(theta.shape[0], dtype=bool)]
        rows.append(
            {
                "epsilon": epsilon,
                "seed": seed,
                "phase": cand.phase,
                "n_features": len(cand.features),
                "mean_abs_correlation": float(np.abs(off).mean()),
                "delta_cs": cand.sensitivity,
            }
        )
    return rows


def run_pipeline(cfg: ExperimentConfig) -> dict:
    """Run the full experiment and write the result files.

    Emits accuracy.csv, mae_count.csv, mae_mean.csv, queries.csv,
    correlation.csv, selection_trace.json, and budget_ledger.json under
    the configured output directory, and returns their paths.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    data = prepare_data(cfg)

    acc_rows, q_rows, corr_rows, ledgers, traces = [], [], [], [], []
    for seed in cfg.seeds:
        plain_sel = run_selection(cfg, data, epsilon=1.0, seed=seed, private=False)
        for epsilon in cfg.epsilons:
            private_sel = run_selection(cfg, data, epsilon, seed, private=True)
            rows, cell_ledgers = analysis_rows(cfg, data, epsilon, seed, private_sel, plain_sel)
            acc_rows.extend(rows)
            ledgers.extend(cell_ledgers)
            q_rows.extend(query_rows(cfg, data, epsilon, seed, private_sel, plain_sel))
            corr_rows.extend(correlation_rows(epsilon, seed, private_sel))
            trace = private_sel.sets.trace_dict()
            trace.update(
                {
                    "epsilon": epsilon,
                    "seed": seed,
                    "fim_sensitivity": private_sel.fim_sensitivity,
                    "stages": {
                        "original": data.n_original_features,
                        "prepared": data.full.n_features,
                        "post_filter": private_sel.filtered.n_features,
                        "best": len(private_sel.sets.best),
                        "adjusted": len(private_sel.sets.adjusted),
                    },
                }
            )
            traces.append(trace)
            eps2 = PrivacyBudget.split(epsilon, cfg.budget_split).epsilon_2
            for scheme in PRIVATE_SCHEMES:
                b = PrivacyBudget.split(epsilon, cfg.budget_split)
                b = spend(b, "selection", b.epsilon_1)
                b = spend(b, "query release (per query)", eps2)
                ledgers.append(
                    {
                        "epsilon": epsilon,
                        "seed": seed,
                        "scheme": scheme,
                        "learner": None,
                        "product": "publishing",
                        "entries": [{"label": lab, "epsilon": e} for lab, e in b.ledger],
                        "total_spent": b.spent,
                    }
                )

    acc_rows.sort(key=lambda r: (r["scheme"], r["learner"], r["epsilon"], r["seed"]))
    q_rows.sort(key=lambda r: (r["scheme"], r["epsilon"], r["seed"], r["query_id"]))
    corr_rows.sort(key=lambda r: (r["epsilon"], r["seed"], r["phase"], r["n_features"]))

    paths = {
        "accuracy": os.path.join(cfg.out_dir, "accuracy.csv"),
        "mae_count": os.path.join(cfg.out_dir, "mae_count.csv"),
        "mae_mean": os.path.join(cfg.out_dir, "mae_mean.csv"),
        "queries": os.path.join(cfg.out_dir, "queries.csv"),
        "correlation": os.path.join(cfg.out_dir, "correlation.csv"),
        "selection_trace": os.path.join(cfg.out_dir, "selection_trace.json"),
        "budget_ledger": os.path.join(cfg.out_dir, "budget_ledger.json"),
    }
    write_csv(
        paths["accuracy"], acc_rows,
        ["scheme", "learner", "epsilon", "seed", "accuracy", "sensitivity", "noise_scale"],
    )
    write_csv(
        paths["mae_count"], aggregate_mae(q_rows, "count"),
        ["scheme", "epsilon", "seed", "mae", "mae_adjusted", "n_queries"],
    )
    write_csv(
        paths["mae_mean"], aggregate_mae(q_rows, "mean"),
        ["scheme", "epsilon", "seed", "mae", "mae_adjusted", "n_queries"],
    )
    write_csv(
        paths["queries"], q_rows,
        ["query_id", "kind", "scheme", "epsilon", "seed", "true", "released",
         "abs_error", "sensitivity"],
    )
    write_csv(
        paths["correlation"], corr_rows,
        ["epsilon", "seed", "phase", "n_features", "mean_abs_correlation", "delta_cs"],
    )
    with open(paths["selection_trace"], "w", encoding="utf-8") as fh:
        json.dump(traces, fh, indent=2, sort_keys=True)
    with open(paths["budget_ledger"], "w", encoding="utf-8") as fh:
        json.dump(ledgers, fh, indent=2, sort_keys=True)
    return paths
