"""Linear classifiers trained by full-batch (sub)gradient descent.

Logistic regression and a linear SVM on -1/+1 labels, both with L2
regularization on the weights (not the bias). Full-batch descent keeps
training deterministic. Released models get independent Laplace noise on
every weight coordinate and the bias, calibrated to the supplied
sensitivity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset
from .mechanisms import NoiseSource, perturb_vector

LOGISTIC = "logistic"
LINEAR_SVM = "linear-svm"


class LearnerError(ValueError):
    """Training failure or mismatched model/dataset pairing."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 500
    regularization: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise LearnerError("learning_rate must be positive")
        if self.epochs < 1:
            raise LearnerError("epochs must be at least 1")
        if self.regularization < 0:
            raise LearnerError("regularization must be nonnegative")


@dataclass(frozen=True)
class LinearModel:
    """A released linear classifier: sign(w.x + b), with sign(0) = +1."""

    weights: np.ndarray
    bias: float
    kind: str
    feature_names: tuple[str, ...]
    flagged: bool = False
    loss_history: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (len(self.feature_names),):
            raise LearnerError("weight vector length must equal the feature count")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "weights": [float(f"{w:.17g}") for w in self.weights],
                "bias": float(f"{self.bias:.17g}"),
                "feature_names": list(self.feature_names),
            }
        )


def logistic_loss(w, b, X, y, lam) -> float:
    z = y * (X @ w + b)
    return float(np.mean(np.logaddexp(0.0, -z)) + 0.5 * lam * np.dot(w, w))


def _inv_one_plus_exp(z):
    """1 / (1 + exp(z)) without overflow for large |z|."""
    out = np.empty_like(z)
    pos = z >= 0
    ez = np.exp(-z[pos])
    out[pos] = ez / (1.0 + ez)
    out[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
    return out


def logistic_gradient(w, b, X, y, lam):
    z = y * (X @ w + b)
    s = _inv_one_plus_exp(z)
    gw = -(X.T @ (y * s)) / X.shape[0] + lam * w
    gb = -float(np.mean(y * s))
    return gw, gb


def hinge_loss(w, b, X, y, lam) -> float:
    z = y * (X @ w + b)
    return float(np.mean(np.maximum(0.0, 1.0 - z)) + 0.5 * lam * np.dot(w, w))


def svm_subgradient(w, b, X, y, lam):
    """Subgradient of the hinge objective; margin points contribute fully.

    At z < 1 the per-record term is -y x; at z >= 1 it is zero, so
    correctly classified interior points touch only the regularizer.
    """
    z = y * (X @ w + b)
    active = z < 1.0
    ya = y * active
    gw = -(X.T @ ya) / X.shape[0] + lam * w
    gb = -float(np.mean(ya))
    return gw, gb


def _descend(X, y, cfg, loss_fn, grad_fn, kind, names):
    w = np.zeros(X.shape[1])
    b = 0.0
    losses = [loss_fn(w, b, X, y, cfg.regularization)]
    rising = 0
    for epoch in range(cfg.epochs):
        gw, gb = grad_fn(w, b, X, y, cfg.regularization)
        w = w - cfg.learning_rate * gw
        b = b - cfg.learning_rate * gb
        loss = loss_fn(w, b, X, y, cfg.regularization)
        rising = rising + 1 if loss > losses[-1] else 0
        losses.append(loss)
        if rising >= 10:
            raise LearnerError(
                f"{kind} training diverged: loss rose for 10 consecutive epochs "
                f"(epoch {epoch}, last losses {losses[-3:]})"
            )
    return LinearModel(
        weights=w, bias=b, kind=kind, feature_names=names, loss_history=tuple(losses)
    )


def _train(ds: Dataset, cfg: TrainConfig, kind: str) -> LinearModel:
    X = ds.values
    y = ds.label
    if np.unique(y).size < 2:
        return LinearModel(
            weights=np.zeros(ds.n_features),
            bias=float(y[0]),
            kind=kind,
            feature_names=ds.feature_names,
            flagged=True,
        )
    if kind == LOGISTIC:
        return _descend(X, y, cfg, logistic_loss, logistic_gradient, kind, ds.feature_names)
    return _descend(X, y, cfg, hinge_loss, svm_subgradient, kind, ds.feature_names)


def train_logistic(ds: Dataset, cfg: TrainConfig) -> LinearModel:
    """L2-regularized logistic loss minimized by full-batch descent."""
    return _train(ds, cfg, LOGISTIC)


def train_svm(ds: Dataset, cfg: TrainConfig) -> LinearModel:
    """L2-regularized hinge loss minimized by subgradient descent."""
    return _train(ds, cfg, LINEAR_SVM)


def train(ds: Dataset, cfg: TrainConfig, kind: str) -> LinearModel:
    if kind == LOGISTIC:
        return train_logistic(ds, cfg)
    if kind == LINEAR_SVM:
        return train_svm(ds, cfg)
    raise LearnerError(f"unknown learner kind {kind!r}")


def perturb_model(
    model: LinearModel, delta_cs: float, epsilon_2: float, src: NoiseSource
) -> LinearModel:
    """Add Laplace(delta_cs / epsilon_2) noise to every weight and the bias."""
    packed = np.append(model.weights, model.bias)
    noisy = perturb_vector(packed, delta_cs, epsilon_2, src)
    return replace(model, weights=noisy[:-1], bias=float(noisy[-1]), loss_history=())


def predict(model: LinearModel, X) -> np.ndarray:
    z = np.asarray(X, dtype=float) @ model.weights + model.bias
    return np.where(z >= 0, 1.0, -1.0)


def accuracy(model: LinearModel, test: Dataset) -> float:
    """Fraction of test records whose predicted sign matches the label."""
    if model.feature_names != test.feature_names:
        raise LearnerError(
            f"model features {model.feature_names} do not match dataset features "
            f"{test.feature_names}"
        )
    return float(np.mean(predict(model, test.values) == test.label))
