"""Laplace noise generation and privacy-budget accounting.

Sampling uses the inverse CDF on a seeded uniform stream so that every
draw is reproducible. A budget is an immutable record of a total epsilon,
its two-phase split, and an append-only spend ledger that can never
exceed the total.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

_TOL = 1e-12


class MechanismError(ValueError):
    """Invalid noise scale or privacy parameter."""


class BudgetExceededError(RuntimeError):
    """An attempted spend would push the ledger past the total budget."""


class NoiseSource:
    """A seeded uniform stream feeding the Laplace sampler.

    Single-owner: a source must not be shared across threads. Parallel
    consumers should each receive an independent child obtained from
    ``child()``, which derives a new stream deterministically from the
    parent's seed material (children are numbered in creation order).
    """

    def __init__(self, seed: int):
        self.seed = seed
        self._seq = np.random.SeedSequence(seed)
        self._gen = np.random.Generator(np.random.PCG64(self._seq))
        self.position = 0

    @classmethod
    def _from_seq(cls, seq: np.random.SeedSequence) -> "NoiseSource":
        src = cls.__new__(cls)
        src.seed = None
        src._seq = seq
        src._gen = np.random.Generator(np.random.PCG64(seq))
        src.position = 0
        return src

    def uniform(self) -> float:
        """One draw from [0, 1); advances the stream position."""
        self.position += 1
        return float(self._gen.random())

    def child(self) -> "NoiseSource":
        return NoiseSource._from_seq(self._seq.spawn(1)[0])

    def __repr__(self):
        return f"NoiseSource(seed={self.seed}, position={self.position})"


def laplace_inverse_cdf(u: float, scale: float) -> float:
    """Map a uniform draw u in (0, 1) to a Laplace(0, scale) quantile."""
    if scale <= 0:
        raise MechanismError(f"scale must be positive, got {scale}")
    half = u - 0.5
    return -scale * math.copysign(1.0, half) * math.log1p(-2.0 * abs(half))


def laplace_sample(scale: float, src: NoiseSource) -> float:
    """One draw from Laplace(0, scale) via the inverse CDF."""
    if scale <= 0:
        raise MechanismError(f"scale must be positive, got {scale}")
    u = src.uniform()
    if u == 0.0:
        u = np.finfo(float).tiny
    return laplace_inverse_cdf(u, scale)


def perturb_value(x: float, delta: float, epsilon: float, src: NoiseSource) -> float:
    """Release x + Laplace(delta / epsilon); zero sensitivity is exact.

    When delta == 0 the input is returned unchanged and no randomness is
    consumed.
    """
    if epsilon <= 0:
        raise MechanismError(f"epsilon must be positive, got {epsilon}")
    if delta < 0:
        raise MechanismError(f"sensitivity must be nonnegative, got {delta}")
    if delta == 0:
        return float(x)
    return float(x) + laplace_sample(delta / epsilon, src)


def perturb_vector(v, delta_l1: float, epsilon: float, src: NoiseSource) -> np.ndarray:
    """Add an independent Laplace(delta_l1 / epsilon) draw per coordinate.

    The per-coordinate scale is calibrated to the whole-vector L1
    sensitivity, not split across coordinates.
    """
    if epsilon <= 0:
        raise MechanismError(f"epsilon must be positive, got {epsilon}")
    if delta_l1 < 0:
        raise MechanismError(f"sensitivity must be nonnegative, got {delta_l1}")
    out = np.array(v, dtype=float)
    if delta_l1 == 0:
        return out
    scale = delta_l1 / epsilon
    for i in range(out.size):
        out.flat[i] += laplace_sample(scale, src)
    return out


@dataclass(frozen=True)
class PrivacyBudget:
    """A total epsilon split into selection and training/release phases.

    The ledger is append-only; its sum may never exceed the total. Under
    sequential composition the consumed budget is exactly the ledger sum.
    """

    epsilon_total: float
    epsilon_1: float
    epsilon_2: float
    ledger: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.epsilon_total <= 0 or self.epsilon_1 <= 0 or self.epsilon_2 <= 0:
            raise MechanismError("all budget components must be positive")
        if abs(self.epsilon_1 + self.epsilon_2 - self.epsilon_total) > _TOL:
            raise MechanismError("epsilon_1 + epsilon_2 must equal epsilon_total")
        if self.spent > self.epsilon_total + _TOL:
            raise BudgetExceededError("ledger already exceeds the total budget")

    @classmethod
    def split(cls, epsilon_total: float, selection_fraction: float = 0.5) -> "PrivacyBudget":
        if not 0.0 < selection_fraction < 1.0:
            raise MechanismError("selection_fraction must be in (0,1)")
        e1 = epsilon_total * selection_fraction
        return cls(epsilon_total=epsilon_total, epsilon_1=e1, epsilon_2=epsilon_total - e1)

    @property
    def spent(self) -> float:
        return float(sum(e for _, e in self.ledger))

    @property
    def remaining(self) -> float:
        return self.epsilon_total - self.spent

    def ledger_json(self) -> str:
        return json.dumps(
            {
                "epsilon_total": self.epsilon_total,
                "epsilon_1": self.epsilon_1,
                "epsilon_2": self.epsilon_2,
                "spent": self.spent,
                "entries": [{"label": lab, "epsilon": eps} for lab, eps in self.ledger],
            }
        )


def spend(budget: PrivacyBudget, label: str, epsilon: float) -> PrivacyBudget:
    """Append a spend to the ledger, failing hard on over-spend."""
    if epsilon <= 0:
        raise MechanismError(f"spend must be positive, got {epsilon}")
    if budget.spent + epsilon > budget.epsilon_total + _TOL:
        raise BudgetExceededError(
            f"spending {epsilon} as {label!r} would exceed the total budget "
            f"({budget.spent} already spent of {budget.epsilon_total})"
        )
    return replace(budget, ledger=budget.ledger + ((label, epsilon),))
