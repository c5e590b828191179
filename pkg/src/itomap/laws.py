"""Catalog of jump-size laws and jump transforms with exact moments.

Both the Lévy jump marks and the transition-triggered impulses draw from
the same catalog. Every law exposes closed-form raw moments so that all
compensators and Gram matrices downstream are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ValidationError

DEFAULT_MAX_MOMENT_ORDER = 64


class JumpLaw:
    """Base class for one-dimensional jump-size distributions."""

    kind: str = ""
    max_moment_order: int = DEFAULT_MAX_MOMENT_ORDER

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def _raw_moment(self, k: int) -> float:
        raise NotImplementedError

    def moment(self, k: int) -> float:
        """Exact raw moment E[xi^k]."""
        k = int(k)
        if k < 0:
            raise ValidationError(f"negative moment order {k}", module="laws")
        if k > self.max_moment_order:
            raise ValidationError(
                f"{self.kind} law exposes moments up to order "
                f"{self.max_moment_order}, requested {k}",
                module="laws",
            )
        if k == 0:
            return 1.0
        return float(self._raw_moment(k))

    def moments(self, order: int) -> np.ndarray:
        return np.array([self.moment(k) for k in range(order + 1)])

    @property
    def bounded(self) -> bool:
        return False

    def exp_moment_finite(self, lam: float, power: int) -> bool:
        """Whether E exp(lam * |xi|**power) is finite."""
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class PointMass(JumpLaw):
    value: float
    kind = "point_mass"

    def sample(self, rng, size):
        return np.full(size, float(self.value))

    def _raw_moment(self, k):
        return self.value**k

    @property
    def bounded(self):
        return True

    def exp_moment_finite(self, lam, power):
        return True

    def to_dict(self):
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class TwoPoint(JumpLaw):
    """Mass ``prob`` at ``low`` and ``1 - prob`` at ``high``."""

    low: float
    high: float
    prob: float = 0.5
    kind = "two_point"

    def __post_init__(self):
        if not 0.0 <= self.prob <= 1.0:
            raise ValidationError(f"two_point prob {self.prob} not in [0, 1]", module="laws")

    def sample(self, rng, size):
        u = rng.random(size)
        return np.where(u < self.prob, float(self.low), float(self.high))

    def _raw_moment(self, k):
        return self.prob * self.low**k + (1.0 - self.prob) * self.high**k

    @property
    def bounded(self):
        return True

    def exp_moment_finite(self, lam, power):
        return True

    def to_dict(self):
        return {"kind": self.kind, "low": self.low, "high": self.high, "prob": self.prob}


@dataclass(frozen=True)
class Gaussian(JumpLaw):
    mean: float = 0.0
    std: float = 1.0
    kind = "gaussian"

    def __post_init__(self):
        if self.std < 0:
            raise ValidationError("gaussian std must be >= 0", module="laws")

    def sample(self, rng, size):
        return self.mean + self.std * rng.standard_normal(size)

    def _raw_moment(self, k):
        # E X^k = m E X^{k-1} + (k-1) s^2 E X^{k-2}
        prev2, prev1 = 1.0, self.mean
        for n in range(2, k + 1):
            prev2, prev1 = prev1, self.mean * prev1 + (n - 1) * self.std**2 * prev2
        return prev1

    def exp_moment_finite(self, lam, power):
        if lam <= 0 or self.std == 0 or power <= 1:
            return True
        if power == 2:
            return lam < 1.0 / (2.0 * self.std**2)
        return False

    def to_dict(self):
        return {"kind": self.kind, "mean": self.mean, "std": self.std}


@dataclass(frozen=True)
class Uniform(JumpLaw):
    low: float = -1.0
    high: float = 1.0
    kind = "uniform"

    def __post_init__(self):
        if not self.high > self.low:
            raise ValidationError("uniform requires high > low", module="laws")

    def sample(self, rng, size):
        return rng.uniform(self.low, self.high, size)

    def _raw_moment(self, k):
        a, b = self.low, self.high
        return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))

    @property
    def bounded(self):
        return True

    def exp_moment_finite(self, lam, power):
        return True

    def to_dict(self):
        return {"kind": self.kind, "low": self.low, "high": self.high}


@dataclass(frozen=True)
class DoubleExponential(JumpLaw):
    """Kou-type law: +Exp(rate_up) with prob ``p_up``, else -Exp(rate_down)."""

    p_up: float = 0.5
    rate_up: float = 1.0
    rate_down: float = 1.0
    kind = "double_exponential"

    def __post_init__(self):
        if not 0.0 <= self.p_up <= 1.0 or self.rate_up <= 0 or self.rate_down <= 0:
            raise ValidationError("invalid double_exponential parameters", module="laws")

    def sample(self, rng, size):
        up = rng.random(size) < self.p_up
        mag = rng.standard_exponential(size)
        return np.where(up, mag / self.rate_up, -mag / self.rate_down)

    def _raw_moment(self, k):
        f = math.factorial(k)
        return self.p_up * f / self.rate_up**k + (1.0 - self.p_up) * (-1) ** k * f / self.rate_down**k

    def exp_moment_finite(self, lam, power):
        if lam <= 0 or power < 1:
            return True
        if power == 1:
            rate = min(
                self.rate_up if self.p_up > 0 else math.inf,
                self.rate_down if self.p_up < 1 else math.inf,
            )
            return lam < rate
        return False

    def to_dict(self):
        return {
            "kind": self.kind,
            "p_up": self.p_up,
            "rate_up": self.rate_up,
            "rate_down": self.rate_down,
        }


_LAWS = {
    cls.kind: cls for cls in (PointMass, TwoPoint, Gaussian, Uniform, DoubleExponential)
}


def law_from_dict(d: Mapping[str, Any]) -> JumpLaw:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _LAWS:
        raise ValidationError(f"unknown jump law kind {kind!r}; expected one of {sorted(_LAWS)}", module="laws")
    max_order = d.pop("max_moment_order", None)
    try:
        law = _LAWS[kind](**{k: float(v) for k, v in d.items()})
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {kind}: {exc}", module="laws") from None
    if max_order is not None:
        object.__setattr__(law, "max_moment_order", int(max_order))
    return law


@dataclass(frozen=True)
class JumpTransform:
    """Per-state odd polynomial transform gamma_i(x) = beta_i x + kappa_i x^3.

    ``identity`` and ``linear`` are the special cases kappa = 0 (and beta = 1
    for identity).
    """

    kind: str
    beta: tuple[float, ...]
    kappa: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in ("identity", "linear", "affine_odd"):
            raise ValidationError(f"unknown jump transform {self.kind!r}", module="levy")
        if not self.kappa:
            object.__setattr__(self, "kappa", tuple(0.0 for _ in self.beta))
        if len(self.kappa) != len(self.beta):
            raise ValidationError("beta and kappa lengths differ", module="levy")

    @classmethod
    def identity(cls, n_states: int) -> JumpTransform:
        return cls("identity", tuple(1.0 for _ in range(n_states)))

    @classmethod
    def linear(cls, beta: Sequence[float]) -> JumpTransform:
        return cls("linear", tuple(float(b) for b in beta))

    @classmethod
    def affine_odd(cls, beta: Sequence[float], kappa: Sequence[float]) -> JumpTransform:
        return cls("affine_odd", tuple(float(b) for b in beta), tuple(float(k) for k in kappa))

    @property
    def n_states(self) -> int:
        return len(self.beta)

    def apply(self, state, x):
        state = np.asarray(state)
        beta = np.asarray(self.beta)[state]
        kappa = np.asarray(self.kappa)[state]
        return beta * x + kappa * x**3

    def power_moment(self, state: int, k: int, law: JumpLaw) -> float:
        """E[gamma_state(xi)^k] for xi ~ law, expanded binomially in moments of xi."""
        b, c = self.beta[state], self.kappa[state]
        if c == 0.0:
            return b**k * law.moment(k)
        return sum(
            math.comb(k, j) * b ** (k - j) * c**j * law.moment(k + 2 * j) for j in range(k + 1)
        )

    def tail_power(self, state: int) -> tuple[int, float]:
        """Leading growth |gamma(x)| ~ coef * |x|^power for large |x|."""
        if self.kappa[state] != 0.0:
            return 3, abs(self.kappa[state])
        return 1, abs(self.beta[state])

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind}
        if self.kind != "identity":
            d["beta"] = list(self.beta)
        if self.kind == "affine_odd":
            d["kappa"] = list(self.kappa)
        return d


def transform_from_dict(d: Mapping[str, Any] | None, n_states: int) -> JumpTransform:
    if d is None:
        return JumpTransform.identity(n_states)
    kind = d.get("kind", "identity")
    if kind == "identity":
        return JumpTransform.identity(n_states)

    def _vec(name, default):
        v = d.get(name, default)
        if np.isscalar(v):
            v = [v] * n_states
        if len(v) != n_states:
            raise ValidationError(f"jump transform {name} needs {n_states} entries", module="levy")
        return [float(x) for x in v]

    if kind == "linear":
        return JumpTransform.linear(_vec("beta", 1.0))
    if kind == "affine_odd":
        return JumpTransform.affine_odd(_vec("beta", 1.0), _vec("kappa", 0.0))
    raise ValidationError(f"unknown jump transform {kind!r}", module="levy")
