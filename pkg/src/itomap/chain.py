"""Background Markov chain: simulation, jump counts and their compensators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .rng import SeedLike, Stream, as_generator

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class ChainSpec:
    """Intensity matrix and initial law of a finite-state chain.

    ``intensities[i, j]`` is the rate of jumping from state ``i`` to ``j``;
    the diagonal holds minus the total exit rate.
    """

    intensities: np.ndarray
    initial_dist: np.ndarray

    def __post_init__(self):
        q = np.array(self.intensities, dtype=float)
        p = np.array(self.initial_dist, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 1:
            raise ValidationError(f"intensity matrix must be square, got shape {q.shape}", module="chain")
        n = q.shape[0]
        off = q[~np.eye(n, dtype=bool)]
        if np.any(off < 0) or not np.all(np.isfinite(q)):
            raise ValidationError("off-diagonal intensities must be finite and >= 0", module="chain")
        scale = max(1.0, float(np.max(np.abs(q))))
        rows = np.abs(q.sum(axis=1))
        if np.any(rows > ROW_SUM_TOL * scale):
            bad = int(np.argmax(rows))
            raise ValidationError(f"row {bad} of the intensity matrix sums to {q[bad].sum():g}, not 0", module="chain")
        if p.shape != (n,) or np.any(p < 0) or abs(p.sum() - 1.0) > ROW_SUM_TOL:
            raise ValidationError("initial_dist must be a probability vector of length N", module="chain")
        q.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "intensities", q)
        object.__setattr__(self, "initial_dist", p)

    @property
    def n_states(self) -> int:
        return self.intensities.shape[0]

    @property
    def exit_rates(self) -> np.ndarray:
        return -np.diag(self.intensities)

    def entry_rate(self, j: int) -> np.ndarray:
        """Vector over source states i of lambda_ij (zero for i == j)."""
        col = self.intensities[:, j].copy()
        col[j] = 0.0
        return col

    def entry_rate_matrix(self) -> np.ndarray:
        """Off-diagonal part of the intensity matrix."""
        q = self.intensities.copy()
        np.fill_diagonal(q, 0.0)
        return q

    @classmethod
    def symmetric(cls, n_states: int = 2, rate: float = 1.0) -> ChainSpec:
        q = np.full((n_states, n_states), rate / max(n_states - 1, 1))
        np.fill_diagonal(q, 0.0)
        np.fill_diagonal(q, -q.sum(axis=1))
        return cls(q, np.full(n_states, 1.0 / n_states))


@dataclass(frozen=True)
class ChainPath:
    """One trajectory of the chain on ``[0, horizon]``.

    ``states[0]`` is the initial state and ``states[n + 1]`` the state
    entered at ``epochs[n]``.
    """

    horizon: float
    epochs: np.ndarray
    states: np.ndarray

    def validate(self) -> None:
        if len(self.states) != len(self.epochs) + 1:
            raise ValidationError("states must have one more entry than epochs", module="chain")
        if len(self.epochs) and (
            np.any(np.diff(self.epochs) <= 0) or self.epochs[0] <= 0 or self.epochs[-1] > self.horizon
        ):
            raise ValidationError("epochs must be strictly increasing in (0, horizon]", module="chain")
        if np.any(self.states[1:] == self.states[:-1]):
            raise ValidationError("consecutive states must differ", module="chain")

    @property
    def n_epochs(self) -> int:
        return len(self.epochs)

    def state_at(self, t) -> np.ndarray:
        """Right-continuous state J(t)."""
        return self.states[np.searchsorted(self.epochs, t, side="right")]

    def state_before(self, t) -> np.ndarray:
        """Left limit J(t-)."""
        return self.states[np.searchsorted(self.epochs, t, side="left")]

    def occupation(self, t, n_states: int) -> np.ndarray:
        """Occupation times of every state on ``[0, t]``; shape ``(len(t), n_states)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        starts = np.concatenate(([0.0], self.epochs))
        lengths = np.diff(np.concatenate((starts, [self.horizon])))
        cum = np.zeros((len(starts), n_states))
        if len(starts) > 1:
            inc = np.zeros((len(starts) - 1, n_states))
            inc[np.arange(len(starts) - 1), self.states[:-1]] = lengths[:-1]
            cum[1:] = np.cumsum(inc, axis=0)
        k = np.searchsorted(self.epochs, t, side="right")
        out = cum[k].copy()
        out[np.arange(len(t)), self.states[k]] += t - starts[k]
        return out


@dataclass(frozen=True)
class CountingSet:
    """Jump counts into each state, their compensators and the compensated martingales.

    All quantities are exact closed-form functions of time; evaluate them on
    any grid with :meth:`counts`, :meth:`compensator` and :meth:`martingale`.
    """

    path: ChainPath
    spec: ChainSpec

    def counts(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        n = self.spec.n_states
        out = np.zeros((len(t), n))
        if self.path.n_epochs:
            k = np.searchsorted(self.path.epochs, t, side="right")
            onehot = np.zeros((self.path.n_epochs + 1, n))
            onehot[np.arange(1, self.path.n_epochs + 1), self.path.states[1:]] = 1.0
            out = np.cumsum(onehot, axis=0)[k]
        return out

    def compensator(self, t) -> np.ndarray:
        occ = self.path.occupation(t, self.spec.n_states)
        return occ @ self.spec.entry_rate_matrix()

    def martingale(self, t) -> np.ndarray:
        return self.counts(t) - self.compensator(t)

    def intensity(self, t) -> np.ndarray:
        """lambda_j(t) = sum_{i != j} 1{J(t-) = e_i} lambda_ij; shape ``(len(t), N)``."""
        prev = self.path.state_before(t)
        return self.spec.entry_rate_matrix()[np.atleast_1d(prev)]


def simulate_chain(spec: ChainSpec, horizon: float, seed: SeedLike, *, path_id: int = 0) -> ChainPath:
    """Exact simulation by exponential holding times and the embedded jump chain."""
    if not horizon > 0:
        raise ValidationError(f"horizon must be > 0, got {horizon}", module="chain")
    rng = as_generator(seed, Stream.CHAIN, path_id)
    q = spec.intensities
    exit_rates = spec.exit_rates
    state = int(np.searchsorted(np.cumsum(spec.initial_dist), rng.random(), side="right"))
    state = min(state, spec.n_states - 1)
    epochs: list[float] = []
    states = [state]
    t = 0.0
    while True:
        rate = exit_rates[state]
        if rate <= 0.0:
            break
        t += rng.exponential(1.0 / rate)
        if t > horizon:
            break
        probs = np.clip(q[state], 0.0, None)
        probs[state] = 0.0
        cdf = np.cumsum(probs) / rate
        nxt = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        nxt = min(nxt, spec.n_states - 1)
        epochs.append(t)
        states.append(nxt)
        state = nxt
    return ChainPath(float(horizon), np.array(epochs, dtype=float), np.array(states, dtype=np.int64))


def counting_and_compensators(path: ChainPath, spec: ChainSpec) -> CountingSet:
    if path.states.size and int(path.states.max()) >= spec.n_states:
        raise ValidationError("path visits a state outside the generator", module="chain")
    return CountingSet(path, spec)


def _forward_rk4(spec: ChainSpec, horizon: float, step: float, rhs_extra):
    """RK4 on p' = p Q augmented with accumulators a' = rhs_extra(p)."""
    n_steps = max(1, int(np.ceil(horizon / step - 1e-12)))
    h = horizon / n_steps
    q = spec.intensities
    p = spec.initial_dist.astype(float).copy()
    acc = np.zeros_like(rhs_extra(p))

    def f(pv):
        return pv @ q, rhs_extra(pv)

    for _ in range(n_steps):
        k1p, k1a = f(p)
        k2p, k2a = f(p + 0.5 * h * k1p)
        k3p, k3a = f(p + 0.5 * h * k2p)
        k4p, k4a = f(p + h * k3p)
        p = p + h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        acc = acc + h / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
    return p, acc


def expected_jumps_per_unit(spec: ChainSpec, i: int, step: float = 1e-3) -> float:
    """E Phi_i(1), integrating the forward equation with fixed-step RK4."""
    if not 0 <= i < spec.n_states:
        raise ValidationError(f"state {i} out of range", module="chain")
    if step > 1e-3:
        raise ValidationError("step must be <= 1e-3", module="chain")
    entry = spec.entry_rate(i)
    _, acc = _forward_rk4(spec, 1.0, step, lambda p: np.array([p @ entry]))
    return max(float(acc[0]), 0.0)


def expected_occupation(spec: ChainSpec, horizon: float = 1.0, step: float = 1e-3) -> np.ndarray:
    """E of the occupation time of each state over ``[0, horizon]``."""
    _, acc = _forward_rk4(spec, horizon, step, lambda p: p)
    return acc
