"""Regime-modulated Itô-Lévy component, its power-jump processes and Teugels martingales.

The continuous part is advanced with coefficients frozen per regime on an
integration partition that contains the reporting grid, every chain epoch
and every jump epoch. Because drift and volatility depend only on the
regime, this scheme reproduces the exact law of the path at the partition
points; jumps are placed at their exact epochs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .chain import ChainPath
from .errors import MomentConditionError, ValidationError
from .laws import JumpLaw, JumpTransform, PointMass
from .rng import SeedLike, Stream, as_generator


@dataclass(frozen=True)
class RegimeLevyParams:
    """Per-regime drift, volatility and jump transform plus a finite Lévy measure.

    The Lévy measure is ``jump_rate * law(dx)``.
    """

    mu0: np.ndarray
    sigma0: np.ndarray
    gamma: JumpTransform
    jump_rate: float = 0.0
    jump_law: JumpLaw = field(default_factory=lambda: PointMass(0.0))

    def __post_init__(self):
        mu = np.array(self.mu0, dtype=float).ravel()
        sig = np.array(self.sigma0, dtype=float).ravel()
        if mu.shape != sig.shape:
            raise ValidationError("mu0 and sigma0 must have one entry per state", module="levy")
        if np.any(sig < 0):
            raise ValidationError("sigma0 entries must be >= 0", module="levy")
        if self.jump_rate < 0:
            raise ValidationError("jump_rate must be >= 0", module="levy")
        if self.gamma.n_states != len(mu):
            raise ValidationError("jump transform has the wrong number of states", module="levy")
        mu.setflags(write=False)
        sig.setflags(write=False)
        object.__setattr__(self, "mu0", mu)
        object.__setattr__(self, "sigma0", sig)
        object.__setattr__(self, "jump_rate", float(self.jump_rate))

    @property
    def n_states(self) -> int:
        return len(self.mu0)

    def gamma_moment(self, state: int, k: int) -> float:
        """E[gamma_state(xi)^k], xi drawn from the jump law."""
        return self.gamma.power_moment(state, k, self.jump_law)

    def compensator_rates(self, k: int) -> np.ndarray:
        """Per-state drift of the order-k compensator: jump_rate * E[gamma_i(xi)^k]."""
        if self.jump_rate == 0.0:
            return np.zeros(self.n_states)
        return np.array([self.jump_rate * self.gamma_moment(i, k) for i in range(self.n_states)])

    def first_order_drift(self) -> np.ndarray:
        """Per-state drift removed from X-bar to obtain its first-order martingale."""
        return self.mu0 + self.compensator_rates(1)

    def is_state_independent(self) -> bool:
        return (
            np.all(self.mu0 == self.mu0[0])
            and np.all(self.sigma0 == self.sigma0[0])
            and len(set(zip(self.gamma.beta, self.gamma.kappa))) == 1
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "mu0": self.mu0.tolist(),
            "sigma0": self.sigma0.tolist(),
            "gamma": self.gamma.to_dict(),
            "jump_rate": self.jump_rate,
            "jump_law": self.jump_law.to_dict(),
        }


@dataclass(frozen=True)
class LevyPath:
    """A simulated path of X-bar.

    The path is stored on its integration partition (``knot_times``): the
    uniform grid merged with chain epochs and jump epochs. ``knot_cont`` is
    the continuous part and ``knot_brownian`` the driving Brownian motion at
    the knots. Jump records are kept exactly.
    """

    horizon: float
    grid_step: float
    grid: np.ndarray
    knot_times: np.ndarray
    knot_cont: np.ndarray
    knot_brownian: np.ndarray
    knot_regime: np.ndarray
    jump_times: np.ndarray
    jump_marks: np.ndarray
    jump_applied: np.ndarray
    jump_states: np.ndarray
    n_states: int

    def _knot_index(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.searchsorted(self.knot_times, t)
        idx = np.minimum(idx, len(self.knot_times) - 1)
        if np.any(np.abs(self.knot_times[idx] - t) > 1e-12 * max(1.0, self.horizon)):
            raise ValidationError("evaluation times must lie on the integration partition", module="levy")
        return idx

    def continuous_at(self, t) -> np.ndarray:
        return self.knot_cont[self._knot_index(t)]

    def jump_sum(self, t, power: int = 1, *, strict: bool = False) -> np.ndarray:
        """Sum of applied jumps to the given power over ``(0, t]`` (``(0, t)`` if strict)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if not len(self.jump_times):
            return np.zeros(len(t))
        cum = np.concatenate(([0.0], np.cumsum(self.jump_applied**power)))
        return cum[np.searchsorted(self.jump_times, t, side="left" if strict else "right")]

    def jump_sum_by_state(self, t, power: int = 1) -> np.ndarray:
        """Like :meth:`jump_sum` split by the regime in force at each jump; shape ``(len(t), N)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros((len(self.jump_times) + 1, self.n_states))
        if len(self.jump_times):
            inc = np.zeros((len(self.jump_times), self.n_states))
            inc[np.arange(len(self.jump_times)), self.jump_states] = self.jump_applied**power
            out[1:] = np.cumsum(inc, axis=0)
        return out[np.searchsorted(self.jump_times, t, side="right")]

    def value_at(self, t) -> np.ndarray:
        return self.continuous_at(t) + self.jump_sum(t)

    @property
    def values(self) -> np.ndarray:
        return self.value_at(self.grid)

    @property
    def gamma_jump_integral(self) -> np.ndarray:
        return self.jump_sum(self.grid)

    def brownian_integral_by_state(self, t, sigma0: np.ndarray) -> np.ndarray:
        """int_0^t 1{J(s) = e_i} sigma_i dW(s) for every state i; shape ``(len(t), N)``."""
        idx = self._knot_index(t)
        dw = np.diff(self.knot_brownian)
        inc = np.zeros((len(dw), self.n_states))
        inc[np.arange(len(dw)), self.knot_regime] = sigma0[self.knot_regime] * dw
        cum = np.vstack((np.zeros((1, self.n_states)), np.cumsum(inc, axis=0)))
        return cum[idx]


def make_grid(horizon: float, grid_step: float) -> np.ndarray:
    if not grid_step > 0:
        raise ValidationError(f"grid step must be > 0, got {grid_step}", module="levy")
    if not horizon > 0:
        raise ValidationError(f"horizon must be > 0, got {horizon}", module="levy")
    n = int(round(horizon / grid_step))
    if n < 1 or abs(n * grid_step - horizon) > 1e-9 * horizon:
        raise ValidationError(
            f"horizon {horizon} is not an integer multiple of the grid step {grid_step}", module="levy"
        )
    grid = np.arange(n + 1) * grid_step
    grid[-1] = horizon
    return grid


def _bridge(grid, w_grid, events, normals):
    """Brownian values at off-grid event times by sequential Brownian bridges."""
    w_events = np.empty(len(events))
    cells = np.searchsorted(grid, events, side="right") - 1
    prev_cell, prev_t, prev_w = -1, 0.0, 0.0
    for n, (s, g) in enumerate(zip(events, cells)):
        if g != prev_cell:
            prev_t, prev_w = grid[g], w_grid[g]
            prev_cell = g
        b, wb = grid[g + 1], w_grid[g + 1]
        frac = (s - prev_t) / (b - prev_t)
        var = (s - prev_t) * (b - s) / (b - prev_t)
        w = prev_w + frac * (wb - prev_w) + np.sqrt(var) * normals[n]
        w_events[n] = w
        prev_t, prev_w = s, w
    return w_events


def simulate_levy(
    params: RegimeLevyParams,
    chain: ChainPath,
    grid_step: float,
    seed: SeedLike,
    *,
    path_id: int = 0,
    brownian_seed: SeedLike | None = None,
    check_moments: bool = True,
) -> LevyPath:
    """Simulate X-bar along a given chain path.

    ``seed`` drives the jump epochs and marks; the Brownian motion uses an
    independent stream (``brownian_seed``, defaulting to the Brownian stream
    of the same master seed and path).
    """
    if check_moments:
        report = check_moment_condition(params, lam_probe=1e-6, eps_probe=1.0)
        if not report.passed:
            raise MomentConditionError("; ".join(report.failures), module="levy")
    horizon = chain.horizon
    grid = make_grid(horizon, grid_step)
    jump_rng = as_generator(seed, Stream.LEVY_JUMPS, path_id)
    bm_rng = as_generator(seed if brownian_seed is None else brownian_seed, Stream.BROWNIAN, path_id)

    n_jumps = int(jump_rng.poisson(params.jump_rate * horizon)) if params.jump_rate > 0 else 0
    jump_times = np.sort(jump_rng.uniform(0.0, horizon, n_jumps))
    jump_marks = params.jump_law.sample(jump_rng, n_jumps) if n_jumps else np.zeros(0)
    jump_states = chain.state_before(jump_times) if n_jumps else np.zeros(0, dtype=np.int64)
    jump_applied = params.gamma.apply(jump_states, jump_marks) if n_jumps else np.zeros(0)

    dt = np.diff(grid)
    w_grid = np.concatenate(([0.0], np.cumsum(np.sqrt(dt) * bm_rng.standard_normal(len(dt)))))
    events = np.union1d(chain.epochs, jump_times)
    events = events[(events > 0) & (events < horizon) & ~np.isin(events, grid)]
    normals = bm_rng.standard_normal(len(events))
    if len(events):
        w_events = _bridge(grid, w_grid, events, normals)
        knot_times = np.concatenate((grid, events))
        order = np.argsort(knot_times, kind="stable")
        knot_times = knot_times[order]
        knot_w = np.concatenate((w_grid, w_events))[order]
    else:
        knot_times, knot_w = grid, w_grid

    regime = chain.state_at(knot_times[:-1])
    cont = np.concatenate(
        ([0.0], np.cumsum(params.mu0[regime] * np.diff(knot_times) + params.sigma0[regime] * np.diff(knot_w)))
    )
    return LevyPath(
        horizon=horizon,
        grid_step=float(grid_step),
        grid=grid,
        knot_times=knot_times,
        knot_cont=cont,
        knot_brownian=knot_w,
        knot_regime=regime,
        jump_times=jump_times,
        jump_marks=jump_marks,
        jump_applied=jump_applied,
        jump_states=jump_states,
        n_states=params.n_states,
    )


def euler_frozen_at_grid(path: LevyPath, params: RegimeLevyParams, chain: ChainPath, step: float) -> np.ndarray:
    """Euler scheme on a coarse grid with coefficients sampled at the left grid point.

    Reuses the Brownian increments and jumps of ``path`` (shared randomness),
    so comparing against ``path`` isolates the error from not splitting at
    chain epochs. Returns X-bar on the coarse grid.
    """
    coarse = make_grid(path.horizon, step)
    w = path.knot_brownian[path._knot_index(coarse)]
    regime = chain.state_at(coarse[:-1])
    inc = params.mu0[regime] * np.diff(coarse) + params.sigma0[regime] * np.diff(w)
    return np.concatenate(([0.0], np.cumsum(inc))) + path.jump_sum(coarse)


@dataclass(frozen=True)
class PowerJumpFamily:
    """Power-jump processes X^(k), their compensators and the Teugels martingales.

    Arrays have shape ``(K, len(times))``; row ``k - 1`` holds order ``k``.
    Order 1 is X-bar itself, compensated by drift and first-order jump compensator.
    """

    times: np.ndarray
    raw: np.ndarray
    compensator: np.ndarray
    martingale: np.ndarray

    @property
    def max_order(self) -> int:
        return self.raw.shape[0]


def power_jump_family(
    path: LevyPath,
    params: RegimeLevyParams,
    chain: ChainPath,
    K: int,
    times: np.ndarray | None = None,
) -> PowerJumpFamily:
    if K < 1:
        raise ValidationError("K must be >= 1", module="levy")
    times = path.grid if times is None else np.asarray(times, dtype=float)
    for i in range(params.n_states):
        params.gamma_moment(i, 2 * K)  # raises if the law lacks the moments
    occ = chain.occupation(times, params.n_states)
    raw = np.empty((K, len(times)))
    comp = np.empty((K, len(times)))
    raw[0] = path.value_at(times)
    comp[0] = occ @ params.first_order_drift()
    for k in range(2, K + 1):
        raw[k - 1] = path.jump_sum(times, k)
        comp[k - 1] = occ @ params.compensator_rates(k)
    return PowerJumpFamily(times, raw, comp, raw - comp)


@dataclass
class MomentReport:
    passed: bool
    lam_probe: float
    eps_probe: float
    failures: list[str] = field(default_factory=list)
    checked: list[str] = field(default_factory=list)


def check_moment_condition(
    params: RegimeLevyParams,
    lam_probe: float,
    eps_probe: float,
    impulse_laws: Sequence[JumpLaw] | None = None,
) -> MomentReport:
    """Analytic check of the exponential moment condition for the catalog.

    For each regime ``i`` decide whether ``int exp(lam |gamma_i(x)|) nu(dx)``
    is finite, and (if given) whether ``E exp(lam |U^(i)|)`` is finite for the
    impulse laws. The Lévy measure is finite, so the restriction to
    ``|x| >= eps`` never changes the verdict.
    """
    report = MomentReport(True, float(lam_probe), float(eps_probe))
    if params.jump_rate > 0:
        for i in range(params.n_states):
            power, coef = params.gamma.tail_power(i)
            ok = coef == 0.0 or params.jump_law.exp_moment_finite(lam_probe * coef, power)
            report.checked.append(f"levy state {i}")
            if not ok:
                report.passed = False
                report.failures.append(
                    f"state {i}: exp({lam_probe:g}|gamma_{i}(x)|) is not integrable against the "
                    f"{params.jump_law.kind} jump law (|gamma| grows like |x|^{power})"
                )
    for i, law in enumerate(impulse_laws or ()):
        report.checked.append(f"impulse law {i}")
        if not law.exp_moment_finite(lam_probe, 1):
            report.passed = False
            report.failures.append(f"impulse law {i} ({law.kind}) has no exponential moment at {lam_probe:g}")
    return report
