"""Pathwise check of the polynomial representation of X-bar^g Phi-bar_j^p Psi-bar_i^b.

The product is rebuilt from its Itô expansion: stochastic integrals
against X-bar^(k), Phi-bar_j and Psi-bar_i^(l) with left-point integrands,
jump-correction terms summed exactly over the recorded jumps, and Lebesgue
terms with left-point integrands. Paths are simulated once on the finest
step; coarser levels keep the coarse grid plus every event time, so all
levels share the same randomness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Sequence

import numpy as np

from ..chain import simulate_chain
from ..errors import UnsupportedOrderError, ValidationError
from ..impulse import simulate_impulse
from ..levy import simulate_levy

MAX_TOTAL_POWER = 3
DEFAULT_STEPS = (2.0**-8, 2.0**-10, 2.0**-12)
ROUNDOFF_FLOOR = 1e-12
BLOCK = 250


@dataclass
class OracleSample:
    """Fine-step paths padded to a common number of knots.

    Arrays have shape ``(n_paths, n_knots)``. ``grid_idx`` is the index of a
    knot on the finest grid (``-1`` for off-grid event knots and padding);
    ``xbar`` is X-bar at each knot; ``ax`` the Lévy jump at the knot;
    ``dest`` the state entered by the chain at the knot (``-1`` if none);
    ``u`` the impulse drawn there; ``regime`` the state on
    ``[t_k, t_{k+1})``; ``phibar`` and ``psibar`` have a trailing state axis.
    """

    config: object
    path_ids: np.ndarray
    finest_step: float
    t: np.ndarray
    grid_idx: np.ndarray
    event: np.ndarray
    xbar: np.ndarray
    ax: np.ndarray
    dest: np.ndarray
    u: np.ndarray
    regime: np.ndarray
    phibar: np.ndarray
    psibar: np.ndarray

    @property
    def n_paths(self) -> int:
        return len(self.path_ids)


def oracle_sample(config, path_ids: Sequence[int], finest_step: float) -> OracleSample:
    """Simulate ``path_ids`` of ``config`` on the integration partition with step ``finest_step``."""
    path_ids = np.asarray(path_ids, dtype=np.int64)
    n = config.n_states
    per_path = []
    for pid in path_ids:
        pid = int(pid)
        chain = simulate_chain(config.chain, config.horizon, config.seed, path_id=pid)
        levy = simulate_levy(config.levy, chain, finest_step, config.seed, path_id=pid, check_moments=False)
        imp = simulate_impulse(chain, config.impulse, 1, config.seed, path_id=pid)
        t = levy.knot_times
        k = len(t)
        gi = np.rint(t / finest_step)
        grid_idx = np.where(gi * finest_step == t, gi, -1).astype(np.int64)
        ax = np.zeros(k)
        pos = np.searchsorted(t, levy.jump_times)
        ax[pos] = levy.jump_applied
        dest = np.full(k, -1, dtype=np.int64)
        u = np.zeros(k)
        epochs = chain.epochs[chain.epochs <= config.horizon]
        pos_e = np.searchsorted(t, epochs)
        dest[pos_e] = chain.states[1 : len(epochs) + 1]
        u[pos_e] = imp.values[: len(epochs)]
        event = np.zeros(k, dtype=bool)
        event[pos] = True
        event[pos_e] = True
        occ = chain.occupation(t, n)
        phi = occ @ config.chain.entry_rate_matrix()
        counts = np.zeros((k, n))
        psi = np.zeros((k, n))
        if len(pos_e):
            np.add.at(counts, (pos_e, dest[pos_e]), 1.0)
            np.add.at(psi, (pos_e, dest[pos_e]), u[pos_e])
        counts = np.cumsum(counts, axis=0)
        psi = np.cumsum(psi, axis=0)
        m1 = np.array([config.impulse.moment(i, 1) for i in range(n)])
        per_path.append(
            dict(
                t=t,
                grid_idx=grid_idx,
                event=event,
                xbar=levy.value_at(t),
                ax=ax,
                dest=dest,
                u=u,
                regime=chain.state_at(t),
                phibar=counts - phi,
                psibar=psi - phi * m1,
            )
        )
    width = max(len(p["t"]) for p in per_path)

    def pad(name, fill=None):
        first = per_path[0][name]
        shape = (len(per_path), width) + first.shape[1:]
        out = np.empty(shape, dtype=first.dtype)
        for r, p in enumerate(per_path):
            a = p[name]
            out[r, : len(a)] = a
            out[r, len(a) :] = a[-1] if fill is None else fill
        return out

    return OracleSample(
        config=config,
        path_ids=path_ids,
        finest_step=float(finest_step),
        t=pad("t"),
        grid_idx=pad("grid_idx", -1),
        event=pad("event", False),
        xbar=pad("xbar"),
        ax=pad("ax", 0.0),
        dest=pad("dest", -1),
        u=pad("u", 0.0),
        regime=pad("regime"),
        phibar=pad("phibar"),
        psibar=pad("psibar"),
    )


@dataclass
class PolyOracleReport:
    powers: tuple[int, int, int]
    states: tuple[int, int]
    steps: list[float]
    rms_error: list[float]
    max_error: list[float]
    lhs_rms: float
    terms: list[dict[str, float]] = field(default_factory=list)
    n_paths: int = 0

    @property
    def relative_rms(self) -> list[float]:
        scale = self.lhs_rms if self.lhs_rms > 0 else 1.0
        return [e / scale for e in self.rms_error]

    def nonincreasing(self, floor: float = ROUNDOFF_FLOOR) -> bool:
        """RMS errors do not grow as the step shrinks, up to a roundoff floor."""
        tol = floor * max(1.0, self.lhs_rms)
        order = np.argsort(self.steps)[::-1]
        errs = [self.rms_error[k] for k in order]
        return all(b <= a + tol for a, b in zip(errs, errs[1:]))

    def rows(self) -> list[tuple[float, int, int, int, float, float]]:
        g, p, b = self.powers
        return [(s, g, p, b, m, r) for s, m, r in zip(self.steps, self.max_error, self.rms_error)]


def _pow(v, k):
    return v**k if k > 0 else np.ones_like(v)


def _level_block(s: OracleSample, rows: slice, step: float, g: int, p: int, b: int, i: int, j: int):
    cfg = s.config
    f = int(round(step / s.finest_step))
    t = s.t[rows]
    gidx = s.grid_idx[rows]
    kept = s.event[rows] | ((gidx >= 0) & (gidx % f == 0))
    kept[:, 0] = True
    ar = np.arange(t.shape[1])
    left = np.maximum.accumulate(np.where(kept, ar, 0), axis=1)
    x = s.xbar[rows]
    ax = s.ax[rows]
    dest = s.dest[rows]
    u = s.u[rows]
    y = s.phibar[rows][:, :, j]
    z = s.psibar[rows][:, :, i]
    e = (dest == j).astype(float)
    fz = np.where(dest == i, u, 0.0)
    reg = s.regime[rows]

    a = np.take_along_axis
    la = left[:, :-1]
    xa, ya, za = a(x, la, 1), a(y, la, 1), a(z, la, 1)
    xm, ym, zm = x[:, 1:] - ax[:, 1:], y[:, 1:] - e[:, 1:], z[:, 1:] - fz[:, 1:]
    jx, je, jf = ax[:, 1:], e[:, 1:], fz[:, 1:]
    dt = np.diff(t, axis=1)
    r = reg[:, :-1]
    dxc = xm - x[:, :-1]
    dyc = ym - y[:, :-1]
    dzc = zm - z[:, :-1]

    lev = cfg.levy
    qoff = cfg.chain.entry_rate_matrix()
    lam_j = qoff[:, j][r]
    lam_i = qoff[:, i][r]
    m_i = [cfg.impulse.moment(i, k) for k in range(b + 1)]
    c1 = lev.first_order_drift()[r]
    sig2 = (lev.sigma0**2)[r]

    def Pa(al, be, ga):
        if min(al, be, ga) < 0:
            return None
        return _pow(xa, al) * _pow(ya, be) * _pow(za, ga)

    def Pm(al, be, ga):
        if min(al, be, ga) < 0:
            return None
        return _pow(xm, al) * _pow(ym, be) * _pow(zm, ga)

    incs: dict[str, np.ndarray] = {}

    def add(name, value):
        incs[name] = incs[name] + value if name in incs else value

    def integral(coef, powers, cont, jump, rate=None):
        """coef * int P d(martingale); returns (stochastic, lebesgue) increments."""
        pa, pm = Pa(*powers), Pm(*powers)
        if pa is None or coef == 0:
            return
        stoch = coef * (pa * cont + pm * jump)
        add("stochastic", stoch)
        if rate is not None:
            add("I7", coef * pa * rate * dt)

    # Itô terms against the driving processes
    if g:
        integral(g, (g - 1, p, b), dxc - c1 * dt, jx)
        add("T1_drift", g * Pa(g - 1, p, b) * c1 * dt)
    if p:
        integral(p, (g, p - 1, b), dyc, je)
    if b:
        integral(b, (g, p, b - 1), dzc, jf)
    if g >= 2:
        add("I1", 0.5 * g * (g - 1) * Pa(g - 2, p, b) * sig2 * dt)
    # jump corrections in compensated form plus their Lebesgue parts
    for m2 in range(1, p + 1):
        integral(comb(p, m2), (g, p - m2, b), -lam_j * dt, je, lam_j)
    if i == j:
        for m3 in range(1, b + 1):
            for m2 in range(1, p + 1):
                rate = m_i[m3] * lam_i
                integral(comb(b, m3) * comb(p, m2), (g, p - m2, b - m3), -rate * dt, jf**m3, rate)
    for m1 in range(2, g + 1):
        rate = lev.compensator_rates(m1)[r]
        integral(comb(g, m1), (g - m1, p, b), -rate * dt, jx**m1, rate)
    for m3 in range(1, b + 1):
        rate = m_i[m3] * lam_i
        integral(comb(b, m3), (g, p, b - m3), -rate * dt, jf**m3, rate)
    if p:
        integral(-p, (g, p - 1, b), -lam_j * dt, je, lam_j)
    if b:
        rate = m_i[1] * lam_i
        integral(-b, (g, p, b - 1), -rate * dt, jf, rate)

    lhs = _pow(x, g) * _pow(y, p) * _pow(z, b)
    total = sum(incs.values()) if incs else np.zeros_like(dt)
    rhs = lhs[:, :1] + np.concatenate((np.zeros((len(t), 1)), np.cumsum(total, axis=1)), axis=1)
    err = rhs - lhs
    on_grid = (gidx >= 0) & (gidx % f == 0)
    terminal = {name: v.sum(axis=1) for name, v in incs.items()}
    return err[:, -1], np.where(on_grid, np.abs(err), 0.0).max(axis=1), lhs[:, -1], terminal


def poly_representation_oracle(
    source,
    g: int,
    p: int,
    b: int,
    i: int = 0,
    j: int = 0,
    steps: Sequence[float] = DEFAULT_STEPS,
    *,
    n_paths: int = 1000,
    sample: OracleSample | None = None,
) -> PolyOracleReport:
    """Reconstruct X-bar^g Phi-bar_j^p Psi-bar_i^b from its Itô expansion at each step.

    ``source`` is a path bundle (its configuration and first ``n_paths``
    path ids are used) or a scenario configuration. Pass ``sample`` to
    reuse simulated fine paths across calls.
    """
    if min(g, p, b) < 0:
        raise ValidationError("powers must be >= 0", module="represent")
    if g + p + b > MAX_TOTAL_POWER:
        raise UnsupportedOrderError(
            f"g + p + b = {g + p + b} exceeds the supported total power {MAX_TOTAL_POWER}", module="represent"
        )
    steps = sorted((float(x) for x in steps), reverse=True)
    if sample is None:
        config = getattr(source, "config", source)
        ids = getattr(source, "path_ids", np.arange(n_paths))[:n_paths]
        sample = oracle_sample(config, ids, steps[-1])
    cfg = sample.config
    if not (0 <= i < cfg.n_states and 0 <= j < cfg.n_states):
        raise ValidationError("states out of range", module="represent")
    for st in steps:
        ratio = st / sample.finest_step
        if abs(ratio - round(ratio)) > 1e-9 or ratio < 1 - 1e-9:
            raise ValidationError(f"step {st} is not a multiple of the sample step", module="represent")
    rms, mx, term_rows = [], [], []
    lhs_sq = None
    for st in steps:
        errs, maxes, lhs_all, terms = [], [], [], {}
        for start in range(0, sample.n_paths, BLOCK):
            e, m, lhs, tm = _level_block(sample, slice(start, start + BLOCK), st, g, p, b, i, j)
            errs.append(e)
            maxes.append(m)
            lhs_all.append(lhs)
            for k, v in tm.items():
                terms.setdefault(k, []).append(v)
        e = np.concatenate(errs)
        rms.append(float(np.sqrt(np.mean(e**2))))
        mx.append(float(np.max(np.concatenate(maxes))))
        term_rows.append({k: float(np.sqrt(np.mean(np.concatenate(v) ** 2))) for k, v in terms.items()})
        lhs_sq = float(np.mean(np.concatenate(lhs_all) ** 2))
    return PolyOracleReport((g, p, b), (i, j), steps, rms, mx, float(np.sqrt(lhs_sq)), term_rows, sample.n_paths)
