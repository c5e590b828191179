"""Predictable representation by cross-sectional regression and out-of-sample replication.

Conditional expectations M(t) = E[F | F_t] are estimated at every bucket
boundary by least squares of the payoff on a fixed feature catalog of the
time-t state. Integrands are constant on each bucket and linear in
left-endpoint features (regime indicators and X-bar); their coefficients
come from regressing the increment of the estimated M on the products of
those features with the increments of the compensated martingales.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import LookAheadError, RefusalError, ValidationError
from ..ortho import pivoted_gram_schmidt

MIN_PATHS_PER_REGRESSOR = 10
COLLINEAR_TOL = 1e-10

Key = tuple[str, int]


@dataclass(frozen=True)
class PayoffSpec:
    """Catalog payoff.

    kind
        ``terminal_linear`` X(T); ``terminal_square`` X-bar(T)^2;
        ``terminal_count`` Phi-bar_state(T); ``terminal_impulse``
        Psi-bar_state^(1)(T); ``indicator`` 1{J(T) = state};
        ``basis`` the column ``element`` at T (e.g. ``("G_0", 1)``);
        ``polynomial`` sum of ``coef * Xbar^g * Phibar_j^p * Psibar_i^b``
        over ``terms = ((coef, g, p, b), ...)`` with ``j = phi_state`` and
        ``i = psi_state``; ``zero``.
    """

    kind: str
    state: int = 0
    element: Key | None = None
    terms: tuple[tuple[float, int, int, int], ...] = ()
    phi_state: int = 0
    psi_state: int = 0

    KINDS = ("terminal_linear", "terminal_square", "terminal_count", "terminal_impulse",
             "indicator", "basis", "polynomial", "zero")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValidationError(f"unknown payoff kind {self.kind!r}", module="represent")
        if self.kind == "basis" and self.element is None:
            raise ValidationError("basis payoff needs an element", module="represent")
        if self.kind == "polynomial" and any(min(t[1:]) < 0 or sum(t[1:]) > 6 for t in self.terms):
            raise ValidationError("polynomial payoff terms must have degree 0..6", module="represent")

    def evaluate(self, bundle) -> np.ndarray:
        last = [len(bundle.times) - 1]
        n = bundle.n_states
        if self.kind != "zero" and self.kind in ("terminal_count", "terminal_impulse", "indicator") and not 0 <= self.state < n:
            raise ValidationError(f"payoff state {self.state} out of range", module="represent")
        if self.kind == "zero":
            return np.zeros(bundle.n_paths)
        if self.kind == "terminal_linear":
            key = ("X", 0) if n > 1 else ("Xbar", 0)
            return bundle.column(*key, idx=last)[:, 0]
        if self.kind == "terminal_square":
            return bundle.column("Xbar", 0, idx=last)[:, 0] ** 2
        if self.kind == "terminal_count":
            return _terminal(bundle, f"Phibar_{self.state}", 0)
        if self.kind == "terminal_impulse":
            return _terminal(bundle, f"Psibar_{self.state}", 1)
        if self.kind == "indicator":
            return (bundle.regime(idx=last)[:, 0] == self.state).astype(float)
        if self.kind == "basis":
            return bundle.column(*self.element, idx=last)[:, 0]
        x = bundle.column("Xbar", 0, idx=last)[:, 0]
        y = _terminal(bundle, f"Phibar_{self.phi_state}", 0)
        z = _terminal(bundle, f"Psibar_{self.psi_state}", 1)
        out = np.zeros(bundle.n_paths)
        for coef, g, p, b in self.terms:
            out += coef * x**g * y**p * z**b
        return out


def _terminal(bundle, name, order):
    if bundle.n_states == 1:
        return np.zeros(bundle.n_paths)
    return bundle.column(name, order, idx=[len(bundle.times) - 1])[:, 0]


def martingale_keys(n_states: int, K: int, L: int, has_jumps: bool = True) -> list[Key]:
    """Integrators in raw order: X-bar^(1..K), Phi-bar_j, Psi-bar_i^(l)."""
    keys: list[Key] = [("Xteu", k) for k in range(1, (K if has_jumps else 1) + 1)]
    if n_states > 1:
        keys += [(f"Phibar_{j}", 0) for j in range(n_states)]
        keys += [(f"Psibar_{i}", l) for i in range(n_states) for l in range(1, L + 1)]
    return keys


def _state_features(bundle, g: int, interactions: bool) -> tuple[np.ndarray, list[str]]:
    """Feature matrix for E[F | F_t] at time index ``g``."""
    n = bundle.n_states
    idx = [g]
    x = bundle.column("Xbar", 0, idx=idx)[:, 0]
    cols = [np.ones(bundle.n_paths), x, x**2, x**3]
    names = ["1", "Xbar", "Xbar^2", "Xbar^3"]
    if n > 1:
        J = bundle.regime(idx=idx)[:, 0]
        for i in range(1, n):
            cols.append((J == i).astype(float))
            names.append(f"J={i}")
        for j in range(n):
            cols.append(bundle.column(f"Phi_{j}", 0, idx=idx)[:, 0])
            names.append(f"Phi_{j}")
            cols.append(bundle.column(f"phi_{j}", 0, idx=idx)[:, 0])
            names.append(f"phi_{j}")
        for i in range(n):
            cols.append(bundle.column(f"Psi_{i}", 1, idx=idx)[:, 0])
            names.append(f"Psi_{i}")
        if interactions:
            for i in range(n):
                cols.append((J == i) * x)
                names.append(f"J={i}*Xbar")
    return np.column_stack(cols), names


def _integrand_features(bundle, g: int) -> tuple[np.ndarray, list[str]]:
    """Left-endpoint integrand features: regime indicators and X-bar."""
    n = bundle.n_states
    x = bundle.column("Xbar", 0, idx=[g])[:, 0]
    if n == 1:
        return np.column_stack([np.ones(bundle.n_paths), x]), ["1", "Xbar"]
    J = bundle.regime(idx=[g])[:, 0]
    cols = [(J == i).astype(float) for i in range(n)] + [x]
    return np.column_stack(cols), [f"J={i}" for i in range(n)] + ["Xbar"]


@dataclass
class LeastSquaresFit:
    coef: np.ndarray
    kept: np.ndarray
    condition: float


def fit_least_squares(A: np.ndarray, y: np.ndarray, tol: float = COLLINEAR_TOL) -> LeastSquaresFit:
    """Least squares after dropping collinear columns in column order."""
    p = A.shape[1]
    scale = np.sqrt(np.mean(A**2, axis=0))
    live = scale > 0
    As = np.zeros_like(A)
    As[:, live] = A[:, live] / scale[live]
    gram = As.T @ As / len(A)
    _, kept_idx, _ = pivoted_gram_schmidt(gram, tol)
    kept = np.zeros(p, dtype=bool)
    kept[kept_idx] = True
    kept &= live
    coef = np.zeros(p)
    cond = 1.0
    if kept.any():
        sol, _, _, sv = np.linalg.lstsq(As[:, kept], y, rcond=None)
        coef[kept] = sol / scale[kept]
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    return LeastSquaresFit(coef, kept, cond)


def relative_l2(err: np.ndarray, ref: np.ndarray) -> tuple[float, float]:
    """||err|| / ||ref|| over paths with a delta-method standard error."""
    n = len(err)
    u, v = err**2, ref**2
    vbar = v.mean()
    if vbar == 0.0:
        return (0.0, 0.0) if not np.any(err) else (float("inf"), float("nan"))
    R = u.mean() / vbar
    r = float(np.sqrt(R))
    se_R = np.sqrt(np.var(u - R * v, ddof=1) / n) / vbar if n > 1 else float("nan")
    se = float(se_R / (2 * r)) if r > 0 else 0.0
    return r, se


@dataclass
class RepresentationEstimate:
    """Bucketed integrand estimates.

    ``coef[g, q, m]`` is the weight of integrand feature ``q`` (measured at
    ``times[g]``) in the integrand of martingale ``m`` on bucket ``g``. In
    the X-form the first integrator is the compensated full process
    X-bar^(1) + sum_i Psi-bar_i^(1) rather than X-bar^(1).
    """

    payoff: PayoffSpec
    K: int
    L: int
    form: str
    times: np.ndarray
    martingales: list[Key]
    features: list[str]
    coef: np.ndarray
    kept: np.ndarray
    m0_features: list[str]
    m0_coef: np.ndarray
    path_ids: np.ndarray
    residual: float
    residual_stderr: float
    condition: np.ndarray
    integrand_mean: np.ndarray
    integrand_stderr: np.ndarray
    feature_shift: int = 0
    interactions: bool = False
    dropped: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_buckets(self) -> int:
        return len(self.times) - 1

    def index(self, key: Key) -> int:
        return self.martingales.index(key)

    def integrand(self, bundle, key: Key) -> np.ndarray:
        """Integrand values per path and bucket; shape ``(n_paths, n_buckets)``."""
        m = self.index(key)
        out = np.empty((bundle.n_paths, self.n_buckets))
        for g in range(self.n_buckets):
            f, _ = _integrand_features(bundle, _shifted(g, self.feature_shift, self.n_buckets))
            out[:, g] = f @ self.coef[g, :, m]
        return out

    def to_form(self, form: str) -> RepresentationEstimate:
        """Switch between the X-bar-form and the X-form of the l = 1 impulse integrands."""
        if form not in ("xbar", "x"):
            raise ValidationError(f"unknown form {form!r}", module="represent")
        if form == self.form:
            return self
        coef = self.coef.copy()
        mean = self.integrand_mean.copy()
        x = self.index(("Xteu", 1))
        sign = -1.0 if form == "x" else 1.0
        for m, (name, order) in enumerate(self.martingales):
            if name.startswith("Psibar_") and order == 1:
                coef[:, :, m] = coef[:, :, m] + sign * self.coef[:, :, x]
                mean[:, m] = mean[:, m] + sign * self.integrand_mean[:, x]
        return replace(self, form=form, coef=coef, integrand_mean=mean)

    def table(self) -> list[tuple[int, str, float, float]]:
        """Rows ``(bucket, basis_element, integrand_estimate, stderr)``."""
        rows = []
        for g in range(self.n_buckets):
            for m, (name, order) in enumerate(self.martingales):
                label = "X" if (self.form == "x" and (name, order) == ("Xteu", 1)) else f"{name}^{order}"
                rows.append((g, label, float(self.integrand_mean[g, m]), float(self.integrand_stderr[g, m])))
        return rows


def _shifted(g: int, shift: int, n_buckets: int) -> int:
    return min(max(g + shift, 0), n_buckets)


def _bucket_indices(bundle, buckets) -> np.ndarray:
    if buckets is None:
        return np.arange(len(bundle.times))
    if np.isscalar(buckets):
        n = int(buckets)
        G = len(bundle.times) - 1
        if n < 1 or G % n:
            raise ValidationError(f"{n} buckets do not divide the {G} reporting steps", module="represent")
        return np.arange(0, G + 1, G // n)
    b = np.asarray(buckets, dtype=float)
    idx = np.searchsorted(bundle.times, b)
    if np.any(idx >= len(bundle.times)) or np.any(np.abs(bundle.times[idx] - b) > 1e-12):
        raise ValidationError("bucket boundaries must lie on the reporting grid", module="represent")
    if idx[0] != 0 or idx[-1] != len(bundle.times) - 1 or np.any(np.diff(idx) <= 0):
        raise ValidationError("buckets must increase from 0 to the horizon", module="represent")
    return idx


def _increment(bundle, key: Key, form: str, a: int, b: int) -> np.ndarray:
    idx = [a, b]
    z = bundle.column(*key, idx=idx)
    d = z[:, 1] - z[:, 0]
    if form == "x" and key == ("Xteu", 1):
        for i in range(bundle.n_states if bundle.n_states > 1 else 0):
            p = bundle.column(f"Psibar_{i}", 1, idx=idx)
            d = d + (p[:, 1] - p[:, 0])
    return d


def _design(bundle, keys, form, a, b, feat_idx):
    f, fnames = _integrand_features(bundle, feat_idx)
    incs = [_increment(bundle, key, form, a, b) for key in keys]
    cols = [f[:, q] * dz for dz in incs for q in range(f.shape[1])]
    return np.column_stack(cols), f, fnames


def estimate_predictable_representation(
    bundle,
    payoff: PayoffSpec,
    K: int | None = None,
    L: int | None = None,
    buckets=None,
    *,
    interactions: bool = False,
    feature_shift: int = 0,
) -> RepresentationEstimate:
    """Estimate the integrands of the predictable representation of ``payoff``.

    ``buckets`` is ``None`` (every reporting step), a bucket count dividing
    the reporting grid, or explicit boundaries on it. ``feature_shift``
    evaluates the integrand features that many buckets late; it exists
    only to demonstrate that look-ahead is detected and must stay 0 for
    genuine estimates.
    """
    config = bundle.config
    K = config.K if K is None else int(K)
    L = config.L if L is None else int(L)
    if not 1 <= K <= config.K or not 1 <= L <= config.L:
        raise ValidationError("truncation orders exceed the simulated orders", module="represent")
    keys = martingale_keys(bundle.n_states, K, L, config.levy.jump_rate > 0)
    bidx = _bucket_indices(bundle, buckets)
    G = len(bidx) - 1
    n_feat = bundle.n_states + 1
    n_reg = n_feat * len(keys)
    if bundle.n_paths < MIN_PATHS_PER_REGRESSOR * max(n_reg, 4 + 4 * bundle.n_states):
        raise RefusalError(
            f"{bundle.n_paths} paths are too few for {n_reg} regressors per bucket", module="represent"
        )
    F = payoff.evaluate(bundle)

    def conditional(g):
        if bidx[g] == len(bundle.times) - 1:
            return F.copy(), None, None
        A, names = _state_features(bundle, bidx[g], interactions)
        fit = fit_least_squares(A, F)
        return A @ fit.coef, fit, names

    M_prev, fit0, m0_names = conditional(0)
    m0_coef = fit0.coef if fit0 is not None else np.zeros(0)
    coef = np.zeros((G, n_feat, len(keys)))
    kept = np.zeros((G, n_feat, len(keys)), dtype=bool)
    cond = np.zeros(G)
    mean = np.zeros((G, len(keys)))
    stderr = np.zeros((G, len(keys)))
    dropped = []
    rep = M_prev.copy()
    fnames: list[str] = []
    for g in range(G):
        M_next, _, _ = conditional(g + 1)
        a, b = bidx[g], bidx[g + 1]
        feat_at = bidx[_shifted(g, feature_shift, G)]
        A, f, fnames = _design(bundle, keys, "xbar", a, b, feat_at)
        fit = fit_least_squares(A, M_next - M_prev)
        c = fit.coef.reshape(len(keys), n_feat).T
        coef[g] = c
        kept[g] = fit.kept.reshape(len(keys), n_feat).T
        cond[g] = fit.condition
        h = f @ c
        mean[g] = h.mean(axis=0)
        stderr[g] = h.std(axis=0, ddof=1) / np.sqrt(len(h))
        rep += A @ fit.coef
        for m, key in enumerate(keys):
            if not kept[g, :, m].any():
                dropped.append((g, f"{key[0]}^{key[1]}"))
        M_prev = M_next
    residual, res_se = relative_l2(rep - F, F)
    return RepresentationEstimate(
        payoff=payoff,
        K=K,
        L=L,
        form="xbar",
        times=bundle.times[bidx],
        martingales=keys,
        features=fnames,
        coef=coef,
        kept=kept,
        m0_features=m0_names or [],
        m0_coef=m0_coef,
        path_ids=np.asarray(bundle.path_ids).copy(),
        residual=residual,
        residual_stderr=res_se,
        condition=cond,
        integrand_mean=mean,
        integrand_stderr=stderr,
        feature_shift=int(feature_shift),
        interactions=bool(interactions),
        dropped=dropped,
    )


@dataclass
class ReplicationReport:
    relative_error: float
    stderr: float
    n_paths: int
    rms_error: float
    rms_payoff: float
    form: str


def replicate(estimate: RepresentationEstimate, bundle, payoff: PayoffSpec | None = None) -> ReplicationReport:
    """Out-of-sample replication: M(0) plus the bucketed stochastic-integral sums."""
    payoff = estimate.payoff if payoff is None else payoff
    overlap = np.intersect1d(estimate.path_ids, bundle.path_ids)
    if overlap.size:
        raise LookAheadError(
            f"{overlap.size} evaluation paths were used for estimation (first id {int(overlap[0])})",
            module="represent",
        )
    F = payoff.evaluate(bundle)
    idx = np.searchsorted(bundle.times, estimate.times)
    if np.any(np.abs(bundle.times[idx] - estimate.times) > 1e-12):
        raise ValidationError("bundle grid does not contain the estimate's buckets", module="represent")
    G = estimate.n_buckets
    A0, _ = _state_features(bundle, 0, estimate.interactions)
    rep = A0 @ estimate.m0_coef
    for g in range(G):
        feat_at = idx[_shifted(g, estimate.feature_shift, G)]
        A, _, _ = _design(bundle, estimate.martingales, estimate.form, idx[g], idx[g + 1], feat_at)
        rep += A @ estimate.coef[g].T.reshape(-1)
    r, se = relative_l2(rep - F, F)
    return ReplicationReport(
        relative_error=r,
        stderr=se,
        n_paths=bundle.n_paths,
        rms_error=float(np.sqrt(np.mean((rep - F) ** 2))),
        rms_payoff=float(np.sqrt(np.mean(F**2))),
        form=estimate.form,
    )
