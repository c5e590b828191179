"""Orthonormal martingale families from exact Gram matrices.

Impulse family for state ``i``: raw index 0 is Phi-bar_i, raw index ``l``
is Psi-bar_i^(l); element ``G_i^(l)`` is row ``l - 1``.

Teugels family for state ``i``: raw index ``k`` is X-bar^(k+1); element
``H^(k)`` is row ``k - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .chain import ChainSpec, expected_jumps_per_unit
from .errors import NumericError, RefusalError, ValidationError
from .impulse import JumpLawSet
from .levy import RegimeLevyParams

PSD_TOL = 1e-10
DEFAULT_PIVOT_TOL = 1e-10


@dataclass(frozen=True)
class GramMatrix:
    entries: np.ndarray
    kind: str
    state: int
    scale: float = 1.0

    def __post_init__(self):
        g = np.array(self.entries, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValidationError("gram matrix must be square", module="ortho")
        if self.kind not in ("impulse", "teugels"):
            raise ValidationError(f"unknown gram kind {self.kind!r}", module="ortho")
        g.setflags(write=False)
        object.__setattr__(self, "entries", g)

    @property
    def order(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class BasisCoefficients:
    """Rows of orthonormal elements over the raw basis.

    ``matrix`` is ``d x d`` lower triangular; row ``r`` is meaningful only
    if ``r`` is in ``kept_indices`` and is zero otherwise.
    """

    matrix: np.ndarray
    kept_indices: tuple[int, ...]
    kind: str
    state: int
    pivot_tol: float = DEFAULT_PIVOT_TOL
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def order(self) -> int:
        return self.matrix.shape[0]

    def kept_rows(self) -> np.ndarray:
        return self.matrix[list(self.kept_indices)]

    def row(self, r: int) -> np.ndarray:
        if r not in self.kept_indices:
            raise ValidationError(f"raw direction {r} was dropped as degenerate", module="ortho")
        return self.matrix[r]


def impulse_gram(laws: JumpLawSet, spec: ChainSpec, i: int, order: int) -> GramMatrix:
    """G_lh = m_i(l + h) * E Phi_i(1), l, h = 0..order-1."""
    if order < 1:
        raise ValidationError("gram order must be >= 1", module="ortho")
    scale = expected_jumps_per_unit(spec, i)
    if scale <= 0.0:
        raise RefusalError(f"state {i} is never entered; no impulse basis exists for it", module="ortho")
    m = np.array([laws.moment(i, n) for n in range(2 * order - 1)])
    idx = np.add.outer(np.arange(order), np.arange(order))
    return GramMatrix(scale * m[idx], "impulse", i, scale)


def teugels_gram(params: RegimeLevyParams, i: int, order: int) -> GramMatrix:
    """Per-unit-time bracket density of (X-bar^(k+1), X-bar^(h+1)) in regime ``i``."""
    if order < 1:
        raise ValidationError("gram order must be >= 1", module="ortho")
    if params.jump_rate > 0:
        m = np.array([params.gamma_moment(i, n) for n in range(2 * order + 1)])
        idx = np.add.outer(np.arange(order), np.arange(order)) + 2
        g = params.jump_rate * m[idx]
    else:
        g = np.zeros((order, order))
    g[0, 0] += params.sigma0[i] ** 2
    return GramMatrix(g, "teugels", i)


def check_psd(gram: GramMatrix, tol: float = PSD_TOL) -> None:
    g = gram.entries
    if not np.allclose(g, g.T, rtol=0, atol=tol * max(1.0, np.abs(g).max())):
        raise NumericError(f"{gram.kind} gram for state {gram.state} is not symmetric:\n{g}", module="ortho")
    diag = max(float(np.max(np.diag(g))), 0.0)
    eig = np.linalg.eigvalsh(g)
    if eig.min() < -tol * max(diag, np.finfo(float).tiny):
        raise NumericError(
            f"{gram.kind} gram for state {gram.state} is not PSD "
            f"(min eigenvalue {eig.min():.3e}, max diagonal {diag:.3e}):\n{g}",
            module="ortho",
        )


def pivoted_gram_schmidt(g: np.ndarray, pivot_tol: float) -> tuple[np.ndarray, list[int], np.ndarray]:
    """Modified Gram-Schmidt on the unit vectors in the inner product ``g``.

    Directions are visited in index order and dropped (never reordered)
    when their squared residual is at most ``pivot_tol * g[r, r]``. Each
    direction is reorthogonalized once more against the kept ones.
    """
    d = g.shape[0]
    coef = np.zeros((d, d))
    kept: list[int] = []
    residuals = np.zeros(d)
    for r in range(d):
        v = np.zeros(d)
        v[r] = 1.0
        for _ in range(2):
            for q in kept:
                v -= (coef[q] @ g @ v) * coef[q]
        norm2 = float(v @ g @ v)
        residuals[r] = norm2
        if norm2 <= pivot_tol * g[r, r] or norm2 <= 0.0:
            continue
        coef[r] = v / np.sqrt(norm2)
        kept.append(r)
    return coef, kept, residuals


def orthonormalize(gram: GramMatrix, pivot_tol: float = DEFAULT_PIVOT_TOL) -> BasisCoefficients:
    """Orthonormalize the raw basis in the gram inner product, keeping raw order."""
    if pivot_tol < 0:
        raise ValidationError("pivot_tol must be >= 0", module="ortho")
    check_psd(gram)
    coef, kept, residuals = pivoted_gram_schmidt(gram.entries, pivot_tol)
    return BasisCoefficients(coef, tuple(kept), gram.kind, gram.state, float(pivot_tol), residuals)


def _same(coeffs: Sequence[BasisCoefficients]) -> bool:
    first = coeffs[0]
    return all(c.kept_indices == first.kept_indices and np.array_equal(c.matrix, first.matrix) for c in coeffs)


@dataclass
class BasisPaths:
    """H^(k) and G_i^(l) evaluated on a grid (last axis is time)."""

    H: dict[int, np.ndarray]
    G: dict[tuple[int, int], np.ndarray]


def teugels_element(
    k: int,
    coeffs: Sequence[BasisCoefficients],
    xbar: Mapping[int, np.ndarray],
    split: Mapping[tuple[int, int], np.ndarray] | None = None,
) -> np.ndarray | None:
    """H^(k) from per-state coefficients, or ``None`` if direction ``k - 1`` was dropped everywhere.

    With identical coefficients across states this is a plain linear
    combination of the ``xbar`` columns. Otherwise it is the regime-split
    integral sum_i sum_r a^i_{k,r} int 1{J(s-)=e_i} dX-bar^(r), which needs
    the split columns ``split[(i, r)]``.
    """
    r = k - 1
    if all(r not in c.kept_indices for c in coeffs):
        return None
    if _same(coeffs):
        row = coeffs[0].row(r)
        return sum(row[n] * xbar[n + 1] for n in range(r + 1) if row[n] != 0.0)
    if split is None:
        raise ValidationError("state-dependent coefficients need regime-split Teugels columns", module="ortho")
    out = None
    for c in coeffs:
        if r not in c.kept_indices:
            continue
        row = c.matrix[r]
        for n in range(r + 1):
            if row[n] != 0.0:
                term = row[n] * split[(c.state, n + 1)]
                out = term if out is None else out + term
    return out


def impulse_element(
    l: int,
    coeffs: BasisCoefficients,
    phibar: np.ndarray,
    psibar: Mapping[int, np.ndarray],
) -> np.ndarray | None:
    """G_i^(l) = sum_n c_n * raw_n, raw_0 = Phi-bar_i, raw_n = Psi-bar_i^(n)."""
    r = l - 1
    if r not in coeffs.kept_indices:
        return None
    row = coeffs.row(r)
    out = row[0] * phibar
    for n in range(1, r + 1):
        if row[n] != 0.0:
            out = out + row[n] * psibar[n]
    return out


def assemble_basis_paths(
    teugels: Sequence[BasisCoefficients],
    impulse: Mapping[int, BasisCoefficients],
    xbar: Mapping[int, np.ndarray],
    phibar: Mapping[int, np.ndarray],
    psibar: Mapping[tuple[int, int], np.ndarray],
    split: Mapping[tuple[int, int], np.ndarray] | None = None,
) -> BasisPaths:
    """Evaluate every basis element as a pointwise combination of compensated raw paths.

    ``xbar[k]`` is X-bar^(k), ``phibar[i]`` is Phi-bar_i and
    ``psibar[(i, l)]`` is Psi-bar_i^(l).
    """
    H: dict[int, np.ndarray] = {}
    if teugels:
        d = teugels[0].order
        missing = [k for k in range(1, d + 1) if k not in xbar]
        if missing:
            raise ValidationError(f"missing Teugels columns for orders {missing}", module="ortho")
        for k in range(1, d + 1):
            h = teugels_element(k, teugels, xbar, split)
            if h is not None:
                H[k] = h
    G: dict[tuple[int, int], np.ndarray] = {}
    for i, c in impulse.items():
        if i not in phibar or any((i, n) not in psibar for n in range(1, c.order)):
            raise ValidationError(f"missing impulse columns for state {i}", module="ortho")
        for l in range(1, c.order + 1):
            g = impulse_element(l, c, phibar[i], {n: psibar[(i, n)] for n in range(1, c.order)})
            if g is not None:
                G[(i, l)] = g
    return BasisPaths(H, G)


def coefficient_report(coeffs: Sequence[BasisCoefficients]) -> str:
    """Plain-text dump: one block per (kind, state), one line per raw row.

    Layout::

        # kind=<kind> state=<i> order=<d> pivot_tol=<tol> kept=<r0,r1,...>
        row <r> kept|dropped residual=<v> : c_0 c_1 ... c_{d-1}
    """
    lines = []
    for c in coeffs:
        kept = ",".join(str(r) for r in c.kept_indices)
        lines.append(f"# kind={c.kind} state={c.state} order={c.order} pivot_tol={c.pivot_tol:.3g} kept={kept}")
        for r in range(c.order):
            status = "kept" if r in c.kept_indices else "dropped"
            res = c.residuals[r] if len(c.residuals) else float("nan")
            vals = " ".join(f"{x:.17g}" for x in c.matrix[r])
            lines.append(f"row {r} {status} residual={res:.17g} : {vals}")
    return "\n".join(lines) + "\n"
