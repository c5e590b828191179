"""Monte Carlo checks of martingale nullity and orthonormality on a bundle.

Both tests only report; callers decide what a raised flag means. The
z-threshold is fixed at 4.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from ..chain import expected_occupation
from .engine import Key, PathBundle

Z_THRESHOLD = 4.0
N_PROBES = 8
ORTHONORMAL_TOL = 0.05


def _label(key) -> str:
    name, order = key
    return f"{name}^{order}" if order else name


def default_martingales(bundle: PathBundle, max_order: int = 3) -> list[Key]:
    """Every compensated process in the bundle: Phi-bar_j, Psi-bar_i^(l), X-bar^(k) up to ``max_order``."""
    c = bundle.config
    keys: list[Key] = []
    if bundle.n_states > 1:
        keys += [(f"Phibar_{j}", 0) for j in range(c.n_states)]
        keys += [(f"Psibar_{i}", l) for i in range(c.n_states) for l in range(1, min(c.L, max_order) + 1)]
    kmax = min(c.K, max_order) if c.levy.jump_rate > 0 else 1
    keys += [("Xteu", k) for k in range(1, kmax + 1)]
    return keys


def probe_indices(bundle: PathBundle, n_probes: int = N_PROBES) -> np.ndarray:
    """``n_probes`` report-grid indices spread evenly over ``(0, T]``."""
    g = len(bundle.times) - 1
    idx = np.unique(np.round(np.linspace(0, g, n_probes + 1)[1:]).astype(int))
    return idx[idx > 0]


def _mean_z(v: np.ndarray) -> tuple[float, float, float]:
    n = len(v)
    mean = float(np.mean(v))
    se = float(np.std(v, ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    if se > 0:
        z = mean / se
    else:
        z = 0.0 if mean == 0.0 else float("inf")
    return mean, se, z


@dataclass
class MartingaleReport:
    """Per-process, per-probe z-statistics of the mean and of conditional increments."""

    config_hash: str
    n_paths: int
    means: pd.DataFrame
    increments: pd.DataFrame
    threshold: float = Z_THRESHOLD

    @property
    def flagged(self) -> bool:
        return bool(self.means["flagged"].any() or self.increments["flagged"].any())

    def flagged_processes(self) -> list[str]:
        names = set(self.means.loc[self.means["flagged"], "process"])
        names |= set(self.increments.loc[self.increments["flagged"], "process"])
        return sorted(names)

    def max_abs_z(self, process: str | None = None) -> float:
        m = self.means if process is None else self.means[self.means["process"] == process]
        return float(np.abs(m["z"]).max()) if len(m) else 0.0


def martingale_test(
    bundle: PathBundle,
    processes: Sequence[Key] | Mapping[str, np.ndarray] | None = None,
    probes: Sequence[int] | None = None,
    *,
    threshold: float = Z_THRESHOLD,
) -> MartingaleReport:
    """z-test of the sample mean at each probe time, plus a conditional-increment probe.

    ``processes`` is a list of bundle column keys, or a mapping from a
    label to an explicit ``(n_paths, n_times)`` array on the report grid
    (used to inject broken compensators). The increment test compares
    ``M(t2) - M(t1)`` on ``{M(t1) > 0}`` and ``{M(t1) <= 0}`` for
    consecutive probes ``t1 < t2``.
    """
    if processes is None:
        processes = default_martingales(bundle)
    if isinstance(processes, Mapping):
        items = list(processes.items())
    else:
        items = [(_label(k), k) for k in processes]
    idx = probe_indices(bundle) if probes is None else np.asarray(probes)
    mean_rows, inc_rows = [], []
    for label, src in items:
        values = src[:, idx] if isinstance(src, np.ndarray) else bundle.column(*src, idx=idx)
        for c, t_idx in enumerate(idx):
            mean, se, z = _mean_z(values[:, c])
            mean_rows.append((label, float(bundle.times[t_idx]), mean, se, z, abs(z) > threshold))
        for c in range(len(idx) - 1):
            base = values[:, c]
            inc = values[:, c + 1] - base
            for sign, mask in (("pos", base > 0), ("nonpos", base <= 0)):
                if mask.sum() < 2:
                    continue
                mean, se, z = _mean_z(inc[mask])
                inc_rows.append(
                    (label, float(bundle.times[idx[c]]), float(bundle.times[idx[c + 1]]), sign, mean, se, z, abs(z) > threshold)
                )
    means = pd.DataFrame(mean_rows, columns=["process", "time", "mean", "stderr", "z", "flagged"])
    increments = pd.DataFrame(inc_rows, columns=["process", "t1", "t2", "sign", "mean", "stderr", "z", "flagged"])
    return MartingaleReport(bundle.config.config_hash(), bundle.n_paths, means, increments, threshold)


def canary_columns(bundle: PathBundle, scale: float = 1.1) -> dict[str, np.ndarray]:
    """Deliberately broken martingales that a working test must flag.

    ``Phi_j (uncompensated)`` is the raw counting process; ``Xbar^2 (x scale)``
    subtracts ``scale`` times the correct compensator from the second power-jump process.
    """
    c = bundle.config
    out: dict[str, np.ndarray] = {}
    if bundle.n_states > 1:
        out["Phi_0 (uncompensated)"] = bundle.column("Phi_0")
    if c.levy.jump_rate > 0 and c.K >= 2:
        comp = bundle.column("Xpow", 2) - bundle.column("Xteu", 2)
        out[f"Xbar^2 (x{scale:g})"] = bundle.column("Xpow", 2) - scale * comp
    return out


@dataclass
class OrthogonalityReport:
    """Terminal second moments of the orthonormal families."""

    config_hash: str
    labels: list[str]
    moments: np.ndarray
    stderr: np.ndarray
    expected: np.ndarray
    entries: pd.DataFrame
    tol: float = ORTHONORMAL_TOL
    notes: list[str] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return bool(self.entries["flagged"].any())

    def block(self, prefix: str) -> np.ndarray:
        sel = [k for k, name in enumerate(self.labels) if name.startswith(prefix)]
        return self.moments[np.ix_(sel, sel)]


def _expected_h_norm(bundle: PathBundle, k: int) -> float:
    """E H^(k)(T)^2: total expected time spent in states where direction ``k - 1`` is kept."""
    c = bundle.config
    if c.n_states == 1:
        return c.horizon if (k - 1) in bundle.basis.teugels[0].kept_indices else 0.0
    occ = expected_occupation(c.chain, c.horizon)
    return float(sum(occ[b.state] for b in bundle.basis.teugels if (k - 1) in b.kept_indices))


def orthogonality_test(bundle: PathBundle, *, tol: float = ORTHONORMAL_TOL, threshold: float = Z_THRESHOLD) -> OrthogonalityReport:
    """Sample second-moment matrix of all basis elements at the horizon.

    Every entry is flagged when it is more than ``threshold`` standard
    errors from its expected value: 0 off the diagonal, 1 for G, and the
    expected occupation of the states where the direction is kept for H.
    ``within_tol`` records whether the entry is also within ``tol`` of it.
    """
    keys = [k for k in bundle.derived_keys() if k[0] == "H" or k[0].startswith("G_")]
    labels = [_label(k) for k in keys]
    last = np.array([len(bundle.times) - 1])
    vals = np.column_stack([bundle.column(*k, idx=last)[:, 0] for k in keys]) if keys else np.zeros((bundle.n_paths, 0))
    n, d = vals.shape
    prod = vals[:, :, None] * vals[:, None, :]
    moments = prod.mean(axis=0)
    stderr = prod.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full((d, d), np.inf)
    expected = np.zeros((d, d))
    for a, k in enumerate(keys):
        expected[a, a] = _expected_h_norm(bundle, k[1]) if k[0] == "H" else 1.0
    rows = []
    for a in range(d):
        for b in range(a, d):
            dev = moments[a, b] - expected[a, b]
            flagged = abs(dev) > threshold * stderr[a, b]
            within = abs(dev) <= tol * max(expected[a, b], 1.0)
            rows.append((labels[a], labels[b], moments[a, b], expected[a, b], stderr[a, b], bool(flagged), bool(within)))
    cols = ["first", "second", "moment", "expected", "stderr", "flagged", "within_tol"]
    entries = pd.DataFrame(rows, columns=cols)
    return OrthogonalityReport(bundle.config.config_hash(), labels, moments, stderr, expected, entries, tol, list(bundle.basis.notes))
