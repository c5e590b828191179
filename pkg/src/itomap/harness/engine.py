"""Path simulation across workers and the aligned column bundle."""

from __future__ import annotations

import multiprocessing as mp
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..chain import simulate_chain
from ..errors import RefusalError, ValidationError
from ..impulse import simulate_impulse
from ..levy import make_grid, simulate_levy
from ..ortho import (
    BasisCoefficients,
    impulse_element,
    impulse_gram,
    orthonormalize,
    teugels_element,
    teugels_gram,
)
from .config import ScenarioConfig

JUMP_FIELDS = ("path_id", "kind", "time", "state", "mark", "applied")
LEVY_KIND, CHAIN_KIND = 0, 1

Key = tuple[str, int]


def needs_split(config: ScenarioConfig) -> bool:
    """Whether H needs regime-split Teugels columns (state-dependent coefficients)."""
    return config.n_states > 1 and not config.levy.is_state_independent()


def primitive_keys(config: ScenarioConfig) -> list[Key]:
    n, K, L = config.n_states, config.K, config.L
    keys: list[Key] = []
    if n > 1:
        keys.append(("J", 0))
        keys += [(f"occ_{i}", 0) for i in range(n)]
    keys.append(("Xbar", 0))
    if config.levy.jump_rate > 0:
        keys += [("Xpow", k) for k in range(2, K + 1)]
    if n > 1:
        keys += [(f"Phi_{j}", 0) for j in range(n)]
        keys += [(f"Psi_{i}", l) for i in range(n) for l in range(1, L + 1)]
    if needs_split(config):
        keys += [(f"Cbm_{i}", 0) for i in range(n)]
        if config.levy.jump_rate > 0:
            keys += [(f"Sjump_{i}", k) for i in range(n) for k in range(1, K + 1)]
    return keys


def _simulate_chunk(args) -> tuple[dict[Key, np.ndarray], np.ndarray]:
    config, path_ids = args
    times = make_grid(config.horizon, config.report_step)
    keys = primitive_keys(config)
    out = {k: np.zeros((len(path_ids), len(times))) for k in keys}
    n, K, L = config.n_states, config.K, config.L
    split = needs_split(config)
    has_jumps = config.levy.jump_rate > 0
    records = []
    for row, pid in enumerate(path_ids):
        pid = int(pid)
        chain = simulate_chain(config.chain, config.horizon, config.seed, path_id=pid)
        levy = simulate_levy(config.levy, chain, config.grid_step, config.seed, path_id=pid, check_moments=False)
        out[("Xbar", 0)][row] = levy.value_at(times)
        if has_jumps:
            for k in range(2, K + 1):
                out[("Xpow", k)][row] = levy.jump_sum(times, k)
        for t, s, x, a in zip(levy.jump_times, levy.jump_states, levy.jump_marks, levy.jump_applied):
            records.append((pid, LEVY_KIND, t, s, x, a))
        if n > 1:
            imp = simulate_impulse(chain, config.impulse, L, config.seed, path_id=pid)
            out[("J", 0)][row] = chain.state_at(times)
            occ = chain.occupation(times, n)
            counts = np.zeros((len(times), n))
            dest = chain.states[1:]
            idx = np.searchsorted(chain.epochs, times, side="right")
            for j in range(n):
                out[(f"occ_{j}", 0)][row] = occ[:, j]
                counts[:, j] = np.concatenate(([0.0], np.cumsum(dest == j)))[idx]
                out[(f"Phi_{j}", 0)][row] = counts[:, j]
            for l in range(1, L + 1):
                psi = imp.psi_all(times, l)
                for i in range(n):
                    out[(f"Psi_{i}", l)][row] = psi[:, i]
            for t, s, u in zip(chain.epochs, dest, imp.values):
                records.append((pid, CHAIN_KIND, t, s, u, u))
        if split:
            cbm = levy.brownian_integral_by_state(times, config.levy.sigma0)
            for i in range(n):
                out[(f"Cbm_{i}", 0)][row] = cbm[:, i]
            if has_jumps:
                for k in range(1, K + 1):
                    s = levy.jump_sum_by_state(times, k)
                    for i in range(n):
                        out[(f"Sjump_{i}", k)][row] = s[:, i]
    rec = np.array(records, dtype=float).reshape(-1, len(JUMP_FIELDS))
    return out, rec


def _chunks(path_ids: np.ndarray, size: int) -> list[np.ndarray]:
    return [path_ids[a : a + size] for a in range(0, len(path_ids), size)]


def simulate_paths(
    config: ScenarioConfig, path_ids: Sequence[int], workers: int | None = None
) -> tuple[dict[Key, np.ndarray], np.ndarray]:
    """Simulate the given paths; output does not depend on ``workers``."""
    path_ids = np.asarray(path_ids, dtype=np.int64)
    workers = config.workers if workers is None else int(workers)
    tasks = [(config, ids) for ids in _chunks(path_ids, config.chunk_size)]
    if workers > 1 and len(tasks) > 1:
        ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else mp.get_context()
        with ctx.Pool(min(workers, len(tasks))) as pool:
            parts = pool.map(_simulate_chunk, tasks)
    else:
        parts = [_simulate_chunk(t) for t in tasks]
    keys = primitive_keys(config)
    columns = {k: np.concatenate([p[0][k] for p in parts]) for k in keys}
    records = np.concatenate([p[1] for p in parts]) if parts else np.zeros((0, len(JUMP_FIELDS)))
    return columns, records


@dataclass
class Basis:
    teugels: list[BasisCoefficients]
    impulse: dict[int, BasisCoefficients]
    notes: list[str] = field(default_factory=list)

    def all(self) -> list[BasisCoefficients]:
        return list(self.teugels) + [self.impulse[i] for i in sorted(self.impulse)]


def build_basis(config: ScenarioConfig) -> Basis:
    teugels = [orthonormalize(teugels_gram(config.levy, i, config.K), config.pivot_tol) for i in range(config.n_states)]
    impulse: dict[int, BasisCoefficients] = {}
    notes = []
    if config.n_states > 1:
        for i in range(config.n_states):
            try:
                gram = impulse_gram(config.impulse, config.chain, i, config.L + 1)
            except RefusalError as exc:
                notes.append(str(exc))
                continue
            impulse[i] = orthonormalize(gram, config.pivot_tol)
    return Basis(teugels, impulse, notes)


@dataclass
class PathBundle:
    """Aligned per-path columns on the reporting grid plus exact jump records.

    ``primitives`` holds simulated columns keyed by ``(process_name, order)``;
    every other column is derived on demand from primitives, the scenario
    parameters and the basis coefficients:

    ``phi_j``, ``Phibar_j`` (order 0), ``Psibar_i`` (order l), ``Xteu``
    (order k, the Teugels martingales), ``X`` (the full process), ``H``
    (order k) and ``G_i`` (order l).
    """

    config: ScenarioConfig
    path_ids: np.ndarray
    times: np.ndarray
    primitives: dict[Key, np.ndarray]
    jumps: np.ndarray
    basis: Basis
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_paths(self) -> int:
        return len(self.path_ids)

    @property
    def n_states(self) -> int:
        return self.config.n_states

    def derived_keys(self) -> list[Key]:
        c = self.config
        n = c.n_states
        keys: list[Key] = []
        if n > 1:
            keys += [(f"phi_{j}", 0) for j in range(n)]
            keys += [(f"Phibar_{j}", 0) for j in range(n)]
            keys += [(f"Psibar_{i}", l) for i in range(n) for l in range(1, c.L + 1)]
            keys.append(("X", 0))
        kmax = c.K if c.levy.jump_rate > 0 else 1
        keys += [("Xteu", k) for k in range(1, kmax + 1)]
        keys += [("H", k) for k in range(1, c.K + 1) if any(k - 1 in b.kept_indices for b in self.basis.teugels)]
        for i, b in sorted(self.basis.impulse.items()):
            keys += [(f"G_{i}", r + 1) for r in b.kept_indices]
        return keys

    def keys(self) -> list[Key]:
        return list(self.primitives) + self.derived_keys()

    def subset(self, rows) -> PathBundle:
        rows = np.asarray(rows)
        ids = self.path_ids[rows]
        keep = np.isin(self.jumps[:, 0], ids)
        return PathBundle(
            self.config, ids, self.times, {k: v[rows] for k, v in self.primitives.items()}, self.jumps[keep], self.basis
        )

    def select_ids(self, path_ids: Iterable[int]) -> PathBundle:
        path_ids = np.asarray(list(path_ids))
        pos = np.searchsorted(self.path_ids, path_ids)
        if np.any(pos >= self.n_paths) or np.any(self.path_ids[np.minimum(pos, self.n_paths - 1)] != path_ids):
            raise ValidationError("requested path ids are not in the bundle", module="harness")
        return self.subset(pos)

    # primitive accessors that broadcast for N = 1
    def _prim(self, key: Key, idx) -> np.ndarray:
        return self.primitives[key][:, idx]

    def occupation(self, i: int, idx=slice(None)) -> np.ndarray:
        if self.n_states == 1:
            return np.broadcast_to(self.times[idx], (self.n_paths, len(self.times[idx]))).copy()
        return self._prim((f"occ_{i}", 0), idx)

    def regime(self, idx=slice(None)) -> np.ndarray:
        if self.n_states == 1:
            return np.zeros((self.n_paths, len(self.times[idx])), dtype=np.int64)
        return self._prim(("J", 0), idx).astype(np.int64)

    def column(self, name: str, order: int = 0, idx=slice(None)) -> np.ndarray:
        """Column ``(name, order)`` restricted to the time indices ``idx``."""
        key = (name, order)
        if key in self.primitives:
            return self.primitives[key][:, idx]
        full = isinstance(idx, slice) and idx == slice(None)
        if key in self._cache:
            return self._cache[key] if full else self._cache[key][:, idx]
        value = self._derive(name, order, idx)
        if full:
            self._cache[key] = value
        return value

    def _occ_dot(self, rates: np.ndarray, idx) -> np.ndarray:
        out = None
        for i, r in enumerate(rates):
            if r != 0.0:
                term = r * self.occupation(i, idx)
                out = term if out is None else out + term
        if out is None:
            out = np.zeros((self.n_paths, len(self.times[idx])))
        return out

    def _derive(self, name: str, order: int, idx) -> np.ndarray:
        c = self.config
        base, _, suffix = name.partition("_")
        if base == "phi":
            return self._occ_dot(c.chain.entry_rate(int(suffix)), idx)
        if base == "Phibar":
            return self._prim((f"Phi_{suffix}", 0), idx) - self.column(f"phi_{suffix}", 0, idx)
        if base == "Psibar":
            i = int(suffix)
            return self._prim((f"Psi_{i}", order), idx) - c.impulse.moment(i, order) * self.column(f"phi_{i}", 0, idx)
        if name == "X":
            out = self._prim(("Xbar", 0), idx).copy()
            for i in range(self.n_states):
                out += self._prim((f"Psi_{i}", 1), idx)
            return out
        if name == "Xteu":
            if order == 1:
                return self._prim(("Xbar", 0), idx) - self._occ_dot(c.levy.first_order_drift(), idx)
            if c.levy.jump_rate == 0:
                return np.zeros((self.n_paths, len(self.times[idx])))
            return self._prim(("Xpow", order), idx) - self._occ_dot(c.levy.compensator_rates(order), idx)
        if base == "Ysplit":
            # int 1{J(s-) = e_i} dXteu^(order)
            i = int(suffix)
            rate = c.levy.compensator_rates(order)[i]
            out = -rate * self.occupation(i, idx)
            if c.levy.jump_rate > 0:
                out = out + self._prim((f"Sjump_{i}", order), idx)
            if order == 1:
                out = out + self._prim((f"Cbm_{i}", 0), idx)
            return out
        if name == "H":
            xbar = {k: self.column("Xteu", k, idx) for k in range(1, c.K + 1)}
            split = None
            if needs_split(c):
                split = {(i, k): self.column(f"Ysplit_{i}", k, idx) for i in range(c.n_states) for k in range(1, c.K + 1)}
            h = teugels_element(order, self.basis.teugels, xbar, split)
            if h is None:
                raise ValidationError(f"H^({order}) was dropped as degenerate", module="harness")
            return h
        if base == "G":
            i = int(suffix)
            if i not in self.basis.impulse:
                raise ValidationError(f"no impulse basis for state {i}", module="harness")
            b = self.basis.impulse[i]
            psibar = {l: self.column(f"Psibar_{i}", l, idx) for l in range(1, b.order)}
            g = impulse_element(order, b, self.column(f"Phibar_{i}", 0, idx), psibar)
            if g is None:
                raise ValidationError(f"G_{i}^({order}) was dropped as degenerate", module="harness")
            return g
        raise ValidationError(f"unknown column {name!r} order {order}", module="harness")

    def jump_records(self, kind: int | None = None) -> np.ndarray:
        if kind is None:
            return self.jumps
        return self.jumps[self.jumps[:, 1] == kind]


def run_scenario(config: ScenarioConfig, path_ids: Sequence[int] | None = None, workers: int | None = None) -> PathBundle:
    """Simulate ``path_ids`` (all estimation and evaluation paths by default) and build the basis."""
    if path_ids is None:
        path_ids = np.arange(config.n_paths)
    path_ids = np.asarray(path_ids, dtype=np.int64)
    if np.any(np.diff(path_ids) <= 0):
        raise ValidationError("path ids must be strictly increasing", module="harness")
    basis = build_basis(config)
    columns, records = simulate_paths(config, path_ids, workers)
    return PathBundle(config, path_ids, make_grid(config.horizon, config.report_step), columns, records, basis)
