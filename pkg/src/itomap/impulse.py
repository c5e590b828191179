"""Transition-triggered impulses U^(i), the processes Psi_i^(l) and the full process X."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import ChainPath, ChainSpec
from .errors import ValidationError
from .laws import JumpLaw, PointMass
from .levy import LevyPath
from .rng import SeedLike, Stream, as_generator

HANKEL_TOL = 1e-10


@dataclass(frozen=True)
class JumpLawSet:
    """One impulse law per destination state, with moments up to ``max_moment_order``."""

    laws: tuple[JumpLaw, ...]
    max_moment_order: int = 8

    def __post_init__(self):
        laws = tuple(self.laws)
        if not laws:
            raise ValidationError("at least one impulse law is required", module="impulse")
        object.__setattr__(self, "laws", laws)
        for i, law in enumerate(laws):
            m = law.moments(self.max_moment_order)
            if np.any(m[::2] < 0):
                raise ValidationError(f"impulse law {i} has a negative even moment", module="impulse")
            h = self.max_moment_order // 2
            hankel = np.array([[m[a + b] for b in range(h + 1)] for a in range(h + 1)])
            eig = np.linalg.eigvalsh(hankel)
            if eig.min() < -HANKEL_TOL * max(1.0, np.abs(np.diag(hankel)).max()):
                raise ValidationError(f"impulse law {i} moments are not a valid Hankel sequence", module="impulse")

    @classmethod
    def zero(cls, n_states: int) -> JumpLawSet:
        return cls(tuple(PointMass(0.0) for _ in range(n_states)))

    @property
    def n_states(self) -> int:
        return len(self.laws)

    def moment(self, i: int, l: int) -> float:
        if l > self.max_moment_order:
            raise ValidationError(
                f"impulse moment of order {l} requested, only {self.max_moment_order} configured",
                module="impulse",
            )
        return self.laws[i].moment(l)

    def is_zero(self) -> bool:
        return all(isinstance(law, PointMass) and law.value == 0.0 for law in self.laws)


@dataclass(frozen=True)
class ImpulsePath:
    """Impulse draws at each chain epoch, assigned to the state entered."""

    chain: ChainPath
    values: np.ndarray
    n_states: int
    max_order: int

    @property
    def epochs(self) -> np.ndarray:
        return self.chain.epochs

    @property
    def destinations(self) -> np.ndarray:
        return self.chain.states[1:]

    def psi(self, t, state: int, l: int) -> np.ndarray:
        """Psi_state^(l)(t): sum of l-th powers of impulses into ``state`` up to ``t``."""
        self._check_order(l)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        w = np.where(self.destinations == state, self.values**l, 0.0)
        cum = np.concatenate(([0.0], np.cumsum(w)))
        return cum[np.searchsorted(self.epochs, t, side="right")]

    def psi_all(self, t, l: int) -> np.ndarray:
        """Psi_i^(l)(t) for every state; shape ``(len(t), N)``."""
        self._check_order(l)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        inc = np.zeros((len(self.values) + 1, self.n_states))
        if len(self.values):
            inc[np.arange(1, len(self.values) + 1), self.destinations] = self.values**l
        return np.cumsum(inc, axis=0)[np.searchsorted(self.epochs, t, side="right")]

    def psi_bar(self, t, state: int, l: int, laws: JumpLawSet, spec: ChainSpec) -> np.ndarray:
        """Psi_state^(l) - m_state(l) * phi_state."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        phi = self.chain.occupation(t, spec.n_states) @ spec.entry_rate(state)
        return self.psi(t, state, l) - laws.moment(state, l) * phi

    def _check_order(self, l):
        if not 1 <= l <= self.max_order:
            raise ValidationError(f"impulse order {l} outside 1..{self.max_order}", module="impulse")


def simulate_impulse(
    chain: ChainPath,
    laws: JumpLawSet,
    L: int,
    seed: SeedLike,
    *,
    path_id: int = 0,
) -> ImpulsePath:
    """Draw one impulse per chain epoch from the law of the destination state."""
    if L < 1 or L > laws.max_moment_order:
        raise ValidationError(f"L={L} outside 1..{laws.max_moment_order}", module="impulse")
    if chain.states.size and int(chain.states.max()) >= laws.n_states:
        raise ValidationError("chain visits a state without an impulse law", module="impulse")
    rng = as_generator(seed, Stream.IMPULSE, path_id)
    dest = chain.states[1:]
    values = np.zeros(len(dest))
    for n, s in enumerate(dest):
        values[n] = laws.laws[s].sample(rng, 1)[0]
    return ImpulsePath(chain, values, laws.n_states, int(L))


def assemble_X(levy: LevyPath, impulse: ImpulsePath, times: np.ndarray | None = None) -> np.ndarray:
    """X = X-bar + sum_i Psi_i^(1) at ``times`` (the Lévy grid by default)."""
    if levy.horizon != impulse.chain.horizon:
        raise ValidationError("Lévy and impulse paths use different chain horizons", module="impulse")
    if levy.n_states != impulse.n_states:
        raise ValidationError("Lévy and impulse paths disagree on the number of states", module="impulse")
    if len(impulse.epochs) and not np.all(np.isin(impulse.epochs, levy.knot_times)):
        raise ValidationError("impulse path was built on a different chain realization", module="impulse")
    times = levy.grid if times is None else np.asarray(times, dtype=float)
    return levy.value_at(times) + impulse.psi_all(times, 1).sum(axis=1)

