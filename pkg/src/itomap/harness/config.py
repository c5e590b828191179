"""Scenario configuration: a YAML key-value tree mapped onto the component specs.

Schema (all keys optional except ``chain``)::

    chain:
      intensities: [[-1, 1], [1, -1]]   # N x N, rows sum to 0
      initial_dist: [0.5, 0.5]
    levy:
      mu0: [0, 0]                        # scalar or one per state
      sigma0: [1, 1]
      gamma: {kind: identity}            # identity | linear (beta) | affine_odd (beta, kappa)
      jump_rate: 1.0
      jump_law: {kind: two_point, low: -1, high: 1}
    impulse:
      laws: [{kind: two_point, low: -1, high: 1}, ...]   # one per state, or a single mapping
      max_moment_order: 8
    horizon: 1.0
    grid_step: 0.0009765625             # simulation step
    report_step: 0.125                   # spacing of stored columns
    K: 3
    L: 3
    paths: {estimation: 100000, evaluation: 100000}
    seed: 20240611
    pivot_tol: 1.0e-10
    workers: 1
    chunk_size: 2048
    output_dir: out
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from ..chain import ChainSpec
from ..errors import MomentConditionError, ValidationError
from ..impulse import JumpLawSet
from ..laws import PointMass, law_from_dict, transform_from_dict
from ..levy import RegimeLevyParams, check_moment_condition, make_grid

MIN_PATHS = 1000


def _vector(value, n: int, name: str) -> list[float]:
    if np.isscalar(value):
        return [float(value)] * n
    value = [float(v) for v in value]
    if len(value) != n:
        raise ValidationError(f"{name} needs {n} entries, got {len(value)}", module="harness")
    return value


@dataclass(frozen=True)
class ScenarioConfig:
    chain: ChainSpec
    levy: RegimeLevyParams
    impulse: JumpLawSet
    horizon: float = 1.0
    grid_step: float = 2.0**-10
    report_step: float = 0.125
    K: int = 3
    L: int = 3
    n_estimation: int = 100_000
    n_evaluation: int = 100_000
    seed: int = 20240611
    pivot_tol: float = 1e-10
    workers: int = 1
    chunk_size: int = 2048
    output_dir: str = "out"
    raw: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        n = self.chain.n_states
        if self.levy.n_states != n or self.impulse.n_states != n:
            raise ValidationError("chain, levy and impulse sections disagree on N", module="harness")
        if self.K < 1 or self.L < 1:
            raise ValidationError("K and L must be >= 1", module="harness")
        if self.L > self.impulse.max_moment_order:
            raise ValidationError("L exceeds impulse max_moment_order", module="harness")
        if min(self.n_estimation, self.n_evaluation) < MIN_PATHS:
            raise ValidationError(f"path counts must be >= {MIN_PATHS}", module="harness")
        if self.workers < 1 or self.chunk_size < 1:
            raise ValidationError("workers and chunk_size must be >= 1", module="harness")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer", module="harness")
        make_grid(self.horizon, self.grid_step)
        make_grid(self.horizon, self.report_step)
        ratio = self.report_step / self.grid_step
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValidationError("report_step must be a multiple of grid_step", module="harness")
        report = check_moment_condition(self.levy, 1e-6, 1.0, self.impulse.laws)
        if not report.passed:
            raise MomentConditionError("; ".join(report.failures), module="levy")

    @property
    def n_states(self) -> int:
        return self.chain.n_states

    @property
    def n_paths(self) -> int:
        return self.n_estimation + self.n_evaluation

    @property
    def estimation_ids(self) -> np.ndarray:
        return np.arange(self.n_estimation)

    @property
    def evaluation_ids(self) -> np.ndarray:
        return np.arange(self.n_estimation, self.n_paths)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ScenarioConfig:
        d = dict(d)
        try:
            ch = d["chain"]
            q = np.asarray(ch["intensities"], dtype=float)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"config needs chain.intensities ({exc})", module="harness") from None
        n = q.shape[0] if q.ndim == 2 else 0
        init = ch.get("initial_dist", [1.0 / max(n, 1)] * n)
        chain = ChainSpec(q, np.asarray(init, dtype=float))
        n = chain.n_states

        lv = dict(d.get("levy", {}))
        levy = RegimeLevyParams(
            mu0=_vector(lv.get("mu0", 0.0), n, "levy.mu0"),
            sigma0=_vector(lv.get("sigma0", 1.0), n, "levy.sigma0"),
            gamma=transform_from_dict(lv.get("gamma"), n),
            jump_rate=float(lv.get("jump_rate", 0.0)),
            jump_law=law_from_dict(lv["jump_law"]) if "jump_law" in lv else PointMass(0.0),
        )

        im = dict(d.get("impulse", {}))
        laws_cfg = im.get("laws", {"kind": "point_mass", "value": 0.0})
        if isinstance(laws_cfg, Mapping):
            laws_cfg = [laws_cfg] * n
        impulse = JumpLawSet(
            tuple(law_from_dict(x) for x in laws_cfg), int(im.get("max_moment_order", 8))
        )

        paths = d.get("paths", {})
        kwargs = dict(
            horizon=float(d.get("horizon", 1.0)),
            grid_step=float(d.get("grid_step", 2.0**-10)),
            report_step=float(d.get("report_step", 0.125)),
            K=int(d.get("K", 3)),
            L=int(d.get("L", 3)),
            n_estimation=int(paths.get("estimation", 100_000)),
            n_evaluation=int(paths.get("evaluation", 100_000)),
            seed=int(d.get("seed", 20240611)),
            pivot_tol=float(d.get("pivot_tol", 1e-10)),
            workers=int(d.get("workers", 1)),
            chunk_size=int(d.get("chunk_size", 2048)),
            output_dir=str(d.get("output_dir", "out")),
        )
        known = {"chain", "levy", "impulse", "paths"} | set(kwargs) - {"n_estimation", "n_evaluation"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}", module="harness")
        return cls(chain, levy, impulse, raw=d, **kwargs)

    @classmethod
    def from_yaml(cls, path: str | Path) -> ScenarioConfig:
        try:
            with open(path) as fh:
                d = yaml.safe_load(fh)
        except (OSError, yaml.YAMLError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}", module="harness") from None
        if not isinstance(d, Mapping):
            raise ValidationError(f"config {path} is not a mapping", module="harness")
        return cls.from_dict(d)

    def to_dict(self) -> dict[str, Any]:
        """Fully resolved configuration (the basis of :meth:`config_hash`)."""
        return {
            "chain": {
                "intensities": self.chain.intensities.tolist(),
                "initial_dist": self.chain.initial_dist.tolist(),
            },
            "levy": self.levy.to_dict(),
            "impulse": {
                "laws": [law.to_dict() for law in self.impulse.laws],
                "max_moment_order": self.impulse.max_moment_order,
            },
            "horizon": self.horizon,
            "grid_step": self.grid_step,
            "report_step": self.report_step,
            "K": self.K,
            "L": self.L,
            "paths": {"estimation": self.n_estimation, "evaluation": self.n_evaluation},
            "seed": self.seed,
            "pivot_tol": self.pivot_tol,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_(self, **changes) -> ScenarioConfig:
        return replace(self, **changes)


def canonical_config(**overrides) -> ScenarioConfig:
    """Two symmetric regimes, Brownian plus +-1 jumps, +-1 impulses."""
    d: dict[str, Any] = {
        "chain": {"intensities": [[-1.0, 1.0], [1.0, -1.0]], "initial_dist": [0.5, 0.5]},
        "levy": {
            "mu0": [0.0, 0.0],
            "sigma0": [1.0, 1.0],
            "gamma": {"kind": "identity"},
            "jump_rate": 1.0,
            "jump_law": {"kind": "two_point", "low": -1.0, "high": 1.0},
        },
        "impulse": {"laws": {"kind": "two_point", "low": -1.0, "high": 1.0}},
        "horizon": 1.0,
        "grid_step": 2.0**-10,
        "report_step": 0.125,
        "K": 3,
        "L": 3,
        "paths": {"estimation": 100_000, "evaluation": 100_000},
        "seed": 20240611,
    }
    for key, value in overrides.items():
        if isinstance(value, Mapping) and isinstance(d.get(key), Mapping):
            d[key] = {**d[key], **value}
        else:
            d[key] = value
    return ScenarioConfig.from_dict(d)
