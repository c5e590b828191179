"""Columnar plain-text persistence of path bundles.

A bundle directory holds

* ``paths.csv``: long format ``path_id,time,process_name,order,value``,
  sorted by path, then column, then time;
* ``jumps.csv``: exact jump records ``path_id,kind,time,state,mark,applied``;
* ``schema.json``: column list, grid and kinds (primitive or derived);
* ``coefficients.txt``: the basis coefficient report;
* ``manifest.json``: config hash, seed, resolved config and library versions.

Floats are written in their shortest round-trip form and parsed back
exactly, so reading and rewriting a bundle reproduces the files byte for
byte.
"""

from __future__ import annotations

import hashlib
import json
import platform
from pathlib import Path

import numpy as np
import pandas as pd

from .. import __version__
from ..errors import NumericError, ValidationError
from ..ortho import coefficient_report
from .config import ScenarioConfig
from .engine import CHAIN_KIND, JUMP_FIELDS, LEVY_KIND, PathBundle, build_basis

SPOT_CHECK_FRACTION = 0.01
SPOT_CHECK_RTOL = 1e-12


def _long_frame(bundle: PathBundle, keys) -> pd.DataFrame:
    n, g = bundle.n_paths, len(bundle.times)
    values = np.stack([bundle.column(*k) for k in keys], axis=1)  # paths, cols, times
    return pd.DataFrame(
        {
            "path_id": np.repeat(bundle.path_ids, len(keys) * g),
            "time": np.tile(bundle.times, n * len(keys)),
            "process_name": np.tile(np.repeat([k[0] for k in keys], g), n),
            "order": np.tile(np.repeat([k[1] for k in keys], g), n),
            "value": values.reshape(-1),
        }
    )


def manifest(config: ScenarioConfig, extra: dict | None = None) -> dict:
    m = {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "config": config.to_dict(),
        "versions": {
            "itomap": __version__,
            "numpy": np.__version__,
            "pandas": pd.__version__,
            "python": platform.python_version(),
        },
    }
    if extra:
        m.update(extra)
    return m


def write_json(path: Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_bundle(bundle: PathBundle, directory: str | Path, *, derived: bool = True) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    prim = list(bundle.primitives)
    der = bundle.derived_keys() if derived else []
    _long_frame(bundle, prim + der).to_csv(out / "paths.csv", index=False)
    jumps = pd.DataFrame(bundle.jumps, columns=list(JUMP_FIELDS))
    for name in ("path_id", "kind", "state"):
        jumps[name] = jumps[name].astype(np.int64)
    jumps["kind"] = jumps["kind"].map({LEVY_KIND: "levy", CHAIN_KIND: "chain"})
    jumps.to_csv(out / "jumps.csv", index=False)
    schema = {
        "layout": "long",
        "fields": ["path_id", "time", "process_name", "order", "value"],
        "times": [float(t) for t in bundle.times],
        "path_ids": {"first": int(bundle.path_ids[0]), "count": int(bundle.n_paths)},
        "columns": [{"process_name": k[0], "order": k[1], "kind": "primitive"} for k in prim]
        + [{"process_name": k[0], "order": k[1], "kind": "derived"} for k in der],
        "jump_fields": list(JUMP_FIELDS),
    }
    write_json(out / "schema.json", schema)
    (out / "coefficients.txt").write_text(coefficient_report(bundle.basis.all()))
    write_json(out / "manifest.json", manifest(bundle.config, {"n_paths": int(bundle.n_paths)}))
    return out


def read_bundle(directory: str | Path, *, spot_check: bool = True) -> PathBundle:
    src = Path(directory)
    try:
        schema = json.loads((src / "schema.json").read_text())
        man = json.loads((src / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read bundle metadata in {src}: {exc}", module="harness") from None
    cfg = man["config"]
    config = ScenarioConfig.from_dict(cfg)
    if config.config_hash() != man["config_hash"]:
        raise ValidationError("manifest config hash does not match its config", module="harness")
    df = pd.read_csv(src / "paths.csv", dtype={"process_name": str}, float_precision="round_trip")
    times = np.array(schema["times"])
    g = len(times)
    cols = schema["columns"]
    n_cols = len(cols)
    n_paths = len(df) // (g * n_cols) if n_cols else 0
    if n_paths * g * n_cols != len(df):
        raise ValidationError("paths.csv does not match its schema", module="harness")
    values = df["value"].to_numpy().reshape(n_paths, n_cols, g)
    path_ids = df["path_id"].to_numpy()[:: n_cols * g]
    primitives = {}
    stored_derived = {}
    for c, col in enumerate(cols):
        key = (col["process_name"], int(col["order"]))
        target = primitives if col["kind"] == "primitive" else stored_derived
        target[key] = values[:, c, :].copy()
    jdf = pd.read_csv(src / "jumps.csv", float_precision="round_trip")
    jdf["kind"] = jdf["kind"].map({"levy": LEVY_KIND, "chain": CHAIN_KIND})
    jumps = jdf[list(JUMP_FIELDS)].to_numpy(dtype=float).reshape(-1, len(JUMP_FIELDS))
    bundle = PathBundle(config, path_ids, times, primitives, jumps, build_basis(config))
    if spot_check and stored_derived:
        _spot_check(bundle, stored_derived)
    for key, value in stored_derived.items():
        bundle._cache[key] = value
    return bundle


def _spot_check(bundle: PathBundle, stored: dict) -> None:
    """Recompute derived columns on 1% of paths and compare with the stored values."""
    n = bundle.n_paths
    rows = np.unique(np.linspace(0, n - 1, max(1, int(np.ceil(SPOT_CHECK_FRACTION * n)))).astype(int))
    sub = bundle.subset(rows)
    for key, value in stored.items():
        fresh = sub.column(*key)
        ref = value[rows]
        scale = max(1.0, float(np.max(np.abs(ref)))) if ref.size else 1.0
        if not np.allclose(fresh, ref, rtol=0, atol=SPOT_CHECK_RTOL * scale):
            raise NumericError(f"derived column {key} does not match its primitives", module="harness")


def file_digest(directory: str | Path, names=("paths.csv", "jumps.csv", "schema.json")) -> str:
    h = hashlib.sha256()
    for name in names:
        h.update((Path(directory) / name).read_bytes())
    return h.hexdigest()
