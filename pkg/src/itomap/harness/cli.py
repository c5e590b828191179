"""Command line entry point.

Subcommands ``simulate``, ``basis``, ``represent``, ``verify`` and
``report`` all take ``--config <yaml>`` and ``--seed <u64>``. Outputs are
CSV files plus a ``manifest.json`` naming the config hash.

Exit codes: 0 success, 2 validation error or refusal, 3 statistical flags.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from ..errors import RefusalError, ValidationError
from ..ortho import coefficient_report
from ..represent import PayoffSpec, estimate_predictable_representation, oracle_sample, poly_representation_oracle, replicate
from .config import ScenarioConfig
from .diagnostics import martingale_test, orthogonality_test
from .engine import build_basis, run_scenario
from .store import manifest, write_bundle, write_json

EXIT_OK, EXIT_VALIDATION, EXIT_FLAGS = 0, 2, 3

log = logging.getLogger("itomap")


def _load(args) -> ScenarioConfig:
    config = ScenarioConfig.from_yaml(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "paths", None) is not None:
        changes["n_estimation"] = changes["n_evaluation"] = args.paths
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    return config.with_(**changes) if changes else config


def _out(args, config) -> Path:
    out = Path(args.out or config.output_dir) / args.command
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args, config) -> int:
    bundle = run_scenario(config, config.estimation_ids)
    out = write_bundle(bundle, _out(args, config))
    log.info("wrote %d paths to %s", bundle.n_paths, out)
    return EXIT_OK


def cmd_basis(args, config) -> int:
    out = _out(args, config)
    basis = build_basis(config)
    (out / "coefficients.txt").write_text(coefficient_report(basis.all()))
    write_json(out / "manifest.json", manifest(config, {"notes": basis.notes}))
    sys.stdout.write(coefficient_report(basis.all()))
    return EXIT_OK


def cmd_represent(args, config) -> int:
    out = _out(args, config)
    payoff = PayoffSpec(args.payoff, state=args.state)
    est_bundle = run_scenario(config, config.estimation_ids)
    estimate = estimate_predictable_representation(est_bundle, payoff, K=args.K, L=args.L, buckets=args.buckets)
    del est_bundle
    if args.form == "x":
        estimate = estimate.to_form("x")
    rep = replicate(estimate, run_scenario(config, config.evaluation_ids), payoff)
    table = pd.DataFrame(estimate.table(), columns=["bucket", "basis_element", "integrand_estimate", "stderr"])
    table.to_csv(out / "representation.csv", index=False)
    summary = {
        "payoff": args.payoff,
        "state": args.state,
        "K": estimate.K,
        "L": estimate.L,
        "form": estimate.form,
        "in_sample_residual": estimate.residual,
        "in_sample_stderr": estimate.residual_stderr,
        "out_of_sample_error": rep.relative_error,
        "out_of_sample_stderr": rep.stderr,
        "max_condition": float(np.max(estimate.condition)),
        "dropped": [list(map(str, d)) for d in estimate.dropped],
    }
    write_json(out / "replication.json", summary)
    write_json(out / "manifest.json", manifest(config))
    print(json.dumps({k: summary[k] for k in ("in_sample_residual", "out_of_sample_error", "out_of_sample_stderr")}))
    return EXIT_OK


def cmd_verify(args, config) -> int:
    out = _out(args, config)
    bundle = run_scenario(config, config.estimation_ids)
    mart = martingale_test(bundle)
    orth = orthogonality_test(bundle)
    mart.means.to_csv(out / "martingale.csv", index=False)
    mart.increments.to_csv(out / "increments.csv", index=False)
    orth.entries.to_csv(out / "orthogonality.csv", index=False)
    flags = {"martingale": mart.flagged_processes(), "orthogonality": orth.entries[orth.entries["flagged"]][["first", "second"]].values.tolist()}
    write_json(out / "manifest.json", manifest(config, {"n_paths": bundle.n_paths, "flags": flags}))
    for name, items in flags.items():
        print(f"{name}: {'FLAGGED ' + str(items) if items else 'clear'}")
    return EXIT_FLAGS if mart.flagged or orth.flagged else EXIT_OK


def cmd_report(args, config) -> int:
    out = _out(args, config)
    sample = oracle_sample(config, np.arange(args.oracle_paths), 2.0**-12)
    rows = []
    states = [(i, j) for i in range(config.n_states) for j in range(config.n_states)]
    for g, p, b in itertools.product(range(4), repeat=3):
        if g + p + b > 3:
            continue
        for i, j in states:
            rep = poly_representation_oracle(config, g, p, b, i, j, sample=sample)
            for dt, gg, pp, bb, mx, rms in rep.rows():
                rows.append((dt, gg, pp, bb, i, j, mx, rms, rms / rep.lhs_rms if rep.lhs_rms else 0.0))
    cols = ["dt", "g", "p", "b", "i", "j", "max_err", "rms_err", "rel_rms_err"]
    pd.DataFrame(rows, columns=cols).to_csv(out / "oracle.csv", index=False)
    bundle = run_scenario(config, config.estimation_ids)
    martingale_test(bundle).means.to_csv(out / "martingale.csv", index=False)
    write_json(out / "manifest.json", manifest(config, {"oracle_paths": args.oracle_paths}))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "basis": cmd_basis,
    "represent": cmd_represent,
    "verify": cmd_verify,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="itomap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario YAML file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        p.add_argument("--out", default=None, help="output directory (overrides output_dir)")
        p.add_argument("--paths", type=int, default=None, help="paths per set (overrides the config)")
        p.add_argument("--workers", type=int, default=None)
        if name == "represent":
            p.add_argument("--payoff", default="terminal_count", choices=PayoffSpec.KINDS)
            p.add_argument("--state", type=int, default=0)
            p.add_argument("--K", type=int, default=None)
            p.add_argument("--L", type=int, default=None)
            p.add_argument("--buckets", type=int, default=None)
            p.add_argument("--form", choices=("xbar", "x"), default="xbar")
        if name == "report":
            p.add_argument("--oracle-paths", type=int, default=1000)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = _load(args)
        return COMMANDS[args.command](args, config)
    except (ValidationError, RefusalError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
