"""Command-line interface.

Subcommands: fixtime, fixprob, duality, figure1, lm (config-driven) and
epidemic (flag-driven). Exit codes: 0 pass, 1 acceptance failure,
2 config or runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .core import RngStream, migration_from_json
from .epidemics import epidemic_I_fixation, epidemic_J_samples
from .errors import ConfigError, SweepSimError

CONFIG_KINDS = ("fixtime", "fixprob", "duality", "figure1", "lm")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sweepsim",
        description="Structured-sweep fixation-time simulation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for kind in CONFIG_KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment from a JSON config")
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--replicates", type=int, default=None,
                       help="override replicate count")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for replicate batches")

    e = sub.add_parser("epidemic", help="evaluate the limit epidemic models")
    e.add_argument("--kind", choices=["I", "J"], required=True)
    e.add_argument("--graph", required=True,
                   help='migration JSON file {"d": int, "b": [[..]]}')
    e.add_argument("--gamma", type=float, default=None, help="scalar gamma (model I)")
    e.add_argument("--gamma-matrix", default=None,
                   help="JSON file with a d x d gamma matrix (model I)")
    e.add_argument("--founder", type=int, default=0, help="founder colony (0-based)")
    e.add_argument("--samples", type=int, default=1, help="sample count (model J)")
    e.add_argument("--seed", type=int, default=None, help="seed (required for J)")
    e.add_argument("--out", default=None, help="output directory")
    e.add_argument("--threads", type=int, default=None)
    return parser


def _set_threads(n):
    if n is not None:
        import numba

        numba.set_num_threads(max(1, n))


def _run_config_command(args) -> int:
    overrides = {"seed": args.seed, "out": args.out, "replicates": args.replicates}
    cfg = experiments.load_config(args.config, overrides=overrides)
    if cfg.kind != args.command:
        raise ConfigError(
            f"config kind {cfg.kind!r} does not match subcommand {args.command!r}"
        )
    report = experiments.run_experiment(cfg)
    print(report.to_json())
    if report.passed is False:
        return 1
    return 0


def _run_epidemic(args) -> int:
    ms = migration_from_json(args.graph)
    if args.kind == "I":
        if args.gamma is None and args.gamma_matrix is None:
            raise ConfigError("model I needs --gamma or --gamma-matrix")
        if args.gamma_matrix is not None:
            gamma = np.asarray(json.loads(Path(args.gamma_matrix).read_text()))
        else:
            gamma = args.gamma
        res = epidemic_I_fixation(ms, gamma, args.founder)
        doc = {
            "S_I": res.s_fix,
            "infection_times": res.infection_times.tolist(),
            "founder": args.founder,
        }
        print(json.dumps(doc, sort_keys=True))
        if args.out:
            outdir = Path(args.out)
            outdir.mkdir(parents=True, exist_ok=True)
            (outdir / "epidemic_I.json").write_text(
                json.dumps(doc, sort_keys=True) + "\n"
            )
        return 0
    if args.seed is None:
        raise ConfigError("model J needs an explicit --seed")
    rng = RngStream(seed=args.seed)
    samples = epidemic_J_samples(ms, args.founder, args.samples, rng)
    if args.out:
        experiments.write_csv(
            Path(args.out) / "epidemic_J_samples.csv",
            ["sample_id", "S_J", "seed"],
            [(i, samples[i], args.seed) for i in range(len(samples))],
        )
    print(json.dumps({"mean_S_J": float(samples.mean()), "n": len(samples)},
                     sort_keys=True))
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _set_threads(getattr(args, "threads", None))
        if args.command == "epidemic":
            return _run_epidemic(args)
        return _run_config_command(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SweepSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
