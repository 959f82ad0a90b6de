"""Command-line entry point: ``bootlik run|validate|plotdata|simulate``.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .experiment import (
    MODEL_DEFAULTS,
    ConfigError,
    RunError,
    emit_plotdata,
    load_config,
    run_experiment,
    simulate_dataset,
    write_dataset,
)
from .numkit import RngStream

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _overrides(args) -> dict:
    return {
        "seed": args.seed,
        "output": getattr(args, "output", None),
        "workers": getattr(args, "workers", None),
        "R": getattr(args, "replicates", None),
        "paper_scale": True if getattr(args, "paper_scale", False) else None,
    }


def _cmd_validate(args) -> int:
    cfg = load_config(args.config, **_overrides(args))
    print(json.dumps(cfg.resolved(), indent=1, sort_keys=True))
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = load_config(args.config, **_overrides(args))
    if args.seed is None:
        print(f"seed: {cfg.seed}", file=sys.stderr)
    table = run_experiment(cfg)
    print(table.format())
    for s, t in table.wall_clock.items():
        print(f"wall-clock {s}: {t:.1f} s", file=sys.stderr)
    if table.failures:
        print(f"{len(table.failures)} replicate failure(s); see {cfg.output}/failures.json", file=sys.stderr)
    return EXIT_OK


def _cmd_plotdata(args) -> int:
    for p in emit_plotdata(args.samples, args.output):
        print(p)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    d = MODEL_DEFAULTS[args.model]
    params = args.params or d["truth"]
    if len(params) != len(d["truth"]):
        raise ConfigError(f"params: model {args.model!r} takes {len(d['truth'])} value(s)")
    seed = args.seed if args.seed is not None else int(np.random.SeedSequence().entropy % (2**63))
    if args.seed is None:
        print(f"seed: {seed}", file=sys.stderr)
    n = args.n or d["n"]
    try:
        data = simulate_dataset(args.model, params, n, RngStream(seed), dt=args.dt,
                                genes_per_deme=args.genes_per_deme, cycles=args.cycles)
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from None
    write_dataset(args.model, data, args.output)
    print(args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bootlik", description="Bootstrap-likelihood Bayesian computation experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("config")
    run.add_argument("--seed", type=int)
    run.add_argument("-o", "--output")
    run.add_argument("-j", "--workers", type=int)
    run.add_argument("-R", "--replicates", type=int)
    run.add_argument("--paper-scale", action="store_true", help="use the full replicate counts")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="check a config and print it with defaults filled in")
    val.add_argument("config")
    val.add_argument("--seed", type=int)
    val.add_argument("--paper-scale", action="store_true")
    val.set_defaults(func=_cmd_validate)

    plot = sub.add_parser("plotdata", help="write x,density CSVs for a posterior-samples file")
    plot.add_argument("samples")
    plot.add_argument("-o", "--output")
    plot.set_defaults(func=_cmd_plotdata)

    sim = sub.add_parser("simulate", help="simulate a dataset")
    sim.add_argument("model", choices=sorted(MODEL_DEFAULTS))
    sim.add_argument("params", nargs="*", type=float)
    sim.add_argument("-n", type=int, help="observations, loci or lattice side")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--dt", type=float, default=0.1)
    sim.add_argument("--genes-per-deme", type=int, default=20)
    sim.add_argument("--cycles", type=int, default=200)
    sim.add_argument("-o", "--output", required=True)
    sim.set_defaults(func=_cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (RunError, RuntimeError, ValueError, OSError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
