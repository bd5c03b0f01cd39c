"""Command-line entry point: trajectory, stability, ensemble, relax, verify.

Global options may come from (highest precedence first) command-line flags,
BOHMSTAB_* environment variables, a --config file, and built-in defaults.
Outputs are versioned CSVs with JSON provenance sidecars; identical
configuration and seed give byte-identical files.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import experiments
from .config import (ExperimentConfig, parse_model_token)
from .errors import BohmstabError
from .verify import run_verify


def _env(name: str, default=None):
    return os.environ.get(f"BOHMSTAB_{name.upper()}", default)


def _add_global_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", default=_env("config"),
                   help="experiment config file (key = value sections)")
    p.add_argument("--seed", type=int, default=None,
                   help="master seed (env BOHMSTAB_SEED)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker hint; results never depend on it "
                        "(env BOHMSTAB_THREADS)")
    p.add_argument("--out-dir", default=None,
                   help="output directory (env BOHMSTAB_OUT_DIR)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bohmstab",
        description="Stable second-order pilot-wave dynamics toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("trajectory", help="integrate one particle")
    _add_global_flags(t)
    t.add_argument("--law", choices=["modified", "bohm", "debroglie"],
                   default="modified")
    t.add_argument("--kernel", choices=["gaussian", "lorentzian", "dirac"],
                   default="gaussian")
    t.add_argument("--mu", type=float, default=None)
    t.add_argument("--alpha", type=float, default=None)
    t.add_argument("--model", default=None,
                   help="coherent | superposition:<m> | grid:<file>")
    t.add_argument("--x0", type=float, default=None)
    t.add_argument("--v0", type=float, default=None)
    t.add_argument("--t-end", type=float, default=None)
    t.add_argument("--dt", type=float, default=None)
    t.add_argument("--store-stride", type=int, default=None)
    t.add_argument("--out", default=None, help="output CSV path")

    s = sub.add_parser("stability", help="packet-following comparison")
    _add_global_flags(s)
    s.add_argument("--alpha", type=float, default=None)
    s.add_argument("--mu", type=float, default=None)
    s.add_argument("--x0", type=float, default=None)
    s.add_argument("--v0", type=float, default=None)
    s.add_argument("--t-end", type=float, default=None)
    s.add_argument("--dt", type=float, default=None)
    s.add_argument("--out", default=None)

    e = sub.add_parser("ensemble", help="sample and evolve an ensemble")
    _add_global_flags(e)
    e.add_argument("--n", type=int, default=None)
    e.add_argument("--kernel", choices=["gaussian", "lorentzian", "dirac"],
                   default=None)
    e.add_argument("--mu", type=float, default=None)
    e.add_argument("--model", default=None)
    e.add_argument("--neq", default=None,
                   help="none|born|offset:<d>|width:<mu>|custom:<csv>|"
                        "independent:<mean>,<sigma>")
    e.add_argument("--t-end", type=float, default=None)
    e.add_argument("--dt", type=float, default=None)
    e.add_argument("--out", default=None)

    r = sub.add_parser("relax", help="coarse-grained H relaxation run")
    _add_global_flags(r)
    r.add_argument("--model", default=None,
                   help="coherent | superposition:<m> | grid:<file>")
    r.add_argument("--kernel", choices=["gaussian", "lorentzian", "dirac"],
                   default=None)
    r.add_argument("--mu", type=float, default=None)
    r.add_argument("--neq", default=None)
    r.add_argument("--n", type=int, default=None)
    r.add_argument("--grid", default=None,
                   help="xmin,xmax,nx,pmin,pmax,np "
                        "(use --grid=-6,... for negative bounds)")
    r.add_argument("--times", default=None, help="t0:t1:steps")
    r.add_argument("--dt", type=float, default=None)
    r.add_argument("--out", default=None)

    v = sub.add_parser("verify", help="run the oracle-backed check suite")
    _add_global_flags(v)
    v.add_argument("--level", choices=["quick", "full"], default="quick")
    v.add_argument("--out", default=None, help="JSON report path")
    return parser


def config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
    else:
        cfg = ExperimentConfig()
    seed = args.seed if args.seed is not None else _env("seed")
    if seed is not None:
        cfg.run.seed = int(seed)
    threads = args.threads if args.threads is not None else _env("threads")
    if threads is not None:
        cfg.run.threads = int(threads)
    out_dir = args.out_dir if args.out_dir is not None else _env("out_dir")
    if out_dir is not None:
        cfg.run.out_dir = out_dir

    def take(section, key, value):
        if value is not None:
            setattr(section, key, value)

    if args.command in ("trajectory", "ensemble", "relax"):
        if getattr(args, "model", None):
            parse_model_token(args.model, cfg.model)
        take(cfg.kernel, "kind", getattr(args, "kernel", None))
        take(cfg.kernel, "mu", args.mu)
    if args.command == "trajectory":
        take(cfg.force, "law", args.law)
        take(cfg.trajectory, "x0", args.x0)
        take(cfg.trajectory, "v0", args.v0)
        take(cfg.trajectory, "t_end", args.t_end)
        take(cfg.trajectory, "store_stride", args.store_stride)
        take(cfg.integrator, "dt", args.dt)
        take(cfg.model, "alpha", args.alpha)
    elif args.command == "stability":
        take(cfg.model, "alpha", args.alpha)
        take(cfg.kernel, "mu", args.mu)
        take(cfg.trajectory, "x0", args.x0)
        take(cfg.trajectory, "v0", args.v0)
        take(cfg.trajectory, "t_end", args.t_end)
        take(cfg.integrator, "dt", args.dt)
        cfg.model.kind = "coherent"
    elif args.command == "ensemble":
        take(cfg.ensemble, "n", args.n)
        take(cfg.ensemble, "neq", args.neq)
        take(cfg.ensemble, "t_end", args.t_end)
        take(cfg.integrator, "dt", args.dt)
    elif args.command == "relax":
        take(cfg.ensemble, "n", args.n)
        take(cfg.ensemble, "neq", args.neq)
        take(cfg.grid, "spec", args.grid)
        take(cfg.times, "schedule", args.times)
        take(cfg.integrator, "dt", args.dt)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            report = run_verify(args.level)
            text = json.dumps(report, indent=2, sort_keys=True)
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(text + "\n")
            print(text)
            return 0 if report["all_pass"] else 1
        cfg = config_from_args(args)
        runner = {"trajectory": experiments.run_trajectory,
                  "stability": experiments.run_stability,
                  "ensemble": experiments.run_ensemble,
                  "relax": experiments.run_relax}[args.command]
        result = runner(cfg, out_csv=args.out)
        print(result["path"])
        return 0
    except BohmstabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
