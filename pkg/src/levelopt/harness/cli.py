"""Command line entry point: ``levelopt solve`` and ``levelopt bench``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import METHODS, SolverSettings, load_suite, run_bench, solve_instance
from .instances import InstanceSpec, build_instance

EXIT_OK, EXIT_INPUT, EXIT_CAP = 0, 1, 2
POLICIES = {"poly": "polynomial", "recursive": "recursive"}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="levelopt")
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("--instance", required=True, help="instance spec JSON file")
    s.add_argument("--method", required=True, choices=METHODS)
    s.add_argument("--eps", type=float, default=1e-6)
    s.add_argument("--beta", type=float, default=0.5)
    s.add_argument("--theta", type=float, default=0.5)
    s.add_argument("--lambda", dest="lam", type=float, default=0.75)
    s.add_argument("--bundle", type=int, default=10)
    s.add_argument("--policy", choices=sorted(POLICIES), default="poly")
    s.add_argument("--trace", help="write the iteration trace CSV here")
    s.add_argument("--seed", type=int, help="override the instance seed")
    s.add_argument("--max-iters", type=int, default=5000)
    b = sub.add_parser("bench", help="run a benchmark suite")
    b.add_argument("--suite", required=True, help="suite JSON file")
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--workers", type=int, default=1)
    return ap


def _solve(args) -> int:
    spec_d = json.loads(Path(args.instance).read_text())
    if args.seed is not None:
        spec_d["seed"] = args.seed
    inst = build_instance(InstanceSpec.from_dict(spec_d))
    settings = SolverSettings(eps=args.eps, beta=args.beta, theta=args.theta, lam=args.lam,
                              bundle=args.bundle, policy=POLICIES[args.policy],
                              max_iters=args.max_iters, subgrad_iters=args.max_iters)
    res = solve_instance(inst, args.method, settings)
    if args.trace:
        res.trace.to_csv(args.trace)
    print(json.dumps({"instance": inst.name, "method": args.method, "status": res.status,
                      "ub": res.ub, "lb": res.lb, "gap": res.gap,
                      "iterations": res.trace.last.iter, "phases": len(res.trace.phases),
                      "x": np.asarray(res.x).tolist()}))
    return EXIT_OK if res.converged else EXIT_CAP


def _bench(args) -> int:
    specs, methods, eps, settings = load_suite(Path(args.suite).read_text())
    res = run_bench(specs, methods, eps, args.out, settings, workers=args.workers)
    for r in res.runs:
        print(f"{r.instance:40s} {r.method:14s} eps={r.eps:.0e} {r.status:10s} "
              f"gap={r.gap:.3e} iters={r.iterations}")
    return EXIT_OK if res.all_converged else EXIT_CAP


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INPUT
    try:
        return _solve(args) if args.command == "solve" else _bench(args)
    except (OSError, ValueError, KeyError, TypeError) as e:
        print(f"levelopt: error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
