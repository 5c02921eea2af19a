"""Command line: axbheat <command> [--config PATH] [--seed ...]; exit status 0 iff all checks pass."""

from __future__ import annotations

import argparse
import sys

from .experiments import COMMANDS, CalibrationMissing, ExperimentConfig


def build_parser():
    p = argparse.ArgumentParser(prog="axbheat", description=__doc__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="recorded in the report; the engine is serial")
    p.add_argument("--tol", type=float, help="relative target of the outer L^1 cubature")
    p.add_argument("--L-list", dest="L_list", help="comma-separated L values; e^k means exp(k)")
    p.add_argument("--scales", help="comma-separated atom log-radii r0")
    p.add_argument("--N-list", dest="N_list", help="comma-separated truncation levels N")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in ("seed", "out", "threads", "tol", "L_list", "scales", "N_list")}
    try:
        if args.config:
            cfg = ExperimentConfig.from_file(args.config, **overrides)
        else:
            cfg = ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
    except (OSError, ValueError) as exc:
        print(f"axbheat: {exc}", file=sys.stderr)
        return 2
    try:
        rep = COMMANDS[args.command](cfg)
    except CalibrationMissing as exc:
        print(f"axbheat: {exc}", file=sys.stderr)
        return 2
    for name, c in sorted(rep["checks"].items()):
        print(f"{'PASS' if c['passed'] else 'FAIL'} {args.command}:{name}")
    return 0 if rep["passed"] else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
