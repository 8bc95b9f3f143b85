"""Command-line entry point.

    semicensor simulate  --config cfg.json --seed 1 --out runs/sim
    semicensor fit       --data runs/sim/marks.csv --config fit.json --out runs/fit
    semicensor condition --data marks.csv --config ground.json --out runs/cond
    semicensor experiment misspec|renewal-panels|peak-conditional --seed 0 --out runs/x
"""

import argparse
import sys

from . import __version__
from .config import load_config
from .exceptions import ConvergenceError, DomainError, ExplosionError, QuadratureError, SamplingError, ValidationError
from .experiments import RUNNERS, run_generic

_ERRORS = (ValidationError, DomainError, ConvergenceError, ExplosionError, QuadratureError, SamplingError, OSError)


def _common(p):
    p.add_argument("--config", help="JSON config; missing fields take the built-in defaults")
    p.add_argument("--seed", type=int, help="64-bit seed (overrides the config)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker processes for independent chains")
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")


def build_parser():
    parser = argparse.ArgumentParser(prog="semicensor", description="Simulate, fit and condition semi-Markov interval-censored point data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("simulate", help="simulate a marked dataset"))
    for name, text in (("fit", "fit censoring parameters"), ("condition", "sample censored times given marks")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--data", required=True, help="CSV with columns a and l")
    p = sub.add_parser("experiment", help="run a preset experiment")
    p.add_argument("name", choices=sorted(RUNNERS))
    _common(p)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be a 64-bit unsigned integer", file=sys.stderr)
        return 2
    kind = args.name if args.command == "experiment" else args.command
    try:
        cfg = load_config(kind, args.config, args.seed)
        figures = not args.no_figures
        if args.command == "experiment":
            RUNNERS[kind](cfg, args.out, args.threads, figures)
        else:
            run_generic(cfg, args.out, getattr(args, "data", None), args.threads, figures)
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
