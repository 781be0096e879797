"""Command-line entry point ``hrmt``.

Exit codes: 0 success, 1 identity check failed, 2 invalid configuration,
3 eigensolver failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import EXPERIMENTS, validate_config
from .errors import ConfigError, SolverError

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError(f"must be an unsigned 64-bit integer: {text}")
    return v


def _positive(text):
    v = _u64(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _kebab(name):
    out = "".join("-" + ch.lower() if ch.isupper() else ch for ch in name)
    return out.lstrip("-")


def build_parser():
    parser = argparse.ArgumentParser(prog="hrmt", description="Hierarchical random matrix experiments")
    sub = parser.add_subparsers(dest="command", required=True, metavar="<command>")

    for name in EXPERIMENTS:
        aliases = sorted({_kebab(name), name.lower()} - {name})
        p = sub.add_parser(name, aliases=aliases, help=f"run the {name} experiment")
        p.set_defaults(experiment=name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=_u64, default=None, help="override master_seed")
        p.add_argument("--workers", type=_positive, default=None,
                       help="worker processes (default: HRMT_WORKERS or all cores)")
        p.add_argument("--out", default=None, help="override output_dir")
        p.add_argument("--no-plots", action="store_true", help="skip PNG rendering")

    v = sub.add_parser("validate", help="check a config and print it with defaults filled")
    v.add_argument("--config", required=True)

    o = sub.add_parser("oracle", help="debug: evaluate a reference oracle")
    osub = o.add_subparsers(dest="oracle", required=True)
    d = osub.add_parser("distance")
    d.add_argument("n", type=int)
    d.add_argument("x", type=int)
    d.add_argument("y", type=int)
    e = osub.add_parser("eig2")
    for k in ("a", "b", "d"):
        e.add_argument(k, type=float)
    g = osub.add_parser("gap-ratio")
    g.add_argument("distribution", choices=["exponential", "goe", "equal"])
    g.add_argument("--samples", type=int, default=100_000)
    g.add_argument("--seed", type=_u64, default=0)
    vp = osub.add_parser("variance-profile")
    vp.add_argument("n", type=int)
    vp.add_argument("c", type=float)
    vp.add_argument("--unnormalized", action="store_true")
    return parser


def _read_config(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _oracle(args):
    from .oracles import run_oracle
    if args.oracle == "distance":
        res = run_oracle("distance", args.n, args.x, args.y)
    elif args.oracle == "eig2":
        res = run_oracle("eig2", args.a, args.b, args.d)
    elif args.oracle == "gap-ratio":
        res = run_oracle("gap-ratio", args.distribution, args.samples, rng=np.random.default_rng(args.seed))
        res.inputs.pop("rng")
        res.inputs["seed"] = args.seed
    else:
        res = run_oracle("variance-profile", args.n, args.c, normalized=not args.unnormalized)
    print(json.dumps(res.to_dict(), indent=2))
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)

    if args.command == "oracle":
        try:
            return _oracle(args)
        except ValueError as exc:
            print(f"hrmt oracle: {exc}", file=sys.stderr)
            return EXIT_CONFIG

    try:
        text = _read_config(args.config)
    except OSError as exc:
        print(f"hrmt: cannot read --config {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        cfg = validate_config(text, None if args.command == "validate" else args.experiment)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"hrmt: invalid config: {err}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK

    cfg = cfg.with_overrides(master_seed=args.seed, workers=args.workers, output_dir=args.out)

    from .experiments import run
    try:
        manifest = run(cfg, plots=not args.no_plots)
    except SolverError as exc:
        print(f"hrmt: solver failure (seed={exc.seed}, stream={exc.stream_index}): {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"hrmt: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO

    print(f"{cfg.experiment}: {len(manifest.files)} files written to {cfg.output_dir} "
          f"({manifest.wall_clock_seconds:.1f} s)")
    if not manifest.ok:
        print(f"{cfg.experiment}: check failed, see {cfg.output_dir}/manifest.json", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
