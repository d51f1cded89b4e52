"""Command line entry point ``bcdprox``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure in every run.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from bcdprox.errors import ConfigError
from bcdprox.harness.config import METHODS, load_config
from bcdprox.harness.experiment import (
    generate_all,
    run_experiment,
    summarize,
    sweep_axis,
    sweep_lambda,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def _floats(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="override the noise and initialization seeds")
    common.add_argument("--out", default=argparse.SUPPRESS, help="override the output directory")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="bcdprox", parents=[common],
                                     description="Joint state and parameter estimation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write the noisy datasets")
    p.add_argument("--config", required=True)

    p = sub.add_parser("fit", parents=[common], help="run one estimator on every replicate")
    p.add_argument("--config", required=True)
    p.add_argument("--method", choices=METHODS)

    p = sub.add_parser("sweep", parents=[common], help="repeat the experiment along one axis")
    p.add_argument("--config", required=True)
    axis = p.add_mutually_exclusive_group(required=True)
    axis.add_argument("--lambda", dest="lambdas", type=_floats)
    axis.add_argument("--noise-variance", dest="noise_variances", type=_floats)
    axis.add_argument("--theta-sigma2", dest="theta_sigma2s", type=_floats)

    p = sub.add_parser("compare", parents=[common], help="run every configured method side by side")
    p.add_argument("--config", required=True)
    return parser


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "out", None):
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "generate":
        datasets = generate_all(cfg)
        print(f"wrote {len(datasets)} dataset(s) to {cfg.out_dir}/data")
        return EXIT_OK
    if args.command == "fit":
        method = args.method or cfg.methods[0]
        result = run_experiment(replace(cfg, methods=(method,)))
    elif args.command == "compare":
        result = run_experiment(cfg)
    elif args.lambdas is not None:
        if any(v < 0 for v in args.lambdas):
            print("config error: lambda values must be nonnegative", file=sys.stderr)
            return EXIT_CONFIG
        result = sweep_lambda(cfg, args.lambdas)
    elif args.noise_variances is not None:
        result = sweep_axis(cfg, "noise_variance", args.noise_variances)
    else:
        result = sweep_axis(cfg, "theta_sigma2", args.theta_sigma2s)
    for line in summarize(result):
        print(line)
    return EXIT_NUMERIC if result.all_failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
