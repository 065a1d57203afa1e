"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 failed self-check.
"""

import argparse
import os
import sys
import time

from . import experiments as ex
from .config import config_hash, parse_config
from .exceptions import ConfigError, NumericalError
from .output import (RunManifest, write_chaos_csv, write_levels_csv,
                     write_manifest, write_mse_csv, write_trajectory_csv)
from .selfcheck import run_self_checks

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_SELFCHECK = 0, 1, 2, 3
SEED_ENV = "OTFPF_SEED"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message, key="argv")


def _u64(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError(f"seed out of range: {value}")
    return value


def _build_parser():
    parser = _Parser(prog="otfpf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in (("validate", "matrix-equation and invariant self-checks"),
                       ("filter", "ensemble vs Kalman-Bucy error decay"),
                       ("chaos", "propagation-of-chaos rates"),
                       ("static-compare", "PF / modified PF / FPF MSE comparison"),
                       ("sweep", "MSE grid over (N, d) with level curves")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=_u64, help="master seed (overrides config)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker processes, 0 = all cores; never changes results")
    return parser


def _resolve_seed(flag, cfg_seed):
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return _u64(env)
        except argparse.ArgumentTypeError as exc:
            raise ConfigError(str(exc), key=SEED_ENV) from None
    return cfg_seed


def _workers(threads):
    if threads < 0:
        raise ConfigError("must be >= 0", key="--threads")
    if threads == 0:
        return os.cpu_count() or 1
    return threads


def _validate(args):
    seed = _resolve_seed(args.seed, 0)
    results = run_self_checks(seed)
    width = max(len(r.name) for r in results)
    print(f"{'check':<{width}}  {'residual':>12}  {'tol':>8}  status")
    for r in results:
        print(f"{r.name:<{width}}  {r.residual:12.3e}  {r.tol:8.1e}  "
              f"{'ok' if r.passed else 'FAIL'}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_SELFCHECK


def _run(args):
    if not args.config:
        raise ConfigError("required for this command", key="--config")
    cfg = parse_config(args.config)
    cfg = cfg.replace(master_seed=_resolve_seed(args.seed, cfg.master_seed))
    workers = _workers(args.threads)
    os.makedirs(args.out, exist_ok=True)
    out = lambda name: os.path.join(args.out, name)  # noqa: E731
    start = time.perf_counter()
    files = []

    if args.command == "filter":
        for i, variant in enumerate(cfg.variants):
            result = ex.run_error_decay(cfg, variant=variant)
            name = "trajectory.csv" if i == 0 else f"trajectory_{variant.value}.csv"
            files.append(write_trajectory_csv(out(name), result))
            print(f"{variant.value}: lambda0={result.lambda0:.6g} "
                  f"mean rate={result.rate_mean:.6g} cov rate={result.rate_cov:.6g}")
    elif args.command == "chaos":
        result = ex.run_chaos(cfg, workers=workers)
        files.append(write_chaos_csv(out("chaos.csv"), result))
        print(f"slope err2={result.slope_err2:.4f} slope cor1={result.slope_cor1:.4f}")
    elif args.command == "static-compare":
        records = ex.run_static_compare(cfg, workers=workers)
        files.append(write_mse_csv(out("mse.csv"), records))
    else:
        result = ex.run_sweep(cfg, workers=workers)
        files.append(write_mse_csv(out("mse.csv"), result.records))
        files.append(write_levels_csv(out("levels.csv"), result))
        for level in cfg.levels:
            print(f"level {level:g}: PF ln N vs d slope={result.pf_slopes[level]:.4f} "
                  f"FPF ln N vs ln d slope={result.fpf_slopes[level]:.4f}")

    manifest = RunManifest(config_hash=config_hash(cfg), master_seed=cfg.master_seed,
                           command=args.command,
                           outputs=[os.path.basename(f) for f in files],
                           runtime_seconds=time.perf_counter() - start)
    write_manifest(args.out, manifest)
    return EXIT_OK


def main(argv=None):
    try:
        args = _build_parser().parse_args(argv)
        if args.command == "validate":
            return _validate(args)
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
