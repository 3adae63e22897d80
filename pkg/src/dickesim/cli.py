"""Command-line entry point.

One subcommand per experiment; each takes --config, --out, --seed and
--threads.  Thread caps are exported before numpy loads so BLAS pools are
sized correctly.  Exit codes: 0 success, 2 config/validation failure,
3 numerical contract violation.
"""

from __future__ import annotations

import argparse
import os
import sys


def _set_threads(k: int):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(k)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dickesim",
        description="Spin-boson scrambling and thermalization experiments")
    sub = parser.add_subparsers(dest="experiment", required=True)
    experiments = ("spectrum", "lyapunov-map", "fotoc", "twa", "renyi",
                   "thermalize")
    for name in experiments:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--out", default="", help="output directory "
                       "(default: run.out_dir from config, else cwd)")
        p.add_argument("--seed", type=int, default=None,
                       help="override run.seed")
        p.add_argument("--threads", type=int, default=None,
                       help="cap BLAS/OpenMP threads")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return 2
        _set_threads(args.threads)

    # imports deferred so --threads can take effect before BLAS spins up
    from .model import CutoffError
    from .propagate import NoExponentialWindow
    from .runner import ConfigError, run

    try:
        manifest = run(args.experiment, args.config, args.out,
                       seed=args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CutoffError, RuntimeError) as exc:
        print(f"numerical contract violated: {exc}", file=sys.stderr)
        return 3
    except NoExponentialWindow as exc:
        # fit trouble inside a pipeline is a result, not a crash; pipelines
        # record it in the manifest, so reaching here means a coding bug
        print(f"internal: unhandled fit failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    for name, entry in sorted(manifest.outputs.items()):
        print(f"{name}\t{entry['rows']} rows\t{entry['sha256'][:12]}")
    print(f"manifest: run_manifest.json ({manifest.wall_time_s:.2f}s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
