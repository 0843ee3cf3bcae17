"""Command-line entry point ``bfmix``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import logging
import sys
from pathlib import Path

from .afunction import QuadratureError, build_afun_table
from .config import ConfigError, load_config
from .hobasis import BasisMemoryError, ConvergenceError
from .methods import BoxTooSmallError, InstabilityError, StepCapExceeded
from .orthonorm import LinearDependenceError
from .runner import ResumeMismatchError, bench_scaling, compare_methods, resume_run, run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
NUMERICAL_ERRORS = (StepCapExceeded, InstabilityError, BoxTooSmallError, ConvergenceError, LinearDependenceError,
                    QuadratureError, BasisMemoryError, FloatingPointError)


def _parser():
    p = argparse.ArgumentParser(prog="bfmix", description="Ground states and droplets of Bose-Fermi mixtures")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the configured method")
    r.add_argument("config")

    b = sub.add_parser("bench", help="thread-scaling benchmark on a fixed workload")
    b.add_argument("config")
    b.add_argument("--threads", nargs="+", type=int, required=True)
    b.add_argument("--steps", type=int, default=1000)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--out", default=None, help="CSV path (default: <output_dir>/scaling.csv)")

    c = sub.add_parser("compare", help="run several methods on the same physics")
    c.add_argument("config")
    c.add_argument("--methods", nargs="+", required=True, help="KIND or KIND:N_shell")
    c.add_argument("--out", default=None, help="CSV path (default: <output_dir>/compare.csv)")

    s = sub.add_parser("resume", help="continue a run from its checkpoint directory")
    s.add_argument("checkpoint")
    s.add_argument("--output-dir", default=None)

    a = sub.add_parser("afun-table", help="tabulate A(w, alpha) to a binary file")
    a.add_argument("--w", type=float, required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--nodes", type=int, default=256)
    a.add_argument("--alpha-min", type=float, default=1e-4)
    a.add_argument("--alpha-max", type=float, default=1e6)
    return p


def _dispatch(args):
    if args.command == "afun-table":
        try:
            table = build_afun_table(args.w, args.alpha_min, args.alpha_max, args.nodes)
        except ValueError as exc:
            raise ConfigError([f"afun-table: {exc}"]) from None
        table.save(args.out)
        print(f"wrote {args.nodes} nodes for w={args.w} to {args.out}")
        return
    if args.command == "resume":
        rep = resume_run(args.checkpoint, args.output_dir)
        print(f"{rep.method} E_total={rep.total!r} steps={rep.steps}")
        return
    config = load_config(args.config)
    out = Path(config.runtime__output_dir)
    if args.command == "run":
        rep = run(config)
        print(f"{rep.method} E_total={rep.total!r} steps={rep.steps} wall={rep.wall_seconds:.1f}s")
    elif args.command == "bench":
        out.mkdir(parents=True, exist_ok=True)
        rows = bench_scaling(config, args.threads, args.steps, args.repeats, args.out or out / "scaling.csv")
        for n, sec, sp in rows:
            print(f"threads={n} seconds={sec:.3f} speedup={sp:.2f}")
    elif args.command == "compare":
        out.mkdir(parents=True, exist_ok=True)
        rows, _ = compare_methods(config, args.methods, args.out or out / "compare.csv")
        for row in rows:
            status = row["error"] or f"E_total={row['E_total']} wall={row['wall_seconds']}s"
            print(f"{row['label']}: {status}")


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        _dispatch(args)
    except (ConfigError, ResumeMismatchError, FileNotFoundError) as exc:
        print(f"bfmix: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"bfmix: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
