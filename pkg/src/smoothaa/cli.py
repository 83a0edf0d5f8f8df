"""Command-line entry point: ``run``, ``rates`` and ``paper-suite``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .accel import SolverError
from .bench import SpecError, load_spec, run_experiment, write_outputs, write_rates

log = logging.getLogger("smoothaa")


def _say(args, msg):
    if not args.quiet:
        print(msg)


def cmd_run(args):
    spec = load_spec(args.spec)
    res = run_experiment(spec, threads=args.threads)
    out = write_outputs(res)
    for s in spec.solvers:
        cells = res.by_solver(s.label)
        conv = sum(c.report.converged for c in cells)
        _say(args, f"{s.label:32s} converged {conv}/{len(cells)}  mean iterations {res.mean_iterations(s.label):.1f}")
    _say(args, f"wrote {out}")
    return 0


def cmd_rates(args):
    curves, summ, summary = write_rates(args.trace, args.out)
    for k, v in summary:
        _say(args, f"{k:16s} {v}")
    _say(args, f"wrote {curves} and {summ}")
    return 0


def cmd_suite(args):
    from .suite import AcceptanceSuite

    suite = AcceptanceSuite(args.outdir, threads=args.threads, log=(lambda m: None) if args.quiet else print)
    if args.only:
        results = [suite.run_criterion(n) for n in args.only]
        for r in results:
            _say(args, r.line())
        suite.write_report(results)
    else:
        results = suite.run_all()
    failed = [r.number for r in results if not r.passed]
    _say(args, f"{len(results) - len(failed)}/{len(results)} criteria passed"
         + (f"; failing: {failed}" if failed else ""))
    return 1 if failed else 0


def build_parser():
    p = argparse.ArgumentParser(prog="smoothaa-bench", description="Anderson acceleration benchmarks")
    p.add_argument("--threads", type=int, default=1, help="worker threads for solver cells")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec")
    r.add_argument("spec", type=Path)
    r.set_defaults(func=cmd_run)

    q = sub.add_parser("rates", help="r- and q-factor curves for a trace CSV")
    q.add_argument("trace", type=Path)
    q.add_argument("--out", type=Path, default=None, help="output directory (default: next to the trace)")
    q.set_defaults(func=cmd_rates)

    s = sub.add_parser("paper-suite", help="run the acceptance suite")
    s.add_argument("outdir", type=Path)
    s.add_argument("--only", type=int, nargs="+", choices=range(1, 10), metavar="N",
                   help="run only these criteria (1-9)")
    s.set_defaults(func=cmd_suite)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (SpecError, SolverError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
