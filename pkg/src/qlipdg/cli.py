"""Command-line harness: ``qlipdg solve | study | verify``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, build_config
from .solver import LinearSolveError, NewtonDivergence
from .study import convergence_svg, field_csv, format_csv, run_case, run_study, write_atomic
from .verify import format_report, run_verify

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

log = logging.getLogger("qlipdg")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _add_common(p):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--preset", help="problem preset")
    p.add_argument("--p", dest="degrees", help="polynomial degree(s), comma separated")
    p.add_argument("--levels", help="number of refinement levels")
    p.add_argument("--theta", help="-1, 0 or 1")
    p.add_argument("--c-sigma", dest="c_sigma", help="penalty constant (> 1)")
    p.add_argument("--dt", help="time step (default: largest step <= h^(p+1) / decay rate)")
    p.add_argument("--t-final", dest="t_final", help="final time")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", help="seed for the property suites")
    p.add_argument("--jobs", help="worker processes for study runs")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="qlipdg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    solve = sub.add_parser("solve", help="one steady or parabolic run on the finest level")
    _add_common(solve)
    solve.add_argument("--dump-snapshots", action="store_true", help="write one field CSV per time step")
    study = sub.add_parser("study", help="degree x level sweep with CSV and SVG output")
    _add_common(study)
    verify = sub.add_parser("verify", help="run every property suite")
    _add_common(verify)
    return parser


def _config(args):
    keys = ("preset", "degrees", "levels", "theta", "c_sigma", "dt", "t_final", "out", "seed", "jobs")
    return build_config(args.config, **{k: getattr(args, k) for k in keys})


def _emit(path, data):
    write_atomic(path, data)
    print(path)


def cmd_solve(config, dump_snapshots=False):
    p = config.degrees[0]
    level = config.levels - 1
    result = run_case(config, p, level)
    out = Path(config.out)
    _emit(out / "summary.csv", format_csv([result.row]))
    _emit(out / "solution.csv", field_csv(result.solution))
    if dump_snapshots and result.series is not None:
        for n in range(len(result.series)):
            _emit(out / "snapshots" / f"step_{n:05d}.csv", field_csv(result.series.snapshot(n)))
    return EXIT_OK


def cmd_study(config):
    rows = run_study(config)
    out = Path(config.out)
    _emit(out / "summary.csv", format_csv(rows))
    _emit(out / "convergence.svg", convergence_svg(rows))
    return EXIT_OK


def cmd_verify(config):
    results = run_verify(config.theta, config.c_sigma, config.seed)
    report = format_report(results)
    sys.stdout.write(report)
    _emit(Path(config.out) / "verify.txt", report)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = _config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "solve":
            return cmd_solve(config, args.dump_snapshots)
        if args.command == "study":
            return cmd_study(config)
        return cmd_verify(config)
    except (NewtonDivergence, LinearSolveError) as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
