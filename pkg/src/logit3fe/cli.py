"""Command-line front end: ``estimate``, ``simulate`` and ``verify``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 estimation error,
4 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import montecarlo, oracle, serialize
from .debias import estimate
from .errors import AsymmetricPanel, DataError, EstimationError
from .glm import FitOptions
from .panel import Schema, drop_uninformative, panel_summary, read_csv

EXIT_USAGE, EXIT_DATA, EXIT_ESTIMATION, EXIT_VERIFY = 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _sizes(text: str) -> list[tuple[int, int]]:
    out = []
    for part in text.split(","):
        a, sep, b = part.strip().lower().partition("x")
        if not sep or not a.isdigit() or not b.isdigit():
            raise argparse.ArgumentTypeError(f"expected NxT pairs like 50x10, got {part!r}")
        out.append((int(a), int(b)))
    return out


def _positive(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="logit3fe", description="Three-way fixed-effects logit with analytic bias correction")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def tolerances(sp):
        sp.add_argument("--outer-tol", type=_positive, default=FitOptions.outer_tol)
        sp.add_argument("--inner-tol", type=_positive, default=FitOptions.inner_tol)

    est = sub.add_parser("estimate", help="estimate on a CSV panel")
    est.add_argument("--input", required=True)
    est.add_argument("--y", required=True)
    est.add_argument("--i", required=True)
    est.add_argument("--j", required=True)
    est.add_argument("--t", required=True)
    est.add_argument("--x", required=True, help="comma-separated regressor columns")
    est.add_argument("--no-bias-correction", action="store_true")
    tolerances(est)
    est.add_argument("--output")
    est.add_argument("--format", choices=("text", "csv", "kv"))

    sim = sub.add_parser("simulate", help="Monte Carlo study")
    sim.add_argument("--grid", type=_sizes, default=None)
    sim.add_argument("--reps", type=int, default=500)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--figure2", action="store_true")
    sim.add_argument("--sizes", type=_sizes)
    sim.add_argument("--workers", type=int, default=1)
    tolerances(sim)
    sim.add_argument("--output")
    sim.add_argument("--format", choices=("text", "csv"), default="csv")

    ver = sub.add_parser("verify", help="dense oracle cross-checks")
    ver.add_argument("--sizes", type=_sizes, default=[(4, 4), (5, 5)])
    ver.add_argument("--seed", type=int, default=42)
    tolerances(ver)
    ver.add_argument("--output")
    ver.add_argument("--format", choices=("text", "kv"), default="text")
    return p


def _emit(text: str, output: str | None) -> None:
    if output:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _options(args) -> FitOptions:
    return FitOptions(outer_tol=args.outer_tol, inner_tol=args.inner_tol)


def cmd_estimate(args) -> int:
    schema = Schema(i=args.i, j=args.j, t=args.t, y=args.y,
                    x=tuple(c.strip() for c in args.x.split(",") if c.strip()))
    try:
        raw = read_csv(args.input, schema)
        panel, report = drop_uninformative(raw)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(serialize.dumps_kv(panel_summary(panel, report)), end="", file=sys.stderr)
    try:
        fit, corrected = estimate(panel, _options(args))
    except EstimationError as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    bc = not args.no_bias_correction
    fmt = args.format or ("kv" if args.output else "text")
    if fmt == "kv":
        record = {**panel_summary(panel, report), **serialize.fit_record(fit),
                  **serialize.corrected_record(corrected, bc)}
        body = serialize.dumps_kv(record)
    elif fmt == "csv":
        body = serialize.corrected_csv(corrected, bc)
    else:
        body = serialize.corrected_text(corrected, bc)
    _emit(body, args.output)
    if args.output:
        sys.stdout.write(serialize.corrected_text(corrected, bc))
    return 0


def cmd_simulate(args) -> int:
    if args.seed is None:
        raise UsageError("simulate requires --seed")
    if args.reps < 1 or args.workers < 1:
        raise UsageError("--reps and --workers must be at least 1")
    opts = _options(args)
    if args.figure2:
        if not args.sizes:
            raise UsageError("--figure2 requires --sizes")
        if args.reps < 2:
            raise UsageError("--figure2 requires --reps >= 2")
        records = []
        for N, T in args.sizes:
            config = montecarlo.DgpConfig(N=N, T=T, seed=args.seed)
            records += montecarlo.normalized_differences(config, args.reps, opts, args.workers)
        _emit(montecarlo.normalized_csv(records), args.output)
        summary = montecarlo.normalized_summary(records)
        out = sys.stdout if args.output else sys.stderr
        for (N, T, name), stats in summary.items():
            a = stats["scaled_a"]
            print(f"({N}, {T}) {name:>11}: mean N*sqrt(T)*diff = {a['mean']:.3f} (MC s.e. {a['mc_se']:.3f}), "
                  f"sd sqrt(NT)*diff = {stats['scaled_b']['sd']:.3f}", file=out)
        return 0
    if not args.grid:
        raise UsageError("simulate requires --grid (or --figure2 --sizes)")
    summaries = montecarlo.run_study(args.grid, args.reps, args.seed, opts, args.workers)
    if args.format == "text":
        _emit(montecarlo.study_text(summaries), args.output)
    else:
        _emit(montecarlo.study_csv(summaries), args.output)
        (sys.stdout if args.output else sys.stderr).write(montecarlo.study_text(summaries))
    return 0


def cmd_verify(args) -> int:
    try:
        result = oracle.run_verification(sizes=args.sizes, seed=args.seed, options=_options(args))
    except AsymmetricPanel as exc:
        raise UsageError(str(exc)) from None
    if args.format == "kv":
        body = "".join(serialize.dumps_kv({c.name: c.value}) for c in result.checks)
        for rep in result.reports[:: max(1, len(result.reports) // max(1, len(args.sizes)))]:
            body += serialize.dumps_kv({f"report[{rep.N}x{rep.T}]": serialize.dataclass_record(rep)})
    else:
        lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name:<32} {c.value:.3e}  (threshold {c.threshold:.0e})"
                 for c in result.checks]
        for N, T in args.sizes:
            reps = [r for r in result.reports if (r.N, r.T) == (N, T)]
            worst = min(reps, key=lambda r: r.bound_margin)
            lines.append(f"info  {N}x{T}: lambda_min {worst.lambda_min:.4f}, c_min {worst.c_min:.4f}, "
                         f"margin vs 3/7 c_min {worst.bound_margin:+.4f}, "
                         f"max|H^-1 - D^-1| {worst.hinv_minus_dinv_max:.4f}")
        body = "\n".join(lines) + "\n"
    _emit(body, args.output)
    if not result.passed:
        names = ", ".join(c.name for c in result.failed)
        print(f"verification failed: {names}", file=sys.stderr)
        return EXIT_VERIFY
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        handler = {"estimate": cmd_estimate, "simulate": cmd_simulate, "verify": cmd_verify}[args.command]
        return handler(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
