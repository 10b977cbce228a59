"""Command-line entry point: ``gmclab {closed-form,estimate,validate,plotdata}``.

Exit codes: 0 on success, 1 on invalid input or configuration, 2 on a
runtime or sampling failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import analytic
from .errors import ConfigError, DomainError, GmcLabError
from .estimators import TailCurve

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
WHAT = ("Q", "psi", "p0", "reflection", "tail-constant")


def _closed_form(args) -> float:
    g, dim = args.gamma, args.dim
    if dim not in (1, 2):
        raise DomainError("--dim must be 1 or 2")
    if args.what == "Q":
        if not 0.0 < g <= 2.0:
            raise DomainError(f"--gamma must lie in (0, 2], got {g!r}")
        return analytic.coupling_q(g, dim)
    params = analytic.ChaosParams(g, dim)
    if args.what == "psi":
        if args.p is None:
            raise DomainError("--what psi needs --p")
        return analytic.psi(args.p, g)
    if args.what == "p0":
        return analytic.p_zero(g)
    if args.what == "reflection":
        if dim == 1:
            return analytic.reflection_closed_1d(g)
        alpha = g if args.alpha is None else args.alpha
        return analytic.reflection_closed_2d(alpha, g)
    return analytic.tail_constant(params).prefactor


def cmd_closed_form(args) -> int:
    value = _closed_form(args)
    print(f"{value:.15g}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    from .harness import ResultStore, load_config, result_to_text, run_experiment

    cfg = load_config(args.config)
    if args.workers is not None:
        cfg = cfg.model_copy(update={"workers": args.workers})
    store = ResultStore(args.store)
    outcome = run_experiment(cfg, store, record_runtime=args.record_runtime)
    print(f"record {outcome.record_id} ({outcome.runtime_s:.1f} s)", file=sys.stderr)
    if outcome.failed:
        print(f"error: {type(outcome.result).__name__}: {outcome.result}", file=sys.stderr)
        return EXIT_RUNTIME
    text = result_to_text(outcome.result)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validate import run_suite

    def show(r):
        print(r.line(), flush=True)

    results = run_suite(args.suite, seed=args.seed, workers=args.workers, progress=show)
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    return EXIT_OK if n_fail == 0 else EXIT_INVALID


def cmd_plotdata(args) -> int:
    from .harness import ResultStore, plot_rows

    store = ResultStore(args.store)
    try:
        rec = store.get(args.record)
    except KeyError as exc:
        raise ConfigError([str(exc.args[0])]) from None
    try:
        curve: TailCurve = rec.curve()
    except TypeError as exc:
        raise ConfigError([str(exc)]) from None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "p", "se", "theory"])
    for row in plot_rows(curve):
        w.writerow([f"{x:.17g}" for x in row])
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors: exit 1 rather than argparse's 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gmclab", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND",
                           parser_class=_Parser)

    cf = sub.add_parser("closed-form", help="evaluate an exact formula",
                        description="Evaluate an exact formula and print it to 15 significant digits.")
    cf.add_argument("--gamma", type=float, required=True,
                    help="coupling gamma: (0, 2) in the plane, (0, sqrt 2) on a line; Q also accepts 2")
    cf.add_argument("--alpha", type=float, default=None,
                    help="insertion weight for --what reflection, in (gamma/2, Q); default gamma")
    cf.add_argument("--dim", type=int, default=2, choices=(1, 2), help="dimension, 1 or 2 (default 2)")
    cf.add_argument("--p", type=float, default=None, help="argument of psi (any real), for --what psi")
    cf.add_argument("--what", required=True, choices=WHAT,
                    help="Q: gamma/2 + dim/gamma; psi: moment-scaling exponent at --p; "
                         "p0: root of psi = -1; reflection: unit-volume reflection coefficient; "
                         "tail-constant: (1 - gamma^2/4) times the reflection coefficient "
                         "((1 - gamma^2/2) times it when --dim 1)")
    cf.set_defaults(func=cmd_closed_form)

    es = sub.add_parser("estimate", help="run one experiment from a config file",
                        description="Run the estimator named in a YAML/JSON config, append the "
                                    "result to the store and write it to --out.")
    es.add_argument("--config", required=True, help="path to a YAML or JSON experiment config")
    es.add_argument("--out", default=None,
                    help="output file: report JSON or curve CSV (t,p,se,kind); default stdout")
    es.add_argument("--store", default=None,
                    help="result store path (default: $GMCLAB_STORE, else ./gmclab_store.ndjson)")
    es.add_argument("--workers", type=int, default=None,
                    help="worker processes, >= 1; overrides the config, never changes results")
    es.add_argument("--record-runtime", action="store_true",
                    help="store wall-clock runtime in the output (breaks byte-identical reruns)")
    es.set_defaults(func=cmd_estimate)

    va = sub.add_parser("validate", help="run a validation suite",
                        description="Run the named checks and print PASS/FAIL with measured "
                                    "values and tolerances. Exit 0 iff every check passes.")
    va.add_argument("--suite", choices=("fast", "full"), default="fast",
                    help="fast: reduced sample sizes (minutes); full: stated sizes (about an hour)")
    va.add_argument("--seed", type=int, default=0, help="master seed, integer >= 0 (default 0)")
    va.add_argument("--workers", type=int, default=1, help="worker processes, >= 1 (default 1)")
    va.set_defaults(func=cmd_validate)

    pd = sub.add_parser("plotdata", help="export a stored tail curve with its asymptote",
                        description="Write t,p,se,theory for a stored tail curve, where theory is "
                                    "the leading-order asymptote at t.")
    pd.add_argument("--record", required=True, help="record id as printed by estimate")
    pd.add_argument("--out", default=None, help="output CSV path (default stdout)")
    pd.add_argument("--store", default=None,
                    help="result store path (default: $GMCLAB_STORE, else ./gmclab_store.ndjson)")
    pd.set_defaults(func=cmd_plotdata)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors and --help; return the code so callers need not catch
        return int(exc.code or 0)
    if getattr(args, "workers", None) is not None and args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except ConfigError as exc:
        for prob in exc.problems:
            print(f"error: {prob}", file=sys.stderr)
        return EXIT_INVALID
    except (DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (GmcLabError, ArithmeticError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
