"""Command-line front end for the sweep harness.

Subcommands::

    adiabatica run --config exp.toml [--out DIR] [--jobs N] [--force]
    adiabatica list-examples
    adiabatica verify --example NAME --eps E
    adiabatica plot report.csv -o figure.svg

Exit codes: 0 on success, 1 when a sweep's verdict fails its expected
behavior, 2 when a hard invariant fails (residual ceilings exceeded, or
the integrator refuses a too-stiff step), 3 on usage or I/O errors.

``ADIABATICA_JOBS`` supplies the default worker count; an explicit
``--jobs`` beats it, and both beat the config file.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .evolve import StiffnessError
from .harness import (
    ADIABATIC_RESIDUAL_CAP,
    COMMUTATOR_RESIDUAL_CAP,
    ExperimentConfig,
    _sweep_point,
    emit,
    plot_csv,
    run,
)
from .opfamily import list_examples, registry_manifest

__all__ = ["main"]

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_INVARIANT = 2
EXIT_USAGE = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad arguments, which collides
    with the invariant-failure code; route usage errors to 3."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _env_jobs() -> int | None:
    raw = os.environ.get("ADIABATICA_JOBS")
    if raw is None or raw.strip() == "":
        return None
    try:
        jobs = int(raw)
    except ValueError:
        jobs = 0
    if jobs < 1:
        print(
            f"adiabatica: ADIABATICA_JOBS={raw!r} must be an integer >= 1",
            file=sys.stderr,
        )
        raise SystemExit(EXIT_USAGE)
    return jobs


def _cmd_run(args) -> int:
    try:
        config = ExperimentConfig.from_toml(args.config)
    except FileNotFoundError:
        print(f"adiabatica: config not found: {args.config}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, TypeError) as exc:
        print(f"adiabatica: bad config: {exc}", file=sys.stderr)
        return EXIT_USAGE

    overrides = {}
    jobs = args.jobs if args.jobs is not None else _env_jobs()
    if jobs is not None:
        overrides["jobs"] = jobs
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.force:
        overrides["force"] = True
    if overrides:
        config = replace(config, **overrides)

    try:
        report = run(config)
    except KeyError as exc:
        print(f"adiabatica: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    except StiffnessError as exc:
        print(f"adiabatica: invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        print(f"adiabatica: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out_dir = config.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, config.example)
    emit(report, "csv", stem + ".csv")
    emit(report, "svg", stem + ".svg")

    print(f"example:  {report.example}")
    print(f"metric:   {report.metric}")
    if report.slope is not None:
        print(
            f"slope:    {report.slope:.4f} +/- {report.interval:.4f} (95%)"
        )
    if report.predicted is not None:
        print(f"expected: {report.predicted:.4f}")
    print(f"verdict:  {report.verdict}")
    for note in report.annotations:
        print(f"note:     {note}")
    print(f"report:   {stem}.csv / {stem}.svg")

    if not report.invariants_ok:
        return EXIT_INVARIANT
    if not report.verdict_ok:
        return EXIT_VERDICT
    return EXIT_OK


def _cmd_list_examples(_args) -> int:
    entries = {e["name"]: e for e in registry_manifest()["examples"]}
    names = list_examples()
    width = max(len(name) for name in names)
    for name in names:
        entry = entries.get(name, {})
        expected = entry.get("expected", "")
        summary = entry.get("summary", "").split(";")[0].split(".")[0]
        print(f"{name:<{width}}  [{expected}]  {summary}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    if args.eps <= 0 or args.eps >= 1:
        print("adiabatica: --eps must lie in (0, 1)", file=sys.stderr)
        return EXIT_USAGE
    payload = {
        "example": args.example,
        "params": {},
        "eps": args.eps,
        "tol_step": 1e-9,
        "grid": 33,
        "metric": "auto",
        "mollifier_n": 16,
        "schedule": "quantitative",
        "out_dir": None,
        "index": 0,
    }
    try:
        rec = _sweep_point(payload)
    except KeyError as exc:
        print(f"adiabatica: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    except StiffnessError as exc:
        print(f"adiabatica: invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT

    adiab_ok = rec["adiab_resid"] <= ADIABATIC_RESIDUAL_CAP
    comm_ok = rec["comm_resid"] <= COMMUTATOR_RESIDUAL_CAP
    print(f"example:     {args.example} at eps = {args.eps:g}")
    print(f"sup_dev:     {rec['sup_dev']:.6g}")
    print(
        f"adiab_resid: {rec['adiab_resid']:.6g} "
        f"(cap {ADIABATIC_RESIDUAL_CAP:g}: {'ok' if adiab_ok else 'FAIL'})"
    )
    print(
        f"comm_resid:  {rec['comm_resid']:.6g} "
        f"(cap {COMMUTATOR_RESIDUAL_CAP:g}: {'ok' if comm_ok else 'FAIL'})"
    )
    return EXIT_OK if (adiab_ok and comm_ok) else EXIT_INVARIANT


def _cmd_plot(args) -> int:
    try:
        plot_csv(args.report, args.output)
    except FileNotFoundError:
        print(f"adiabatica: report not found: {args.report}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"adiabatica: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"figure:   {args.output}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _Parser(
        prog="adiabatica",
        description="slowness sweeps over the operator-family catalogue",
    )
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p_run = sub.add_parser("run", help="execute a sweep from a TOML config")
    p_run.add_argument("--config", required=True, help="TOML experiment file")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument(
        "--jobs", type=int, default=None,
        help="worker processes (default: ADIABATICA_JOBS or the config)",
    )
    p_run.add_argument(
        "--force", action="store_true",
        help="keep sweep points below the example's truncation floor",
    )

    sub.add_parser("list-examples", help="show the catalogue")

    p_verify = sub.add_parser(
        "verify", help="check hard invariants at one slowness value"
    )
    p_verify.add_argument("--example", required=True)
    p_verify.add_argument("--eps", type=float, required=True)

    p_plot = sub.add_parser("plot", help="re-plot a report CSV as SVG")
    p_plot.add_argument("report", help="report CSV path")
    p_plot.add_argument("-o", "--output", required=True, help="SVG path")

    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "list-examples":
            return _cmd_list_examples(args)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "plot":
            return _cmd_plot(args)
    except OSError as exc:
        print(f"adiabatica: i/o error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    raise AssertionError("unreachable")


if __name__ == "__main__":  # pragma: no cover - exercised via console script
    sys.exit(main())
