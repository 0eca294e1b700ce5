from __future__ import annotations

import argparse
import logging
import os
import sqlite3
import sys
from collections.abc import Callable, Sequence
from pathlib import Path

from data.config import load_config_file, normalize_key
from data.database import DB_FILE_NAME, LOG_LEVEL_ENV_VAR, get_connection, init_database, resolve_output_dir
from data.repositories import (
    CsvTableRepository,
    GraphRepository,
    ProblemDataRepository,
    RunRecordRepository,
    TerminationRunRepository,
)
from models import (
    CounterexampleConfig,
    InvalidAdversaryError,
    InvalidArgumentError,
    InvariantViolation,
    LabError,
    RunConfig,
    UnsupportedScheduleError,
    Variant,
    WindowRule,
)
from services.experiment_service import ExperimentService, InversionSetup
from services.verify_service import REPORT_HEADER, SUITES, VerifyHorizons

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_USAGE = 2

DEFAULT_BETAS = "0.5,0.55,0.6,0.65,0.7,0.75,0.8,0.85,0.9,0.95"


def _as_bool(text: str | bool) -> bool:
    if isinstance(text, bool):
        return text
    value = text.strip().lower()
    if value in {"1", "true", "yes", "on"}:
        return True
    if value in {"0", "false", "no", "off", ""}:
        return False
    raise InvalidArgumentError(f"Expected a boolean, got '{text}'.")


# (subcommand, dest) -> (converter, default); options parse with default None so a
# value given on the command line can be told apart from one that is missing
OPTIONS: dict[tuple[str | None, str], tuple[Callable[[str], object], object]] = {}
PROBLEM_KEYS = ("gamma", "a", "K", "d", "lambda1", "lambda2", "noise_std", "radius")


def _option(
    parser: argparse.ArgumentParser,
    scope: str | None,
    flag: str,
    kind: Callable,
    default: object,
    help_text: str,
    **kwargs,
) -> None:
    dest = normalize_key(flag)
    OPTIONS[(scope, dest)] = (kind, default)
    if kind is _as_bool:
        parser.add_argument(flag, dest=dest, action="store_true", default=None, help=help_text)
    else:
        parser.add_argument(flag, dest=dest, type=kind, default=None, help=help_text, **kwargs)


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from exc


def _int_count(text: str) -> int:
    # accepts 1e5 style counts
    value = float(text)
    if not value.is_integer():
        raise argparse.ArgumentTypeError(f"expected an integer count, got '{text}'")
    return int(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subgradlab",
        description="Distributed and centralized projected subgradient experiments.",
    )
    _option(parser, None, "--seed", int, 0, "base random seed")
    _option(parser, None, "--out", str, None, "output directory (default $SUBGRADLAB_OUT_DIR or ./results)")
    _option(parser, None, "--threads", int, 1, "worker processes for run fan-out")
    _option(parser, None, "--tolerance", float, 1e-9, "absolute tolerance of invariant checks")
    _option(parser, None, "--log-level", str, None, "logging level (default $SUBGRADLAB_LOG_LEVEL or WARNING)")
    _option(parser, None, "--svg", _as_bool, False, "also render SVG charts")
    parser.add_argument("--config", default=None, help="flat key=value file mirroring the flags")
    commands = parser.add_subparsers(dest="command", required=True)

    spectrum = commands.add_parser("spectrum", help="closed-form vs numeric eigenvalues of W on G_n'")
    _option(spectrum, "spectrum", "--n", int, 4, "clique size n")
    _option(spectrum, "spectrum", "--eps", float, None, "mixing weight (default 1/(2n))")

    single = commands.add_parser("run", help="one solver run written as CSV plus a JSON sidecar")
    _option(single, "run", "--graph", str, "gn:4", "gn:<n>, line:<n>, ring:<n>, star:<n> or complete:<n>")
    _option(single, "run", "--eps", float, None, "mixing weight (default depends on the problem)")
    _option(single, "run", "--schedule", str, "poly:0.5", "poly:<beta> or const:<c>")
    _option(single, "run", "--variant", str, Variant.MIX_AFTER_PROJECT.value, "solver variant", choices=[v.value for v in Variant])
    _option(single, "run", "--problem", str, "counterexample", "counterexample or quartic")
    _option(single, "run", "--T", _int_count, 1000, "number of iterations")
    _option(single, "run", "--window", str, WindowRule.HALF.value, "averaging window", choices=[w.value for w in WindowRule])
    single.add_argument(
        "--set", dest="extra", action="append", default=None, metavar="KEY=VALUE",
        help="problem parameter such as gamma=2, a=5, K=10, lambda1=1",
    )

    counterexample = commands.add_parser("counterexample", help="solver vs closed-form trajectory on G_n'")
    _option(counterexample, "counterexample", "--n", int, 4, "clique size n (>= 4)")
    _option(counterexample, "counterexample", "--eps", float, 0.25, "mixing weight, at most min(1/4, 1/n)")
    _option(counterexample, "counterexample", "--gamma", float, 2.0, "weight of the u-agent functions")
    _option(counterexample, "counterexample", "--a", float, 5.0, "box half-width")
    _option(counterexample, "counterexample", "--T", _int_count, 1000, "horizon")
    _option(counterexample, "counterexample", "--beta", float, 0.5, "step exponent")
    _option(counterexample, "counterexample", "--strict", _as_bool, False, "require a >= 3 + gamma")

    independence = commands.add_parser("fig-independence", help="scaled gap curves for several n")
    _option(independence, "fig-independence", "--n-list", _int_list, [4, 8, 16], "comma-separated clique sizes")
    _option(independence, "fig-independence", "--beta", float, 0.75, "step exponent")
    _option(independence, "fig-independence", "--T", _int_count, 100_000, "horizon")

    inversion = commands.add_parser("fig-inversion", help="iterations to termination over a beta grid")
    _option(inversion, "fig-inversion", "--betas", _float_list, _float_list(DEFAULT_BETAS), "comma-separated beta grid")
    _option(inversion, "fig-inversion", "--runs", int, 500, "problem draws per beta")
    _option(inversion, "fig-inversion", "--threshold", float, 0.03, "termination level of the l1 gradient mapping")
    _option(inversion, "fig-inversion", "--zero-band", float, 1e-6, "entries below this count as zero")
    _option(inversion, "fig-inversion", "--K", int, 10, "data points per draw")
    _option(inversion, "fig-inversion", "--d", int, 2, "dimension")
    _option(inversion, "fig-inversion", "--lambda1", float, 1.0, "l2-norm weight")
    _option(inversion, "fig-inversion", "--lambda2", float, 0.05, "l1-norm weight")
    _option(inversion, "fig-inversion", "--noise-std", float, 0.2, "label noise")
    _option(inversion, "fig-inversion", "--n-agents", int, 10, "agents on the line graph")
    _option(inversion, "fig-inversion", "--eps", float, 0.25, "mixing weight on the line graph")
    _option(inversion, "fig-inversion", "--cap", _int_count, 1_000_000, "iteration cap per run")

    verify = commands.add_parser("verify", help="run invariant suites and report slacks")
    verify.add_argument("suite", nargs="?", default="all", choices=[*SUITES, "all"])
    _option(verify, "verify", "--quick", _as_bool, False, "shorter horizons")
    return parser


def resolve_options(args: argparse.Namespace, file_values: dict[str, str]) -> argparse.Namespace:
    """Fill unset options: config file first, then environment, then defaults."""
    for (scope, dest), (kind, default) in OPTIONS.items():
        if scope not in (None, args.command) or getattr(args, dest, None) is not None:
            continue
        if dest in file_values:
            try:
                value = kind(file_values[dest])
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise InvalidArgumentError(f"Config value for '{dest}' is invalid: {exc}") from exc
        elif dest == "log_level":
            value = os.getenv(LOG_LEVEL_ENV_VAR, "WARNING")
        else:
            value = default
        setattr(args, dest, value)
    if args.command == "run" and args.extra is None:
        args.extra = [f"{key}={file_values[key]}" for key in PROBLEM_KEYS if key in file_values]
    return args


def configure_logging(level_name: str) -> None:
    level = getattr(logging, str(level_name).upper(), None)
    if not isinstance(level, int):
        raise InvalidArgumentError(f"Unknown log level '{level_name}'.")
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def build_service(out_dir: Path, charts: bool) -> tuple[ExperimentService, sqlite3.Connection]:
    connection = get_connection(out_dir / DB_FILE_NAME)
    init_database(connection)

    service = ExperimentService(
        tables=CsvTableRepository(out_dir),
        records=RunRecordRepository(out_dir),
        termination_runs=TerminationRunRepository(connection),
        graphs=GraphRepository(out_dir),
        problems=ProblemDataRepository(out_dir),
        charts=charts,
    )
    return service, connection


def _parse_extra(pairs: Sequence[str]) -> dict[str, str]:
    extra = {}
    for pair in pairs:
        key, separator, value = pair.partition("=")
        if not separator:
            raise InvalidArgumentError(f"Expected KEY=VALUE, got '{pair}'.")
        extra[normalize_key(key)] = value.strip()
    return extra


def _dispatch(args: argparse.Namespace, service: ExperimentService) -> int:
    if args.command == "spectrum":
        eps = args.eps if args.eps is not None else 0.5 / args.n
        result = service.spectrum(args.n, eps)
        print(f"{result.path} max_abs_diff={result.max_abs_diff:.3e} sigma={result.sigma!r}")
        return EXIT_OK

    if args.command == "run":
        config = RunConfig(
            graph=args.graph,
            eps=args.eps,
            schedule=args.schedule,
            variant=Variant(args.variant),
            problem=args.problem,
            T=args.T,
            seed=args.seed,
            window=WindowRule(args.window),
            tolerance=args.tolerance,
            extra=_parse_extra(args.extra or []),
        )
        outcome = service.run(config)
        print(outcome.path)
        failed = [check for check in outcome.ledger.checks.values() if not check.passed]
        for check in failed:
            print(
                f"invariant {check.name} failed at t={check.first_violation_t} (min slack {check.min_slack:.3e})",
                file=sys.stderr,
            )
        return EXIT_INVARIANT if failed else EXIT_OK

    if args.command == "counterexample":
        cfg = CounterexampleConfig(
            n=args.n, eps=args.eps, gamma=args.gamma, a=args.a, T=args.T, beta=args.beta, strict_proof=args.strict
        )
        report = service.counterexample(cfg, sys.stdout)
        return EXIT_OK if report.passed else EXIT_INVARIANT

    if args.command == "fig-independence":
        for path in service.fig_independence(args.n_list, args.beta, args.T, threads=args.threads):
            print(path)
        return EXIT_OK

    if args.command == "fig-inversion":
        setup = InversionSetup(
            seed=args.seed,
            K=args.K,
            d=args.d,
            lambda1=args.lambda1,
            lambda2=args.lambda2,
            noise_std=args.noise_std,
            n_agents=args.n_agents,
            eps=args.eps,
            threshold=args.threshold,
            zero_band=args.zero_band,
            cap=args.cap,
        )
        summary = service.fig_inversion(args.betas, args.runs, setup, threads=args.threads)
        print(
            f"{summary.path} spearman_centralized={summary.spearman_centralized:.4f} "
            f"distributed_non_monotone={str(summary.distributed_non_monotone).lower()}"
        )
        return EXIT_OK

    horizons = VerifyHorizons.quick() if args.quick else VerifyHorizons()
    reports = service.verify(args.suite, horizons, args.tolerance, seed=args.seed)
    service.tables.write_stream(sys.stdout, REPORT_HEADER, [row for report in reports for row in report.rows()])
    return EXIT_OK if all(report.passed for report in reports) else EXIT_INVARIANT


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        file_values = load_config_file(args.config) if args.config else {}
        resolve_options(args, file_values)
        configure_logging(args.log_level)
        out_dir = resolve_output_dir(args.out)
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    service, connection = build_service(out_dir, charts=args.svg)
    try:
        return _dispatch(args, service)
    except (InvalidArgumentError, UnsupportedScheduleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvariantViolation, InvalidAdversaryError) as exc:
        logger.error("%s", exc)
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    finally:
        connection.close()


if __name__ == "__main__":
    raise SystemExit(main())
