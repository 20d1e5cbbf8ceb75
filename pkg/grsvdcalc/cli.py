from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

from grsvdcalc.bounds import (
    baseline_bounds,
    coefficients_tau_rho,
    power_iteration_bounds,
    theorem_bounds,
)
from grsvdcalc.config import CaseConfig, ExperimentConfig, load_config
from grsvdcalc.daproblem import assemble_da_matrix, spectrum
from grsvdcalc.errors import ConfigError, GrsvdError, ParameterError
from grsvdcalc.experiments import (
    case_name,
    covariance_for,
    emit,
    load_problem,
    render,
    run_covariance_comparison,
    run_sweep,
    scenario_from_config,
    to_json,
)
from grsvdcalc.formatting import Formatter, MarkdownFormatter, PlainFormatter
from grsvdcalc.matrix_io import write_matrix
from grsvdcalc.oracle import OracleResult, run_oracle_suite

logger = logging.getLogger("grsvdcalc")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3


# -------------------------------------------------------------------
# Helpers
# -------------------------------------------------------------------


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )


def apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Command-line flags take precedence over config fields."""
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise ConfigError(f"--seed must be nonnegative, got {args.seed}")
        config.base_seed = args.seed
    if getattr(args, "out", None):
        config.output.path = str(args.out)
    if getattr(args, "format", None):
        config.output.format = args.format
    if getattr(args, "n_runs", None) is not None:
        if args.n_runs < 1:
            raise ConfigError(f"--n-runs must be positive, got {args.n_runs}")
        config.n_runs = args.n_runs
    if getattr(args, "workers", None) is not None:
        config.workers = max(1, args.workers)
    if getattr(args, "matrix", None):
        config.scenario.matrix = str(args.matrix)
    if getattr(args, "covariance", None):
        config.scenario.covariance = str(args.covariance)
    if getattr(args, "scenario", None):
        config.scenario.name = args.scenario
    return config


def make_formatter(args: argparse.Namespace, config: ExperimentConfig) -> Formatter:
    if getattr(args, "markdown", False):
        return MarkdownFormatter(formatting_config=config.formatting)
    return PlainFormatter(formatting_config=config.formatting)


def write_output(text: str, path: Optional[str]) -> None:
    if path:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        logger.info("Wrote %s", out)
    else:
        sys.stdout.write(text)


# -------------------------------------------------------------------
# Reports
# -------------------------------------------------------------------


def build_bounds_report(
    title: str,
    coeffs,
    report,
    baselines,
    formatter: Formatter,
    power_report=None,
    q: int = 0,
) -> str:
    """Human-readable bound report for one (k, ℓ)."""
    fmt = formatter
    lines = [fmt.heading(title, level=1), ""]

    lines.append(fmt.heading("Coefficients", level=2))
    lines.append(fmt.field("tau_k", coeffs.tau_k))
    lines.append(fmt.field("rho_k", coeffs.rho_k))
    lines.append(fmt.field("cond(K_k)", coeffs.cond_K_k))
    lines.append(fmt.field("optimal error", coeffs.optimal_error))
    lines.append("")

    heading = f"Bounds (k={report.k}, ell={report.ell}, delta={report.delta:g})"
    lines.append(fmt.heading(heading, level=2))
    lines.append(fmt.field("expectation", report.expectation_bound))
    lines.append(fmt.field("expectation ratio - 1", report.expectation_ratio))
    lines.append(fmt.field("probability", report.probability_bound))
    lines.append(fmt.field("probability ratio - 1", report.probability_ratio))
    lines.append(fmt.field("u", report.u))
    lines.append(fmt.field("t", report.t))

    if power_report is not None:
        lines.append("")
        lines.append(fmt.heading(f"Power iteration (q={q})", level=2))
        lines.append(fmt.field("expectation", power_report.expectation_bound))
        lines.append(fmt.field("probability", power_report.probability_bound))

    if baselines is not None:
        lines.append("")
        lines.append(fmt.heading("Reference bounds", level=2))
        lines.append(fmt.field("halko probability", baselines.halko_prob))
        lines.append(fmt.field("gu expectation", baselines.gu_expect))
        lines.append(fmt.field("gu factor c", baselines.gu_factor_c))
        lines.append(fmt.field("gu factor floor", baselines.gu_factor_floor))

    return "\n".join(lines) + "\n"


def build_oracle_report(results: Sequence[OracleResult], formatter: Formatter) -> str:
    fmt = formatter
    lines = [fmt.heading("Oracle checks", level=1), ""]
    for result in results:
        status = "pass" if result.passed else fmt.bold("FAIL")
        lines.append(
            fmt.list_item(
                f"{fmt.code(result.name)}: {status} "
                f"(statistic {fmt.format_value(result.statistic)}, "
                f"target {fmt.format_value(result.target)}, "
                f"se {fmt.format_value(result.std_error)})"
            )
        )
    n_failed = sum(not r.passed for r in results)
    lines.append("")
    lines.append(fmt.horizontal_rule())
    lines.append(f"{len(results) - n_failed} passed, {n_failed} failed")
    return "\n".join(lines) + "\n"


# -------------------------------------------------------------------
# Subcommands
# -------------------------------------------------------------------


def cmd_gen_problem(args: argparse.Namespace, config: ExperimentConfig) -> int:
    if args.n is not None:
        config.scenario.n = args.n
    if args.m is not None:
        config.scenario.m = args.m
    da = assemble_da_matrix(scenario_from_config(config.scenario))
    out_dir = Path(args.out or ".")
    stem = da.scenario.name
    for suffix, mat in (("A", da.a), ("B", da.b), ("L", da.l)):
        path = write_matrix(out_dir / f"{stem}_{suffix}.txt", mat)
        print(path)
    print(write_matrix(out_dir / f"{stem}_H.txt", da.h_indices.reshape(-1, 1)))
    print(write_matrix(out_dir / f"{stem}_spectrum.txt", spectrum(da.a).reshape(-1, 1)))
    return EXIT_OK


def _emit_records(records, config: ExperimentConfig) -> int:
    if config.output.path:
        emit(records, config.output.format, config.output.path)
    else:
        sys.stdout.write(render(records, config.output.format))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, config: ExperimentConfig) -> int:
    return _emit_records(run_sweep(config), config)


def cmd_compare(args: argparse.Namespace, config: ExperimentConfig) -> int:
    return _emit_records(run_covariance_comparison(config), config)


def cmd_bounds(args: argparse.Namespace, config: ExperimentConfig) -> int:
    if args.ell < args.k:
        raise ParameterError(f"--ell must be >= --k, got k={args.k}, ell={args.ell}")
    delta = config.delta if args.delta is None else args.delta
    problem = load_problem(config)
    case = CaseConfig(
        case="K" if args.covariance and args.case is None else (args.case or "I"),
        alpha=args.alpha,
        beta=args.beta,
    )
    cov = covariance_for(problem, case, args.k, config)
    part = problem.svd.partition(args.k)

    coeffs = coefficients_tau_rho(part, cov, ell=args.ell)
    report = theorem_bounds(coeffs, part, delta, require_probability=False)
    baselines = None
    if report.u is not None:
        baselines = baseline_bounds(part, args.q, args.ell, report.u, report.t)
    power_report = None
    try:
        power_report = power_iteration_bounds(
            part, args.q, args.ell, delta, require_probability=False
        )
    except GrsvdError as exc:
        logger.info("power-iteration bounds unavailable: %s", exc)

    formatter = make_formatter(args, config)
    title = f"{problem.name}: {case_name(case)}"
    if args.format == "json":
        payload = {
            "problem": problem.name,
            "case": case_name(case),
            "coefficients": asdict(coeffs),
            "bounds": asdict(report),
            "baselines": None if baselines is None else asdict(baselines),
        }
        write_output(to_json(payload), config.output.path)
    else:
        text = build_bounds_report(
            title, coeffs, report, baselines, formatter, power_report=power_report, q=args.q
        )
        write_output(text, config.output.path)
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace, config: ExperimentConfig) -> int:
    """Summary on stdout, JSON results to --out; with --format json and no --out, JSON on stdout."""
    n_samples = config.oracle.n_samples if args.samples is None else args.samples
    results = run_oracle_suite(n_samples=n_samples, seed=config.base_seed)
    payload = [asdict(result) for result in results]
    if config.output.path:
        write_output(to_json(payload), config.output.path)
    if args.report_format == "json" and not config.output.path:
        sys.stdout.write(to_json(payload))
    else:
        sys.stdout.write(build_oracle_report(results, make_formatter(args, config)))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILURE


# -------------------------------------------------------------------
# Entry point
# -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grsvd",
        description="Randomized SVD with Gaussian sketch covariances: error bounds and experiments.",
    )
    parser.add_argument(
        "--config",
        help="Path to a YAML or JSON config file (defaults to ~/.config/grsvd/config.yaml)",
        type=Path,
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")

    out_only = argparse.ArgumentParser(add_help=False)
    out_only.add_argument("--out", help="Output path (overrides output.path)")
    seeded = argparse.ArgumentParser(add_help=False, parents=[out_only])
    seeded.add_argument("--seed", type=int, help="Base seed (overrides base_seed)")
    common = argparse.ArgumentParser(add_help=False, parents=[seeded])
    common.add_argument("--format", choices=["csv", "json"], help="Output format")

    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-problem", parents=[out_only], help="Write the DA matrices A, B, L, H")
    gen.add_argument("--scenario", help='Scenario name, e.g. "LowObs" or "HighObs"')
    gen.add_argument("--n", type=int, help="State dimension")
    gen.add_argument("--m", type=int, help="Observation count")
    gen.set_defaults(handler=cmd_gen_problem)

    for name, handler, text in (
        ("sweep", cmd_sweep, "Bounds and empirical errors over a (k, ell) sweep"),
        ("compare", cmd_compare, "Empirical errors of several sketch covariances"),
    ):
        cmd = sub.add_parser(name, parents=[common], help=text)
        cmd.add_argument("--scenario", help="Scenario name")
        cmd.add_argument("--matrix", type=Path, help="Matrix file replacing the scenario")
        cmd.add_argument("--covariance", type=Path, help="Explicit covariance for case K")
        cmd.add_argument("--n-runs", type=int, dest="n_runs", help="Sketches per point")
        cmd.add_argument("--workers", type=int, help="Sweep points evaluated concurrently")
        cmd.set_defaults(handler=handler)

    bounds = sub.add_parser("bounds", parents=[common], help="Bound report at one (k, ell)")
    bounds.add_argument("--k", type=int, required=True, help="Target rank")
    bounds.add_argument("--ell", type=int, required=True, help="Sketch width")
    bounds.add_argument("--scenario", help="Scenario name")
    bounds.add_argument("--matrix", type=Path, help="Matrix file replacing the scenario")
    bounds.add_argument("--covariance", type=Path, help="Explicit sketch covariance K")
    bounds.add_argument("--case", help="Covariance case (I, A2, B, B2, ALPHA_BETA, L, K)")
    bounds.add_argument("--alpha", type=float, default=1.0)
    bounds.add_argument("--beta", type=float, default=1.0)
    bounds.add_argument("--delta", type=float, help="Failure probability")
    bounds.add_argument("--q", type=int, default=0, help="Power iterations for reference bounds")
    bounds.add_argument("--markdown", action="store_true", help="Markdown report")
    bounds.set_defaults(handler=cmd_bounds)

    oracle = sub.add_parser("oracle", parents=[seeded], help="Run the verification oracles")
    oracle.add_argument(
        "--format",
        dest="report_format",
        choices=["text", "json"],
        default="text",
        help="Summary on stdout, or the JSON results",
    )
    oracle.add_argument("--samples", type=int, help="Monte Carlo samples per check")
    oracle.add_argument("--markdown", action="store_true", help="Markdown report")
    oracle.set_defaults(handler=cmd_oracle)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)

    try:
        config = apply_overrides(load_config(args.config), args)
        return args.handler(args, config)
    except (ConfigError, ParameterError) as exc:
        print(f"grsvd: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"grsvd: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except GrsvdError as exc:
        print(f"grsvd: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
