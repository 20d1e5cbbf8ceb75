"""
Config-driven sweeps over (k, ℓ) and covariance cases, emitting plot-ready tables.

Every sweep point draws its sketches from a stream derived from ``(base_seed, k, ℓ)``, shared
by all covariance cases at that point, so case comparisons use common random numbers.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .bounds import (
    EXPECTATION_MIN_OVERSAMPLING,
    PROBABILITY_MIN_OVERSAMPLING,
    baseline_bounds,
    coefficients_tau_rho,
    solve_ut,
    theorem_bounds,
)
from .config import CaseConfig, ExperimentConfig, ScenarioConfig, SweepConfig
from .daproblem import (
    COVARIANCE_CASES,
    SCENARIOS,
    DaMatrices,
    DaScenario,
    assemble_da_matrix,
    case_factor,
    case_label,
)
from .errors import ConfigError, DegeneracyError, HypothesisError, InfeasibleError, ParameterError
from .grsvd import LowRankFactors, empirical_error_stats, generalized_rsvd
from .linalg import FullSvd, full_svd
from .matrix_io import read_matrix
from .sampling import CovarianceOperator, SeedSpec, covariance_from_matrix

logger = logging.getLogger(__name__)

DEFAULT_K_VALUES = tuple(range(10, 301, 10))
DEFAULT_P_VALUES = tuple(range(2, 101))

# first spawn key of pilot streams; sweep points use (k, ℓ) with k < 2**32
PILOT_NAMESPACE = 2**32

EXPLICIT_CASE = "K"

CSV_COLUMNS = (
    "scenario",
    "case",
    "k",
    "ell",
    "p",
    "n_runs",
    "emp_mean",
    "emp_std",
    "emp_ratio",
    "tau",
    "rho",
    "condKk",
    "expect_bound",
    "expect_ratio",
    "prob_bound",
    "prob_ratio",
    "u",
    "t",
    "halko_prob",
    "gu_expect",
    "gu_factor_c",
    "flags",
)

_INT_COLUMNS = {"k", "ell", "p", "n_runs"}
_STR_COLUMNS = {"scenario", "case"}


# -------------------------------------------------------------------
# Problems
# -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Problem:
    """The matrix under study with its SVD, plus the DA matrices when it came from a scenario."""

    name: str
    a: np.ndarray
    svd: FullSvd
    da: Optional[DaMatrices] = None
    explicit_cov: Optional[CovarianceOperator] = None


def scenario_from_config(cfg: ScenarioConfig) -> DaScenario:
    overrides = {"n": cfg.n, "m": cfg.m, "sigma_r": cfg.sigma_r, "gamma": cfg.gamma}
    if cfg.name in SCENARIOS:
        return DaScenario.named(cfg.name, **overrides)
    return DaScenario(**{key: v for key, v in overrides.items() if v is not None}, name=cfg.name)


def load_problem(config: ExperimentConfig) -> Problem:
    """
    Build the matrix of the configured scenario, or read it from ``scenario.matrix``.

    Raises:
        OSError: a matrix file cannot be read.
        ParameterError: a matrix file is malformed or the scenario is invalid.
    """
    cfg = config.scenario
    explicit = None
    if cfg.covariance:
        explicit = covariance_from_matrix(read_matrix(cfg.covariance), label=EXPLICIT_CASE)

    if cfg.matrix:
        a = read_matrix(cfg.matrix)
        name = Path(cfg.matrix).stem
        logger.info("Loaded %dx%d matrix from %s", a.shape[0], a.shape[1], cfg.matrix)
        return Problem(name=name, a=a, svd=full_svd(a), explicit_cov=explicit)

    da = assemble_da_matrix(scenario_from_config(cfg))
    return Problem(name=da.scenario.name, a=da.a, svd=full_svd(da.a), da=da, explicit_cov=explicit)


def sweep_points(sweep: SweepConfig) -> List[tuple[int, int]]:
    """(k, ℓ) pairs of a sweep, in sweep order."""
    if sweep.over == "k":
        values = sweep.values if sweep.values is not None else DEFAULT_K_VALUES
        return [(k, k + sweep.fixed_p) for k in values]
    values = sweep.values if sweep.values is not None else DEFAULT_P_VALUES
    return [(sweep.fixed_k, sweep.fixed_k + p) for p in values]


# -------------------------------------------------------------------
# Records
# -------------------------------------------------------------------


@dataclass
class ExperimentRecord:
    """
    One sweep point for one covariance case.

    Bound and coefficient fields are None where their hypotheses fail; ``flags`` says why.
    Ratios are (value / ‖Σ̄_k‖_F − 1).
    """

    scenario: str
    case: str
    k: int
    ell: int
    p: int
    n_runs: int
    emp_mean: Optional[float] = None
    emp_std: Optional[float] = None
    emp_ratio: Optional[float] = None
    tau: Optional[float] = None
    rho: Optional[float] = None
    condKk: Optional[float] = None
    expect_bound: Optional[float] = None
    expect_ratio: Optional[float] = None
    prob_bound: Optional[float] = None
    prob_ratio: Optional[float] = None
    u: Optional[float] = None
    t: Optional[float] = None
    halko_prob: Optional[float] = None
    gu_expect: Optional[float] = None
    gu_factor_c: Optional[float] = None
    flags: List[str] = field(default_factory=list)
    # JSON only
    optimal_error: Optional[float] = None
    emp_truncation_ratio: Optional[float] = None
    n_failed: int = 0
    gu_factor_floor: Optional[float] = None

    def to_row(self) -> List[str]:
        row = []
        for column in CSV_COLUMNS:
            value = getattr(self, column)
            if column == "flags":
                row.append(";".join(value))
            elif value is None:
                row.append("")
            elif isinstance(value, float):
                row.append(format(value, ".17g"))
            else:
                row.append(str(value))
        return row

    def to_dict(self) -> dict:
        return asdict(self)


def _parse_cell(column: str, text: str):
    if column == "flags":
        return [flag for flag in text.split(";") if flag]
    if column in _STR_COLUMNS:
        return text
    if text == "":
        return None
    if column in _INT_COLUMNS:
        return int(text)
    return float(text)


def load_records_csv(path: Path | str) -> List[ExperimentRecord]:
    """
    Read a table written by :func:`emit` back into records.

    Raises:
        ParameterError: the header differs from the emitted columns.
    """
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise ParameterError(f"{path}: unexpected header {header!r}")
        records = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(CSV_COLUMNS):
                raise ParameterError(f"{path}:{line_no}: expected {len(CSV_COLUMNS)} fields")
            try:
                values = {c: _parse_cell(c, cell) for c, cell in zip(CSV_COLUMNS, row)}
            except ValueError as exc:
                raise ParameterError(f"{path}:{line_no}: {exc}") from exc
            records.append(ExperimentRecord(**values))
    return records


def _json_safe(value):
    """Replace non-finite floats (also inside containers) with None; numpy scalars become floats."""
    if isinstance(value, dict):
        return {key: _json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(item) for item in value]
    if isinstance(value, np.ndarray):
        return _json_safe(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def to_json(payload) -> str:
    """Strict JSON text: inf and nan are written as null."""
    return json.dumps(_json_safe(payload), indent=2, allow_nan=False) + "\n"


def render(records: Sequence[ExperimentRecord], fmt: str) -> str:
    """Records as CSV (fixed header) or as a JSON array."""
    if not records:
        raise ParameterError("no records to emit")
    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(record.to_row() for record in records)
        return buffer.getvalue()
    if fmt == "json":
        return to_json([record.to_dict() for record in records])
    raise ParameterError(f"unknown output format {fmt!r}; choose 'csv' or 'json'")


def emit(records: Sequence[ExperimentRecord], fmt: str, path: Path | str) -> Path:
    """Write records to ``path``; OSError propagates when the path is unwritable."""
    text = render(records, fmt)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    logger.info("Wrote %d records to %s", len(records), path)
    return path


# -------------------------------------------------------------------
# Covariances per case
# -------------------------------------------------------------------


def _needs_pilot(case: CaseConfig) -> bool:
    return case.case in COVARIANCE_CASES and COVARIANCE_CASES[case.case]["needs_pilot"]


def _check_cases(problem: Problem, cases: Iterable[CaseConfig]) -> None:
    for case in cases:
        if case.case == EXPLICIT_CASE:
            if problem.explicit_cov is None:
                raise ConfigError("case 'K' needs scenario.covariance")
            continue
        if case.case not in COVARIANCE_CASES:
            choices = sorted([*COVARIANCE_CASES, EXPLICIT_CASE])
            raise ConfigError(f"unknown case {case.case!r}; choose from {choices}")
        if COVARIANCE_CASES[case.case]["needs_prior"] and problem.da is None:
            raise ConfigError(f"case {case.case!r} needs a DA scenario (no prior for a matrix file)")
        if case.alpha <= 0 or case.beta < 0:
            raise ConfigError(f"case {case.case!r}: need alpha > 0 and beta >= 0")


def _label(case: CaseConfig) -> str:
    if case.case == EXPLICIT_CASE:
        return EXPLICIT_CASE
    return case_label(case.case, case.alpha, case.beta)


def _case_covariance(
    problem: Problem, case: CaseConfig, extra: Optional[LowRankFactors] = None
) -> CovarianceOperator:
    if case.case == EXPLICIT_CASE:
        return problem.explicit_cov
    da = problem.da
    return case_factor(
        case.case,
        problem.a,
        b=None if da is None else da.b,
        l=None if da is None else da.l,
        extra=extra,
        alpha=case.alpha,
        beta=case.beta,
    )


def pilot_factors(problem: Problem, k: int, pilot_p: int, base_seed: int) -> LowRankFactors:
    """(Û_k, Σ̂_k, V̂_k) from one randomized SVD with K = AAᵀ, on the reserved pilot streams."""
    ell = min(k + pilot_p, min(problem.a.shape))
    seed = SeedSpec(base_seed).derive(PILOT_NAMESPACE, k)
    cov = CovarianceOperator(problem.a, label="pilot")
    return generalized_rsvd(problem.a, cov, ell, k, seed, rank_a=problem.svd.rank).factors


# -------------------------------------------------------------------
# Evaluation of one point
# -------------------------------------------------------------------


def _evaluate_point(
    problem: Problem,
    label: str,
    cov: CovarianceOperator,
    k: int,
    ell: int,
    config: ExperimentConfig,
    extra_flags: Sequence[str] = (),
) -> ExperimentRecord:
    p = ell - k
    record = ExperimentRecord(
        scenario=problem.name, case=label, k=k, ell=ell, p=p, n_runs=config.n_runs
    )
    record.flags.extend(extra_flags)
    if ell > problem.svd.rank:
        record.flags.append("ell_exceeds_rank_A")
        return record

    part = problem.svd.partition(k)
    opt = part.optimal_error
    record.optimal_error = opt
    truncate = cov.width < ell
    if truncate:
        record.flags.append("ell_exceeds_rank_K")

    seed = SeedSpec(config.base_seed).derive(k, ell)
    try:
        stats = empirical_error_stats(
            problem.a,
            cov,
            ell,
            k,
            config.n_runs,
            seed,
            partition=part,
            truncate_rank_deficient=truncate,
        )
    except DegeneracyError as exc:
        logger.warning("%s k=%d ell=%d: %s", label, k, ell, exc)
        record.flags.append(f"failed_runs={config.n_runs}")
        record.n_failed = config.n_runs
    else:
        record.emp_mean = stats.mean
        record.emp_std = stats.std_dev
        record.emp_ratio = stats.ratio_minus_one
        record.emp_truncation_ratio = stats.truncation_ratio_minus_one
        record.n_failed = stats.n_failed
        if stats.n_failed:
            record.flags.append(f"failed_runs={stats.n_failed}")

    try:
        coeffs = coefficients_tau_rho(part, cov, ell=ell)
    except HypothesisError as exc:
        logger.info("%s k=%d: %s", label, k, exc)
        record.flags.append("hypothesis")
        coeffs = None
    if coeffs is not None:
        record.tau = coeffs.tau_k
        record.rho = coeffs.rho_k
        record.condKk = coeffs.cond_K_k

    u = t = None
    if p >= PROBABILITY_MIN_OVERSAMPLING:
        try:
            u, t = solve_ut(ell, k, config.delta)
        except InfeasibleError as exc:
            logger.info("k=%d ell=%d: %s", k, ell, exc)
    if p < EXPECTATION_MIN_OVERSAMPLING:
        record.flags.append("no_expectation_bound")
    if u is None:
        record.flags.append("no_probability_bound")

    if coeffs is not None and p >= EXPECTATION_MIN_OVERSAMPLING:
        report = theorem_bounds(
            coeffs, part, config.delta, require_probability=u is not None
        )
        record.expect_bound = report.expectation_bound
        record.expect_ratio = report.expectation_ratio
        record.prob_bound = report.probability_bound
        record.prob_ratio = report.probability_ratio
        if record.emp_mean is not None and record.emp_mean > report.expectation_bound:
            record.flags.append("emp_exceeds_expectation")

    if u is not None:
        record.u, record.t = u, t
        base = baseline_bounds(part, config.baseline_q, ell, u, t)
        record.halko_prob = base.halko_prob
        record.gu_expect = base.gu_expect
        record.gu_factor_c = base.gu_factor_c
        record.gu_factor_floor = base.gu_factor_floor

    logger.info(
        "%s %s k=%d ell=%d emp=%s flags=%s",
        problem.name,
        label,
        k,
        ell,
        "n/a" if record.emp_mean is None else f"{record.emp_mean:.6g}",
        ",".join(record.flags) or "-",
    )
    return record


# -------------------------------------------------------------------
# Campaigns
# -------------------------------------------------------------------


def _run(problem: Problem, config: ExperimentConfig) -> List[ExperimentRecord]:
    points = sweep_points(config.sweep)
    _check_cases(problem, config.cases)

    jobs = []
    pilots: dict[int, LowRankFactors] = {}
    for case in config.cases:
        label = _label(case)
        shared = None if _needs_pilot(case) else _case_covariance(problem, case)
        for k, ell in points:
            flags: list[str] = []
            cov = shared
            if cov is None:
                if k >= min(problem.a.shape):
                    jobs.append((label, None, k, ell, ["ell_exceeds_rank_A"]))
                    continue
                if k not in pilots:
                    pilots[k] = pilot_factors(problem, k, config.pilot_p, config.base_seed)
                extra = pilots[k]
                if case.beta > case.alpha * float(extra.sigma_hat_k[-1]) ** 2:
                    flags.append("beta_exceeds_limit")
                cov = _case_covariance(problem, case, extra)
            jobs.append((label, cov, k, ell, flags))

    def evaluate(job) -> ExperimentRecord:
        label, cov, k, ell, flags = job
        if cov is None:
            return ExperimentRecord(
                scenario=problem.name,
                case=label,
                k=k,
                ell=ell,
                p=ell - k,
                n_runs=config.n_runs,
                flags=list(flags),
            )
        return _evaluate_point(problem, label, cov, k, ell, config, flags)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(evaluate, jobs))
    return [evaluate(job) for job in jobs]


def run_sweep(
    config: ExperimentConfig, problem: Optional[Problem] = None
) -> List[ExperimentRecord]:
    """
    Bounds and empirical errors over the configured sweep for covariances known up front.

    One record per (case, sweep value), ordered that way. Hypothesis failures are flagged in
    the record and never abort the sweep.

    Raises:
        ConfigError: a case needs a pilot approximation (use run_covariance_comparison).
    """
    pilot_cases = [case.case for case in config.cases if _needs_pilot(case)]
    if pilot_cases:
        raise ConfigError(
            f"cases {pilot_cases} need a pilot approximation; run a covariance comparison instead"
        )
    problem = problem if problem is not None else load_problem(config)
    return _run(problem, config)


def run_covariance_comparison(
    config: ExperimentConfig, problem: Optional[Problem] = None
) -> List[ExperimentRecord]:
    """
    Same records as :func:`run_sweep` for any mix of cases.

    Cases built from an available approximation first run a pilot randomized SVD with
    C = I and ℓ = k + ``pilot_p`` for each k, on streams disjoint from the sweep's.
    """
    if not config.cases:
        raise ConfigError("covariance comparison needs at least one case")
    problem = problem if problem is not None else load_problem(config)
    return _run(problem, config)


def expectation_slope(records: Sequence[ExperimentRecord]) -> float:
    """Least-squares slope of log(expect_ratio) against log(p) over records carrying the bound."""
    pts = [
        (math.log(r.p), math.log(r.expect_ratio))
        for r in records
        if r.expect_ratio is not None and r.expect_ratio > 0 and r.p > 0
    ]
    if len(pts) < 2:
        raise ParameterError("need at least two records with a positive expectation ratio")
    x, y = np.array(pts).T
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


# -------------------------------------------------------------------
# Single-case helpers
# -------------------------------------------------------------------


def covariance_for(
    problem: Problem, case: CaseConfig, k: int, config: ExperimentConfig
) -> CovarianceOperator:
    """Sketch covariance of one case at target rank k, running the pilot pass when needed."""
    _check_cases(problem, [case])
    extra = None
    if _needs_pilot(case):
        extra = pilot_factors(problem, k, config.pilot_p, config.base_seed)
    return _case_covariance(problem, case, extra)


def case_name(case: CaseConfig) -> str:
    return _label(case)
