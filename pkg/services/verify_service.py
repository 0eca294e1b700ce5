from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import zeta

from models import (
    CounterexampleConfig,
    InvalidArgumentError,
    InvariantLedger,
    StepSchedule,
    Variant,
    WindowRule,
)
from services.counterexample_service import (
    counterexample_gap,
    counterexample_setup,
    verify_equivalence,
    y_trajectory,
    z_bound_check,
)
from services.graph_service import (
    build_gn_prime,
    build_standard,
    dense_second_singular_value,
    gn_prime_spectrum,
    mixing_matrix,
)
from services.problem_service import estimate_optimum, make_counterexample_problem, make_quartic_elasticnet
from services.schedule_service import (
    asymptotic_c_alpha_prime,
    centralized_threshold,
    estimate_c_alpha,
    estimate_c_alpha_prime,
    tail_sum_squares,
)
from services.solver_service import run

logger = logging.getLogger(__name__)

SUITES = ("schedule", "spectral", "lemmas", "counterexample")
REPORT_HEADER = ("suite", "invariant", "checks", "min_slack", "first_violation_t", "status")


@dataclass(frozen=True, slots=True)
class VerifyHorizons:
    schedule_t_max: int = 1_000_000
    y_horizon: int = 1_000_000
    equivalence_horizon: int = 100_000
    lemma_horizon: int = 100_000
    centralized_horizon: int = 10_000
    dependence_horizon: int = 100_000
    independence_horizon: int = 1_000_000
    quartic_draws: int = 20
    contraction_vectors: int = 1_000

    @classmethod
    def quick(cls) -> VerifyHorizons:
        return cls(
            schedule_t_max=10_000,
            y_horizon=20_000,
            equivalence_horizon=5_000,
            lemma_horizon=5_000,
            centralized_horizon=2_000,
            dependence_horizon=10_000,
            independence_horizon=20_000,
            quartic_draws=3,
        )


@dataclass(slots=True)
class SuiteReport:
    suite: str
    ledger: InvariantLedger = field(default_factory=InvariantLedger)

    @property
    def passed(self) -> bool:
        return self.ledger.passed

    def rows(self) -> list[tuple[object, ...]]:
        return [
            (
                self.suite,
                check.name,
                check.checks,
                check.min_slack,
                check.first_violation_t,
                "pass" if check.passed else "fail",
            )
            for check in self.ledger.checks.values()
        ]


def verify_schedule(horizons: VerifyHorizons, tolerance: float = 1e-9) -> SuiteReport:
    report = SuiteReport("schedule", InvariantLedger(tolerance=tolerance))
    ledger = report.ledger
    t_max = horizons.schedule_t_max

    three_quarters = StepSchedule.polynomial(0.75)
    supremum = 1.0 / (1.0 - 2.0 ** (-0.25))
    ledger.record("c_alpha_below_supremum", supremum - estimate_c_alpha(three_quarters, t_max), t_max)

    for beta in (0.5, 0.75, 0.9):
        s = StepSchedule.polynomial(beta)
        ledger.record(
            f"c_alpha_prime_asymptotic_beta_{beta:g}",
            1e-3 - abs(asymptotic_c_alpha_prime(s, t_max) - 2.0**beta),
            t_max,
        )
        ledger.record(
            f"c_alpha_prime_at_three_beta_{beta:g}",
            -abs(estimate_c_alpha_prime(s, t_max) - 3.0**beta),
            t_max,
        )

    for beta in (0.6, 0.75, 0.9):
        s = StepSchedule.polynomial(beta)
        for t in (2, 10, 1_000, 100_000, 10_000_000):
            exact = float(zeta(2.0 * beta, t // 2))
            bound = tail_sum_squares(s, t)
            ledger.record(f"tail_sum_upper_bound_beta_{beta:g}", bound - exact, t)
            ledger.record(f"tail_sum_tight_beta_{beta:g}", 1e-3 * exact - (bound - exact), t)

    s = StepSchedule.polynomial(0.75)
    previous = 0
    for D, L in ((10.0, 1.0), (10.0, 2.0), (5.0, 2.0), (1.0, 4.0)):
        threshold = centralized_threshold(s, D, L)
        ledger.record("centralized_threshold_condition", D**2 / L**2 - tail_sum_squares(s, threshold), threshold)
        ledger.record("centralized_threshold_monotone", float(threshold - previous), threshold)
        previous = threshold
    return report


def verify_spectral(horizons: VerifyHorizons, tolerance: float = 1e-9, seed: int = 0) -> SuiteReport:
    report = SuiteReport("spectral", InvariantLedger(tolerance=tolerance))
    ledger = report.ledger
    rng = np.random.default_rng(seed)

    matrices = []
    for n in (2, 4, 8, 16):
        for eps in (0.9 / (n + 2), 0.5 / n):
            w = mixing_matrix(build_gn_prime(n), eps)
            numeric = np.sort(np.linalg.eigvalsh(w.entries))[::-1]
            closed = np.array(gn_prime_spectrum(n, eps))
            ledger.record("gn_prime_spectrum", -float(np.max(np.abs(numeric - closed))), n)
            ledger.record("sigma_matches_dense", -abs(w.sigma - dense_second_singular_value(w.entries)), n)
            ledger.record("second_eigenvalue_is_one_minus_two_eps", -abs(closed[1] - (1.0 - 2.0 * eps)), n)
            matrices.append((n, w))
    for topology in ("line", "ring", "star", "complete"):
        g = build_standard(topology, 10)
        matrices.append((10, mixing_matrix(g, 0.5 / g.max_degree)))

    for n, w in matrices:
        size = w.size
        ledger.record("doubly_stochastic", -float(np.max(np.abs(w.entries.sum(axis=0) - 1.0))), n)
        vectors = rng.standard_normal((horizons.contraction_vectors, size))
        centered = vectors - vectors.mean(axis=1, keepdims=True)
        mixed = vectors @ w.entries.T
        mixed_centered = mixed - mixed.mean(axis=1, keepdims=True)
        slack = w.sigma * np.linalg.norm(centered, axis=1) - np.linalg.norm(mixed_centered, axis=1)
        ledger.record("consensus_contraction", float(np.min(slack)), n)
    return report


def verify_lemmas(horizons: VerifyHorizons, tolerance: float = 1e-9, seed: int = 0) -> SuiteReport:
    report = SuiteReport("lemmas", InvariantLedger(tolerance=tolerance))
    three_quarters = StepSchedule.polynomial(0.75)

    for n in (4, 8):
        cfg = CounterexampleConfig.simulation(n=n, eps=1.0 / n, T=horizons.lemma_horizon, beta=0.75)
        setup = counterexample_setup(cfg)
        run(
            setup.mixing,
            setup.problem,
            setup.schedule,
            Variant.MIX_AFTER_PROJECT,
            cfg.T,
            window_rule=WindowRule.HALF,
            sub_override=setup.selector,
            ledger=report.ledger,
        )

    for gamma, a in ((2.0, 5.0), (3.0, 6.0)):
        run(
            None,
            make_counterexample_problem(4, gamma, a),
            three_quarters,
            Variant.CENTRALIZED,
            horizons.centralized_horizon,
            window_rule=WindowRule.SLIDING,
            x0=np.array([a - 1.0]),
            ledger=report.ledger,
        )

    for draw in range(horizons.quartic_draws):
        problem = make_quartic_elasticnet(seed=seed + draw)
        problem = problem.with_optimum(estimate_optimum(problem))
        run(
            None,
            problem,
            three_quarters,
            Variant.CENTRALIZED,
            horizons.centralized_horizon,
            window_rule=WindowRule.SLIDING,
            ledger=report.ledger,
        )
        w = mixing_matrix(build_standard("line", problem.n_agents), 0.25)
        run(w, problem, three_quarters, Variant.MIX_AFTER_PROJECT, horizons.centralized_horizon, ledger=report.ledger)
    return report


def verify_counterexample(horizons: VerifyHorizons, tolerance: float = 1e-9) -> SuiteReport:
    report = SuiteReport("counterexample", InvariantLedger(tolerance=tolerance))
    ledger = report.ledger
    T = horizons.y_horizon

    for eps in (1 / 4, 1 / 8, 1 / 16, 1 / 32):
        n = round(1.0 / eps)
        trajectory = y_trajectory(CounterexampleConfig.simulation(n=n, eps=eps, T=T))
        y = trajectory.values
        t = np.arange(1, T + 1, dtype=float)
        ledger.record("y_in_range", float(min(np.min(y), np.min(2.0 - y))), n)
        ledger.record("scaled_y_upper", float(np.min(2.0 - trajectory.scaled())), n)
        t1 = trajectory.t1_observed
        ledger.record("scaled_y_settles", -math.inf if t1 is None else float(10_000 - t1), n)

        current, following, steps = y[:-1], y[1:], t[:-1]
        above = current >= 1.0
        if np.any(above):
            ledger.record("decreases_above_one", float(np.min(current[above] - following[above])), n)
        below = ~above
        ledger.record(
            "bounded_increase_below_one",
            float(np.min(current[below] + 0.5 / np.sqrt(steps[below]) - following[below])),
            n,
        )
        ledger.record("stays_nonnegative", float(np.min(following)), n)

    ledger.record("comparison_sequence", 0.0 if z_bound_check(0.25, horizons.equivalence_horizon) else -1.0, 1)

    equivalence_configs = (
        CounterexampleConfig.simulation(n=4, eps=0.25, T=horizons.equivalence_horizon),
        CounterexampleConfig.strict(n=4, eps=0.25, T=horizons.equivalence_horizon),
    )
    for cfg in equivalence_configs:
        outcome = verify_equivalence(cfg)
        label = f"equivalence_gamma_{cfg.gamma:g}_a_{cfg.a:g}"
        slack = min(1e-9 - outcome.max_u_deviation, 1e-9 - outcome.max_v_deviation) if outcome.passed else -1.0
        ledger.record(label, slack, outcome.first_violation_t or cfg.T)

    terminal = {}
    for n in (4, 8, 16):
        cfg = CounterexampleConfig.simulation(n=n, eps=1.0 / n, T=horizons.dependence_horizon)
        setup = counterexample_setup(cfg)
        record = run(
            setup.mixing, setup.problem, setup.schedule, Variant.MIX_AFTER_PROJECT, cfg.T, sub_override=setup.selector
        )
        closed_form = counterexample_gap(y_trajectory(cfg).values[record.t - 1], cfg.gamma)
        ledger.record("solver_gap_matches_closed_form", -float(np.max(np.abs(record.gap - closed_form))), n)
        terminal[n] = float(record.scaled_gap[-1])
    ledger.record("gap_grows_with_n", min(terminal[8] - terminal[4], terminal[16] - terminal[8]), 16)
    ledger.record("gap_ratio_sixteen_over_four", terminal[16] / terminal[4] - 2.0, 16)

    independence_T = horizons.independence_horizon
    t = np.arange(1, independence_T + 1, dtype=float)
    for n in (4, 8, 16):
        cfg = CounterexampleConfig.simulation(n=n, eps=1.0 / n, T=independence_T, beta=0.75)
        scaled = t**0.25 * counterexample_gap(y_trajectory(cfg).values, cfg.gamma)
        # the second half of the horizon has to sit below 1
        ledger.record("scaled_gap_below_one_beta_0.75", 1.0 - float(np.max(scaled[independence_T // 2 :])), n)
    return report


def run_suite(suite: str, horizons: VerifyHorizons | None = None, tolerance: float = 1e-9, seed: int = 0) -> list[SuiteReport]:
    horizons = horizons or VerifyHorizons()
    if suite == "all":
        names = SUITES
    elif suite in SUITES:
        names = (suite,)
    else:
        raise InvalidArgumentError(f"Unknown suite '{suite}'; expected one of {', '.join(SUITES)} or all.")

    reports = []
    for name in names:
        if name == "schedule":
            report = verify_schedule(horizons, tolerance)
        elif name == "spectral":
            report = verify_spectral(horizons, tolerance, seed)
        elif name == "lemmas":
            report = verify_lemmas(horizons, tolerance, seed)
        else:
            report = verify_counterexample(horizons, tolerance)
        logger.info("suite %s: %s", name, "pass" if report.passed else "FAIL")
        reports.append(report)
    return reports
