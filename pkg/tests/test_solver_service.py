from __future__ import annotations

import math

import numpy as np
import pytest

from models import (
    ConstraintSet,
    InvalidArgumentError,
    InvariantLedger,
    MixingMatrix,
    Optimum,
    SolverState,
    StepSchedule,
    TerminationResult,
    TieRule,
    Variant,
    WindowRule,
)
from services.graph_service import build_gn_prime, build_standard, mixing_matrix
from services.problem_service import (
    AbsoluteLoss,
    ProblemInstance,
    estimate_optimum,
    make_counterexample_problem,
    make_quartic_elasticnet,
)
from services.schedule_service import estimate_c_alpha
from services.solver_service import (
    _recorded_steps,
    gradient_mapping,
    initial_state,
    run,
    step,
    terminate_on_mapping,
)


def _identical_abs_problem(n: int, center: float = 0.5) -> ProblemInstance:
    return ProblemInstance(
        locals=tuple(AbsoluteLoss.scalar(1.0, center) for _ in range(n)),
        constraint=ConstraintSet.symmetric_box(1.0, 1),
        dimension=1,
        known_optimum=Optimum(x_star=np.array([center]), f_star=0.0),
        name="shared-abs",
    )


def test_gradient_mapping_on_the_box_boundary():
    box = ConstraintSet.symmetric_box(5.0, 1)
    assert gradient_mapping(np.array([5.0]), np.array([-1.0]), 0.1, box)[0] == pytest.approx(0.0)
    assert gradient_mapping(np.array([4.0]), np.array([-1.0]), 0.1, box)[0] == pytest.approx(-1.0)


def test_gradient_mapping_is_the_subgradient_without_constraints():
    free = ConstraintSet.unconstrained(2)
    g = np.array([0.3, -1.7])
    np.testing.assert_allclose(gradient_mapping(np.array([1.0, 2.0]), g, 0.25, free), g)


def test_gradient_mapping_rejects_nonpositive_step():
    with pytest.raises(InvalidArgumentError):
        gradient_mapping(np.zeros(1), np.ones(1), 0.0, ConstraintSet.unconstrained(1))


def test_initial_state_validates_the_start():
    problem = _identical_abs_problem(3)
    with pytest.raises(InvalidArgumentError):
        initial_state(problem, Variant.MIX_AFTER_PROJECT, x0=np.array([2.0]))
    with pytest.raises(InvalidArgumentError):
        initial_state(problem, Variant.MIX_AFTER_PROJECT, x0=np.zeros(2))
    with pytest.raises(InvalidArgumentError):
        initial_state(problem, Variant.MIX_AFTER_PROJECT, window_rule=WindowRule.HALF)
    state = initial_state(problem, Variant.MIX_AFTER_PROJECT, window_rule=WindowRule.HALF, T=7)
    assert state.window_start == 4
    assert state.iterates.shape == (3, 1)
    assert initial_state(problem, Variant.CENTRALIZED).iterates.shape == (1, 1)


def test_one_counterexample_step_matches_the_closed_form(gn4_setup):
    state = initial_state(gn4_setup.problem, Variant.MIX_AFTER_PROJECT)
    state = step(
        state,
        gn4_setup.mixing,
        gn4_setup.problem,
        gn4_setup.schedule,
        Variant.MIX_AFTER_PROJECT,
        gn4_setup.selector,
    )
    x = state.iterates[:, 0]
    np.testing.assert_allclose(x[:4], 0.0, atol=1e-12)
    np.testing.assert_allclose(x[4:], 1.0 / 3.0, atol=1e-12)
    np.testing.assert_allclose(state.last_subgradients[:4, 0], 1.0 / 6.0)
    np.testing.assert_allclose(state.last_subgradients[4:, 0], -0.5)


@pytest.mark.parametrize("variant", [Variant.PRE_MIX, Variant.PROJECTED_PRE_MIX, Variant.MIX_AFTER_PROJECT])
def test_tiny_steps_reduce_to_pure_mixing(variant):
    problem = make_quartic_elasticnet(seed=3, n_agents=5)
    w = mixing_matrix(build_standard("line", 5), 0.3)
    rng = np.random.default_rng(0)
    x = rng.uniform(-1.0, 1.0, size=(5, 2))
    state = SolverState(iterates=x, t=1, weighted_sum=np.zeros(2), weight_total=0.0, window_start=1)
    following = step(state, w, problem, StepSchedule.constant(1e-15), variant)
    np.testing.assert_allclose(following.iterates, w.entries @ x, atol=1e-9)


@pytest.mark.parametrize("variant", [Variant.PRE_MIX, Variant.PROJECTED_PRE_MIX, Variant.MIX_AFTER_PROJECT])
def test_identical_local_functions_keep_consensus(variant):
    problem = ProblemInstance(
        locals=tuple(AbsoluteLoss.scalar(1.0, 0.3) for _ in range(4)),
        constraint=ConstraintSet.unconstrained(1),
        dimension=1,
    )
    w = mixing_matrix(build_standard("line", 4), 0.3)
    state = initial_state(problem, variant)
    for _ in range(20):
        state = step(state, w, problem, StepSchedule.polynomial(0.5), variant)
        np.testing.assert_allclose(state.iterates, state.iterates[0], atol=1e-12)


def test_step_rejects_mismatched_mixing_matrix():
    problem = _identical_abs_problem(4)
    state = initial_state(problem, Variant.MIX_AFTER_PROJECT)
    w = mixing_matrix(build_standard("line", 3), 0.3)
    with pytest.raises(InvalidArgumentError):
        step(state, w, problem, StepSchedule.polynomial(0.5), Variant.MIX_AFTER_PROJECT)
    with pytest.raises(InvalidArgumentError):
        step(state, None, problem, StepSchedule.polynomial(0.5), Variant.MIX_AFTER_PROJECT)


def test_run_rows_are_one_per_iterate():
    problem = _identical_abs_problem(4)
    w = mixing_matrix(build_standard("ring", 4), 0.25)
    record = run(w, problem, StepSchedule.polynomial(0.75), Variant.MIX_AFTER_PROJECT, 50)
    assert len(record) == 50
    np.testing.assert_array_equal(record.t, np.arange(1, 51))
    assert record.metadata["n_agents"] == 4
    assert record.metadata["window"] == "half"


def test_run_from_the_optimum_with_minimal_subgradients_stays_there():
    problem = _identical_abs_problem(4)
    w = mixing_matrix(build_standard("line", 4), 0.3)
    record = run(
        w,
        problem,
        StepSchedule.polynomial(0.5),
        Variant.MIX_AFTER_PROJECT,
        100,
        x0=np.array([0.5]),
        tie=TieRule.MINIMAL,
    )
    np.testing.assert_array_equal(record.gap, 0.0)
    np.testing.assert_array_equal(record.disagreement, 0.0)


def test_half_window_average_appears_from_the_midpoint():
    problem = _identical_abs_problem(2)
    w = mixing_matrix(build_standard("line", 2), 0.3)
    record = run(w, problem, StepSchedule.polynomial(0.5), Variant.MIX_AFTER_PROJECT, 10, window_rule=WindowRule.HALF)
    assert np.all(np.isnan(record.avg_gap[:4]))
    assert np.all(np.isfinite(record.avg_gap[4:]))


def test_dyadic_window_restarts_at_powers_of_two():
    problem = _identical_abs_problem(2)
    w = mixing_matrix(build_standard("line", 2), 0.3)
    record = run(w, problem, StepSchedule.polynomial(0.5), Variant.MIX_AFTER_PROJECT, 12, window_rule=WindowRule.DYADIC)
    assert record.final_state.window_start == 8


def test_centralized_sliding_average_meets_its_bound(abs_problem):
    s = StepSchedule.polynomial(0.75)
    T = 10_000
    ledger = InvariantLedger()
    record = run(
        None,
        abs_problem,
        s,
        Variant.CENTRALIZED,
        T,
        window_rule=WindowRule.SLIDING,
        x0=np.array([4.0]),
        ledger=ledger,
    )
    total = float(np.sum(np.arange(1, T + 1, dtype=float) ** -0.75))
    bound = abs_problem.diameter**2 * estimate_c_alpha(s, T) / total
    assert record.avg_gap[-1] <= bound
    assert ledger.passed
    assert "centralized_telescoping" in ledger.checks


def test_centralized_run_accepts_identity_or_nothing(abs_problem):
    s = StepSchedule.polynomial(0.5)
    plain = run(None, abs_problem, s, Variant.CENTRALIZED, 20, x0=np.array([3.0]))
    with_identity = run(MixingMatrix.identity(), abs_problem, s, Variant.CENTRALIZED, 20, x0=np.array([3.0]))
    np.testing.assert_array_equal(plain.gap, with_identity.gap)


def test_quartic_runs_pass_their_invariant_checks():
    problem = make_quartic_elasticnet(seed=9)
    problem = problem.with_optimum(estimate_optimum(problem))
    w = mixing_matrix(build_standard("line", problem.n_agents), 0.25)
    ledger = InvariantLedger()
    run(w, problem, StepSchedule.polynomial(0.75), Variant.MIX_AFTER_PROJECT, 500, ledger=ledger)
    run(w, problem, StepSchedule.polynomial(0.75), Variant.PROJECTED_PRE_MIX, 500, ledger=ledger)
    assert ledger.passed, {name: check.min_slack for name, check in ledger.checks.items()}
    assert {"mapping_norm_bound", "mapping_descent", "consensus_mean"} <= set(ledger.checks)


def test_recorded_steps_keep_early_strided_and_dyadic_rows():
    recorded = _recorded_steps(300_000, 3)
    assert np.all(np.diff(recorded) > 0)
    assert set(range(1, 1001)) <= set(recorded.tolist())
    assert 2**17 in recorded
    assert 300_000 in recorded
    assert 1_001 not in recorded
    assert 1_002 in recorded


def test_terminate_returns_zero_when_already_stationary():
    problem = _identical_abs_problem(3)
    w = mixing_matrix(build_standard("line", 3), 0.3)
    result = terminate_on_mapping(w, problem, StepSchedule.polynomial(0.5), Variant.MIX_AFTER_PROJECT, x0=np.array([0.5]))
    assert result == TerminationResult(iterations=0, capped=False, n_agents=1)


def test_terminate_reports_the_cap():
    problem = make_quartic_elasticnet(seed=0)
    w = mixing_matrix(build_standard("line", problem.n_agents), 0.25)
    result = terminate_on_mapping(
        w, problem, StepSchedule.polynomial(0.75), Variant.MIX_AFTER_PROJECT, threshold=1e-12, cap=5
    )
    assert result.capped
    assert result.iterations == 5


def test_centralized_termination_counts_single_function_steps():
    problem = make_quartic_elasticnet(seed=0)
    result = terminate_on_mapping(None, problem, StepSchedule.polynomial(0.75), Variant.CENTRALIZED, cap=3)
    assert result.n_agents == problem.n_agents
    assert result.single_node_iterations == problem.n_agents * result.iterations
    assert TerminationResult(iterations=7, capped=False, n_agents=10).single_node_iterations == 70


def test_terminate_validates_threshold(abs_problem):
    with pytest.raises(InvalidArgumentError):
        terminate_on_mapping(None, abs_problem, StepSchedule.polynomial(0.5), Variant.CENTRALIZED, threshold=0.0)


def test_scaled_gap_uses_the_rate_exponent(gn4_setup):
    record = run(
        gn4_setup.mixing,
        gn4_setup.problem,
        gn4_setup.schedule,
        Variant.MIX_AFTER_PROJECT,
        30,
        sub_override=gn4_setup.selector,
    )
    expected = np.sqrt(record.t) * record.gap
    np.testing.assert_allclose(record.scaled_gap, expected, rtol=1e-12)
    assert math.isclose(record.gap[0], 0.0, abs_tol=1e-15)


def test_first_t_below_on_a_recorded_column():
    problem = _identical_abs_problem(2)
    w = mixing_matrix(build_standard("line", 2), 0.3)
    record = run(w, problem, StepSchedule.polynomial(0.5), Variant.MIX_AFTER_PROJECT, 6, x0=np.array([0.0]))
    record.gap[:] = [0.5, 0.1, 0.4, 0.05, 0.02, 0.01]
    assert record.first_t_below("gap", 0.2, stay=False) == 2
    assert record.first_t_below("gap", 0.2) == 4
    assert record.first_t_below("gap", 1e-3) is None


@pytest.mark.parametrize("window", [WindowRule.HALF, WindowRule.FULL, WindowRule.DYADIC])
def test_running_average_windows_fill_the_average_column(window):
    w = mixing_matrix(build_gn_prime(4), 0.125)
    problem = make_counterexample_problem(4, 2.0, 5.0)
    record = run(w, problem, StepSchedule.polynomial(0.75), Variant.MIX_AFTER_PROJECT, 10, window_rule=window)
    assert len(record) == 10
    assert np.isfinite(record.avg_gap[-1])
    assert np.all(record.avg_gap[np.isfinite(record.avg_gap)] >= -1e-12)


@pytest.mark.parametrize(("gamma", "a"), [(2.0, 5.0), (3.0, 6.0)])
def test_centralized_sliding_average_on_the_two_clique_objective(gamma, a):
    problem = make_counterexample_problem(4, gamma, a)
    ledger = InvariantLedger()
    record = run(
        None,
        problem,
        StepSchedule.polynomial(0.75),
        Variant.CENTRALIZED,
        2_000,
        window_rule=WindowRule.SLIDING,
        x0=np.array([a - 1.0]),
        ledger=ledger,
    )
    assert ledger.passed, {name: check.min_slack for name, check in ledger.checks.items()}
    assert ledger.checks["centralized_average_bound"].checks > 0
    assert 0.0 <= record.avg_gap[-1] < record.gap[0]
