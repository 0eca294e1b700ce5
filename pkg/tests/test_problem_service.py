from __future__ import annotations

import numpy as np
import pytest

from models import ConstraintSet, InvalidArgumentError, Optimum, TieRule
from services.counterexample_service import counterexample_gap
from services.problem_service import (
    AbsoluteLoss,
    ProblemInstance,
    best_full_subgradient,
    best_local_subgradient,
    contains,
    estimate_optimum,
    make_counterexample_problem,
    make_quartic_elasticnet,
    project,
    subgradient,
)


def test_counterexample_problem_optimum():
    problem = make_counterexample_problem(4, gamma=2.0, a=5.0)
    assert problem.n_agents == 8
    assert problem.objective(np.zeros(1)) == pytest.approx(0.25)
    assert problem.known_optimum.f_star == pytest.approx(0.25)
    assert problem.lipschitz == 2.0
    assert problem.diameter == pytest.approx(10.0)


def test_counterexample_gap_along_the_trajectory():
    problem = make_counterexample_problem(4, gamma=2.0, a=5.0)
    for y in (0.1, 0.5, 1.0, 1.5):
        gap = problem.objective(np.array([y / 2])) - 0.25
        assert gap == pytest.approx(counterexample_gap(y, 2.0))
    assert counterexample_gap(0.8, 2.0) == pytest.approx(3 * 0.8 / 8)


def test_counterexample_problem_validates_parameters():
    with pytest.raises(InvalidArgumentError):
        make_counterexample_problem(4, gamma=1.0, a=5.0)
    with pytest.raises(InvalidArgumentError):
        make_counterexample_problem(4, gamma=2.0, a=0.0)


def test_declared_optimum_must_match_objective():
    with pytest.raises(InvalidArgumentError):
        ProblemInstance(
            locals=(AbsoluteLoss.scalar(1.0, 0.0),),
            constraint=ConstraintSet.symmetric_box(1.0, 1),
            dimension=1,
            known_optimum=Optimum(x_star=np.zeros(1), f_star=0.5),
        )


def test_tie_rules_at_the_kink():
    f = AbsoluteLoss.scalar(2.0, 1.0)
    at_kink = np.array([1.0])
    assert subgradient(f, at_kink, TieRule.POSITIVE)[0] == 2.0
    assert subgradient(f, at_kink, TieRule.NEGATIVE)[0] == -2.0
    assert subgradient(f, at_kink, TieRule.MINIMAL)[0] == 0.0
    assert subgradient(f, 0.0)[0] == -2.0


def test_subgradient_inequality_on_random_points():
    rng = np.random.default_rng(3)
    problem = make_quartic_elasticnet(seed=11)
    for _ in range(50):
        x = rng.uniform(-2.0, 2.0, size=2)
        y = rng.uniform(-2.0, 2.0, size=2)
        g = problem.full_subgradient(x)
        assert problem.objective(y) >= problem.objective(x) + g @ (y - x) - 1e-9


def test_project_onto_box_ball_and_whole_space():
    box = ConstraintSet.symmetric_box(5.0, 1)
    assert project(box, np.array([7.0]))[0] == 5.0
    assert project(box, np.array([-0.5]))[0] == -0.5
    ball = ConstraintSet.ball(np.zeros(2), 1.0)
    np.testing.assert_allclose(project(ball, np.array([3.0, 4.0])), [0.6, 0.8])
    stack = project(ball, np.array([[0.1, 0.0], [0.0, 2.0]]))
    np.testing.assert_allclose(stack, [[0.1, 0.0], [0.0, 1.0]])
    free = ConstraintSet.unconstrained(2)
    np.testing.assert_array_equal(project(free, np.array([9.0, -9.0])), [9.0, -9.0])


def test_contains():
    box = ConstraintSet.box([-1.0, 0.0], [1.0, 2.0])
    assert contains(box, np.array([0.0, 2.0]))
    assert not contains(box, np.array([0.0, 2.1]))
    assert box.diameter == pytest.approx(np.sqrt(8.0))
    assert ConstraintSet.unconstrained(3).diameter == np.inf


def test_quartic_draws_are_reproducible():
    first = make_quartic_elasticnet(seed=5)
    again = make_quartic_elasticnet(seed=5)
    other = make_quartic_elasticnet(seed=6)
    np.testing.assert_array_equal(first.data.A, again.data.A)
    np.testing.assert_array_equal(first.data.b, again.data.b)
    assert not np.array_equal(first.data.A, other.data.A)


def test_quartic_problem_shape():
    problem = make_quartic_elasticnet(K=10, d=2, n_agents=10, seed=0)
    assert problem.n_agents == 10
    assert problem.dimension == 2
    assert problem.known_optimum is None
    assert np.isfinite(problem.lipschitz)
    assert sorted(np.bincount(problem.data.assignment)) == [1] * 10
    x = np.array([0.3, -0.2])
    assert problem.objective(x) == pytest.approx(np.mean([f.value(x) for f in problem.locals]))


def test_quartic_subgradients_stay_below_lipschitz_bound():
    problem = make_quartic_elasticnet(seed=2)
    rng = np.random.default_rng(0)
    for _ in range(100):
        stack = rng.uniform(-2.0, 2.0, size=(problem.n_agents, 2))
        norms = np.linalg.norm(problem.subgradients(stack), axis=1)
        assert np.all(norms <= problem.lipschitz)


def test_estimated_optimum_beats_random_points():
    problem = make_quartic_elasticnet(seed=1)
    optimum = estimate_optimum(problem)
    assert np.all(np.abs(optimum.x_star) <= 2.0)
    rng = np.random.default_rng(1)
    for x in rng.uniform(-2.0, 2.0, size=(200, 2)):
        assert optimum.f_star <= problem.objective(x) + 1e-9
    assert problem.with_optimum(optimum).known_optimum is optimum


def test_best_local_subgradient_picks_zero_at_the_kink():
    f = AbsoluteLoss.scalar(0.5, 1.0)
    assert best_local_subgradient(f, np.array([1.0 + 1e-8]), zero_band=1e-6)[0] == 0.0
    assert best_local_subgradient(f, np.array([3.0]), zero_band=1e-6)[0] == 0.5


def test_best_full_subgradient_cancels_small_smooth_part_at_origin():
    problem = make_quartic_elasticnet(seed=4)
    chosen = best_full_subgradient(problem, np.zeros(2), zero_band=1e-6)
    smooth = np.mean([f.smooth_gradient(np.zeros(2)) for f in problem.locals], axis=0)
    weight = np.mean([f.l1_weight for f in problem.locals])
    expected = smooth - np.clip(smooth, -weight, weight)
    np.testing.assert_allclose(chosen, expected, atol=1e-15)
    assert np.all(np.abs(chosen) <= np.abs(smooth))
