from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from models import (
    CounterexampleConfig,
    EquivalenceReport,
    InvalidAdversaryError,
    InvalidArgumentError,
    MixingMatrix,
    StepSchedule,
    Variant,
    YTrajectory,
)
from services.graph_service import build_gn_prime, mixing_matrix
from services.problem_service import ProblemInstance, make_counterexample_problem
from services.schedule_service import alpha as step_size
from services.solver_service import initial_state, step

logger = logging.getLogger(__name__)

EQUIVALENCE_TOL = 1e-9
SCALED_FLOOR = 1.0 / 16.0


def _sign_from_one(y: float) -> float:
    # sign(0) = +1
    return 1.0 if y >= 1.0 else -1.0


def adversarial_selector(
    t: int,
    y_t: float,
    eps: float,
    gamma: float | None = None,
    alpha: float | None = None,
) -> tuple[float, float]:
    """(g_u, g_v) keeping every u-agent at 0 after mixing while the v-agents follow y."""
    if t < 1:
        raise InvalidArgumentError(f"t must be at least 1, got {t}.")
    if not 0.0 < eps < 1.0:
        raise InvalidArgumentError(f"eps must lie in (0, 1), got {eps}.")
    a = 1.0 / math.sqrt(t) if alpha is None else alpha
    g_v = 0.5 * _sign_from_one(y_t)
    g_u = (eps * y_t / a - eps * g_v) / (1.0 - eps)
    if gamma is not None and abs(g_u) > gamma:
        raise InvalidAdversaryError(
            f"At t={t} the u-agents need |g_u| = {abs(g_u):.6g} > gamma = {gamma}; "
            "this (gamma, a, eps) combination cannot realize the trajectory."
        )
    return g_u, g_v


def y_next(y: float, t: int, eps: float, alpha: float | None = None) -> float:
    a = 1.0 / math.sqrt(t) if alpha is None else alpha
    g_u, g_v = adversarial_selector(t, y, eps, alpha=a)
    return (1.0 - eps) * y - a * ((1.0 - eps) * g_v + eps * g_u)


def _abs_subdifferential_miss(points: np.ndarray, center: float, weight: float, g: float, tol: float) -> float:
    """Largest distance from g to the subdifferential of weight*|x - center| over the points."""
    offset = points - center
    at_kink = np.abs(offset) <= tol
    miss = np.where(at_kink, np.maximum(abs(g) - weight, 0.0), np.abs(g - weight * np.sign(offset)))
    return float(np.max(miss, initial=0.0))


def _schedule(cfg: CounterexampleConfig) -> StepSchedule:
    return StepSchedule.polynomial(cfg.beta)


def _first_settled(scaled: np.ndarray, floor: float) -> int | None:
    """Smallest t* with scaled[t-1] >= floor for every t in [t*, T]."""
    below = np.flatnonzero(scaled < floor)
    if below.size == 0:
        return 1
    last = int(below[-1]) + 1
    return None if last == scaled.size else last + 1


def y_trajectory(cfg: CounterexampleConfig) -> YTrajectory:
    s = _schedule(cfg)
    values = np.empty(cfg.T)
    y = 0.0
    for t in range(1, cfg.T + 1):
        values[t - 1] = y
        if t < cfg.T:
            y = y_next(y, t, cfg.eps, step_size(s, t))
    trajectory = YTrajectory(values=values, eps=cfg.eps, t1_observed=None)
    trajectory.t1_observed = _first_settled(trajectory.scaled(), SCALED_FLOOR)
    return trajectory


def z_bound_check(eps: float, T: int) -> bool:
    """z(1)=0, z(t+1) = (1-eps) z(t) + 1/(2 sqrt t) dominates y and satisfies sqrt(t) z(t) <= 2/eps."""
    if not 0.0 < eps < 1.0:
        raise InvalidArgumentError(f"eps must lie in (0, 1), got {eps}.")
    y = z = 0.0
    for t in range(1, T + 1):
        if y > z + 1e-12 or math.sqrt(t) * z > 2.0 / eps:
            logger.info("comparison sequence fails at t=%d (y=%.6g, z=%.6g)", t, y, z)
            return False
        if t < T:
            y = y_next(y, t, eps)
            z = (1.0 - eps) * z + 0.5 / math.sqrt(t)
    return True


def counterexample_gap(y: float | np.ndarray, gamma: float) -> float | np.ndarray:
    """F(x_bar) - F* on the trajectory, where x_bar = y/2."""
    return (2.0 * gamma - 1.0) * y / 8.0


@dataclass(slots=True)
class AdversarialSelector:
    """Subgradient selector tracking the closed-form y(t) and feeding the solver on G_n'.

    Rows 0..n-1 are the u-agents, rows n..2n-1 the v-agents. Calls must come in
    order t = 1, 2, ...
    """

    n: int
    eps: float
    gamma: float
    y: float = 0.0
    t: int = 1
    tol: float = 1e-9

    @classmethod
    def from_config(cls, cfg: CounterexampleConfig) -> AdversarialSelector:
        return cls(n=cfg.n, eps=cfg.eps, gamma=cfg.gamma)

    def __call__(self, t: int, iterates: np.ndarray, alpha_t: float) -> np.ndarray:
        if t != self.t:
            raise InvalidArgumentError(f"Selector expected iteration {self.t}, got {t}.")
        if iterates.shape[0] != 2 * self.n:
            raise InvalidArgumentError(f"Selector drives {2 * self.n} agents, got {iterates.shape[0]}.")
        g_u, g_v = adversarial_selector(t, self.y, self.eps, gamma=self.gamma, alpha=alpha_t)
        points = np.asarray(iterates, dtype=float)[:, 0]
        u_miss = _abs_subdifferential_miss(points[: self.n], 0.0, self.gamma, g_u, self.tol)
        v_miss = _abs_subdifferential_miss(points[self.n :], 1.0, 0.5, g_v, self.tol)
        if max(u_miss, v_miss) > self.tol:
            raise InvalidAdversaryError(
                f"At t={t} the chosen subgradients (g_u={g_u:.6g}, g_v={g_v:.6g}) leave the subdifferential "
                f"at the current iterates by {max(u_miss, v_miss):.3e}."
            )
        self.y = y_next(self.y, t, self.eps, alpha_t)
        self.t += 1
        chosen = np.empty_like(iterates, dtype=float)
        chosen[: self.n] = g_u
        chosen[self.n :] = g_v
        return chosen


@dataclass(slots=True, eq=False)
class CounterexampleSetup:
    mixing: MixingMatrix
    problem: ProblemInstance
    schedule: StepSchedule
    selector: AdversarialSelector


def counterexample_setup(cfg: CounterexampleConfig) -> CounterexampleSetup:
    return CounterexampleSetup(
        mixing=mixing_matrix(build_gn_prime(cfg.n), cfg.eps, allow_zero_diagonal=True),
        problem=make_counterexample_problem(cfg.n, cfg.gamma, cfg.a),
        schedule=_schedule(cfg),
        selector=AdversarialSelector.from_config(cfg),
    )


def verify_equivalence(cfg: CounterexampleConfig, record: bool = False) -> EquivalenceReport:
    """Run the mix-after-project solver on G_n' with the adversary and compare with y(t)."""
    setup = counterexample_setup(cfg)
    closed_form = y_trajectory(cfg).values
    state = initial_state(setup.problem, Variant.MIX_AFTER_PROJECT)
    n = cfg.n
    solver_v = np.full(cfg.T, np.nan) if record else None

    max_u = max_v = peak = 0.0
    first_violation: int | None = None
    reason = "ok"
    for t in range(1, cfg.T + 1):
        x = state.iterates[:, 0]
        u_deviation = float(np.max(np.abs(x[:n])))
        v_deviation = float(np.max(np.abs(x[n:] - closed_form[t - 1])))
        max_u, max_v = max(max_u, u_deviation), max(max_v, v_deviation)
        if solver_v is not None:
            solver_v[t - 1] = float(np.mean(x[n:]))
        if u_deviation > EQUIVALENCE_TOL:
            first_violation, reason = t, f"u-agents left 0 by {u_deviation:.3e}"
            break
        if v_deviation > EQUIVALENCE_TOL:
            first_violation, reason = t, f"v-agents left y(t) by {v_deviation:.3e}"
            break
        if t == cfg.T:
            break

        state = step(state, setup.mixing, setup.problem, setup.schedule, Variant.MIX_AFTER_PROJECT, setup.selector)
        pre = float(np.max(np.abs(state.last_pre_projection)))
        peak = max(peak, pre)
        if pre >= cfg.a:
            first_violation, reason = t, f"projection active: |pre-projection| = {pre:.6g} >= a = {cfg.a}"
            break

    passed = first_violation is None
    if passed:
        logger.info("equivalence holds for n=%d eps=%g over %d steps", n, cfg.eps, cfg.T)
    else:
        logger.warning("equivalence fails at t=%d: %s", first_violation, reason)
    return EquivalenceReport(
        passed=passed,
        steps=cfg.T,
        first_violation_t=first_violation,
        reason=reason,
        max_u_deviation=max_u,
        max_v_deviation=max_v,
        max_abs_pre_projection=peak,
        solver_v=solver_v,
        closed_form_y=closed_form if record else None,
    )
