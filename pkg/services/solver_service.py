from __future__ import annotations

import logging
import math
from typing import Protocol

import numpy as np

from models import (
    RUN_RECORD_COLUMNS,
    InvalidArgumentError,
    InvariantLedger,
    InvariantViolation,
    MixingMatrix,
    RunRecord,
    SolverState,
    StepSchedule,
    TerminationResult,
    TieRule,
    Variant,
    WindowRule,
)
from services.problem_service import (
    ProblemInstance,
    best_full_subgradient,
    best_local_subgradient,
    contains,
    project,
)
from services.schedule_service import (
    alpha,
    alphas,
    centralized_threshold,
    estimate_c_alpha,
    estimate_c_alpha_prime,
    is_square_summable,
    transient_threshold,
)

logger = logging.getLogger(__name__)

FULL_RECORDING_LIMIT = 100_000
EARLY_RECORDING = 1_000
MIXING_IDENTITY_TOL = 1e-12
DEFAULT_ITERATION_CAP = 1_000_000


class SubgradientSelector(Protocol):
    """Replaces the oracle: returns the n x d subgradient stack used at iteration t."""

    def __call__(self, t: int, iterates: np.ndarray, alpha_t: float) -> np.ndarray: ...


def gradient_mapping(x_i: np.ndarray, g_i: np.ndarray, alpha_t: float, c) -> np.ndarray:
    """(x - P(x - alpha*g)) / alpha. Works row-wise on stacks."""
    if alpha_t <= 0:
        raise InvalidArgumentError(f"Step size must be positive, got {alpha_t}.")
    x_i = np.asarray(x_i, dtype=float)
    return (x_i - project(c, x_i - alpha_t * np.asarray(g_i, dtype=float))) / alpha_t


def agent_count(p: ProblemInstance, v: Variant) -> int:
    return 1 if v is Variant.CENTRALIZED else p.n_agents


def _is_power_of_two(t: int) -> bool:
    return t > 0 and t & (t - 1) == 0


def initial_state(
    p: ProblemInstance,
    v: Variant,
    x0: np.ndarray | None = None,
    window_rule: WindowRule = WindowRule.FULL,
    T: int | None = None,
) -> SolverState:
    if x0 is None:
        origin = np.zeros(p.dimension)
        if not contains(p.constraint, origin):
            raise InvalidArgumentError("0 is outside the constraint set; pass an explicit initial point.")
        x0 = origin
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (p.dimension,):
        raise InvalidArgumentError(f"Initial point has shape {x0.shape}, expected ({p.dimension},).")
    if not contains(p.constraint, x0):
        raise InvalidArgumentError(f"Initial point {x0} lies outside the constraint set.")

    if window_rule is WindowRule.HALF:
        if T is None:
            raise InvalidArgumentError("The half window needs the horizon T up front; use the dyadic rule otherwise.")
        window_start = math.ceil(T / 2)
    else:
        window_start = 1
    return SolverState(
        iterates=np.tile(x0, (agent_count(p, v), 1)),
        t=1,
        weighted_sum=np.zeros(p.dimension),
        weight_total=0.0,
        window_start=window_start,
    )


def _check_shapes(state: SolverState, w: MixingMatrix | None, p: ProblemInstance, v: Variant) -> np.ndarray:
    expected = (agent_count(p, v), p.dimension)
    if state.iterates.shape != expected:
        raise InvalidArgumentError(f"Iterates have shape {state.iterates.shape}, expected {expected}.")
    if v is Variant.CENTRALIZED:
        if w is not None and w.size != 1:
            raise InvalidArgumentError("The centralized method runs with the 1x1 identity mixing matrix.")
        return np.eye(1)
    if w is None:
        raise InvalidArgumentError(f"Variant {v.value} needs a mixing matrix.")
    if w.size != p.n_agents:
        raise InvalidArgumentError(f"Mixing matrix is {w.size}x{w.size} but the problem has {p.n_agents} agents.")
    return w.entries


def _oracle(
    p: ProblemInstance,
    v: Variant,
    t: int,
    points: np.ndarray,
    alpha_t: float,
    sub_override: SubgradientSelector | None,
    tie: TieRule,
) -> np.ndarray:
    if sub_override is not None:
        chosen = np.asarray(sub_override(t, points, alpha_t), dtype=float)
        if chosen.shape != points.shape:
            raise InvalidArgumentError(f"Subgradient selector returned shape {chosen.shape}, expected {points.shape}.")
        return chosen
    if v is Variant.CENTRALIZED:
        return p.full_subgradient(points[0], tie)[None, :]
    return p.subgradients(points, tie)


def step(
    state: SolverState,
    w: MixingMatrix | None,
    p: ProblemInstance,
    s: StepSchedule,
    v: Variant,
    sub_override: SubgradientSelector | None = None,
    tie: TieRule = TieRule.POSITIVE,
    window_rule: WindowRule = WindowRule.FULL,
) -> SolverState:
    """One synchronous round x(t) -> x(t+1); the returned state also carries the round's diagnostics."""
    entries = _check_shapes(state, w, p, v)
    t = state.t
    a = alpha(s, t)
    x = state.iterates
    omega = p.constraint

    if v is Variant.PROJECTED_PRE_MIX:
        evaluated = entries @ x
    else:
        evaluated = x
    g = _oracle(p, v, t, evaluated, a, sub_override, tie)

    if v is Variant.PRE_MIX:
        pre_projection = entries @ x - a * g
        following = pre_projection
        mapping = gradient_mapping(evaluated, g, a, omega)
    elif v is Variant.PROJECTED_PRE_MIX:
        pre_projection = evaluated - a * g
        following = project(omega, pre_projection)
        mapping = (evaluated - following) / a
    else:
        pre_projection = x - a * g
        projected = project(omega, pre_projection)
        following = entries @ projected
        mapping = (x - projected) / a
        if v is Variant.MIX_AFTER_PROJECT:
            via_mapping = entries @ (x - a * mapping)
            scale = max(1.0, float(np.max(np.abs(x))), float(np.max(np.abs(projected))))
            deviation = float(np.max(np.abs(via_mapping - following)))
            if deviation > MIXING_IDENTITY_TOL * scale:
                raise InvariantViolation(
                    f"W P[x - a g] and W[x - a s] differ by {deviation:.3e} at t={t}."
                )

    weighted_sum = state.weighted_sum
    weight_total = state.weight_total
    window_start = state.window_start
    if window_rule is WindowRule.DYADIC and _is_power_of_two(t):
        weighted_sum = np.zeros_like(weighted_sum)
        weight_total = 0.0
        window_start = t
    if t >= window_start:
        weighted_sum = weighted_sum + a * x.mean(axis=0)
        weight_total = weight_total + a

    return SolverState(
        iterates=following,
        t=t + 1,
        weighted_sum=weighted_sum,
        weight_total=weight_total,
        window_start=window_start,
        last_subgradients=g,
        last_mapping=mapping,
        last_pre_projection=pre_projection,
    )


def _recorded_steps(T: int, stride: int) -> np.ndarray:
    t = np.arange(1, T + 1)
    if stride <= 1:
        return t
    keep = (t <= EARLY_RECORDING) | (t % stride == 0) | ((t & (t - 1)) == 0) | (t == T)
    return t[keep]


class _InvariantMonitor:
    """Per-step checks written into an InvariantLedger."""

    def __init__(
        self,
        ledger: InvariantLedger,
        w: MixingMatrix | None,
        p: ProblemInstance,
        s: StepSchedule,
        v: Variant,
        T: int,
        window_rule: WindowRule,
    ) -> None:
        self.ledger = ledger
        self.entries = None if w is None else w.entries
        self.p = p
        self.s = s
        self.v = v
        self.L = p.lipschitz
        optimum = p.known_optimum
        self.x_star = None if optimum is None else np.asarray(optimum.x_star, dtype=float)
        self.local_at_star = None
        if self.x_star is not None and v is not Variant.CENTRALIZED:
            self.local_at_star = p.values(np.tile(self.x_star, (p.n_agents, 1)))
        self.f_star = None if optimum is None else p.objective(self.x_star)

        self.distance_from = None
        self.distance_scale = 0.0
        D = p.diameter
        if (
            v is Variant.MIX_AFTER_PROJECT
            and w is not None
            and w.sigma < 1.0
            and is_square_summable(s)
            and math.isfinite(D)
            and math.isfinite(self.L)
        ):
            c_prime = estimate_c_alpha_prime(s, max(T, 2))
            self.distance_from = transient_threshold(s, D, self.L, w.sigma, c_prime)
            self.distance_scale = 2.0 * c_prime * self.L * math.sqrt(p.n_agents) / (1.0 - w.sigma)

        self.centralized_from = None
        self.centralized_constant = 0.0
        if (
            v is Variant.CENTRALIZED
            and window_rule is WindowRule.SLIDING
            and self.f_star is not None
            and is_square_summable(s)
            and math.isfinite(D)
            and T >= 2
        ):
            self.centralized_from = centralized_threshold(s, D, self.L)
            self.centralized_constant = D**2 * estimate_c_alpha(s, T)

    def after_step(self, before: SolverState, after: SolverState) -> None:
        t = before.t
        a = alpha(self.s, t)
        mapping = after.last_mapping
        self.ledger.record("mapping_norm_bound", self.L - float(np.max(np.linalg.norm(mapping, axis=1))), t)

        if self.x_star is not None:
            points = before.iterates
            if self.v is Variant.PROJECTED_PRE_MIX:
                points = self.entries @ points
            if self.v is Variant.CENTRALIZED:
                excess = np.array([self.p.objective(points[0]) - self.f_star])
            else:
                excess = self.p.values(points) - self.local_at_star
            inner = np.sum(mapping * (points - self.x_star), axis=1)
            slack = 2.0 * a * inner - 2.0 * a * excess + a**2 * self.L**2
            self.ledger.record("mapping_descent", float(np.min(slack)), t)

        if self.v is Variant.MIX_AFTER_PROJECT:
            drift = after.iterates.mean(axis=0) - (before.iterates.mean(axis=0) - a * mapping.mean(axis=0))
            self.ledger.record("consensus_mean", -float(np.max(np.abs(drift))), t)

        if self.v is Variant.CENTRALIZED and self.x_star is not None:
            y, y_next = before.iterates[0], after.iterates[0]
            slack = (
                float(np.sum((y - self.x_star) ** 2))
                - float(np.sum((y_next - self.x_star) ** 2))
                + self.L**2 * a**2
                - 2.0 * a * (self.p.objective(y) - self.f_star)
            )
            self.ledger.record("centralized_telescoping", slack, t)

        if self.distance_from is not None and t >= self.distance_from:
            x = before.iterates
            disagreement = float(np.linalg.norm(x - x.mean(axis=0)))
            self.ledger.record("disagreement_bound", self.distance_scale * a - disagreement, t)

    def averaged(self, t: int, avg_gap: float, alpha_total: float) -> None:
        if self.centralized_from is None or t < self.centralized_from or math.isnan(avg_gap):
            return
        self.ledger.record("centralized_average_bound", self.centralized_constant / alpha_total - avg_gap, t)


def run(
    w: MixingMatrix | None,
    p: ProblemInstance,
    s: StepSchedule,
    v: Variant,
    T: int,
    window_rule: WindowRule = WindowRule.HALF,
    sub_override: SubgradientSelector | None = None,
    x0: np.ndarray | None = None,
    tie: TieRule = TieRule.POSITIVE,
    ledger: InvariantLedger | None = None,
    stride: int | None = None,
) -> RunRecord:
    """Execute T rounds; row t of the record describes x(t) for t = 1..T.

    The sliding window averages over [ceil(t/2), t] at every t and needs the
    whole history, kept as prefix sums.
    """
    if T < 1:
        raise InvalidArgumentError(f"Horizon T must be at least 1, got {T}.")
    state = initial_state(p, v, x0=x0, window_rule=window_rule, T=T)
    _check_shapes(state, w, p, v)
    if stride is None:
        stride = 1 if T <= FULL_RECORDING_LIMIT else math.ceil(T / FULL_RECORDING_LIMIT)
    recorded = _recorded_steps(T, stride)
    keep = np.zeros(T + 1, dtype=bool)
    keep[recorded] = True

    f_star = math.nan if p.known_optimum is None else p.known_optimum.f_star
    exponent = 1.0 - s.rate_exponent
    monitor = None if ledger is None else _InvariantMonitor(ledger, w, p, s, v, T, window_rule)

    sliding = window_rule is WindowRule.SLIDING
    if sliding:
        step_sizes = alphas(s, T)
        prefix_alpha = np.concatenate(([0.0], np.cumsum(step_sizes)))
        prefix_weighted = np.zeros((T + 1, p.dimension))

    columns = {name: np.empty(recorded.size) for name in RUN_RECORD_COLUMNS}
    columns["t"] = recorded.copy()
    pre_projection_peak = 0.0
    row = 0
    for t in range(1, T + 1):
        before = state
        state = step(state, w, p, s, v, sub_override=sub_override, tie=tie, window_rule=window_rule)
        x = before.iterates
        mean = x.mean(axis=0)
        pre_projection_peak = max(pre_projection_peak, float(np.max(np.abs(state.last_pre_projection))))
        if sliding:
            prefix_weighted[t] = prefix_weighted[t - 1] + step_sizes[t - 1] * mean
        if monitor is not None:
            monitor.after_step(before, state)
        if not keep[t]:
            continue

        if sliding:
            start = math.ceil(t / 2)
            total = prefix_alpha[t] - prefix_alpha[start - 1]
            average = (prefix_weighted[t] - prefix_weighted[start - 1]) / total
        else:
            average = state.running_average
        gap = p.objective(mean) - f_star
        avg_gap = math.nan if average is None else p.objective(average) - f_star
        columns["gap"][row] = gap
        columns["scaled_gap"][row] = t**exponent * gap
        columns["disagreement"][row] = float(np.linalg.norm(x - mean))
        columns["s_norm1"][row] = float(np.sum(np.abs(state.last_mapping.mean(axis=0))))
        columns["avg_gap"][row] = avg_gap
        if monitor is not None and sliding:
            monitor.averaged(t, avg_gap, prefix_alpha[t])
        row += 1
        if t % 100_000 == 0:
            logger.debug("run %s t=%d gap=%.6g", v.value, t, gap)

    metadata: dict[str, object] = {
        "variant": v.value,
        "schedule": s.label,
        "T": T,
        "window": window_rule.value,
        "stride": stride,
        "n_agents": state.n_agents,
        "problem": p.name,
        "tie": tie.value,
        "sigma": None if w is None else w.sigma,
        "f_star": None if math.isnan(f_star) else f_star,
        "max_abs_pre_projection": pre_projection_peak,
    }
    logger.info("finished %s run on %s: T=%d final gap=%.6g", v.value, p.name, T, columns["gap"][-1])
    return RunRecord(**columns, final_state=state, metadata=metadata)


def mapping_norm(
    state: SolverState,
    w: MixingMatrix | None,
    p: ProblemInstance,
    s: StepSchedule,
    v: Variant,
    zero_band: float = 1e-6,
) -> float:
    """l1 norm of the network-averaged gradient mapping under the best l1 subgradient choice."""
    entries = _check_shapes(state, w, p, v)
    x = state.iterates
    evaluated = entries @ x if v is Variant.PROJECTED_PRE_MIX else x
    if v is Variant.CENTRALIZED:
        g = best_full_subgradient(p, evaluated[0], zero_band)[None, :]
    else:
        g = np.stack([best_local_subgradient(local, row, zero_band) for local, row in zip(p.locals, evaluated)])
    averaged = gradient_mapping(evaluated, g, alpha(s, state.t), p.constraint).mean(axis=0)
    averaged[np.abs(averaged) < zero_band] = 0.0
    return float(np.sum(np.abs(averaged)))


def terminate_on_mapping(
    w: MixingMatrix | None,
    p: ProblemInstance,
    s: StepSchedule,
    v: Variant,
    threshold: float = 0.03,
    zero_band: float = 1e-6,
    cap: int = DEFAULT_ITERATION_CAP,
    x0: np.ndarray | None = None,
    tie: TieRule = TieRule.POSITIVE,
) -> TerminationResult:
    """Rounds completed before the averaged gradient mapping first drops below threshold.

    A centralized round costs one full F subgradient; `single_node_iterations`
    counts it as n single-function steps.
    """
    if threshold <= 0:
        raise InvalidArgumentError(f"threshold must be positive, got {threshold}.")
    if cap < 0:
        raise InvalidArgumentError(f"cap must be nonnegative, got {cap}.")
    cost = p.n_agents if v is Variant.CENTRALIZED else 1
    state = initial_state(p, v, x0=x0)
    for completed in range(cap + 1):
        if mapping_norm(state, w, p, s, v, zero_band) < threshold:
            return TerminationResult(iterations=completed, capped=False, n_agents=cost)
        if completed == cap:
            break
        state = step(state, w, p, s, v, tie=tie)
    logger.warning("%s run on %s hit the iteration cap %d", v.value, p.name, cap)
    return TerminationResult(iterations=cap, capped=True, n_agents=cost)
