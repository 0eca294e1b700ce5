from __future__ import annotations

import logging
import math

import numpy as np

from models import InvalidArgumentError, ScheduleConstants, StepSchedule, UnsupportedScheduleError

logger = logging.getLogger(__name__)

TAIL_CUTOFF = 10_000
TRANSIENT_LOG_CONSTANT = 2.0


def parse_schedule(spec: str) -> StepSchedule:
    kind, _, value = spec.strip().partition(":")
    try:
        number = float(value)
    except ValueError as exc:
        raise InvalidArgumentError(f"Schedule '{spec}' must look like 'poly:0.75' or 'const:0.01'.") from exc
    if kind == "poly":
        return StepSchedule.polynomial(number)
    if kind == "const":
        return StepSchedule.constant(number)
    raise InvalidArgumentError(f"Unknown schedule kind '{kind}' in '{spec}'.")


def alpha(s: StepSchedule, t: int) -> float:
    if t < 1:
        raise InvalidArgumentError(f"Step sizes are indexed from t=1, got t={t}.")
    if s.kind == "constant":
        return s.c
    return 1.0 / t**s.beta


def alphas(s: StepSchedule, t_max: int) -> np.ndarray:
    """alpha(1..t_max) as an array."""
    if s.kind == "constant":
        return np.full(t_max, s.c)
    return np.arange(1, t_max + 1, dtype=float) ** (-s.beta)


def is_square_summable(s: StepSchedule) -> bool:
    return s.kind == "polynomial" and s.beta > 0.5


def is_summable(s: StepSchedule) -> bool:
    # 1/t^beta with beta <= 1 diverges, constants diverge
    return False


def estimate_c_alpha(s: StepSchedule, t_max: int) -> float:
    if t_max < 2:
        raise InvalidArgumentError(f"t_max must be at least 2, got {t_max}.")
    prefix = np.concatenate(([0.0], np.cumsum(alphas(s, t_max))))
    t = np.arange(2, t_max + 1)
    start = (t + 1) // 2  # ceil(t/2)
    totals = prefix[t]
    tails = prefix[t] - prefix[start - 1]
    if np.any(tails <= 0):
        raise ZeroDivisionError("Tail sum of the step sizes vanished.")
    return float(np.max(totals / tails))


def _half_ratios(s: StepSchedule, t: np.ndarray) -> np.ndarray:
    if s.kind == "constant":
        return np.ones(t.size)
    return (t / (t // 2)) ** s.beta


def estimate_c_alpha_prime(s: StepSchedule, t_max: int) -> float:
    """max over t in [2, t_max] of alpha(floor(t/2)) / alpha(t).

    For 1/t^beta the maximum sits at t=3 and equals 3^beta, above the 2^beta the
    ratio settles to for large t. asymptotic_c_alpha_prime gives that 2^beta value.
    """
    if t_max < 2:
        raise InvalidArgumentError(f"t_max must be at least 2, got {t_max}.")
    return float(np.max(_half_ratios(s, np.arange(2, t_max + 1, dtype=float))))


def asymptotic_c_alpha_prime(s: StepSchedule, t_max: int) -> float:
    """Same ratio restricted to t in [ceil(t_max/2), t_max]; tends to 2^beta."""
    if t_max < 2:
        raise InvalidArgumentError(f"t_max must be at least 2, got {t_max}.")
    t = np.arange(max(2, (t_max + 1) // 2), t_max + 1, dtype=float)
    return float(np.max(_half_ratios(s, t)))


def schedule_constants(s: StepSchedule, t_max: int = 1_000_000) -> ScheduleConstants:
    return ScheduleConstants(
        c_alpha=estimate_c_alpha(s, t_max),
        c_alpha_prime=estimate_c_alpha_prime(s, t_max),
        square_summable=is_square_summable(s),
        summable=is_summable(s),
    )


def tail_sum_squares(s: StepSchedule, t: int) -> float:
    """Upper bound on sum_{k >= floor(t/2)} alpha(k)^2.

    Exact partial sum up to the cutoff max(floor(t/2), 10^4), then the midpoint integral bound
    int_{cutoff+1/2}^inf u^(-2 beta) du, which dominates the remainder since
    the summand is convex.
    """
    if not is_square_summable(s):
        raise UnsupportedScheduleError(f"Schedule {s.label} is not square-summable.")
    if t < 2:
        raise InvalidArgumentError(f"t must be at least 2, got {t}.")
    start = t // 2
    cutoff = max(start, TAIL_CUTOFF)
    k = np.arange(start, cutoff + 1, dtype=float)
    exponent = 2.0 * s.beta
    partial = float(np.sum(k ** (-exponent)))
    remainder = (cutoff + 0.5) ** (1.0 - exponent) / (exponent - 1.0)
    return partial + remainder


def _first_true(predicate, start: int = 2) -> int:
    """Smallest t >= start with predicate(t) true, assuming predicate is monotone from start on."""
    if predicate(start):
        return start
    low, high = start, start * 2
    while not predicate(high):
        low, high = high, high * 2
    while high - low > 1:
        middle = (low + high) // 2
        if predicate(middle):
            high = middle
        else:
            low = middle
    return high


def centralized_threshold(s: StepSchedule, D: float, L: float) -> int:
    """Smallest t with tail_sum_squares(s, t) <= D^2 / L^2."""
    if D <= 0 or L <= 0:
        raise InvalidArgumentError("D and L must be positive.")
    if math.isinf(D):
        return 2
    bound = D**2 / L**2
    return _first_true(lambda t: tail_sum_squares(s, t) <= bound)


def transient_threshold(s: StepSchedule, D: float, L: float, sigma: float, c_alpha_prime: float | None = None) -> int:
    """Smallest t from which both transient conditions of the network-independent bound hold."""
    if not is_square_summable(s):
        raise UnsupportedScheduleError(f"Schedule {s.label} is not square-summable.")
    if D <= 0 or L <= 0:
        raise InvalidArgumentError("D and L must be positive.")
    if not 0.0 <= sigma < 1.0:
        raise InvalidArgumentError(f"sigma must lie in [0, 1), got {sigma}.")
    if c_alpha_prime is None:
        c_alpha_prime = estimate_c_alpha_prime(s, 1_000)
    gap = 1.0 - sigma

    if math.isinf(D):
        tail_t = 2
    else:
        bound = D**2 * gap / (10.0 * c_alpha_prime * L**2)
        tail_t = _first_true(lambda t: tail_sum_squares(s, t) <= bound)

    scale = TRANSIENT_LOG_CONSTANT / gap

    def log_condition(t: int) -> bool:
        argument = gap * t * s.alpha_max / (c_alpha_prime * alpha(s, t))
        return argument <= 0 or t >= scale * math.log(argument)

    # t - scale*log(k t^(1+beta)) decreases until t = scale*(1+beta), then increases
    turning = max(2, math.ceil(scale * (1.0 + s.beta)))
    log_t = 2 if log_condition(turning) else _first_true(log_condition, start=turning)

    threshold = max(tail_t, log_t)
    logger.debug("transient threshold for %s (sigma=%.6g): tail=%d log=%d", s.label, sigma, tail_t, log_t)
    return threshold
