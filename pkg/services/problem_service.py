from __future__ import annotations

import itertools
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from models import ConstraintSet, InvalidArgumentError, Optimum, TieRule

logger = logging.getLogger(__name__)

GENERATOR_NAME = "numpy.random.PCG64"


def signs(values: np.ndarray, tie: TieRule = TieRule.POSITIVE) -> np.ndarray:
    """Componentwise sign with the kink value chosen by `tie` (POSITIVE: sign(0)=+1)."""
    values = np.asarray(values, dtype=float)
    if tie is TieRule.POSITIVE:
        return np.where(values >= 0, 1.0, -1.0)
    if tie is TieRule.NEGATIVE:
        return np.where(values > 0, 1.0, -1.0)
    return np.sign(values)


class LocalFunction(ABC):
    __slots__ = ()

    @property
    @abstractmethod
    def dimension(self) -> int: ...

    @property
    @abstractmethod
    def lipschitz_bound(self) -> float: ...

    @abstractmethod
    def value(self, x: np.ndarray) -> float: ...

    @abstractmethod
    def subgradient(self, x: np.ndarray, tie: TieRule = TieRule.POSITIVE) -> np.ndarray: ...


@dataclass(frozen=True, slots=True, eq=False)
class AbsoluteLoss(LocalFunction):
    """weight * ||x - center||_1 (weight * |x - c| in one dimension)."""

    weight: float
    center: np.ndarray

    @classmethod
    def scalar(cls, weight: float, center: float) -> AbsoluteLoss:
        return cls(weight=float(weight), center=np.array([float(center)]))

    @property
    def dimension(self) -> int:
        return int(self.center.size)

    @property
    def lipschitz_bound(self) -> float:
        return self.weight * math.sqrt(self.dimension)

    def value(self, x: np.ndarray) -> float:
        return self.weight * float(np.sum(np.abs(np.asarray(x, dtype=float) - self.center)))

    def subgradient(self, x: np.ndarray, tie: TieRule = TieRule.POSITIVE) -> np.ndarray:
        return self.weight * signs(np.asarray(x, dtype=float) - self.center, tie)


@dataclass(frozen=True, slots=True, eq=False)
class QuarticElasticNetLoss(LocalFunction):
    """sum_i (a_i^T theta - b_i)^4 + l2_weight*||theta||_2 + l1_weight*||theta||_1 on a box of half-width radius."""

    points: np.ndarray
    targets: np.ndarray
    l2_weight: float
    l1_weight: float
    radius: float

    @property
    def dimension(self) -> int:
        return int(self.points.shape[1])

    @property
    def lipschitz_bound(self) -> float:
        if math.isinf(self.radius):
            return math.inf
        reach = np.abs(self.points).sum(axis=1) * self.radius + np.abs(self.targets)
        quartic = float(np.sum(4.0 * np.linalg.norm(self.points, axis=1) * reach**3))
        return quartic + self.l2_weight + self.l1_weight * math.sqrt(self.dimension)

    def value(self, x: np.ndarray) -> float:
        theta = np.asarray(x, dtype=float)
        residual = self.points @ theta - self.targets
        return (
            float(np.sum(residual**4))
            + self.l2_weight * float(np.linalg.norm(theta))
            + self.l1_weight * float(np.sum(np.abs(theta)))
        )

    def smooth_gradient(self, x: np.ndarray) -> np.ndarray:
        """Gradient of everything except the l1 term (the l2 term contributes 0 at the origin)."""
        theta = np.asarray(x, dtype=float)
        residual = self.points @ theta - self.targets
        gradient = 4.0 * self.points.T @ residual**3
        norm = float(np.linalg.norm(theta))
        if norm > 0:
            gradient = gradient + self.l2_weight * theta / norm
        return gradient

    def subgradient(self, x: np.ndarray, tie: TieRule = TieRule.POSITIVE) -> np.ndarray:
        theta = np.asarray(x, dtype=float)
        return self.smooth_gradient(theta) + self.l1_weight * signs(theta, tie)


@dataclass(frozen=True, slots=True, eq=False)
class QuarticData:
    A: np.ndarray
    b: np.ndarray
    assignment: np.ndarray
    seed: int | None
    generator: str = GENERATOR_NAME


@dataclass(slots=True, eq=False)
class ProblemInstance:
    locals: tuple[LocalFunction, ...]
    constraint: ConstraintSet
    dimension: int
    known_optimum: Optimum | None = None
    data: QuarticData | None = None
    name: str = "custom"
    _abs_weights: np.ndarray | None = field(default=None, init=False, repr=False)
    _abs_centers: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.locals:
            raise InvalidArgumentError("A problem needs at least one local function.")
        for local in self.locals:
            if local.dimension != self.dimension:
                raise InvalidArgumentError(
                    f"Local function of dimension {local.dimension} does not match problem dimension {self.dimension}."
                )
        if self.constraint.dimension != self.dimension:
            raise InvalidArgumentError("Constraint set dimension does not match the problem.")
        if all(isinstance(local, AbsoluteLoss) for local in self.locals):
            self._abs_weights = np.array([local.weight for local in self.locals])
            self._abs_centers = np.stack([local.center for local in self.locals])
        if self.known_optimum is not None:
            value = self.objective(self.known_optimum.x_star)
            if abs(value - self.known_optimum.f_star) > 1e-12:
                raise InvalidArgumentError(
                    f"Declared optimum value {self.known_optimum.f_star} differs from F(x*) = {value}."
                )

    @property
    def n_agents(self) -> int:
        return len(self.locals)

    @property
    def lipschitz(self) -> float:
        return max(local.lipschitz_bound for local in self.locals)

    @property
    def diameter(self) -> float:
        return self.constraint.diameter

    def values(self, stack: np.ndarray) -> np.ndarray:
        """f_i evaluated at row i of an n x d stack."""
        stack = np.asarray(stack, dtype=float).reshape(self.n_agents, self.dimension)
        if self._abs_weights is not None:
            return self._abs_weights * np.abs(stack - self._abs_centers).sum(axis=1)
        return np.array([local.value(row) for local, row in zip(self.locals, stack)])

    def objective(self, x: np.ndarray) -> float:
        """F(x) = (1/n) sum_i f_i(x)."""
        point = np.asarray(x, dtype=float).reshape(self.dimension)
        if self._abs_weights is not None:
            return float(np.mean(self._abs_weights * np.abs(point - self._abs_centers).sum(axis=1)))
        return float(np.mean([local.value(point) for local in self.locals]))

    def subgradients(self, stack: np.ndarray, tie: TieRule = TieRule.POSITIVE) -> np.ndarray:
        """Subgradient of f_i at row i of an n x d stack."""
        stack = np.asarray(stack, dtype=float).reshape(self.n_agents, self.dimension)
        if self._abs_weights is not None:
            return self._abs_weights[:, None] * signs(stack - self._abs_centers, tie)
        return np.stack([local.subgradient(row, tie) for local, row in zip(self.locals, stack)])

    def full_subgradient(self, x: np.ndarray, tie: TieRule = TieRule.POSITIVE) -> np.ndarray:
        """A subgradient of F at x: the mean of the local subgradients at the same point."""
        point = np.asarray(x, dtype=float).reshape(self.dimension)
        return self.subgradients(np.tile(point, (self.n_agents, 1)), tie).mean(axis=0)

    def with_optimum(self, optimum: Optimum) -> ProblemInstance:
        return replace(self, known_optimum=optimum)


def subgradient(f: LocalFunction, x: np.ndarray, tie: TieRule = TieRule.POSITIVE) -> np.ndarray:
    return f.subgradient(np.atleast_1d(np.asarray(x, dtype=float)), tie)


def project(c: ConstraintSet, x: np.ndarray) -> np.ndarray:
    """Euclidean projection onto c; accepts a point or an n x d stack of points."""
    point = np.asarray(x, dtype=float)
    if c.kind == "box":
        return np.clip(point, c.lo, c.hi)
    if c.kind == "ball":
        offset = point - c.center
        norms = np.linalg.norm(offset, axis=-1, keepdims=True)
        scale = np.minimum(1.0, c.radius / np.maximum(norms, np.finfo(float).tiny))
        return c.center + offset * scale
    return point


def contains(c: ConstraintSet, x: np.ndarray, tol: float = 1e-12) -> bool:
    point = np.asarray(x, dtype=float)
    if c.kind == "box":
        return bool(np.all(point >= c.lo - tol) and np.all(point <= c.hi + tol))
    if c.kind == "ball":
        return bool(np.all(np.linalg.norm(point - c.center, axis=-1) <= c.radius + tol))
    return bool(np.all(np.isfinite(point)))


def make_counterexample_problem(n: int, gamma: float, a: float) -> ProblemInstance:
    """gamma|x| on the u-block, (1/2)|x - 1| on the v-block, over [-a, a]."""
    if n < 2:
        raise InvalidArgumentError(f"The counterexample needs n >= 2, got {n}.")
    if gamma <= 1.0:
        raise InvalidArgumentError(f"gamma must exceed 1 so the optimum stays at 0, got {gamma}.")
    if a <= 0:
        raise InvalidArgumentError(f"The box half-width a must be positive, got {a}.")
    locals_ = tuple([AbsoluteLoss.scalar(gamma, 0.0)] * n + [AbsoluteLoss.scalar(0.5, 1.0)] * n)
    return ProblemInstance(
        locals=locals_,
        constraint=ConstraintSet.symmetric_box(a, 1),
        dimension=1,
        known_optimum=Optimum(x_star=np.zeros(1), f_star=0.25),
        name="counterexample",
    )


def quartic_elasticnet_from_data(
    A: np.ndarray,
    b: np.ndarray,
    lambda1: float,
    lambda2: float,
    n_agents: int,
    radius: float = 2.0,
    seed: int | None = None,
) -> ProblemInstance:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.shape[0] != b.size:
        raise InvalidArgumentError("A and b must have the same number of rows.")
    if n_agents < 1:
        raise InvalidArgumentError(f"n_agents must be positive, got {n_agents}.")
    if radius <= 0:
        raise InvalidArgumentError(f"radius must be positive, got {radius}.")

    d = A.shape[1]
    shares = np.array_split(np.arange(A.shape[0]), n_agents)
    assignment = np.empty(A.shape[0], dtype=int)
    locals_: list[LocalFunction] = []
    for agent, rows in enumerate(shares):
        assignment[rows] = agent
        locals_.append(
            QuarticElasticNetLoss(
                points=A[rows].reshape(-1, d),
                targets=b[rows],
                l2_weight=lambda1 / n_agents,
                l1_weight=lambda2 / n_agents,
                radius=radius,
            )
        )
    return ProblemInstance(
        locals=tuple(locals_),
        constraint=ConstraintSet.symmetric_box(radius, d),
        dimension=d,
        data=QuarticData(A=A, b=b, assignment=assignment, seed=seed),
        name="quartic",
    )


def make_quartic_elasticnet(
    K: int = 10,
    d: int = 2,
    lambda1: float = 1.0,
    lambda2: float = 1.0 / 20.0,
    noise_std: float = 1.0 / 5.0,
    seed: int = 0,
    n_agents: int = 10,
    radius: float = 2.0,
) -> ProblemInstance:
    if K < 1 or d < 1:
        raise InvalidArgumentError(f"K and d must be positive, got K={K}, d={d}.")
    rng = np.random.Generator(np.random.PCG64(seed))
    A = rng.standard_normal((K, d))
    noise = noise_std * rng.standard_normal(K)
    b = A @ np.ones(d) + noise
    return quartic_elasticnet_from_data(A, b, lambda1, lambda2, n_agents, radius=radius, seed=seed)


def estimate_optimum(problem: ProblemInstance) -> Optimum:
    """Reference minimizer over the constraint box.

    Minimizers of this family often sit where some coordinates are exactly zero,
    so every face {theta_S = 0} is searched separately and the best value kept.
    """
    if problem.known_optimum is not None:
        return problem.known_optimum
    c = problem.constraint
    d = problem.dimension
    if c.kind != "box":
        raise InvalidArgumentError("Reference optima are only computed for box constraints.")
    if d > 8:
        raise InvalidArgumentError("Face enumeration is limited to d <= 8.")

    best_x = np.zeros(d)
    best_value = problem.objective(best_x)
    starts = [np.zeros(d), project(c, np.ones(d)), project(c, -np.ones(d))]
    for pinned in itertools.product((False, True), repeat=d):
        free = np.flatnonzero(~np.array(pinned))
        if free.size == 0:
            continue

        def restricted(z: np.ndarray, free=free) -> float:
            theta = np.zeros(d)
            theta[free] = z
            return problem.objective(theta)

        bounds = list(zip(c.lo[free], c.hi[free]))
        for start in starts:
            result = minimize(
                restricted,
                start[free],
                method="Nelder-Mead",
                bounds=bounds,
                options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 20_000},
            )
            if result.fun < best_value:
                best_value = float(result.fun)
                best_x = np.zeros(d)
                best_x[free] = result.x
    logger.debug("reference optimum F*=%.12g at %s", best_value, best_x)
    return Optimum(x_star=best_x, f_star=best_value)


def best_local_subgradient(f: LocalFunction, x: np.ndarray, zero_band: float) -> np.ndarray:
    """Subgradient of f at x with the smallest components on coordinates within zero_band of a kink."""
    point = np.asarray(x, dtype=float)
    if isinstance(f, AbsoluteLoss):
        offset = point - f.center
        return np.where(np.abs(offset) > zero_band, f.weight * np.sign(offset), 0.0)
    if isinstance(f, QuarticElasticNetLoss):
        return _best_l1_completion(f.smooth_gradient(point), f.l1_weight, point, zero_band)
    return f.subgradient(point, TieRule.MINIMAL)


def best_full_subgradient(problem: ProblemInstance, x: np.ndarray, zero_band: float) -> np.ndarray:
    """Subgradient of F at x chosen the same way, with the l1 freedom pooled across the local terms."""
    point = np.asarray(x, dtype=float).reshape(problem.dimension)
    if all(isinstance(local, QuarticElasticNetLoss) for local in problem.locals):
        smooth = np.mean([local.smooth_gradient(point) for local in problem.locals], axis=0)
        weight = float(np.mean([local.l1_weight for local in problem.locals]))
        return _best_l1_completion(smooth, weight, point, zero_band)
    return np.mean([best_local_subgradient(local, point, zero_band) for local in problem.locals], axis=0)


def _best_l1_completion(smooth: np.ndarray, weight: float, point: np.ndarray, zero_band: float) -> np.ndarray:
    at_kink = np.abs(point) <= zero_band
    free_choice = np.clip(-smooth, -weight, weight)
    return smooth + np.where(at_kink, free_choice, weight * np.sign(point))
