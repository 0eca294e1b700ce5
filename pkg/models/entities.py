from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Literal

import numpy as np

from models.errors import InvalidArgumentError


@dataclass(frozen=True, slots=True)
class Graph:
    n_nodes: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        if self.n_nodes < 1:
            raise InvalidArgumentError("A graph needs at least one node.")
        for i, j in self.edges:
            if i == j:
                raise InvalidArgumentError(f"Self-loop ({i},{i}) is not allowed.")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise InvalidArgumentError(f"Edge ({i},{j}) has an endpoint outside [0, {self.n_nodes}).")
            if i > j:
                raise InvalidArgumentError(f"Edge ({i},{j}) is not normalized; build graphs with Graph.from_pairs.")

    @classmethod
    def from_pairs(cls, n_nodes: int, pairs) -> Graph:
        edges = set()
        for i, j in pairs:
            i, j = int(i), int(j)
            if i == j:
                raise InvalidArgumentError(f"Self-loop ({i},{i}) is not allowed.")
            edges.add((min(i, j), max(i, j)))
        return cls(n_nodes=n_nodes, edges=frozenset(edges))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def degrees(self) -> list[int]:
        counts = [0] * self.n_nodes
        for i, j in self.edges:
            counts[i] += 1
            counts[j] += 1
        return counts

    def degree(self, node: int) -> int:
        return self.degrees()[node]

    @property
    def max_degree(self) -> int:
        return max(self.degrees(), default=0)

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


@dataclass(slots=True, eq=False)
class MixingMatrix:
    entries: np.ndarray
    sigma: float
    allow_zero_diagonal: bool = False

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvalidArgumentError("A mixing matrix must be square.")
        if np.any(entries < 0):
            raise InvalidArgumentError("A mixing matrix must be nonnegative.")
        if np.any(np.abs(entries.sum(axis=1) - 1.0) > 1e-12) or np.any(np.abs(entries.sum(axis=0) - 1.0) > 1e-12):
            raise InvalidArgumentError("A mixing matrix must be doubly stochastic.")
        if not self.allow_zero_diagonal and np.any(np.diag(entries) <= 0):
            raise InvalidArgumentError("A mixing matrix must have a strictly positive diagonal.")
        self.entries = entries

    @property
    def size(self) -> int:
        return int(self.entries.shape[0])

    @classmethod
    def identity(cls, size: int = 1) -> MixingMatrix:
        return cls(entries=np.eye(size), sigma=0.0)


@dataclass(frozen=True, slots=True)
class StepSchedule:
    kind: Literal["polynomial", "constant"]
    beta: float = 0.5
    c: float = 1.0

    def __post_init__(self) -> None:
        if self.kind == "polynomial":
            if not 0.0 < self.beta <= 1.0:
                raise InvalidArgumentError(f"Polynomial exponent must lie in (0, 1], got {self.beta}.")
        elif self.kind == "constant":
            if self.c <= 0:
                raise InvalidArgumentError(f"Constant step must be positive, got {self.c}.")
        else:
            raise InvalidArgumentError(f"Unknown schedule kind '{self.kind}'.")

    @classmethod
    def polynomial(cls, beta: float) -> StepSchedule:
        return cls(kind="polynomial", beta=float(beta))

    @classmethod
    def constant(cls, c: float) -> StepSchedule:
        return cls(kind="constant", beta=0.0, c=float(c))

    @property
    def alpha_max(self) -> float:
        return 1.0 if self.kind == "polynomial" else self.c

    @property
    def rate_exponent(self) -> float:
        return self.beta if self.kind == "polynomial" else 0.0

    @property
    def label(self) -> str:
        return f"poly:{self.beta!r}" if self.kind == "polynomial" else f"const:{self.c!r}"


@dataclass(frozen=True, slots=True)
class ScheduleConstants:
    c_alpha: float
    c_alpha_prime: float
    square_summable: bool
    summable: bool


@dataclass(frozen=True, slots=True, eq=False)
class ConstraintSet:
    kind: Literal["unconstrained", "box", "ball"]
    dimension: int
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float | None = None

    @classmethod
    def unconstrained(cls, dimension: int) -> ConstraintSet:
        return cls(kind="unconstrained", dimension=dimension)

    @classmethod
    def box(cls, lo, hi) -> ConstraintSet:
        lo_arr = np.atleast_1d(np.asarray(lo, dtype=float))
        hi_arr = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo_arr.shape != hi_arr.shape:
            raise InvalidArgumentError("Box bounds must have the same shape.")
        if np.any(lo_arr > hi_arr):
            raise InvalidArgumentError("Box lower bound exceeds upper bound.")
        return cls(kind="box", dimension=int(lo_arr.size), lo=lo_arr, hi=hi_arr)

    @classmethod
    def symmetric_box(cls, half_width: float, dimension: int = 1) -> ConstraintSet:
        if half_width <= 0:
            raise InvalidArgumentError(f"Box half-width must be positive, got {half_width}.")
        return cls.box(np.full(dimension, -half_width), np.full(dimension, half_width))

    @classmethod
    def ball(cls, center, radius: float) -> ConstraintSet:
        center_arr = np.atleast_1d(np.asarray(center, dtype=float))
        if radius <= 0:
            raise InvalidArgumentError(f"Ball radius must be positive, got {radius}.")
        return cls(kind="ball", dimension=int(center_arr.size), center=center_arr, radius=float(radius))

    @property
    def diameter(self) -> float:
        if self.kind == "box":
            return float(np.linalg.norm(self.hi - self.lo))
        if self.kind == "ball":
            return 2.0 * float(self.radius)
        return math.inf


class Variant(Enum):
    PRE_MIX = "pre-mix"
    PROJECTED_PRE_MIX = "projected-pre-mix"
    MIX_AFTER_PROJECT = "mix-after-project"
    CENTRALIZED = "centralized"


class WindowRule(Enum):
    HALF = "half"
    FULL = "full"
    DYADIC = "dyadic"
    SLIDING = "sliding"


class TieRule(Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    MINIMAL = "minimal"


@dataclass(frozen=True, slots=True, eq=False)
class Optimum:
    x_star: np.ndarray
    f_star: float


@dataclass(slots=True, eq=False)
class SolverState:
    iterates: np.ndarray
    t: int
    weighted_sum: np.ndarray
    weight_total: float
    window_start: int
    last_subgradients: np.ndarray | None = None
    last_mapping: np.ndarray | None = None
    last_pre_projection: np.ndarray | None = None

    @property
    def n_agents(self) -> int:
        return int(self.iterates.shape[0])

    @property
    def running_average(self) -> np.ndarray | None:
        if self.weight_total <= 0:
            return None
        return self.weighted_sum / self.weight_total


RUN_RECORD_COLUMNS = ("t", "gap", "scaled_gap", "disagreement", "s_norm1", "avg_gap")


@dataclass(slots=True, eq=False)
class RunRecord:
    t: np.ndarray
    gap: np.ndarray
    scaled_gap: np.ndarray
    disagreement: np.ndarray
    s_norm1: np.ndarray
    avg_gap: np.ndarray
    final_state: SolverState | None = None
    metadata: dict[str, object] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.t.size)

    def rows(self) -> list[tuple[float, ...]]:
        columns = [getattr(self, name) for name in RUN_RECORD_COLUMNS]
        return [
            (int(row[0]), *(float(value) for value in row[1:]))
            for row in zip(*columns)
        ]

    def first_t_below(self, column: str, level: float, stay: bool = True) -> int | None:
        """First recorded t where `column` drops below `level` (and stays there when `stay`)."""
        values = getattr(self, column)
        below = values <= level
        if not np.any(below):
            return None
        if not stay:
            return int(self.t[int(np.argmax(below))])
        if not below[-1]:
            return None
        above = np.flatnonzero(~below)
        start = 0 if above.size == 0 else int(above[-1]) + 1
        return int(self.t[start])


@dataclass(slots=True)
class InvariantCheck:
    name: str
    min_slack: float = math.inf
    checks: int = 0
    first_violation_t: int | None = None

    @property
    def passed(self) -> bool:
        return self.first_violation_t is None


@dataclass(slots=True)
class InvariantLedger:
    tolerance: float = 1e-9
    checks: dict[str, InvariantCheck] = field(default_factory=dict)

    def record(self, name: str, slack: float, t: int) -> None:
        check = self.checks.get(name)
        if check is None:
            check = InvariantCheck(name=name)
            self.checks[name] = check
        check.checks += 1
        if slack < check.min_slack:
            check.min_slack = float(slack)
        if slack < -self.tolerance and check.first_violation_t is None:
            check.first_violation_t = int(t)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks.values())

    def merge(self, other: InvariantLedger) -> None:
        for name, check in other.checks.items():
            own = self.checks.setdefault(name, InvariantCheck(name=name))
            own.checks += check.checks
            own.min_slack = min(own.min_slack, check.min_slack)
            if own.first_violation_t is None:
                own.first_violation_t = check.first_violation_t


@dataclass(frozen=True, slots=True)
class TerminationResult:
    iterations: int
    capped: bool
    n_agents: int = 1

    @property
    def single_node_iterations(self) -> int:
        return self.n_agents * self.iterations


@dataclass(frozen=True, slots=True)
class CounterexampleConfig:
    n: int
    eps: float
    gamma: float
    a: float
    T: int
    beta: float = 0.5
    strict_proof: bool = False

    def __post_init__(self) -> None:
        if self.n < 4:
            raise InvalidArgumentError(f"The counterexample needs n >= 4, got {self.n}.")
        if not 0.0 < self.eps <= 0.25:
            raise InvalidArgumentError(f"eps must lie in (0, 1/4], got {self.eps}.")
        if self.eps > 1.0 / self.n + 1e-15:
            raise InvalidArgumentError(f"eps must not exceed 1/n = {1.0 / self.n}, got {self.eps}.")
        if self.gamma <= 1.0:
            raise InvalidArgumentError(f"gamma must exceed 1, got {self.gamma}.")
        if self.a <= 0:
            raise InvalidArgumentError(f"The box half-width a must be positive, got {self.a}.")
        if self.T < 1:
            raise InvalidArgumentError(f"Horizon T must be at least 1, got {self.T}.")
        if not 0.0 < self.beta <= 1.0:
            raise InvalidArgumentError(f"beta must lie in (0, 1], got {self.beta}.")
        if self.strict_proof and self.a < 3.0 + self.gamma:
            raise InvalidArgumentError(f"Strict-proof mode requires a >= 3 + gamma = {3.0 + self.gamma}.")

    @classmethod
    def strict(cls, n: int, eps: float, T: int) -> CounterexampleConfig:
        return cls(n=n, eps=eps, gamma=3.0, a=6.0, T=T, strict_proof=True)

    @classmethod
    def simulation(cls, n: int, eps: float, T: int, beta: float = 0.5) -> CounterexampleConfig:
        return cls(n=n, eps=eps, gamma=2.0, a=5.0, T=T, beta=beta)


@dataclass(slots=True, eq=False)
class YTrajectory:
    values: np.ndarray
    eps: float
    t1_observed: int | None

    def scaled(self) -> np.ndarray:
        """eps * sqrt(t) * y(t) for t = 1..T."""
        t = np.arange(1, self.values.size + 1, dtype=float)
        return self.eps * np.sqrt(t) * self.values


@dataclass(slots=True, eq=False)
class EquivalenceReport:
    passed: bool
    steps: int
    first_violation_t: int | None
    reason: str
    max_u_deviation: float
    max_v_deviation: float
    max_abs_pre_projection: float
    solver_v: np.ndarray | None = None
    closed_form_y: np.ndarray | None = None


@dataclass(slots=True)
class RunConfig:
    graph: str = "gn:4"
    eps: float | None = None
    schedule: str = "poly:0.5"
    variant: Variant = Variant.MIX_AFTER_PROJECT
    problem: str = "counterexample"
    T: int = 1000
    seed: int = 0
    window: WindowRule = WindowRule.HALF
    tolerance: float = 1e-9
    extra: dict[str, str] = field(default_factory=dict)
