from .entities import (
    RUN_RECORD_COLUMNS,
    ConstraintSet,
    CounterexampleConfig,
    EquivalenceReport,
    Graph,
    InvariantCheck,
    InvariantLedger,
    MixingMatrix,
    Optimum,
    RunConfig,
    RunRecord,
    ScheduleConstants,
    SolverState,
    StepSchedule,
    TerminationResult,
    TieRule,
    Variant,
    WindowRule,
    YTrajectory,
)
from .errors import InvalidAdversaryError, InvalidArgumentError, InvariantViolation, LabError, UnsupportedScheduleError

__all__ = [
    "RUN_RECORD_COLUMNS",
    "ConstraintSet",
    "CounterexampleConfig",
    "EquivalenceReport",
    "Graph",
    "InvariantCheck",
    "InvariantLedger",
    "MixingMatrix",
    "Optimum",
    "RunConfig",
    "RunRecord",
    "ScheduleConstants",
    "SolverState",
    "StepSchedule",
    "TerminationResult",
    "TieRule",
    "Variant",
    "WindowRule",
    "YTrajectory",
    "LabError",
    "InvalidArgumentError",
    "UnsupportedScheduleError",
    "InvalidAdversaryError",
    "InvariantViolation",
]
