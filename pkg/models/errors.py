from __future__ import annotations


class LabError(Exception):
    """Base class for every error raised by the lab."""


class InvalidArgumentError(LabError, ValueError):
    pass


class UnsupportedScheduleError(LabError, ValueError):
    pass


class InvalidAdversaryError(LabError):
    """The adversarial subgradient left the subdifferential it has to come from."""


class InvariantViolation(LabError, AssertionError):
    pass
