"""Exception taxonomy shared across the package.

Every error carries a machine-readable ``kind`` string so CLI and HTTP
layers can map failures without parsing messages.
"""
from __future__ import annotations


class ForewarnError(Exception):
    """Base class for all package errors."""

    kind = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class InvalidResolutionError(ForewarnError):
    kind = "invalid-resolution"


class InvalidCoordinateError(ForewarnError):
    kind = "invalid-coordinate"


class CoordinateMismatchError(ForewarnError):
    """Two coordinate frames disagree on at least one dimension."""

    kind = "coordinate-mismatch"

    def __init__(self, dimension: str, message: str | None = None):
        self.dimension = dimension
        super().__init__(
            message
            or f"Coordinate systems for required dim {dimension} are not the same"
        )


class CycleAlignmentError(ForewarnError):
    kind = "cycle-alignment"


class NumericInstabilityError(ForewarnError):
    kind = "numeric-instability"

    def __init__(self, step: int, variable: str):
        self.step = step
        self.variable = variable
        super().__init__(
            f"non-finite values at step {step} in variable {variable}"
        )


class SequenceError(ForewarnError):
    """Lead-time sequence has a gap, duplicate, or wrong ordering."""

    kind = "sequence"


class MissingVariableError(ForewarnError):
    kind = "missing-variable"

    def __init__(self, variable: str, message: str | None = None):
        self.variable = variable
        super().__init__(message or f"unknown variable: {variable}")


class FetchTimeoutError(ForewarnError):
    kind = "fetch-timeout"


class WorkerFailureError(ForewarnError):
    """Fetch worker died without producing a result."""

    kind = "worker-failure"

    def __init__(self, message: str, exitcode: int | None = None):
        self.exitcode = exitcode
        super().__init__(message)


class AssemblyError(ForewarnError):
    kind = "assembly"


class ConflictError(ForewarnError):
    """A run with the same forecast_run_time already exists."""

    kind = "conflict"


class NoSuchRunError(ForewarnError):
    kind = "no-such-run"


class NoRunsError(ForewarnError):
    kind = "no-runs"


class GeocodeMissError(ForewarnError):
    kind = "geocode-miss"


class MissingSignalError(ForewarnError):
    """Risk assessment input lacks a required variable."""

    kind = "missing-signal"

    def __init__(self, variable: str):
        self.variable = variable
        super().__init__(f"series does not include required variable {variable}")


class TemplateMissError(ForewarnError):
    kind = "template-miss"


class DispatchError(ForewarnError):
    """Dispatch aborted partway; ``report`` lists what was delivered."""

    kind = "dispatch"

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class StartupError(ForewarnError):
    kind = "startup"


class ConnectivityError(ForewarnError):
    kind = "connectivity"
