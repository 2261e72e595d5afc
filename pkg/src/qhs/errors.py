"""
Exception hierarchy for qhs

Errors raised inside sweep worker processes are pickled back to the parent,
so every class with a custom constructor defines __reduce__.
"""
from typing import Dict, List, Optional, Sequence

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SIMULATION = 2
EXIT_IO = 3
EXIT_PAYLOAD_BELOW_THRESHOLD = 4


class QhsError(Exception):
    """Base class for every error raised by qhs."""

    exit_code = EXIT_SIMULATION


class ScenarioValidationError(QhsError):
    """A scenario, sweep or workload violates a constraint.

    Args:
        message: Human-readable description
        field: Dotted path of the offending field, if known
    """

    exit_code = EXIT_VALIDATION

    def __init__(self, message: str, field: Optional[str] = None):
        self.message = message
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)

    def __reduce__(self):
        return type(self), (self.message, self.field)


class TraceParseError(ScenarioValidationError):
    """A job trace record could not be parsed."""

    def __init__(self, message: str, line: int, field: Optional[str] = None):
        self.line = line
        location = f"line {line}" + (f", {field}" if field else "")
        ScenarioValidationError.__init__(self, message, location)
        self.trace_field = field

    def __reduce__(self):
        return type(self), (self.message, self.line, self.trace_field)


class SimulationError(QhsError):
    """The engine could not complete a scenario."""


class DeadlockError(SimulationError):
    """The event queue drained while jobs were still unfinished.

    Args:
        now: Simulated time at which the queue drained
        blocked: Mapping of job id to a short description of what it waits on
    """

    def __init__(self, now: int, blocked: Dict[str, str]):
        self.now = now
        self.blocked = dict(blocked)
        details = ', '.join(f"{job_id} ({reason})" for job_id, reason in self.blocked.items())
        super().__init__(f"deadlock at t={now}: blocked jobs: {details}")

    def __reduce__(self):
        return type(self), (self.now, self.blocked)


class InternalConsistencyError(SimulationError):
    """The engine or cluster model reached an impossible state."""


class PolicyViolationError(InternalConsistencyError):
    """A job touched the QPU without the token or lock its policy requires."""


class AccountingError(InternalConsistencyError):
    """The allocation ledger is open or violates a resource bound."""


class CalibrationError(QhsError):
    """The calibration system has no admissible solution.

    Args:
        message: Description of the failure
        residuals: Per-observation residuals of the least-squares fit
    """

    exit_code = EXIT_VALIDATION

    def __init__(self, message: str, residuals: Sequence[float] = ()):
        self.message = message
        self.residuals: List[float] = [float(r) for r in residuals]
        if self.residuals:
            message = f"{message} (residuals: {', '.join(f'{r:.3f}' for r in self.residuals)})"
        super().__init__(message)

    def __reduce__(self):
        return type(self), (self.message, self.residuals)


class PayloadError(QhsError):
    """Misuse of the QUBO payload helpers."""

    exit_code = EXIT_VALIDATION


class SweepCellError(QhsError):
    """One cell of a parameter sweep failed.

    Args:
        cell: Index of the failing cell in declaration order
        params: Axis values of the failing cell
        cause: Underlying error
    """

    def __init__(self, cell: int, params: Dict[str, object], cause: BaseException):
        self.cell = cell
        self.params = dict(params)
        self.cause = cause
        self.exit_code = getattr(cause, 'exit_code', EXIT_SIMULATION)
        rendered = ', '.join(f"{key}={value}" for key, value in self.params.items())
        super().__init__(f"sweep cell {cell} [{rendered}] failed: {cause}")

    def __reduce__(self):
        return type(self), (self.cell, self.params, self.cause)
