"""
Exceptions raised by the ronmf library.

Every error derives from RonmfError. Errors caused by bad values also derive
from ValueError so callers that only catch ValueError keep working. Each class
carries the process exit code the command line driver uses for it.
"""

from typing import Optional


class RonmfError(Exception):
    """Root of all library errors."""

    exit_code = 1
    kind = "error"


class ContractViolation(RonmfError, ValueError):
    """A precondition of an operation does not hold (shapes, ranges)."""

    exit_code = 2
    kind = "contract"


class ConfigError(RonmfError, ValueError):
    """An experiment configuration or command line value is invalid."""

    exit_code = 2
    kind = "config"


class DataError(RonmfError, ValueError):
    """
    A data file or data matrix is malformed.

    Attributes:
        position: Where the problem was found (line/column, byte offset or
            matrix cell), or None when it concerns the whole input
    """

    exit_code = 3
    kind = "data"

    def __init__(self, message: str, position: Optional[str] = None):
        self.position = position
        if position:
            message = f"{message} (at {position})"
        super().__init__(message)


class NumericalAbort(RonmfError, ArithmeticError):
    """
    The solver produced a non-finite iterate and stopped.

    Attributes:
        block: Name of the block update that failed ('U', 'A', 'Z', 'E', 'Lambda')
        iteration: Outer iteration index at which it failed
    """

    exit_code = 4
    kind = "numerical"

    def __init__(self, message: str, block: Optional[str] = None, iteration: Optional[int] = None):
        self.block = block
        self.iteration = iteration
        super().__init__(message)


class SingularSystemError(NumericalAbort):
    """A Sylvester system has a (numerically) zero eigenvalue sum."""


class ExperimentError(RonmfError):
    """
    A repetition of an experiment failed.

    Attributes:
        repetition: Index of the failing repetition
        cause: The original exception
    """

    def __init__(self, repetition: int, cause: Exception):
        self.repetition = repetition
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
        self.kind = getattr(cause, "kind", "error")
        super().__init__(f"repetition {repetition} failed: {cause}")
