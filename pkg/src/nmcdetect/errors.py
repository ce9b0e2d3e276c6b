"""Exception hierarchy shared by all modules."""

import numpy as np


class NmcError(Exception):
    """Base class for all package errors."""


class ParameterDomainError(NmcError, ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateDataError(NmcError, np.linalg.LinAlgError):
    """A data-derived matrix is numerically singular."""


class ConsistencyError(NmcError, ArithmeticError):
    """A bounded quantity left its range by more than roundoff."""


class NumericError(NmcError, RuntimeError):
    """An iterative numerical procedure failed to converge."""


class GenerationError(NmcError, RuntimeError):
    """Scenario synthesis could not meet its targets."""


class DataFormatError(NmcError, ValueError):
    """Malformed input file; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
