"""Exception hierarchy shared by every module."""


class RwpotError(Exception):
    """Base class for all package errors."""


class DomainError(RwpotError, ValueError):
    """An argument lies outside the domain of the operation."""


class PreconditionError(RwpotError, ValueError):
    """A documented precondition (e.g. strict dominance) does not hold."""


class CouplingViolation(RwpotError):
    """Coupled quantities violate the sitewise ordering they must satisfy."""


class NumericError(RwpotError, ArithmeticError):
    """A numerical routine failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ResourceError(RwpotError):
    """An enumeration or search budget was exhausted."""


class ModelAssumptionError(RwpotError, ValueError):
    """The potential violates a model assumption (e.g. finite mean in d=1)."""


class CoverageError(RwpotError, ValueError):
    """A curve does not cover the range a computation needs."""


class ConfigError(RwpotError, ValueError):
    """A configuration file or command line could not be parsed."""

    def __init__(self, message, line=None, key=None):
        where = ""
        if line is not None:
            where += f"line {line}: "
        if key is not None:
            where += f"{key}: "
        super().__init__(where + message)
        self.line = line
        self.key = key


class InvariantFailure(RwpotError):
    """An error-level invariant check failed during a run."""
