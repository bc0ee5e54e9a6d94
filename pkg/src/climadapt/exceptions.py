"""
Exception hierarchy for the simulator.

Every error raised on purpose by the library derives from `ClimAdaptError`,
so callers (and the CLI) can tell domain failures from programming errors.
The CLI maps validation-type errors to exit status 3 and the rest to 4.
"""

from typing import Optional


class ClimAdaptError(Exception):
    """Base class for all simulator errors."""


class ScenarioValidationError(ClimAdaptError, ValueError):
    """Input data or configuration violates a schema or invariant."""


class ScenarioParseError(ScenarioValidationError):
    """A file could not be parsed. Carries file and line context."""

    def __init__(
        self, message: str, path: Optional[str] = None, line: Optional[int] = None
    ):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class ScenarioReferenceError(ScenarioValidationError):
    """A cross-reference (edge -> node, zone -> cell, ...) does not resolve."""


class DomainError(ClimAdaptError, ValueError):
    """An argument lies outside the domain of an operation."""


class StateError(ClimAdaptError, RuntimeError):
    """The operation is not allowed in the current state."""


class InvariantError(ClimAdaptError, RuntimeError):
    """An internal invariant was found broken."""


class FitError(ClimAdaptError):
    """A regression fit could not be carried out."""


class ConvergenceError(FitError):
    """The optimizer stopped before reaching the gradient tolerance."""

    def __init__(self, message: str, gradient_norm: float, iterations: int):
        self.gradient_norm = gradient_norm
        self.iterations = iterations
        super().__init__(
            f"{message} (iterations={iterations}, gradient_norm={gradient_norm:.3e})"
        )


class CapacityError(ClimAdaptError):
    """A problem is too large for an exact, enumerating method."""


def with_context(error: BaseException, context: str) -> ClimAdaptError:
    """
    A library error carrying `context` in its message. Library errors keep
    their class (and so their CLI exit category) where possible; any other
    error is wrapped in a plain `ClimAdaptError` naming the original type.
    """
    if not isinstance(error, ClimAdaptError):
        return ClimAdaptError(f"{context}: {type(error).__name__}: {error}")
    try:
        return type(error)(f"{context}: {error}")
    except TypeError:
        return ClimAdaptError(f"{context}: {error}")
