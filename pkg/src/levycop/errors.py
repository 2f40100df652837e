"""Exception hierarchy shared by all modules."""


class LevyCopError(Exception):
    """Base class for errors raised by levycop."""


class DomainError(LevyCopError, ValueError):
    """An argument lies outside the domain of a function."""


class ModelError(LevyCopError, ValueError):
    """A model is inadmissible or degenerate for the requested operation."""


class InputError(LevyCopError, ValueError):
    """Malformed data, panels, files or configuration."""


class NumericError(LevyCopError, ArithmeticError):
    """A numerical procedure failed (no bracket, no convergence)."""


class ConsistencyError(NumericError):
    """A computed probability overshoots [0, 1] by more than roundoff."""


class UnsupportedOperationError(LevyCopError, NotImplementedError):
    """The operation is not defined for the given copula family."""
