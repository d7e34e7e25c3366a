"""Exception hierarchy shared by every module.

Validation problems (bad shapes, bad configs, malformed files) derive from
:class:`ValidationError`; numerical trouble during a run derives from
:class:`NumericalError`. The CLI maps the first family to exit code 1 and the
second to exit code 2.
"""


class FuncMLPError(Exception):
    """Base class for all package errors."""


class ValidationError(FuncMLPError, ValueError):
    """Inputs violate a documented precondition."""


class DimensionError(ValidationError):
    """Invalid dimension or shape mismatch."""


class DomainError(ValidationError):
    """Index or abscissa outside its allowed range."""


class KnotError(ValidationError):
    """Interior knots outside (0, 1) or not sorted."""


class EmptyDataError(ValidationError):
    """An operation received an empty dataset."""


class UnderdeterminedError(ValidationError):
    """Fewer samples than basis functions."""


class BasisMismatchError(ValidationError):
    """Coefficient vectors refer to incompatible bases."""


class ParseError(ValidationError):
    """Malformed row in an input file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class OrderingError(ValidationError):
    """Abscissae of a curve are not strictly increasing."""


class ConfigError(ValidationError):
    """Experiment configuration failed schema validation."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("invalid config: " + "; ".join(self.problems))


class NumericalError(FuncMLPError, ArithmeticError):
    """Base class for failures that occur while computing."""


class ConditioningError(NumericalError):
    """A linear system is numerically singular."""


class EvaluationError(NumericalError):
    """A function returned non-finite values on quadrature nodes."""


class DivergenceError(NumericalError):
    """Training produced a non-finite loss."""

    def __init__(self, restart, iteration):
        super().__init__(
            f"non-finite loss in restart {restart} at iteration {iteration}"
        )
        self.restart = restart
        self.iteration = iteration
