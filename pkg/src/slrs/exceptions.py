"""Exception hierarchy shared across the package.

Validation problems (bad shapes, bad arguments, degenerate inputs) derive
from ``ValidationError`` which is also a ``ValueError``; numerical failures
(iterations that do not settle, LAPACK breakdowns) derive from
``NumericalError`` which is also a ``RuntimeError``.  The CLI maps the two
branches to exit codes 2 and 3 respectively.
"""


class SlrsError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(SlrsError, ValueError):
    """An input violated a documented precondition or invariant."""


class DimensionMismatch(ValidationError):
    """Array shapes are inconsistent with each other."""


class ConstantColumn(ValidationError):
    """A design column has zero variance and cannot be standardized."""

    def __init__(self, column: int):
        self.column = column
        super().__init__(f"column {column} has zero variance")


class BadK(ValidationError):
    """Requested top-k size is outside [1, s]."""


class BadTarget(ValidationError):
    """Requested screening-set size is outside [1, s]."""


class BadMethod(ValidationError):
    """Unknown screening or estimation method name."""


class BadGridSize(ValidationError):
    """A tuning grid axis needs at least two points."""


class DegenerateGrid(ValidationError):
    """Both penalty maxima are zero; no meaningful grid exists."""


class TooFewSamples(ValidationError):
    """Not enough samples for the requested number of folds."""


class EmptyTruth(ValidationError):
    """A metric denominator set is empty."""


class EmptySet(ValidationError):
    """A classification-rate denominator set is empty."""


class ZeroVariance(ValidationError):
    """The outcome has zero total variance."""


class TooSmall(ValidationError):
    """Image dimensions are too small for the coefficient patterns."""


class SizeMismatch(ValidationError):
    """Block sizes do not add up to the covariate dimension."""


class PatternOverflow(ValidationError):
    """Planted signal indices collide or exceed the covariate dimension."""


class NumericalError(SlrsError, RuntimeError):
    """Base class for numerical failures."""


class NoConvergence(NumericalError):
    """An iterative routine did not settle within its iteration budget."""

    def __init__(self, max_iter: int, what: str = "iteration"):
        self.max_iter = max_iter
        super().__init__(f"{what} did not converge within {max_iter} iterations")


class SvdFailure(NumericalError):
    """LAPACK failed to compute a singular value decomposition."""


class ParseError(SlrsError, ValueError):
    """A file could not be parsed; carries the offending location."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
