"""Exception hierarchy shared by all qslater modules."""


class QSlaterError(Exception):
    """Base class for all errors raised by this package."""


class ModeMismatch(QSlaterError):
    """Coefficients from incompatible rings (rational vs polynomial, or caps differ)."""


class NotAUnit(QSlaterError):
    """Attempt to invert a non-invertible coefficient or series."""


class GridMismatch(QSlaterError):
    """Series live on different exponent grids and were not rescaled."""


class IndeterminateValuation(QSlaterError):
    """All retained coefficients vanish but the series is not the exact zero."""


class Pole(QSlaterError):
    """A denominator factor vanishes identically under the substitution."""


class Divergent(QSlaterError):
    """An infinite product or series has no q-adic decay source."""


class DslSyntaxError(QSlaterError):
    """DSL text does not conform to the grammar."""

    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"{message} (line {line}, col {col})"
        super().__init__(message)


class UnboundIndex(QSlaterError):
    """An index variable is used outside any enclosing sum binding it."""


class UnknownParameter(QSlaterError):
    """A parameter name is not declared."""


class NonCoercive(QSlaterError):
    """A lattice sum has no certified valuation growth in some direction."""


class UnresolvedSign(QSlaterError):
    """Sign analysis could not decide a piecewise branch and the conservative
    choice destroys coercivity."""


class ConstraintViolation(QSlaterError):
    """A substitution violates an identity's declared constraints."""


class ExhaustedSampler(QSlaterError):
    """No admissible substitution found within the attempt budget."""


class UnknownId(QSlaterError):
    """No catalog entry with the requested id."""


class NotPositiveDefinite(QSlaterError):
    """Nahm matrix fails the positive-definiteness check."""
