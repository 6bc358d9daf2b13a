"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`FraclapError`.
Validation problems (bad inputs, violated preconditions) derive from
:class:`ValidationError`; the command line maps those to exit code 2 and
everything else to exit code 1.
"""


class FraclapError(Exception):
    """Base class for all package errors."""


class ValidationError(FraclapError, ValueError):
    """Input data or parameters violate a documented precondition."""


# -- space -----------------------------------------------------------------

class TriangleViolation(ValidationError):
    def __init__(self, triple, excess):
        self.triple = tuple(int(t) for t in triple)
        self.excess = float(excess)
        i, j, k = self.triple
        super().__init__(
            f"triangle inequality fails on ({i}, {j}, {k}): "
            f"d({i},{k}) exceeds d({i},{j}) + d({j},{k}) by {excess:.3e}"
        )


class NonSymmetric(ValidationError):
    pass


class NonpositiveMeasure(ValidationError):
    pass


class InsufficientScales(ValidationError):
    pass


class InvalidTheta(ValidationError):
    pass


class EmptyInterior(ValidationError):
    pass


class AsymmetricKernel(ValidationError):
    pass


class NonpositiveKernel(ValidationError):
    pass


# -- extension -------------------------------------------------------------

class InvalidParams(ValidationError):
    pass


class WeightOutOfRange(ValidationError):
    pass


class DegenerateGrading(ValidationError):
    pass


class BetaTooSmall(ValidationError):
    pass


# -- cheeger ---------------------------------------------------------------

class MissingCoords(ValidationError):
    pass


# -- solve -----------------------------------------------------------------

class NonzeroMean(ValidationError):
    pass


class DisconnectedComponentWithoutBoundary(ValidationError):
    pass


class NonConvergence(FraclapError):
    """Raised when a solver hits its iteration cap.

    The partially converged iterate and its diagnostics are attached so that
    callers (and the command line) can still report them.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


# -- verify ----------------------------------------------------------------

class RequiresP2(ValidationError):
    pass


class NoAdmissibleBalls(FraclapError):
    pass


class ZeroInfimum(FraclapError):
    pass


class NegativeData(ValidationError):
    pass
