"""Exception hierarchy.

Input problems derive from ``ValueError`` (CLI exit code 2); numerical
failures derive from ``NumericalError`` (CLI exit code 3).
"""


class InvalidSystemError(ValueError):
    """Parameters do not describe a valid system or request."""


class NumericalError(RuntimeError):
    """A numerical procedure could not produce a certified answer."""

    code = "numerical-failure"

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context


class BoundaryRootError(NumericalError):
    code = "boundary-root-suspected"


class QuadratureError(NumericalError):
    code = "quadrature-non-convergent"


class RefinementError(NumericalError):
    code = "refinement-stagnation"


class EmptySpectrumError(NumericalError):
    code = "empty-spectrum-in-window"


class BranchError(NumericalError):
    code = "branch-lost"


class SingularDerivativeError(BranchError):
    code = "singular-derivative"


class InsufficientDataError(NumericalError):
    code = "insufficient-extrema"
