# src/errors.py


class OldroydLabError(Exception):
    """Base class for every error raised by the lab"""


class ParameterError(OldroydLabError, ValueError):
    """Invalid physical parameters or configuration entries"""


class GridMismatchError(OldroydLabError, ValueError):
    """Fields or spectral coefficients live on different grids"""


class DomainError(OldroydLabError, ValueError):
    """A nonlinear coefficient was evaluated outside rho > 0"""


class DegenerateModeError(OldroydLabError):
    """The corrected-mode coefficient A1 has a nonpositive denominator"""


class SemigroupMismatchError(OldroydLabError):
    """Pade exponential and eigendecomposition disagree"""


class QuadratureError(OldroydLabError):
    """Node doubling did not reach the requested tolerance"""


class FitError(OldroydLabError, ValueError):
    """A decay series cannot be fitted"""


class BlowUpError(OldroydLabError):
    """NaN or positivity breach during time stepping"""

    def __init__(self, message, t=None, last_state=None):
        super().__init__(message)
        self.t = t
        self.last_state = last_state
