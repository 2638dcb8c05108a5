"""Exception hierarchy shared by all envdist modules."""

from __future__ import annotations


class EnvDistError(Exception):
    """Base class for every error raised by envdist."""


class NumericalError(EnvDistError, ArithmeticError):
    """A computed quantity left its mathematically admissible range."""


class DomainError(EnvDistError, ValueError):
    """An argument lies outside the domain of the operation."""


class UnsupportedModel(EnvDistError, NotImplementedError):
    """The requested operation is not available for this probability model."""


class SingularPath(DomainError):
    """An elliptic integrand vanishes on the integration path."""


class BranchError(NumericalError):
    """Complex-branch evaluation is ill-conditioned."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach the requested tolerance.

    Attributes
    ----------
    value : float
        Best estimate obtained before giving up.
    error : float
        Achieved absolute error estimate.
    tolerance : float
        Requested absolute tolerance.
    """

    def __init__(self, message: str, value: float = float("nan"),
                 error: float = float("inf"), tolerance: float = 0.0):
        super().__init__(f"{message} (estimate={value:.6g}, achieved error={error:.3g}, "
                         f"requested={tolerance:.3g})")
        self.value = value
        self.error = error
        self.tolerance = tolerance


class GridTooCoarse(EnvDistError, ValueError):
    """A tabulated grid has too few points for the requested operation."""


class GridMismatch(EnvDistError, ValueError):
    """Two tabulated distributions do not share the same grid."""


class EmptyInput(EnvDistError, ValueError):
    """An operation received no samples."""


class UnnormalizedDistribution(EnvDistError, ValueError):
    """A density does not integrate to one within tolerance."""


class NotBracketed(EnvDistError, ValueError):
    """A target value is not bracketed by the data being interpolated."""


class ConfigError(EnvDistError, ValueError):
    """A model or run configuration could not be parsed."""
