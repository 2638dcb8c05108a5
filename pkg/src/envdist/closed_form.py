"""Closed-form envelope densities and distribution functions.

All functions accept a scalar or array ``b`` and return a float or an array
of the same shape.  Densities return ``+inf`` exactly at their integrable
singular points; :class:`ClosedFormDensity` lists those points.

Two-component families
    ``two_equal_uniform``  equal constant amplitudes, independent uniform phases
    ``two_dependent``      equal constant amplitudes, phase density
                           ``(phi_1 + phi_2) / pi^3`` on ``[0, pi]^2``
    ``two_general``        unequal constant amplitudes, independent uniform phases
Random-amplitude families
    ``common_gaussian``    both amplitudes equal one ``N(0, sigma^2)`` variable
    ``exp_mixture``        iid exponential amplitudes, phases 0 or pi
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError
from .quadrature import integrate
from .sinusoid import SupportBounds
from .special import bessel_k0e

SQRT_2PI = math.sqrt(2.0 * math.pi)


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _positive(name, value):
    if not (value > 0 and math.isfinite(value)):
        raise DomainError(f"{name} must be positive and finite, got {value}")


# ---------------------------------------------------------------------------
# n = 2, equal amplitudes, independent uniform phases
# ---------------------------------------------------------------------------
def pdf_two_equal_uniform(A: float, b):
    """``2 / (pi sqrt(4A^2 - b^2))`` on ``[0, 2A]``."""
    _positive("A", A)
    b = np.asarray(b, dtype=float)
    inside = (b >= 0) & (b < 2 * A)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = 2.0 / (math.pi * np.sqrt((2 * A - b) * (2 * A + b)))
    val = np.where(inside, val, 0.0)
    return _out(np.where(b == 2 * A, np.inf, val))


def cdf_two_equal_uniform(A: float, b):
    """``(2/pi) arctan(b / sqrt(4A^2 - b^2))``, clipped to [0, 1]."""
    _positive("A", A)
    b = np.asarray(b, dtype=float)
    bc = np.clip(b, 0.0, 2 * A)
    val = (2.0 / math.pi) * np.arctan2(bc, np.sqrt((2 * A - bc) * (2 * A + bc)))
    return _out(np.where(b <= 0, 0.0, np.where(b >= 2 * A, 1.0, val)))


# ---------------------------------------------------------------------------
# n = 2, equal amplitudes, linearly dependent phases on [0, pi]^2
# ---------------------------------------------------------------------------
def cdf_two_dependent(A: float, b):
    """``(4/pi^2) arctan(alpha)^2`` with ``alpha = b / sqrt(4A^2 - b^2)``."""
    _positive("A", A)
    b = np.asarray(b, dtype=float)
    bc = np.clip(b, 0.0, 2 * A)
    at = np.arctan2(bc, np.sqrt((2 * A - bc) * (2 * A + bc)))
    val = (4.0 / math.pi ** 2) * at * at
    return _out(np.where(b <= 0, 0.0, np.where(b >= 2 * A, 1.0, val)))


def pdf_two_dependent(A: float, b):
    """``(8/pi^2) arctan(alpha) / sqrt(4A^2 - b^2)`` on ``[0, 2A]``; infinite at ``2A``."""
    _positive("A", A)
    b = np.asarray(b, dtype=float)
    inside = (b >= 0) & (b < 2 * A)
    bc = np.clip(b, 0.0, 2 * A)
    root = np.sqrt((2 * A - bc) * (2 * A + bc))
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (8.0 / math.pi ** 2) * np.arctan2(bc, root) / root
    val = np.where(inside, val, 0.0)
    return _out(np.where(b == 2 * A, np.inf, val))


# ---------------------------------------------------------------------------
# n = 2, unequal amplitudes, independent uniform phases
# ---------------------------------------------------------------------------
def pdf_two_general(A1: float, A2: float, b):
    """``2b / (pi sqrt(4 A1^2 A2^2 - (b^2 - A1^2 - A2^2)^2))`` on ``[|A1-A2|, A1+A2]``.

    The radicand is evaluated in factored form
    ``(b-d)(b+d)(s-b)(s+b)`` with ``d = |A1-A2|``, ``s = A1+A2``.
    """
    _positive("A1", A1)
    _positive("A2", A2)
    d, s = abs(A1 - A2), A1 + A2
    b = np.asarray(b, dtype=float)
    inside = (b > d) & (b < s) if d > 0 else (b >= 0) & (b < s)
    with np.errstate(divide="ignore", invalid="ignore"):
        if d > 0:
            val = 2.0 * b / (math.pi * np.sqrt((b - d) * (b + d) * (s - b) * (s + b)))
        else:
            val = 2.0 / (math.pi * np.sqrt((s - b) * (s + b)))
    val = np.where(inside, val, 0.0)
    edge = (b == s) | ((b == d) & (d > 0))
    return _out(np.where(edge, np.inf, val))


def cdf_two_general(A1: float, A2: float, b):
    """``arccos((A1^2 + A2^2 - b^2) / (2 A1 A2)) / pi`` on the support."""
    _positive("A1", A1)
    _positive("A2", A2)
    d, s = abs(A1 - A2), A1 + A2
    b = np.asarray(b, dtype=float)
    bc = np.clip(b, d, s)
    # 1 - cos = (b^2 - d^2) / (2 A1 A2), written to avoid cancellation near d
    cosv = 1.0 - (bc - d) * (bc + d) / (2.0 * A1 * A2)
    val = np.arccos(np.clip(cosv, -1.0, 1.0)) / math.pi
    return _out(np.where(b <= d, 0.0, np.where(b >= s, 1.0, val)))


# ---------------------------------------------------------------------------
# n = 2, both amplitudes equal to one zero-mean Gaussian variable
# ---------------------------------------------------------------------------
def pdf_common_gaussian(sigma: float, b):
    """``exp(-c^2/4) K0(c^2/4) / (sigma pi sqrt(2 pi))`` with ``c = b / (2 sigma)``.

    Taken with a positive sign (the density must be non-negative).  Returns
    ``+inf`` at ``b = 0``, where ``K0`` has its logarithmic singularity.
    """
    _positive("sigma", sigma)
    b = np.asarray(b, dtype=float)
    if np.any(b < 0):
        raise DomainError("envelope values must be non-negative")
    x = (b / (2.0 * sigma)) ** 2 / 4.0
    safe = np.where(x > 0, x, 1.0)
    # exp(-x) K0(x) = exp(-2x) * (exp(x) K0(x))
    val = np.exp(-2.0 * safe) * bessel_k0e(safe) / (sigma * math.pi * SQRT_2PI)
    return _out(np.where(x > 0, val, np.inf))


def pdf_common_gaussian_integral(sigma: float, b: float, *, epsrel: float = 1e-12) -> float:
    """Integral form ``4/(sigma pi sqrt(2pi)) int_{b/2}^inf exp(-a^2/2sigma^2) / sqrt(4a^2 - b^2) da``."""
    _positive("sigma", sigma)
    b = float(b)
    if b < 0:
        raise DomainError("envelope values must be non-negative")
    if b == 0:
        return math.inf
    lo = 0.5 * b
    s2 = 2.0 * sigma * sigma

    def tail(a):
        return np.exp(-a * a / s2) / np.sqrt((2 * a - b) * (2 * a + b))
    # the inverse-square-root singularity sits at a = b/2; split off a finite piece
    hi = lo + 8.0 * sigma + lo
    near = integrate(tail, lo, hi, singular="left", epsabs=0.0, epsrel=epsrel).value
    far = integrate(tail, hi, math.inf, epsabs=0.0, epsrel=epsrel).value
    return 4.0 / (sigma * math.pi * SQRT_2PI) * (near + far)


# ---------------------------------------------------------------------------
# n = 2, phases 0 or pi with probability 1/2 each
# ---------------------------------------------------------------------------
def pdf_discrete_phase_mixture(f_joint: Callable[[np.ndarray, np.ndarray], np.ndarray], b: float, *,
                               points: Sequence[float] = (0.0,), epsabs: float = 1e-13,
                               epsrel: float = 1e-11) -> float:
    """Three-integral mixture form for binary phases.

    ``(1/2)[int_{-inf}^b f(a, b-a) da + int_b^inf f(a, a-b) da + int f(a, a+b) da]``

    This form assumes amplitudes with non-negative support; for signed
    amplitudes use :func:`envdist.eged.eged_pdf_discrete`, which enumerates
    the phase atoms.  ``f_joint`` is called with two arrays.

    Raises
    ------
    QuadratureError
        If any of the three integrals misses the tolerance.
    """
    b = float(b)
    if b < 0:
        return 0.0
    pts = sorted(set(float(p) for p in points) | {0.0, b, -b})

    def g1(a):
        return f_joint(a, b - a)

    def g2(a):
        return f_joint(a, a - b)

    def g3(a):
        return f_joint(a, a + b)
    kw = dict(epsabs=epsabs, epsrel=epsrel)
    i1 = integrate(g1, -math.inf, b, points=[p for p in pts if p < b], **kw).value
    i2 = integrate(g2, b, math.inf, points=[p for p in pts if p > b], **kw).value
    i3 = integrate(g3, -math.inf, math.inf, points=pts, **kw).value
    return 0.5 * (i1 + i2 + i3)


def pdf_exp_mixture(lam: float, b):
    """``(1/2) lam exp(-lam b) (lam b + 1)`` for ``b >= 0``."""
    _positive("lambda", lam)
    b = np.asarray(b, dtype=float)
    val = 0.5 * lam * np.exp(-lam * np.maximum(b, 0.0)) * (lam * b + 1.0)
    return _out(np.where(b >= 0, val, 0.0))


def cdf_exp_mixture(lam: float, b):
    """``1 - exp(-lam b) (1 + lam b / 2)``."""
    _positive("lambda", lam)
    b = np.asarray(b, dtype=float)
    bc = np.maximum(b, 0.0)
    val = -np.expm1(-lam * bc) - 0.5 * lam * bc * np.exp(-lam * bc)
    return _out(np.where(b > 0, val, 0.0))


# ---------------------------------------------------------------------------
# Family descriptor
# ---------------------------------------------------------------------------
class Family(enum.Enum):
    TWO_EQUAL_UNIFORM = "TWO_EQUAL_UNIFORM"
    TWO_DEPENDENT = "TWO_DEPENDENT"
    TWO_GENERAL = "TWO_GENERAL"
    COMMON_GAUSSIAN = "COMMON_GAUSSIAN"
    EXP_MIXTURE = "EXP_MIXTURE"


@dataclass(frozen=True)
class ClosedFormDensity:
    """A closed-form family with bound parameters.

    Attributes
    ----------
    family : Family
    params : tuple of float
        ``(A,)``, ``(A,)``, ``(A1, A2)``, ``(sigma,)`` or ``(lam,)``.
    support : SupportBounds
        Upper end is ``inf`` for the random-amplitude families.
    singularities : tuple of float
        Points where the density is infinite.
    """

    family: Family
    params: tuple[float, ...]
    support: SupportBounds
    singularities: tuple[float, ...]

    def pdf(self, b):
        p = self.params
        if self.family is Family.TWO_EQUAL_UNIFORM:
            return pdf_two_equal_uniform(p[0], b)
        if self.family is Family.TWO_DEPENDENT:
            return pdf_two_dependent(p[0], b)
        if self.family is Family.TWO_GENERAL:
            return pdf_two_general(p[0], p[1], b)
        if self.family is Family.COMMON_GAUSSIAN:
            return pdf_common_gaussian(p[0], np.maximum(b, 0.0)) * (np.asarray(b) >= 0)
        return pdf_exp_mixture(p[0], b)

    def cdf(self, b):
        p = self.params
        if self.family is Family.TWO_EQUAL_UNIFORM:
            return cdf_two_equal_uniform(p[0], b)
        if self.family is Family.TWO_DEPENDENT:
            return cdf_two_dependent(p[0], b)
        if self.family is Family.TWO_GENERAL:
            return cdf_two_general(p[0], p[1], b)
        if self.family is Family.EXP_MIXTURE:
            return cdf_exp_mixture(p[0], b)
        return _out(np.vectorize(self._cdf_by_quadrature)(np.asarray(b, dtype=float)))

    def _cdf_by_quadrature(self, b: float) -> float:
        if b <= 0:
            return 0.0
        return integrate(lambda x: self.pdf(x), 0.0, b, singular="left", epsabs=1e-14, epsrel=1e-11).value

    def total_mass(self, epsrel: float = 1e-12) -> float:
        """Singularity-aware quadrature of the density over its support."""
        lo, hi = self.support.m, self.support.M
        pts = [s for s in self.singularities if lo < s < hi]

        def f(x):
            return np.asarray(self.pdf(x), dtype=float)
        edges = [lo, *pts, hi]
        total = 0.0
        for a, c in zip(edges[:-1], edges[1:]):
            if math.isinf(c):
                # peel a finite, possibly singular, piece off the tail
                mid = a + 1.0 if a == 0 else 2.0 * a
                total += integrate(f, a, mid, singular="left" if a in self.singularities else None,
                                   epsabs=1e-15, epsrel=epsrel).value
                total += integrate(f, mid, c, epsabs=1e-15, epsrel=epsrel).value
                continue
            sing_a = a in self.singularities
            sing_c = c in self.singularities
            mode = "both" if (sing_a and sing_c) else "left" if sing_a else "right" if sing_c else None
            total += integrate(f, a, c, singular=mode, epsabs=1e-15, epsrel=epsrel).value
        return total


def family(kind: Family | str, *params: float) -> ClosedFormDensity:
    """Bind parameters to a closed-form family."""
    kind = Family(kind)
    if kind in (Family.TWO_EQUAL_UNIFORM, Family.TWO_DEPENDENT):
        (A,) = params
        _positive("A", A)
        return ClosedFormDensity(kind, (float(A),), SupportBounds(0.0, 2.0 * A), (2.0 * A,))
    if kind is Family.TWO_GENERAL:
        A1, A2 = params
        _positive("A1", A1)
        _positive("A2", A2)
        d = abs(A1 - A2)
        sing = (d, A1 + A2) if d > 0 else (A1 + A2,)
        return ClosedFormDensity(kind, (float(A1), float(A2)), SupportBounds(d, A1 + A2), sing)
    if kind is Family.COMMON_GAUSSIAN:
        (sigma,) = params
        _positive("sigma", sigma)
        return ClosedFormDensity(kind, (float(sigma),), SupportBounds(0.0, math.inf), (0.0,))
    (lam,) = params
    _positive("lambda", lam)
    return ClosedFormDensity(kind, (float(lam),), SupportBounds(0.0, math.inf), ())
