"""Special functions used by the closed-form envelope densities.

Elliptic integrals of the first kind go through Carlson's symmetric ``R_F``
(real or complex arguments), ``K_0`` through its power series below ``x = 2``
and Steed's continued fraction above, and the Gaussian tail through the
standard-library complementary error function.
"""

from __future__ import annotations

import cmath
import math
from typing import Literal

import numpy as np

from .errors import DomainError, SingularPath

EULER_GAMMA = 0.57721566490153286060651209008240243
_EPS = np.finfo(float).eps

Branch = Literal["upper", "lower"]


def carlson_rf(x, y, z):
    """Carlson's symmetric integral ``R_F(x, y, z)`` by duplication.

    Arguments may be real or complex (principal branch of the square root;
    the sign of a zero imaginary part selects the side of the negative real
    axis).  At most one argument may be zero.
    """
    if any(isinstance(v, complex) for v in (x, y, z)):
        sqrt = cmath.sqrt
    else:
        x, y, z = float(x), float(y), float(z)
        if min(x, y, z) < 0:
            raise DomainError("real R_F needs non-negative arguments")
        sqrt = math.sqrt
    if sum(1 for v in (x, y, z) if v == 0) > 1:
        raise SingularPath("R_F diverges with two zero arguments")
    a0 = (x + y + z) / 3.0
    q = (3.0 * _EPS) ** (-1.0 / 6.0) * max(abs(a0 - x), abs(a0 - y), abs(a0 - z))
    a, f = a0, 1.0
    for _ in range(200):
        if q * f < abs(a):
            break
        sx, sy, sz = sqrt(x), sqrt(y), sqrt(z)
        lam = sx * sy + sx * sz + sy * sz
        x, y, z = (x + lam) / 4.0, (y + lam) / 4.0, (z + lam) / 4.0
        a = (a + lam) / 4.0
        f /= 4.0
    X = (a - x) / a
    Y = (a - y) / a
    Z = -(X + Y)
    e2 = X * Y - Z * Z
    e3 = X * Y * Z
    poly = (1.0 + e3 * (1.0 / 14 + 3.0 * e3 / 104)
            + e2 * (-1.0 / 10 + e2 / 24 - 3.0 * e3 / 44 - 5.0 * e2 * e2 / 208 + e2 * e3 / 16))
    return poly / sqrt(a)


def carlson_rf_array(x, y, z) -> np.ndarray:
    """Vectorised real ``R_F`` for arrays of non-negative arguments.

    Elements with two zero arguments give ``inf``.
    """
    x, y, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, z)))
    if np.any((x < 0) | (y < 0) | (z < 0)):
        raise DomainError("real R_F needs non-negative arguments")
    x, y, z = x.copy(), y.copy(), z.copy()
    zeros = (x == 0).astype(int) + (y == 0) + (z == 0)
    a0 = (x + y + z) / 3.0
    q = (3.0 * _EPS) ** (-1.0 / 6.0) * np.maximum(np.maximum(abs(a0 - x), abs(a0 - y)), abs(a0 - z))
    a = a0.copy()
    f = 1.0
    for _ in range(200):
        if np.all(q * f < np.abs(a)) or np.all((zeros > 1) | (q * f < np.abs(a))):
            break
        sx, sy, sz = np.sqrt(x), np.sqrt(y), np.sqrt(z)
        lam = sx * sy + sx * sz + sy * sz
        x, y, z = (x + lam) / 4.0, (y + lam) / 4.0, (z + lam) / 4.0
        a = (a + lam) / 4.0
        f /= 4.0
    with np.errstate(divide="ignore", invalid="ignore"):
        X = (a - x) / a
        Y = (a - y) / a
        Z = -(X + Y)
        e2 = X * Y - Z * Z
        e3 = X * Y * Z
        poly = (1.0 + e3 * (1.0 / 14 + 3.0 * e3 / 104)
                + e2 * (-1.0 / 10 + e2 / 24 - 3.0 * e3 / 44 - 5.0 * e2 * e2 / 208 + e2 * e3 / 16))
        out = poly / np.sqrt(a)
    return np.where(zeros > 1, np.inf, out)


def agm(x, y) -> np.ndarray:
    """Arithmetic-geometric mean of non-negative arrays (quadratically convergent)."""
    a, g = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if np.any((a < 0) | (g < 0)):
        raise DomainError("agm needs non-negative arguments")
    a, g = a.astype(float), g.astype(float)
    for _ in range(64):
        if np.all(np.abs(a - g) <= 4.0 * _EPS * a):
            break
        a, g = 0.5 * (a + g), np.sqrt(a * g)
    return 0.5 * (a + g)


def carlson_rf0_array(y, z) -> np.ndarray:
    """Complete case ``R_F(0, y, z) = pi / (2 agm(sqrt y, sqrt z))`` for arrays."""
    y, z = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(z, dtype=float))
    zero = (y == 0) | (z == 0)
    m = agm(np.sqrt(np.where(zero, 1.0, y)), np.sqrt(np.where(zero, 1.0, z)))
    return np.where(zero, np.inf, 0.5 * math.pi / m)


def _is_real(v) -> bool:
    return not isinstance(v, complex) or v.imag == 0.0


def elliptic_f(q, p, branch: Branch | None = None):
    """Incomplete elliptic integral ``int_0^q dx / sqrt((1 - p^2 x^2)(1 - x^2))``.

    Evaluated as ``q * R_F(1 - q^2, 1 - p^2 q^2, 1)``.  For real ``|p| > 1``
    and ``|q| >= 1/|p|`` the integrand has a branch point on the path; the
    value is then complex and depends on which side of the cut the path
    passes, so ``branch`` ('upper' or 'lower') must be given, otherwise
    :class:`SingularPath` is raised.

    Returns a float when the result is real, otherwise a complex number.
    """
    if _is_real(q) and _is_real(p):
        qr, pr = float(q.real if isinstance(q, complex) else q), float(p.real if isinstance(p, complex) else p)
        if not (math.isfinite(qr) and math.isfinite(pr)):
            raise DomainError("elliptic_f arguments must be finite")
        if abs(qr) > 1.0:
            raise SingularPath("upper limit beyond 1: 1 - x^2 vanishes on the path")
        if qr == 0.0:
            return 0.0
        y = 1.0 - pr * pr * qr * qr
        x = 1.0 - qr * qr
        if -8.0 * _EPS < y < 0.0 and branch is None:
            y = 0.0  # q = 1/p up to rounding: the branch point is the upper limit
        if abs(pr) * abs(qr) == 1.0 and abs(qr) == 1.0:
            raise SingularPath("p^2 = 1 with q = 1: the integral diverges")
        if y < 0.0 or (y == 0.0 and x > 0.0 and branch is not None and abs(pr) > 1):
            if branch is None:
                raise SingularPath("p^2 x^2 = 1 is crossed on the path; choose a branch")
            sign = 0.0 if branch == "upper" else -0.0
            val = qr * carlson_rf(complex(x, 0.0), complex(y, sign), complex(1.0, 0.0))
            return val
        if y == 0.0 and x == 0.0:
            raise SingularPath("both factors vanish at the upper limit")
        return qr * carlson_rf(x, y, 1.0)
    q, p = complex(q), complex(p)
    x = 1.0 - q * q
    y = 1.0 - p * p * q * q
    if x == 0 and y == 0:
        raise SingularPath("both factors vanish at the upper limit")
    val = q * carlson_rf(x, y, complex(1.0, 0.0))
    return val.real if val.imag == 0.0 else val


def elliptic_k(p, branch: Branch | None = None):
    """Complete integral ``elliptic_f(1, p)``."""
    return elliptic_f(1.0, p, branch)


def _k0_series(x: float) -> float:
    t = 0.25 * x * x
    term = 1.0
    i0 = 1.0
    hsum = 0.0
    acc = 0.0
    k = 0
    while True:
        k += 1
        term *= t / (k * k)
        hsum += 1.0 / k
        i0 += term
        acc += term * hsum
        if term * max(hsum, 1.0) < 1e-17 * max(abs(acc), 1e-300):
            break
    return -(math.log(0.5 * x) + EULER_GAMMA) * i0 + acc


def _k0e_continued_fraction(x: float) -> float:
    """``exp(x) K_0(x)`` by Steed's algorithm for the Temme continued fraction."""
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = delh = d
    q1, q2 = 0.0, 1.0
    a1 = 0.25
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, 100000):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < 1e-17:
            break
    return math.sqrt(math.pi / (2.0 * x)) / s


def _scalar_k0(x: float) -> float:
    if not x > 0:
        raise DomainError(f"bessel_k0 needs x > 0, got {x}")
    if math.isinf(x):
        return 0.0
    if x <= 2.0:
        return _k0_series(x)
    return _k0e_continued_fraction(x) * math.exp(-x)


def _scalar_k0e(x: float) -> float:
    if not x > 0:
        raise DomainError(f"bessel_k0e needs x > 0, got {x}")
    if x <= 2.0:
        return _k0_series(x) * math.exp(x)
    if math.isinf(x):
        return 0.0
    return _k0e_continued_fraction(x)


def _vectorize(fn):
    ufunc = np.frompyfunc(fn, 1, 1)

    def wrapper(x):
        if np.ndim(x) == 0:
            return fn(float(x))
        return ufunc(np.asarray(x, dtype=float)).astype(float)
    wrapper.__name__ = fn.__name__
    return wrapper


bessel_k0 = _vectorize(_scalar_k0)
bessel_k0.__doc__ = """Modified Bessel function of the second kind, order zero, for x > 0."""

bessel_k0e = _vectorize(_scalar_k0e)
bessel_k0e.__doc__ = """Exponentially scaled ``exp(x) * K_0(x)``."""


def _scalar_q(x: float) -> float:
    if math.isnan(x):
        raise DomainError("q_function of NaN")
    return 0.5 * math.erfc(x / math.sqrt(2.0))


q_function = _vectorize(_scalar_q)
q_function.__doc__ = """Gaussian tail probability ``Q(x) = P(N(0,1) > x)``."""
