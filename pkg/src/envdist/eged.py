"""Exact general envelope density by conditioning on the first n-1 components.

Given the resultant ``(B_{n-1}, theta_{n-1})`` of the first ``n - 1``
components, the last component reaches envelope ``b`` only at the (at most
two) phases ``theta_{n-1} +- arccos(Psi_n)`` with

    Psi_n = (b^2 - B_{n-1}^2 - a_n^2) / (2 a_n B_{n-1}),

and the density picks up the Jacobian
``1 / sqrt(4 a_n^2 B_{n-1}^2 - (b^2 - B_{n-1}^2 - a_n^2)^2)``.  The pdf is
``2b`` times the expectation of that Jacobian times the phase density at the
admissible phases.

Numerically the innermost remaining phase is handled by an *arc window*: for
fixed earlier components, ``B_{n-1}^2 = K + 2 s cos(xi)`` and the admissible
set ``(b - |a_n|)^2 < B_{n-1}^2 < (b + |a_n|)^2`` is a pair of mirrored arcs in
``xi``.  Mapping each arc by ``xi = m - h cos(u)`` removes the
inverse-square-root edge singularities exactly, leaving a smooth integrand in
``u``.  Outer phases are integrated by adaptive Gauss-Kronrod (one or two
dimensions) or by scrambled Sobol points (higher dimensions, random amplitudes).
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import closed_form as cf
from .errors import (BranchError, DomainError, GridTooCoarse, QuadratureError,
                     UnsupportedModel)
from .models import AmplitudeKind, EnsembleModel, PhaseKind
from .quadrature import gauss_legendre, graded_rule, integrate
from .rng import stream
from .sinusoid import SupportBounds, critical_envelopes, envelope_bounds, resultant
from .special import carlson_rf0_array, elliptic_f, elliptic_k

log = logging.getLogger(__name__)

PI = math.pi
TWO_PI = 2.0 * math.pi

# default relative tolerances of the outer adaptive integrations
TOL_1D = 1e-7
TOL_2D = 1e-5


def wrap_phase(x):
    """Map angles to ``(-pi, pi]``."""
    y = np.pi - np.mod(np.pi - np.asarray(x, dtype=float), TWO_PI)
    return float(y) if np.ndim(y) == 0 else y


# ---------------------------------------------------------------------------
# Pointwise integrand of the conditioning formula
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class EgedIntegrand:
    """``Psi_n``, the admissible last phases and the Jacobian weight."""

    psi: float
    candidate_angles: tuple[float, ...]
    weight: float


def eged_integrand(a: Sequence[float], phi_bar: Sequence[float], b: float) -> EgedIntegrand:
    """Evaluate the conditioning quantities at one point ``(a, phi_1..phi_{n-1})``.

    ``a`` has length ``n`` and ``phi_bar`` length ``n - 1``.  The Jacobian uses
    ``|a_n|``; ``Psi_n`` keeps the sign of ``a_n`` so that the candidate phases
    are the actual solutions.  No candidates are returned when ``|Psi_n| > 1``.
    """
    a = [float(x) for x in a]
    phi_bar = [float(x) for x in phi_bar]
    if len(a) != len(phi_bar) + 1 or len(a) < 2:
        raise DomainError("need n amplitudes and n-1 phases, n >= 2")
    prev = resultant((a[:-1], phi_bar))
    B, theta, an = prev.envelope, prev.phase, a[-1]
    if B == 0.0 or an == 0.0:
        return EgedIntegrand(math.nan, (), 0.0)
    psi = (b * b - B * B - an * an) / (2.0 * an * B)
    if abs(psi) > 1.0:
        return EgedIntegrand(psi, (), 0.0)
    alpha = math.acos(psi)
    cands = sorted({wrap_phase(theta + alpha), wrap_phase(theta - alpha)})
    lo, hi = b - abs(an), b + abs(an)
    rad = (B * B - lo * lo) * (hi * hi - B * B)
    weight = 1.0 / math.sqrt(rad) if rad > 0 else math.inf
    return EgedIntegrand(psi, tuple(cands), weight)


# ---------------------------------------------------------------------------
# Arc-window primitive
# ---------------------------------------------------------------------------
class ArcWindow(NamedTuple):
    """Admissible arc ``xi in [xi1, xi2]`` (and its mirror) of ``K + 2 s cos(xi)``.

    ``gap_lo = -1 - c_lo`` and ``gap_hi = c_hi - 1``: an edge is clipped at
    0 or pi when its gap is non-negative.
    """

    valid: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    gap_lo: np.ndarray
    gap_hi: np.ndarray
    s: np.ndarray


def arc_window(K, s, L2, U2, gap_hi=None, gap_lo=None) -> ArcWindow:
    """Solve ``L2 < K + 2 s cos(xi) < U2`` for ``xi in [0, pi]`` (arrays broadcast).

    ``gap_hi = c_hi - 1`` and ``gap_lo = -1 - c_lo`` (with
    ``c_hi = (U2 - K) / 2s``, ``c_lo = (L2 - K) / 2s``) may be supplied when
    the caller can form them without cancellation; they decide whether a
    window edge is genuine or clipped and fix the edge angles near 0 and pi.
    """
    K, s, L2, U2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (K, s, L2, U2)))
    with np.errstate(divide="ignore", invalid="ignore"):
        c_lo = (L2 - K) / (2.0 * s)
        c_hi = (U2 - K) / (2.0 * s)
        g_hi = c_hi - 1.0 if gap_hi is None else np.broadcast_to(np.asarray(gap_hi, dtype=float), K.shape)
        g_lo = -1.0 - c_lo if gap_lo is None else np.broadcast_to(np.asarray(gap_lo, dtype=float), K.shape)
    valid = (s > 0) & (g_lo > -2.0) & (g_hi > -2.0) & (c_lo < c_hi) & np.isfinite(c_lo) & np.isfinite(c_hi)
    g_hi = np.where(valid, g_hi, 1.0)
    g_lo = np.where(valid, g_lo, 1.0)
    c_lo = np.where(valid, c_lo, -2.0)
    c_hi = np.where(valid, c_hi, 2.0)
    # arccos(1 - d) = 2 asin(sqrt(d/2)) keeps full relative accuracy for small d
    xi1 = np.where(g_hi < 0, np.where(g_hi > -1.0, 2.0 * np.arcsin(np.sqrt(np.clip(-0.5 * g_hi, 0, 1))),
                                      np.arccos(np.clip(c_hi, -1.0, 1.0))), 0.0)
    xi2 = np.where(g_lo < 0, np.where(g_lo > -1.0, PI - 2.0 * np.arcsin(np.sqrt(np.clip(-0.5 * g_lo, 0, 1))),
                                      np.arccos(np.clip(c_lo, -1.0, 1.0))), PI)
    return ArcWindow(valid, xi1, xi2, g_lo, g_hi, np.where(valid, s, 1.0))


def arc_nodes(win: ArcWindow, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Abscissae ``xi(u)`` and weights ``xi'(u) / (2 s sqrt((cos xi - c_lo)(c_hi - cos xi)))``.

    ``win`` fields have shape ``(P,)``; ``u`` (in ``(0, pi)``) has shape ``(Q,)``;
    results have shape ``(P, Q)`` and vanish where the window is empty.  The
    two factors of the square root are formed without cancellation: at a
    genuine window edge as a product of sines of half-angle differences,
    at a clipped edge as a positive gap plus ``2 sin^2`` or ``2 cos^2``.
    """
    xi1 = win.xi1[:, None]
    xi2 = win.xi2[:, None]
    h = 0.5 * (xi2 - xi1)
    m = 0.5 * (xi1 + xi2)
    cu = np.cos(u)[None, :]
    su = np.sin(u)[None, :]
    xi = m - h * cu
    s2 = np.sin(0.5 * u)[None, :] ** 2
    c2 = np.cos(0.5 * u)[None, :] ** 2
    hi_edge = (win.gap_hi < 0.0)[:, None]
    lo_edge = (win.gap_lo < 0.0)[:, None]
    # c_hi - cos(xi)
    d_top = np.where(hi_edge,
                     2.0 * np.sin(h * s2) * np.sin(0.5 * (xi + xi1)),
                     win.gap_hi[:, None] + 2.0 * np.sin(0.5 * xi) ** 2)
    # cos(xi) - c_lo
    d_bot = np.where(lo_edge,
                     2.0 * np.sin(h * c2) * np.sin(0.5 * (xi2 + xi)),
                     win.gap_lo[:, None] + 2.0 * np.cos(0.5 * xi) ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = h * su / (2.0 * win.s[:, None] * np.sqrt(d_top * d_bot))
    w = np.where(win.valid[:, None] & np.isfinite(w), w, 0.0)
    return xi, w


def _u_rule(levels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = graded_rule(levels, order)
    return PI * x, PI * w


def arc_integral(K, s, L2, U2, *, levels: int = 24, order: int = 8) -> np.ndarray:
    """``int_0^pi 1{window} dxi / sqrt((B^2 - L2)(U2 - B^2))`` with ``B^2 = K + 2 s cos xi``.

    Batched over the broadcast shape of the inputs using a fixed graded
    Gauss-Legendre rule in ``u``.
    """
    shape = np.broadcast(np.asarray(K), np.asarray(s), np.asarray(L2), np.asarray(U2)).shape
    win = arc_window(*(np.ravel(np.broadcast_to(np.asarray(v, dtype=float), shape)) for v in (K, s, L2, U2)))
    u, wu = _u_rule(levels, order)
    _, w = arc_nodes(win, u)
    return (w @ wu).reshape(shape)


def _arc_integral_adaptive(K: float, s: float, L2: float, U2: float, epsrel: float) -> float:
    win = arc_window(K, s, L2, U2)
    if not win.valid:
        return 0.0
    win = ArcWindow(*(np.atleast_1d(v) for v in win))

    def f(u):
        return arc_nodes(win, u)[1][0]
    return integrate(f, 0.0, PI, epsabs=0.0, epsrel=epsrel).value


# ---------------------------------------------------------------------------
# Constant amplitudes, independent uniform phases
# ---------------------------------------------------------------------------
def _check_amplitudes(A, n) -> list[float]:
    A = [float(x) for x in A]
    if len(A) != n:
        raise DomainError(f"need {n} amplitudes")
    if any(not (x > 0 and math.isfinite(x)) for x in A):
        raise DomainError("amplitudes must be positive and finite")
    return A


def pdf_three_uniform(A: Sequence[float], b: float, *, epsrel: float = 1e-11) -> float:
    """Envelope density of three constant amplitudes with independent uniform phases.

    Integrates ``(2b/pi^2) int dphi_1 / sqrt(4 A_3^2 B_2^2 - (b^2 - B_2^2 - A_3^2)^2)``
    with ``B_2^2 = A_1^2 + A_2^2 + 2 A_1 A_2 cos(phi_1)`` between the limits
    where ``(b - A_3)^2 <= B_2^2 <= (b + A_3)^2``.  Returns ``inf`` at a
    critical envelope where the density is singular.
    """
    A1, A2, A3 = _check_amplitudes(A, 3)
    b = float(b)
    bounds = envelope_bounds([A1, A2, A3])
    if not bounds.m <= b <= bounds.M or b == 0.0:
        return 0.0
    K, s = A1 * A1 + A2 * A2, A1 * A2
    L2, U2 = (b - A3) ** 2, (b + A3) ** 2
    win = arc_window(K, s, L2, U2)
    if not win.valid:
        return 0.0
    # exact coincidence of a window edge with an extreme of B_2 gives a log singularity
    if (win.gap_hi == 0.0 or win.gap_lo == 0.0) and bounds.m < b < bounds.M:
        return math.inf
    try:
        val = _arc_integral_adaptive(K, s, L2, U2, epsrel)
    except QuadratureError as exc:
        if b in critical_envelopes([A1, A2, A3]):
            return math.inf
        raise exc
    return 2.0 * b / PI ** 2 * val


def pdf_three_uniform_reduced(a: np.ndarray, b: float) -> np.ndarray:
    """Vectorised three-component density for rows of amplitudes ``a`` (shape ``(P, 3)``).

    Substituting ``x = B_2^2`` turns the phase integral into a complete
    elliptic integral over the middle interval between the sorted roots
    ``r1 <= r2 <= r3 <= r4`` of ``{(A1-A2)^2, (A1+A2)^2, (b-A3)^2, (b+A3)^2}``:
    ``int_{r2}^{r3} dx / sqrt(|prod (x - r_i)|) = 2 R_F(0, (r4-r3)(r2-r1), (r4-r2)(r3-r1))``.
    """
    a = np.abs(np.atleast_2d(np.asarray(a, dtype=float)))
    b = float(b)
    if b <= 0:
        return np.zeros(a.shape[0])
    r = np.stack([(a[:, 0] - a[:, 1]) ** 2, (a[:, 0] + a[:, 1]) ** 2,
                  (b - a[:, 2]) ** 2, (b + a[:, 2]) ** 2], axis=1)
    lo = np.maximum(r[:, 0], r[:, 2])
    hi = np.minimum(r[:, 1], r[:, 3])
    inside = lo < hi
    r = np.sort(r, axis=1)
    y = (r[:, 3] - r[:, 2]) * (r[:, 1] - r[:, 0])
    z = (r[:, 3] - r[:, 1]) * (r[:, 2] - r[:, 0])
    y = np.where(inside, y, 1.0)
    z = np.where(inside, z, 1.0)
    val = 2.0 * carlson_rf0_array(y, z)
    return np.where(inside, 2.0 * b / PI ** 2 * val, 0.0)


def _elliptic_parameters(b: float):
    root = complex((3.0 + b) * (1.0 - b)) ** 0.5
    U = 1.0 / (abs(1.0 - b) * root)
    if b == 3.0:
        return U, math.inf, 0j
    V = (1.0 + b) ** -1.5 * (3.0 - b) ** -0.5
    return U, V, U / V


def pdf_three_elliptic(b: float) -> float:
    """Unit-amplitude three-component density in elliptic-integral form.

    ``(4 i b / pi^2) U [K(P) - F(1/P, P)]`` for ``0 < b < 1`` and
    ``(4 i b / pi^2) U K(P)`` for ``1 < b <= 3``, with
    ``U = 1 / (|1-b| sqrt((3+b)(1-b)))``, ``V = (1+b)^{-3/2} (3-b)^{-1/2}``,
    ``P = U/V`` and principal square roots.  For ``b > 1``, ``P`` is imaginary
    and everything is real; for ``b < 1``, ``P > 1`` and the path from
    ``1/P`` to 1 passes the branch point, taken on the upper side, where
    ``K(P) - F(1/P, P) = -i K(sqrt(1 - 1/P^2)) / P``.

    When the evaluation is inconsistent (non-real or negative result) a :class:`BranchError` is logged
    and the quadrature form is returned instead.
    """
    b = float(b)
    if b == 1.0:
        raise DomainError("b = 1 is a singular point of the elliptic form")
    if b <= 0.0 or b > 3.0:
        return 0.0
    try:
        return _pdf_three_elliptic(b)
    except BranchError as exc:
        log.warning("elliptic form rejected at b=%r (%s); using quadrature", b, exc)
        return pdf_three_uniform((1.0, 1.0, 1.0), b)


def _pdf_three_elliptic(b: float) -> float:
    U, V, P = _elliptic_parameters(b)
    pref = 4j * b / PI ** 2 * U
    if b > 1.0:
        val = pref * elliptic_k(P)
    else:
        # K(P) - F(1/P, P) is the integral from 1/P to 1, purely imaginary on the
        # upper branch; substituting x^2 = 1 - (1 - 1/P^2) sin^2 gives -i K(k') / P
        p = P.real
        if p <= 1.0:
            raise BranchError(f"modulus P={p!r} not above 1")
        val = pref * (-1j) * elliptic_k(math.sqrt(1.0 - 1.0 / (p * p))) / p
    if abs(val.imag) > 1e-9 * max(1e-300, abs(val.real)) or val.real < 0:
        raise BranchError(f"non-real or negative value {val!r}")
    return float(val.real)


def _four_outer_points(A, b) -> list[float]:
    A1, A2, A3, A4 = A
    lo, hi = abs(b - A4), b + A4
    pts = []
    for r in (lo + A3, abs(lo - A3), hi + A3, abs(hi - A3)):
        c = (r * r - A1 * A1 - A2 * A2) / (2.0 * A1 * A2)
        if -1.0 < c < 1.0:
            pts.append(math.acos(c))
    return sorted(set(pts))


def pdf_four_uniform(A: Sequence[float], b: float, *, epsrel: float = TOL_2D,
                     levels: int = 30, order: int = 8) -> float:
    """Envelope density of four constant amplitudes with independent uniform phases.

    By rotation invariance the first phase is fixed at zero, leaving
    ``(2b/pi^3) int_0^pi dphi int_0^pi dxi  1{window} / sqrt(...)``
    where ``phi`` is the phase of ``A_2`` relative to ``A_1`` and ``xi`` that of
    ``A_3`` relative to the resultant ``B_2``.  The outer integral is adaptive
    and split where ``B_2(phi)`` meets a critical value ``|b +- A_4 +- A_3|``;
    the inner one uses the batched arc rule.
    """
    A1, A2, A3, A4 = A = _check_amplitudes(A, 4)
    b = float(b)
    bounds = envelope_bounds(A)
    if not bounds.m <= b <= bounds.M or b == 0.0:
        return 0.0
    u, wu = _u_rule(levels, order)
    M2, m2, p2 = A1 + A2, abs(A1 - A2), 4.0 * A1 * A2
    c = A3
    L, U = abs(b - A4), b + A4

    def outer(phi):
        sh = np.sin(0.5 * phi) ** 2
        ch = np.cos(0.5 * phi) ** 2
        near_top = sh <= ch
        r2 = np.where(near_top, M2 * M2 - p2 * sh, m2 * m2 + p2 * ch)
        r2 = np.maximum(r2, 0.0)
        R = np.sqrt(r2)

        def minus_r(X):
            # X - R via (X^2 - R^2) / (X + R), with X^2 - R^2 formed from the exact offsets
            d2 = np.where(near_top, (X - M2) * (X + M2) + p2 * sh, (X - m2) * (X + m2) - p2 * ch)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = d2 / (X + R)
            return np.where(X + R > 0, out, X - R)
        s_ = c * R
        with np.errstate(divide="ignore", invalid="ignore"):
            gap_hi = minus_r(U - c) * (U + R + c) / (2.0 * s_)
            # |R - c| - L
            absdiff = np.where(R >= c, -minus_r(c + L), minus_r(c - L))
            gap_lo = absdiff * (np.abs(R - c) + L) / (2.0 * s_)
        win = arc_window(r2 + c * c, s_, L * L, U * U, gap_hi, gap_lo)
        return arc_nodes(win, u)[1] @ wu

    res = integrate(outer, 0.0, PI, points=_four_outer_points(A, b), singular="both", epsabs=0.0, epsrel=epsrel)
    return 2.0 * b / PI ** 3 * res.value


# ---------------------------------------------------------------------------
# Generic constant-amplitude engine
# ---------------------------------------------------------------------------
def _phase_density(model: EnsembleModel) -> Callable[[np.ndarray], np.ndarray]:
    return model.phase.pdf


def _candidates_density(model, a, R, theta, c, phi_prev, xi_side, b):
    """Sum of phase densities at the admissible last phases.

    ``phi_prev``: outer phases, shape ``(P, n-2)``; ``xi_side``: phases of
    component ``n-1`` with shape ``(P, Q)``.  Returns shape ``(P, Q)``.
    """
    an = a[-1]
    x = R[:, None] * np.cos(theta)[:, None] + c * np.cos(xi_side)
    y = R[:, None] * np.sin(theta)[:, None] + c * np.sin(xi_side)
    B = np.hypot(x, y)
    th = np.arctan2(y, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        psi = (b * b - B * B - an * an) / (2.0 * an * B)
    alpha = np.arccos(np.clip(psi, -1.0, 1.0))
    P, Q = xi_side.shape
    total = np.zeros((P, Q))
    dens = _phase_density(model)
    for sgn in (1.0, -1.0):
        last = wrap_phase(th + sgn * alpha)
        phis = np.concatenate([np.broadcast_to(phi_prev[:, None, :], (P, Q, phi_prev.shape[1])),
                               xi_side[:, :, None], last[:, :, None]], axis=2)
        total += dens(phis)
    return total


def _generic_inner(model, a, phi_prev, b, u, wu):
    """``int dphi_{n-1} sum_cand f(phi) V`` for each row of outer phases (shape ``(P, n-2)``)."""
    n = model.n
    c, an = a[n - 2], a[n - 1]
    if phi_prev.shape[1]:
        x = np.cos(phi_prev) @ a[: n - 2]
        y = np.sin(phi_prev) @ a[: n - 2]
        R, theta = np.hypot(x, y), np.arctan2(y, x)
    else:
        R = np.zeros(phi_prev.shape[0])
        theta = np.zeros(phi_prev.shape[0])
    shift = theta + (PI if c < 0 else 0.0)
    win = arc_window(R * R + c * c, abs(c) * R, (b - abs(an)) ** 2, (b + abs(an)) ** 2)
    xi, w = arc_nodes(win, u)
    out = np.zeros(phi_prev.shape[0])
    for sgn in (1.0, -1.0):
        side = wrap_phase(shift[:, None] + sgn * xi)
        dens = _candidates_density(model, a, R, theta, c, phi_prev, side, b)
        out += (w * dens) @ wu
    return out


def _eged_constant_two(model: EnsembleModel, b: float, epsrel: float) -> float:
    a1, a2 = model.amplitude.values
    B = abs(a1)
    lo, hi = b - abs(a2), b + abs(a2)
    rad = (B * B - lo * lo) * (hi * hi - B * B)
    if rad <= 0 or B == 0:
        return 0.0
    psi = (b * b - B * B - a2 * a2) / (2.0 * a2 * B)
    alpha = math.acos(max(-1.0, min(1.0, psi)))
    shift = PI if a1 < 0 else 0.0
    (l1, h1), (l2, h2) = model.phase.support

    def f(phi1):
        tot = np.zeros_like(phi1)
        for sgn in (1.0, -1.0):
            last = wrap_phase(phi1 + shift + sgn * alpha)
            tot += model.phase.pdf(np.stack([phi1, last], axis=-1))
        return tot
    pts = set()
    for edge in (l2, h2, -PI, PI, 0.0):
        for sgn in (1.0, -1.0):
            base = edge - shift - sgn * alpha
            for k in (-2, -1, 0, 1, 2):
                p = base + k * TWO_PI
                if l1 < p < h1:
                    pts.add(p)
    res = integrate(f, l1, h1, points=sorted(pts), epsabs=0.0, epsrel=epsrel)
    return 2.0 * b * res.value / math.sqrt(rad)


def _eged_constant_three(model: EnsembleModel, b: float, epsrel: float,
                         levels: int = 24, order: int = 8) -> float:
    a = np.asarray(model.amplitude.values)
    u, wu = _u_rule(levels, order)
    (l1, h1) = model.phase.support[0]

    def outer(phi1):
        return _generic_inner(model, a, phi1[:, None], b, u, wu)
    res = integrate(outer, l1, h1, epsabs=0.0, epsrel=epsrel)
    return 2.0 * b * res.value


def _qmc_estimate(model: EnsembleModel, b: float, *, samples: int, replicates: int, seed: int,
                  levels: int = 24, order: int = 8) -> tuple[float, float]:
    """Scrambled-Sobol estimate of the conditioning expectation (value, standard error).

    Amplitudes are drawn from their law by inverse transform; the outer
    ``n - 2`` phases uniformly over their support box (the first one fixed at
    zero when all phases are iid uniform); the last-but-one phase is
    integrated by the arc rule.
    """
    from scipy.stats import qmc
    from scipy.special import ndtri

    n = model.n
    amp = model.amplitude
    uniform = model.phase.kind is PhaseKind.IID_UNIFORM
    free_outer = list(range(1 if uniform else 0, n - 2))
    if amp.kind is AmplitudeKind.CONSTANT:
        adim = 0
    elif amp.kind is AmplitudeKind.COMMON_GAUSSIAN_SCALAR:
        adim = 1
    elif amp.kind in (AmplitudeKind.JOINT_GAUSSIAN, AmplitudeKind.IID_EXPONENTIAL):
        adim = n
    else:
        raise UnsupportedModel("quasi-Monte-Carlo needs an amplitude law with an inverse transform")
    dim = adim + len(free_outer)
    support = model.phase.support
    vol = math.prod(support[i][1] - support[i][0] for i in free_outer)
    if uniform:
        vol *= TWO_PI
    u, wu = _u_rule(levels, order)
    estimates = []
    for rep in range(replicates):
        if dim:
            pts = qmc.Sobol(dim, scramble=True, seed=stream(seed, rep)).random(samples)
            pts = np.clip(pts, 1e-16, 1 - 1e-16)
        else:
            pts = np.zeros((1, 0))
        m = pts.shape[0]
        if amp.kind is AmplitudeKind.CONSTANT:
            A = np.broadcast_to(np.asarray(amp.values), (m, n))
        elif amp.kind is AmplitudeKind.COMMON_GAUSSIAN_SCALAR:
            A = np.repeat(amp.sigma * ndtri(pts[:, :1]), n, axis=1)
        elif amp.kind is AmplitudeKind.JOINT_GAUSSIAN:
            A = np.asarray(amp.mean) + ndtri(pts[:, :n]) @ amp.cholesky.T
        else:
            A = -np.log1p(-pts[:, :n]) / amp.rate
        outer = np.zeros((m, n - 2))
        for j, i in enumerate(free_outer):
            lo, hi = support[i]
            outer[:, i] = lo + (hi - lo) * pts[:, adim + j]
        vals = np.empty(m)
        for k in range(m):
            vals[k] = _generic_inner(model, A[k], outer[k:k + 1], b, u, wu)[0]
        estimates.append(2.0 * b * vol * vals.mean())
    est = np.asarray(estimates)
    se = float(est.std(ddof=1) / math.sqrt(len(est))) if len(est) > 1 else math.nan
    return float(est.mean()), se


def eged_pdf(model: EnsembleModel, b: float, *, tol: float | None = None,
             qmc_samples: int = 4096, qmc_replicates: int = 8, seed: int = 0) -> float:
    """Envelope density at ``b`` for an ensemble with an absolutely continuous phase law.

    Dispatches on the model: two components by a 1-D adaptive integral over
    ``phi_1``; three by an adaptive integral over ``phi_1`` with the arc rule
    for ``phi_2``; four iid-uniform components by :func:`pdf_four_uniform`;
    random amplitudes by :func:`pdf_random_amplitude`; everything else by
    scrambled Sobol points.

    Raises
    ------
    DomainError
        ``b`` outside the support.
    UnsupportedModel
        Discrete phases (use :func:`eged_pdf_discrete`) or a single component.
    """
    b = float(b)
    if not math.isfinite(b):
        raise DomainError("b must be finite")
    if model.phase.kind is PhaseKind.DISCRETE_BINARY:
        raise UnsupportedModel("discrete phase laws are handled by eged_pdf_discrete")
    if model.n < 2:
        raise UnsupportedModel("a single component has a degenerate envelope law")
    amp = model.amplitude
    if not amp.is_constant:
        if b < 0:
            raise DomainError("b must be non-negative")
        return pdf_random_amplitude(model, b, seed=seed)
    bounds = model.support_bounds()
    if not bounds.m <= b <= bounds.M:
        raise DomainError(f"b={b} outside the support [{bounds.m}, {bounds.M}]")
    if b == 0.0:
        return 0.0
    uniform = model.phase.kind is PhaseKind.IID_UNIFORM
    if model.n == 2:
        return _eged_constant_two(model, b, tol or TOL_1D * 1e-3)
    if model.n == 3:
        return _eged_constant_three(model, b, tol or TOL_1D)
    if model.n == 4 and uniform and all(v != 0 for v in amp.values):
        return pdf_four_uniform([abs(v) for v in amp.values], b, epsrel=tol or TOL_2D)
    value, se = _qmc_estimate(model, b, samples=qmc_samples, replicates=qmc_replicates, seed=seed)
    log.info("quasi-Monte-Carlo density at b=%g: %g +- %g", b, value, se)
    return value


# ---------------------------------------------------------------------------
# Random amplitudes (independent of the phases)
# ---------------------------------------------------------------------------
def conditional_pdf_uniform(a: np.ndarray, b: float) -> np.ndarray:
    """Density of the envelope given amplitude rows ``a`` (shape ``(P, n)``), uniform phases, n = 2 or 3."""
    a = np.abs(np.atleast_2d(np.asarray(a, dtype=float)))
    n = a.shape[1]
    if n == 2:
        d = np.abs(a[:, 0] - a[:, 1])
        s = a[:, 0] + a[:, 1]
        inside = (b > d) & (b < s)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = 2.0 * b / (PI * np.sqrt((b - d) * (b + d) * (s - b) * (s + b)))
        return np.where(inside & np.isfinite(val), val, 0.0)
    if n == 3:
        return pdf_three_uniform_reduced(a, b)
    raise UnsupportedModel("vectorised conditional density only for n = 2, 3")


class DensityEstimate(NamedTuple):
    value: float
    stderr: float
    method: str


def random_amplitude_estimate(model: EnsembleModel, b: float, *, order: int | None = None,
                              qmc_samples: int = 2048, qmc_replicates: int = 8,
                              seed: int = 0) -> DensityEstimate:
    """Density and error report for amplitudes independent of iid uniform phases.

    ``COMMON_GAUSSIAN_SCALAR``: adaptive 1-D integral over the shared
    variable.  Gaussian and exponential laws with ``n <= 3``: nested panel
    rules cut at the singular loci of the conditional density (see
    :func:`_nested_amplitude_estimate`).  Custom densities with ``n <= 3``:
    tensor Gauss-Legendre rule of ``order`` points per axis on their bounds.  ``n >= 4`` or non-uniform phases: scrambled
    Sobol points with a replicate standard error.
    """
    amp = model.amplitude
    n = model.n
    b = float(b)
    if b < 0:
        raise DomainError("b must be non-negative")
    if amp.is_constant:
        return DensityEstimate(eged_pdf(model, b), 0.0, "constant")
    if b == 0.0:
        return DensityEstimate(0.0, 0.0, "boundary")
    uniform = model.phase.kind is PhaseKind.IID_UNIFORM
    if not uniform or n >= 4:
        if not uniform and model.phase.kind is PhaseKind.DISCRETE_BINARY:
            raise UnsupportedModel("discrete phase laws are handled by eged_pdf_discrete")
        v, se = _qmc_estimate(model, b, samples=qmc_samples, replicates=qmc_replicates, seed=seed)
        return DensityEstimate(v, se, "qmc")
    if amp.kind is AmplitudeKind.COMMON_GAUSSIAN_SCALAR:
        sig = amp.sigma
        pts = sorted({b / k for k in range(1, n + 1)})

        def f(g):
            rows = np.repeat(g[:, None], n, axis=1)
            return conditional_pdf_uniform(rows, b) * np.exp(-0.5 * (g / sig) ** 2)
        total = 0.0
        edges = [*pts, pts[-1] + 10.0 * sig]
        for left, right in zip(edges[:-1], edges[1:]):
            total += integrate(f, left, right, singular="both", epsabs=1e-15, epsrel=1e-10).value
        total += integrate(f, edges[-1], math.inf, epsabs=1e-15, epsrel=1e-10).value
        return DensityEstimate(2.0 * total / (sig * math.sqrt(TWO_PI)), 0.0, "adaptive-1d")
    if amp.kind in (AmplitudeKind.JOINT_GAUSSIAN, AmplitudeKind.IID_EXPONENTIAL):
        return _nested_amplitude_estimate(model, b)
    q = order or (48 if n == 2 else 24)
    x, w = gauss_legendre(q)
    axes = [lo + (hi - lo) * x for lo, hi in amp.bounds]
    ws = [(hi - lo) * w for lo, hi in amp.bounds]
    rows = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    weights = np.prod(np.stack(np.meshgrid(*ws, indexing="ij"), axis=-1).reshape(-1, n), axis=1)
    weights = weights * amp.pdf(rows)
    vals = conditional_pdf_uniform(rows, b)
    return DensityEstimate(float(weights @ vals), math.nan, f"gauss-{q}")


def _panel_rule(edges: np.ndarray, levels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on consecutive panels ``edges[:, k] .. edges[:, k+1]`` (one row per case).

    Each panel is mapped by ``x = mid - half * cos(pi t)`` and ``t`` is
    integrated with the doubly graded rule, which absorbs inverse-square-root
    and logarithmic endpoint behaviour alike.  Zero-width panels get zero weight.
    """
    t, wt = graded_rule(levels, order)
    lo, hi = edges[:, :-1, None], edges[:, 1:, None]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    x = mid - half * np.cos(PI * t)
    w = half * PI * np.sin(PI * t) * wt
    rows = edges.shape[0]
    return x.reshape(rows, -1), w.reshape(rows, -1)


_GAUSS_SPLITS = np.array([-4.5, -3.0, -1.5, 0.0, 1.5, 3.0, 4.5])
_EXP_SPLITS = np.array([0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0])
_NESTED_RULES = {2: ((8, 5), (8, 5)), 3: ((1, 4), (1, 4), (3, 4))}


def _amplitude_cuts(level: int, n: int, b: float, prev: np.ndarray) -> np.ndarray:
    """Values of amplitude ``level`` where the partially integrated density is not smooth.

    ``prev`` holds the absolute values of the amplitudes already fixed (one row
    per case).  The innermost level is cut where the conditional envelope
    density is singular (``|a_n| = |b +- a_1 +- ...|``); each outer level where
    two cuts of the level inside it collide.
    """
    P = prev.shape[0]
    inner = level == n - 1
    if inner:
        shifts = np.full((P, 1), b)
        for j in range(level):
            col = prev[:, j:j + 1]
            shifts = np.concatenate([shifts + col, shifts - col], axis=1)
        return np.concatenate([shifts, -shifts, np.zeros((P, 1))], axis=1)
    if level == 0:
        base = np.array([0.0, b, 0.5 * b, 2.0 * b] if n == 3 else [0.0, b])
        base = np.concatenate([base, -base[1:]])
        return np.broadcast_to(base, (P, base.size))
    a1 = prev[:, :1]
    vals = np.concatenate([np.zeros((P, 1)), a1, np.full((P, 1), b), b + a1, b - a1], axis=1)
    return np.concatenate([vals, -vals[:, 1:]], axis=1)


def _nested_amplitude_estimate(model: EnsembleModel, b: float, *,
                               rules: Sequence[tuple[int, int]] | None = None,
                               drop: float = 1e-16, chunk: int = 1 << 18) -> DensityEstimate:
    """Gaussian or exponential amplitudes, n = 2 or 3, iid uniform phases.

    Amplitudes are integrated one at a time against their conditional law
    (Gaussian via the Cholesky factor, or exponential).  Each variable's
    range is cut into panels at the points where the integrand is singular
    or kinked given the outer variables (see :func:`_amplitude_cuts`), plus
    a few standard deviations either side of a Gaussian conditional mean,
    and every panel gets the cosine-mapped graded rule of :func:`_panel_rule`.

    ``rules`` gives the ``(levels, order)`` of the panel rule per variable,
    outermost first.  Nodes whose probability weight is below ``drop`` are
    discarded; the innermost level is processed in blocks of about
    ``chunk`` nodes.
    """
    amp = model.amplitude
    n = model.n
    gaussian = amp.kind is AmplitudeKind.JOINT_GAUSSIAN
    L = amp.cholesky if gaussian else None
    mu = np.asarray(amp.mean, dtype=float) if gaussian else None
    rules = list(rules or _NESTED_RULES[n])

    def expand(level, rows, zs, weight):
        P = rows.shape[0]
        if gaussian:
            sd = float(L[level, level])
            cmean = mu[level] + zs @ L[level, :level]
            lo_r, hi_r = cmean - 9.0 * sd, cmean + 9.0 * sd
        else:
            lo_r, hi_r = np.zeros(P), np.full(P, 40.0 / amp.rate)
        cuts = _amplitude_cuts(level, n, b, np.abs(rows))
        # split the bulk of the weight too, so that wide panels see it resolved
        if gaussian:
            cuts = np.concatenate([cuts, cmean[:, None] + sd * _GAUSS_SPLITS], axis=1)
        else:
            cuts = np.concatenate([cuts, np.broadcast_to(_EXP_SPLITS / amp.rate, (P, _EXP_SPLITS.size))], axis=1)
        cuts = np.clip(cuts, lo_r[:, None], hi_r[:, None])
        edges = np.sort(np.concatenate([lo_r[:, None], cuts, hi_r[:, None]], axis=1), axis=1)
        x, wx = _panel_rule(edges, *rules[level])
        if gaussian:
            z = (x - cmean[:, None]) / sd
            dens = np.exp(-0.5 * z * z) / (sd * math.sqrt(TWO_PI))
        else:
            z = x
            dens = amp.rate * np.exp(-amp.rate * x)
        w = weight[:, None] * wx * dens
        keep = w > drop
        idx = np.nonzero(keep)[0]
        return (np.concatenate([rows[idx], x[keep][:, None]], axis=1),
                np.concatenate([zs[idx], z[keep][:, None]], axis=1), w[keep])

    rows, zs, weight = np.zeros((1, 0)), np.zeros((1, 0)), np.ones(1)
    for level in range(n - 1):
        rows, zs, weight = expand(level, rows, zs, weight)
    per_row = 2 * rules[-1][0] * rules[-1][1] * (3 * 2 ** (n - 1) + 2 + _GAUSS_SPLITS.size)
    step = max(1, chunk // per_row)
    total = 0.0
    for start in range(0, rows.shape[0], step):
        sl = slice(start, start + step)
        r, _, w = expand(n - 1, rows[sl], zs[sl], weight[sl])
        total += float(w @ conditional_pdf_uniform(r, b))
    return DensityEstimate(total, math.nan, "nested-panels")


def pdf_random_amplitude(model: EnsembleModel, b: float, *, seed: int = 0, **kw) -> float:
    """Envelope density ``int f_A(a) f_B(b | a) da``; see :func:`random_amplitude_estimate`."""
    est = random_amplitude_estimate(model, b, seed=seed, **kw)
    if est.method == "qmc" and est.stderr > 0.05 * max(abs(est.value), 1e-3):
        log.warning("quasi-Monte-Carlo standard error %.3g exceeds 5%% of %.3g", est.stderr, est.value)
    return est.value


# ---------------------------------------------------------------------------
# Binary phases
# ---------------------------------------------------------------------------
def eged_pdf_discrete(model: EnsembleModel, b: float, *, epsrel: float = 1e-11) -> float:
    """Envelope density for two components with phases 0 or pi (each w.p. 1/2).

    Enumerates the four phase atoms: the envelope is ``|a_1 + a_2|`` for the
    in-phase atoms and ``|a_1 - a_2|`` otherwise, so

    ``f(b) = (1/2)[int f(a, b-a) + int f(a, -b-a) + int f(a, a-b) + int f(a, a+b)]``

    over the whole line.  For amplitudes supported on ``a >= 0`` this reduces
    to the three-integral mixture form.
    """
    if model.phase.kind is not PhaseKind.DISCRETE_BINARY:
        raise UnsupportedModel("eged_pdf_discrete needs DISCRETE_BINARY phases")
    if model.n != 2:
        raise UnsupportedModel("binary-phase enumeration is implemented for n = 2")
    amp = model.amplitude
    if amp.kind in (AmplitudeKind.CONSTANT, AmplitudeKind.COMMON_GAUSSIAN_SCALAR):
        raise UnsupportedModel("the envelope has atoms for this amplitude law; no density")
    b = float(b)
    if b < 0:
        return 0.0

    def joint(x, y):
        return amp.pdf(np.stack([x, y], axis=-1))
    pts = sorted({0.0, b, -b, 0.5 * b, -0.5 * b})
    terms = (lambda a: joint(a, b - a), lambda a: joint(a, -b - a),
             lambda a: joint(a, a - b), lambda a: joint(a, a + b))
    total = 0.0
    for g in terms:
        total += integrate(g, -math.inf, math.inf, points=pts, epsabs=1e-14, epsrel=epsrel).value
    return 0.5 * total


# ---------------------------------------------------------------------------
# Tabulation
# ---------------------------------------------------------------------------
METHODS = ("EGED", "EDDHAPT", "CLOSED_FORM", "MC")


@dataclass
class EnvelopeDistribution:
    """Tabulated envelope law.

    ``flags`` holds one string per grid point: ``''``, ``'singular'`` (pdf is
    ``+inf`` there), ``'failed'`` (pdf evaluation raised; value NaN) or
    ``'truncated'`` (last point of an unbounded support).
    """

    grid: np.ndarray
    pdf: np.ndarray
    cdf: np.ndarray
    singular_points: tuple[float, ...] = ()
    method: str = "EGED"
    flags: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.pdf = np.asarray(self.pdf, dtype=float)
        self.cdf = np.asarray(self.cdf, dtype=float)
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}")
        if not (self.grid.shape == self.pdf.shape == self.cdf.shape) or self.grid.ndim != 1:
            raise DomainError("grid, pdf and cdf must be 1-D arrays of equal length")
        if np.any(np.diff(self.grid) <= 0):
            raise DomainError("grid must be strictly ascending")
        if not self.flags:
            self.flags = [""] * self.grid.size
        if len(self.flags) != self.grid.size:
            raise DomainError("one flag per grid point required")

    def __len__(self):
        return self.grid.size

    def pdf_at(self, b):
        """Linear interpolation of the finite pdf values."""
        ok = np.isfinite(self.pdf)
        return np.interp(b, self.grid[ok], self.pdf[ok], left=0.0, right=0.0)

    def cdf_at(self, b):
        return np.interp(b, self.grid, self.cdf, left=0.0, right=1.0)

    def to_csv(self, target=None) -> str:
        """RFC 4180 CSV with columns ``b, pdf, cdf, flags``; returns the text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["b", "pdf", "cdf", "flags"])
        for x, p, c, fl in zip(self.grid, self.pdf, self.cdf, self.flags):
            w.writerow([format_float(x), format_float(p), format_float(c), fl])
        text = buf.getvalue()
        if target is not None:
            with open(target, "w", newline="", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source, method: str = "EGED") -> "EnvelopeDistribution":
        if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
            with open(source, newline="", encoding="utf-8") as fh:
                text = fh.read()
        else:
            text = str(source)
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["b", "pdf", "cdf", "flags"]:
            raise DomainError("not an envelope-distribution CSV")
        body = rows[1:]
        grid = [float(r[0]) for r in body]
        pdf = [float(r[1]) for r in body]
        cdf = [float(r[2]) for r in body]
        flags = [r[3] for r in body]
        sing = tuple(g for g, f in zip(grid, flags) if f == "singular")
        return cls(np.array(grid), np.array(pdf), np.array(cdf), sing, method, flags)


def format_float(x: float) -> str:
    """17-significant-digit representation used in every CSV file."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


def clustered_grid(breaks: Sequence[float], size: int) -> np.ndarray:
    """About ``size`` points, cosine-clustered toward every break point.

    Points are shared out between consecutive segments in proportion to
    their length (at least four per segment); segment ends are included.
    """
    breaks = sorted(set(float(x) for x in breaks))
    if len(breaks) < 2:
        raise DomainError("need at least two break points")
    lengths = np.diff(breaks)
    segs = len(lengths)
    free = max(size - 1, 4 * segs)
    counts = np.maximum(4, np.floor(free * lengths / lengths.sum()).astype(int))
    # hand out or take back the remainder, largest segments first
    order = np.argsort(-lengths, kind="stable")
    k = 0
    while counts.sum() < free:
        counts[order[k % segs]] += 1
        k += 1
    while counts.sum() > free and np.any(counts > 4):
        j = order[k % segs]
        if counts[j] > 4:
            counts[j] -= 1
        k += 1
    pts = [breaks[0]]
    for (lo, hi), m in zip(zip(breaks[:-1], breaks[1:]), counts):
        t = 0.5 * (1.0 - np.cos(np.pi * np.arange(1, m + 1) / m))
        pts.extend((lo + (hi - lo) * t).tolist())
        pts[-1] = hi
    return np.unique(np.asarray(pts))


def _cell_integral(lo, hi, left_singular, right_singular, order=8):
    x, w = gauss_legendre(order)
    width = hi - lo
    if left_singular and right_singular:
        u = PI * x
        pts = 0.5 * (lo + hi) - 0.5 * width * np.cos(u)
        jac = 0.5 * width * np.sin(u) * PI * w
    elif left_singular:
        pts = lo + width * x * x
        jac = 2.0 * width * x * w
    elif right_singular:
        pts = hi - width * x * x
        jac = 2.0 * width * x * w
    else:
        pts = lo + width * x
        jac = width * w
    return pts, jac


class _Target(NamedTuple):
    pdf: Callable[[float], float]
    cdf: Callable[[float], float] | None
    lo: float
    hi: float
    singular: tuple[float, ...]
    breaks: tuple[float, ...]
    method: str
    truncated: bool
    smooth: bool = False


def _unbounded_upper(model: EnsembleModel) -> float:
    amp = model.amplitude
    n = model.n
    if amp.kind is AmplitudeKind.COMMON_GAUSSIAN_SCALAR:
        return n * 8.0 * amp.sigma
    if amp.kind is AmplitudeKind.JOINT_GAUSSIAN:
        spread = math.sqrt(float(np.sum(np.abs(np.asarray(amp.cov)))))
        return float(np.sum(np.abs(amp.mean)) + 8.0 * spread)
    if amp.kind is AmplitudeKind.IID_EXPONENTIAL:
        return (n + 6.0 * math.sqrt(n) + 25.0) / amp.rate
    return amp.magnitude_bound()


def _target_for(obj, tol) -> _Target:
    if isinstance(obj, cf.ClosedFormDensity):
        lo, hi = obj.support.m, obj.support.M
        truncated = math.isinf(hi)
        if obj.family is cf.Family.COMMON_GAUSSIAN:
            hi = 16.0 * obj.params[0]
        elif obj.family is cf.Family.EXP_MIXTURE:
            hi = 36.0 / obj.params[0]
        sing = tuple(s for s in obj.singularities if lo <= s <= hi)
        return _Target(lambda b: float(obj.pdf(b)), lambda b: float(obj.cdf(b)), lo, hi, sing,
                       (lo, *sing, hi), "CLOSED_FORM", truncated)
    model: EnsembleModel = obj
    amp = model.amplitude
    if model.phase.kind is PhaseKind.DISCRETE_BINARY:
        hi = _unbounded_upper(model)
        return _Target(lambda b: eged_pdf_discrete(model, b), None, 0.0, hi, (), (0.0, hi), "EGED", True)
    if not amp.is_constant:
        hi = _unbounded_upper(model)
        sing = (0.0,) if amp.kind is AmplitudeKind.COMMON_GAUSSIAN_SCALAR and model.n == 2 else ()
        return _Target(lambda b: pdf_random_amplitude(model, b), None, 0.0, hi, sing, (0.0, hi), "EGED", True,
                       smooth=True)
    bounds = model.support_bounds()
    crit = [c for c in critical_envelopes(amp.values) if bounds.m <= c <= bounds.M]
    if model.phase.kind is PhaseKind.IID_UNIFORM:
        sing = tuple(c for c in crit if math.isinf(_safe_pdf(model, c, tol)))
    else:
        sing = (bounds.M,) if model.n == 2 else tuple(crit)
    # beyond three components every pdf value is a 2-D cubature: interpolate between grid points
    return _Target(lambda b: _safe_pdf(model, b, tol), None, bounds.m, bounds.M, sing,
                   (bounds.m, *crit, bounds.M), "EGED", False, smooth=model.n >= 4)


def _safe_pdf(model: EnsembleModel, b: float, tol) -> float:
    """Model pdf with exact closed forms where they exist and ``inf`` at singular points."""
    amp = model.amplitude
    vals = [abs(v) for v in amp.values]
    uniform = model.phase.kind is PhaseKind.IID_UNIFORM
    if model.n == 2 and uniform:
        return float(cf.pdf_two_general(vals[0], vals[1], b))
    if model.n == 2 and model.phase.kind is PhaseKind.DEPENDENT_LINEAR and vals[0] == vals[1] \
            and all(v > 0 for v in amp.values):
        return float(cf.pdf_two_dependent(vals[0], b))
    if model.n == 3 and uniform and all(v > 0 for v in vals):
        return pdf_three_uniform(vals, b)
    bounds = model.support_bounds()
    if b == bounds.m or b == bounds.M:
        try:
            return eged_pdf(model, b, tol=tol)
        except QuadratureError:
            return math.inf
    try:
        return eged_pdf(model, b, tol=tol)
    except QuadratureError:
        if b in critical_envelopes(amp.values):
            return math.inf
        raise


def tabulate(obj, grid_size: int = 256, *, extra_points: Sequence[float] = (),
             threads: int | None = None, tol: float | None = None, cell_order: int = 8) -> EnvelopeDistribution:
    """Tabulate pdf and cdf of a closed-form family or an ensemble model.

    The grid covers the support (unbounded supports are truncated where the
    tail mass is negligible and the last point is flagged ``'truncated'``)
    with cosine clustering toward the ends and every critical envelope.
    The cdf is exact for closed forms; otherwise it is accumulated cell by
    cell with a Gauss-Legendre rule whose nodes are pulled toward singular
    cell ends by a square-root (one end) or cosine (both ends) map.

    Per-point failures are recorded as NaN with flag ``'failed'``.
    """
    if grid_size < 16:
        raise GridTooCoarse("grid_size must be at least 16")
    target = _target_for(obj, tol)
    grid = clustered_grid(target.breaks, grid_size)
    extra = [float(p) for p in extra_points if target.lo <= float(p) <= target.hi]
    grid = np.unique(np.concatenate([grid, extra])) if extra else grid
    workers = threads or int(os.environ.get("ENVDIST_THREADS", "0") or 0) or 1

    def eval_point(b):
        if b in target.singular:
            return math.inf, "singular"
        try:
            v = target.pdf(b)
        except (QuadratureError, BranchError) as exc:
            log.warning("pdf failed at b=%r: %s", b, exc)
            return math.nan, "failed"
        return v, ("singular" if math.isinf(v) else "")

    results = _map(eval_point, grid.tolist(), workers)
    pdf = np.array([r[0] for r in results])
    flags = [r[1] for r in results]
    if target.cdf is not None:
        cdf = np.array([target.cdf(b) for b in grid])
    elif target.smooth:
        cdf = _spline_cumulative(target, grid, pdf, cell_order)
    else:
        cdf = _cumulative(target, grid, workers, cell_order)
    if target.truncated:
        flags[-1] = "truncated" if not flags[-1] else flags[-1] + ";truncated"
    sing = tuple(s for s in target.singular if grid[0] <= s <= grid[-1])
    meta = {"digest": obj.digest() if isinstance(obj, EnsembleModel) else obj.family.value}
    return EnvelopeDistribution(grid, pdf, cdf, sing, target.method, flags, meta)


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _spline_cumulative(target: _Target, grid: np.ndarray, pdf: np.ndarray, order: int) -> np.ndarray:
    """Running integral of a monotone cubic (PCHIP) interpolant through the tabulated pdf.

    Used when every pdf value costs a multi-dimensional cubature (random
    amplitudes): the density is then a smooth average and interpolation
    error is far below the cubature error.  The three cells either side of
    a singular point are integrated with the endpoint-graded cell rule instead.
    """
    from scipy.interpolate import PchipInterpolator

    vals = np.where(np.isfinite(pdf), pdf, np.nan)
    ok = ~np.isnan(vals)
    if ok.sum() < 2:
        raise QuadratureError("too few finite pdf values to integrate")
    spline = PchipInterpolator(grid[ok], vals[ok], extrapolate=True)
    masses = np.diff(spline.antiderivative()(grid))
    sing = set(target.singular)
    near = set()
    for k, g in enumerate(grid):
        if g in sing:
            near.update(range(max(k - 3, 0), min(k + 3, grid.size - 1)))
    for k in sorted(near):
        lo, hi = grid[k], grid[k + 1]
        pts, jac = _cell_integral(lo, hi, lo in sing, hi in sing, order)
        masses[k] = math.fsum(np.array([target.pdf(float(x)) for x in pts]) * jac)
    return np.maximum.accumulate(np.concatenate([[0.0], np.cumsum(masses)]))


def _cumulative(target: _Target, grid: np.ndarray, workers: int, order: int) -> np.ndarray:
    lo_s = set(target.singular)
    cells = []
    for lo, hi in zip(grid[:-1], grid[1:]):
        cells.append(_cell_integral(lo, hi, lo in lo_s, hi in lo_s, order))
    nodes = np.concatenate([c[0] for c in cells])

    def safe(b):
        try:
            v = target.pdf(b)
        except (QuadratureError, BranchError):
            return math.nan
        return v if math.isfinite(v) else math.nan
    vals = np.array(_map(safe, nodes.tolist(), workers))
    if np.isnan(vals).any():
        bad = np.isnan(vals)
        log.warning("%d cdf nodes failed; interpolating", int(bad.sum()))
        vals[bad] = np.interp(nodes[bad], nodes[~bad], vals[~bad])
    masses = []
    k = 0
    for pts, jac in cells:
        m = len(pts)
        masses.append(math.fsum(vals[k:k + m] * jac))
        k += m
    cdf = np.concatenate([[0.0], np.cumsum(masses)])
    return cdf


def singular_points(model: EnsembleModel) -> list[float]:
    """Interior critical envelopes of a constant-amplitude ensemble."""
    if not model.amplitude.is_constant:
        return []
    bounds: SupportBounds = model.support_bounds()
    return [c for c in critical_envelopes(model.amplitude.values) if bounds.m < c < bounds.M]
