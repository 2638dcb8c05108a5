"""Envelope cdf from the half-angle-tangent (EDDHAPT) representation.

Write ``T_i = tan(phi_i / 2)``.  For fixed amplitudes and first ``n - 1``
tangents, ``(1 + T_n^2)(B_n^2 - b^2)`` is a quadratic in ``T_n``::

    Q(T_n) = a T_n^2 + 4 a_n S T_n + (I + 2 a_n C)

with ``S = sum 2 a_i t_i / (1 + t_i^2)``, ``C = sum a_i (1 - t_i^2)/(1 + t_i^2)``,
``I = sum a_i^2 + k - b^2`` (``k`` the cross terms among the first ``n - 1``
components), leading coefficient ``a = I - 2 a_n C`` and discriminant
``Delta = 4 a_n^2 S^2 - a (I + 2 a_n C)``.  The event ``B_n <= b`` is
``Q <= 0``, which gives

    P(B_n <= b) = E[1{a < 0}] + E[1{Delta > 0} int_{abar}^{bbar} f dt_n]

where the inner integral is *signed*: when ``a < 0`` the roots satisfy
``abar > bbar`` and the term subtracts the mass between them.  Here ``a``
is the quadratic's leading coefficient, not an amplitude.

Numerically every tangent is replaced by its angle ``phi = 2 arctan t`` (the
scaled variable ``u = phi / pi`` of the half-angle map lives in ``(-1, 1)``),
so unbounded tangent ranges never need truncating and the uniform-phase
density is constant.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .eged import EnvelopeDistribution, clustered_grid
from .errors import DomainError, GridTooCoarse, QuadratureError, UnsupportedModel
from .models import AmplitudeKind, EnsembleModel, PhaseKind
from .quadrature import gauss_legendre, integrate
from .rng import stream
from .sinusoid import critical_envelopes

log = logging.getLogger(__name__)

PI = math.pi
GUARD = 1e-14
# absolute floor for the phase cubature: the signed inner mass cancels against
# the {a < 0} term, so per-interval roundoff is ~50 eps and 1e-13 is unreachable
CDF_EPSABS = 1e-12


@dataclass(frozen=True)
class QuadraticRegion:
    """Coefficients and roots of the half-angle quadratic for one ``(a, t_bar, b)``.

    ``roots`` is ``(abar, bbar) = ((-2 a_n S - sqrt(Delta)) / a, (-2 a_n S + sqrt(Delta)) / a)``
    when ``Delta > 0`` and ``a != 0`` (outside a relative guard band of
    1e-14), else ``None``.  With ``a > 0`` the roots are ascending; with
    ``a < 0`` they are descending.
    """

    delta_q: float
    a_coef: float
    s_bar: float
    c_bar: float
    i_n: float
    k_bar: float
    a_n: float
    roots: tuple[float, float] | None = None

    @property
    def coefficients(self) -> tuple[float, float, float]:
        """``(a, 4 a_n S, I + 2 a_n C)``: coefficients of ``Q`` in descending powers."""
        return self.a_coef, 4.0 * self.a_n * self.s_bar, self.i_n + 2.0 * self.a_n * self.c_bar

    def q(self, t):
        """Evaluate the quadratic at ``t``."""
        c2, c1, c0 = self.coefficients
        t = np.asarray(t, dtype=float)
        return (c2 * t + c1) * t + c0

    def contains(self, t) -> np.ndarray:
        """Whether ``Q(t) <= 0``, decided from the sign pattern of ``(Delta, a)`` and the roots.

        The three pieces are ``{Delta > 0, a > 0, t in [abar, bbar]}``,
        ``{Delta > 0, a < 0, t not in (bbar, abar)}`` and ``{Delta <= 0, a < 0}``.
        """
        t = np.asarray(t, dtype=float)
        if self.roots is None:
            return np.full(t.shape, self.a_coef < 0)
        lo, hi = self.roots
        if self.a_coef > 0:
            return (t >= lo) & (t <= hi)
        return (t <= hi) | (t >= lo)


def _scale(a_vec: np.ndarray, b: float) -> float:
    return float(np.sum(a_vec * a_vec) + b * b) or 1.0


def _stable_roots(a: float, half: float, c: float, delta: float) -> tuple[float, float]:
    """Roots of ``a t^2 + 2 half t + c`` as ``((-half - r) / a, (-half + r) / a)``, r = sqrt(delta).

    The root that would suffer cancellation is recovered from the product
    ``c / a``.
    """
    r = math.sqrt(delta)
    if half >= 0:
        q = -(half + r)
        first = q / a
        second = c / q if q != 0 else (-half + r) / a
        return first, second
    q = -half + r
    second = q / a
    first = c / q
    return first, second


def quadratic_region(a_vec: Sequence[float], t_bar: Sequence[float], b: float) -> QuadraticRegion:
    """All half-angle quadratic quantities for amplitudes ``a_vec`` and tangents ``t_bar``.

    Parameters
    ----------
    a_vec : sequence of float
        Amplitudes ``a_1 .. a_n`` (signed).
    t_bar : sequence of float
        Tangents ``t_1 .. t_{n-1}`` of the half phases.
    b : float
        Envelope level.

    Examples
    --------
    >>> r = quadratic_region([1.0, 1.0], [1.0], 1.0)
    >>> r.a_coef, r.delta_q
    (1.0, 3.0)
    """
    a_vec = np.asarray(a_vec, dtype=float)
    t = np.asarray(t_bar, dtype=float)
    n = a_vec.size
    if t.size != n - 1:
        raise DomainError(f"need {n - 1} tangents for {n} amplitudes")
    if not (np.all(np.isfinite(a_vec)) and np.all(np.isfinite(t)) and math.isfinite(b)):
        raise DomainError("quadratic_region needs finite inputs")
    head = a_vec[:-1]
    an = float(a_vec[-1])
    den = 1.0 + t * t
    s_bar = float(np.sum(2.0 * head * t / den))
    c_bar = float(np.sum(head * (1.0 - t * t) / den))
    k_bar = 0.0
    for j in range(n - 1):
        for k in range(j):
            num = (1.0 + t[j] * t[k]) ** 2 - (t[j] - t[k]) ** 2
            k_bar += 2.0 * head[j] * head[k] * num / (den[j] * den[k])
    i_n = float(np.sum(a_vec * a_vec)) + k_bar - b * b
    a_coef = i_n - 2.0 * an * c_bar
    c0 = i_n + 2.0 * an * c_bar
    half = 2.0 * an * s_bar
    delta = half * half - a_coef * c0
    scale = _scale(a_vec, b)
    roots = None
    if delta > GUARD * scale * scale and abs(a_coef) > GUARD * scale:
        roots = _stable_roots(a_coef, half, c0, delta)
    return QuadraticRegion(delta, a_coef, s_bar, c_bar, i_n, k_bar, an, roots)


# ---------------------------------------------------------------------------
# vectorised pieces in angle form
# ---------------------------------------------------------------------------
def _region_angles(a_vec: np.ndarray, phi_bar: np.ndarray, b: float):
    """Masks ``a < 0`` and ``Delta > 0`` (outside the guard band) and root angles for rows of ``phi_bar``.

    With ``t_i = tan(phi_i/2)``: ``2 t/(1+t^2) = sin phi`` and
    ``(1-t^2)/(1+t^2) = cos phi``, so ``S`` and ``C`` are the imaginary and real
    parts of ``sum a_i e^{i phi_i}`` and ``I = |that|^2 + a_n^2 - b^2``.
    Root angles are ``2 arctan`` of the roots, so a root at infinity becomes
    the angle ``+-pi``.  ``a_vec`` is one amplitude vector or one per row.
    """
    a_vec = np.asarray(a_vec, dtype=float)
    rows = np.broadcast_to(a_vec, (phi_bar.shape[0], a_vec.shape[-1]))
    an = rows[:, -1]
    z = np.sum(rows[:, :-1] * np.exp(1j * phi_bar), axis=1)
    s_bar, c_bar = z.imag, z.real
    i_n = np.abs(z) ** 2 + an * an - b * b
    a = i_n - 2.0 * an * c_bar
    c0 = i_n + 2.0 * an * c_bar
    half = 2.0 * an * s_bar
    delta = half * half - a * c0
    scale = np.sum(rows * rows, axis=1) + b * b
    ok = (delta > GUARD * scale * scale) & (np.abs(a) > GUARD * scale)
    r = np.sqrt(np.where(ok, delta, 0.0))
    safe_a = np.where(ok, a, 1.0)
    # stable roots: the cancelling one comes from the product c0 / a
    q = np.where(half >= 0, -(half + r), -half + r)
    q = np.where(q == 0, 1.0, q)
    root1 = np.where(half >= 0, q / safe_a, c0 / q)
    root2 = np.where(half >= 0, c0 / q, q / safe_a)
    negative = a < -GUARD * scale
    return negative, ok, 2.0 * np.arctan(root1), 2.0 * np.arctan(root2)


def _phase_rows(model: EnsembleModel, phi_bar: np.ndarray, last: np.ndarray) -> np.ndarray:
    rows = np.concatenate([np.broadcast_to(phi_bar[:, None, :], last.shape + (phi_bar.shape[1],)),
                           last[..., None]], axis=-1)
    return model.phase.pdf(rows)


def _signed_mass(model: EnsembleModel, phi_bar: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                 order: int = 24) -> np.ndarray:
    """``int_lo^hi f(phi_bar, phi_n) dphi_n`` (signed), clipped to the support of ``phi_n``."""
    s_lo, s_hi = model.phase.support[-1]
    sign = np.where(hi >= lo, 1.0, -1.0)
    left = np.clip(np.minimum(lo, hi), s_lo, s_hi)
    right = np.clip(np.maximum(lo, hi), s_lo, s_hi)
    if model.phase.kind is PhaseKind.IID_UNIFORM:
        dens = (2.0 * PI) ** (-model.n)
        return sign * (right - left) * dens
    x, w = gauss_legendre(order)
    pts = left[:, None] + (right - left)[:, None] * x[None, :]
    vals = _phase_rows(model, phi_bar, pts)
    return sign * (right - left) * (vals @ w)


def _marginal(model: EnsembleModel, phi_bar: np.ndarray, order: int = 24) -> np.ndarray:
    s_lo, s_hi = model.phase.support[-1]
    if model.phase.kind is PhaseKind.IID_UNIFORM:
        return np.full(phi_bar.shape[0], (2.0 * PI) ** (1 - model.n))
    lo = np.full(phi_bar.shape[0], s_lo)
    hi = np.full(phi_bar.shape[0], s_hi)
    return _signed_mass(model, phi_bar, lo, hi, order)


def _integrand(model: EnsembleModel, a_vec: np.ndarray, phi_bar: np.ndarray, b: float) -> np.ndarray:
    """``1{a<0} f(phi_bar) + 1{Delta>0} int_{abar}^{bbar} f dphi_n`` on rows of ``phi_bar``."""
    negative, ok, th1, th2 = _region_angles(a_vec, phi_bar, b)
    out = np.where(negative, _marginal(model, phi_bar), 0.0)
    if np.any(ok):
        out = out + np.where(ok, _signed_mass(model, phi_bar, th1, th2), 0.0)
    return out


def _cos_solutions(c: float, centre: float = 0.0) -> list[float]:
    """Angles ``centre +- arccos(c)`` folded into ``(-pi, pi]`` (empty when ``|c| > 1``)."""
    if not -1.0 <= c <= 1.0:
        return []
    g = math.acos(c)
    out = []
    for x in (centre + g, centre - g):
        out.append(PI - math.fmod(PI - x + 4.0 * PI, 2.0 * PI))
    return out


def _breaks_last(a_vec: np.ndarray, fixed: np.ndarray, b: float) -> list[float]:
    """Angles of the last outer phase where ``a = 0`` or ``Delta = 0`` (given earlier phases ``fixed``)."""
    an = a_vec[-1]
    ak = a_vec[-2]
    w = complex(np.exp(1j * fixed) @ a_vec[:-2].astype(complex)) if fixed.size else 0j
    pts = []
    # a = |w + ak e^{i phi} - an|^2 - b^2 = 0
    v = w - an
    if abs(v) > 0 and ak != 0:
        pts += _cos_solutions((b * b - ak * ak - abs(v) ** 2) / (2.0 * ak * abs(v)), math.atan2(-v.imag, -v.real))
    # Delta = 0: |w + ak e^{i phi}| = |an| +- b
    if abs(w) > 0 and ak != 0:
        for r in (abs(an) + b, abs(an) - b):
            pts += _cos_solutions((r * r - ak * ak - abs(w) ** 2) / (2.0 * ak * abs(w)), math.atan2(w.imag, w.real))
    return pts


def _constant_cdf(model: EnsembleModel, a_vec: np.ndarray, b: float, epsrel: float) -> float:
    n = model.n
    support = model.phase.support
    if n == 2:
        lo, hi = support[0]
        pts = sorted(p for p in _breaks_last(a_vec, np.zeros(0), b) if lo < p < hi)

        def g(phi):
            return _integrand(model, a_vec, phi[:, None], b)
        res = integrate(g, lo, hi, points=pts, epsabs=CDF_EPSABS, epsrel=epsrel)
        return res.value
    if n == 3:
        (l1, h1), (l2, h2) = support[0], support[1]

        def inner(phi1: float) -> float:
            pts = sorted(p for p in _breaks_last(a_vec, np.array([phi1]), b) if l2 < p < h2)

            def g(phi2):
                rows = np.column_stack([np.full(phi2.shape, phi1), phi2])
                return _integrand(model, a_vec, rows, b)
            return integrate(g, l2, h2, points=pts, epsabs=CDF_EPSABS, epsrel=epsrel).value

        def outer(phi1):
            return np.array([inner(float(p)) for p in phi1])
        return integrate(outer, l1, h1, epsabs=1e-11, epsrel=epsrel * 10).value
    raise UnsupportedModel("full cubature is implemented for n = 2, 3; use method='qmc'")


def _qmc_cdf(model: EnsembleModel, b: float, samples: int, replicates: int, seed: int) -> tuple[float, float]:
    """Scrambled-Sobol average of the inner term over amplitudes and the first n-1 phases."""
    from scipy.special import ndtri
    from scipy.stats import qmc

    n = model.n
    amp = model.amplitude
    adim = {AmplitudeKind.CONSTANT: 0, AmplitudeKind.COMMON_GAUSSIAN_SCALAR: 1,
            AmplitudeKind.JOINT_GAUSSIAN: n, AmplitudeKind.IID_EXPONENTIAL: n}.get(amp.kind)
    if adim is None:
        raise UnsupportedModel("quasi-Monte-Carlo needs an amplitude law with an inverse transform")
    support = model.phase.support[:-1]
    vol = math.prod(hi - lo for lo, hi in support)
    dim = adim + n - 1
    est = []
    for rep in range(replicates):
        pts = qmc.Sobol(dim, scramble=True, seed=stream(seed, rep)).random(samples)
        pts = np.clip(pts, 1e-16, 1 - 1e-16)
        if amp.kind is AmplitudeKind.CONSTANT:
            A = np.broadcast_to(np.asarray(amp.values, dtype=float), (samples, n))
        elif amp.kind is AmplitudeKind.COMMON_GAUSSIAN_SCALAR:
            A = np.repeat(amp.sigma * ndtri(pts[:, :1]), n, axis=1)
        elif amp.kind is AmplitudeKind.JOINT_GAUSSIAN:
            A = np.asarray(amp.mean) + ndtri(pts[:, :n]) @ amp.cholesky.T
        else:
            A = -np.log1p(-pts[:, :n]) / amp.rate
        phi = np.column_stack([lo + (hi - lo) * pts[:, adim + i] for i, (lo, hi) in enumerate(support)])
        vals = _integrand(model, A, phi, b)
        est.append(vol * float(vals.mean()))
    arr = np.asarray(est)
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else math.nan
    return float(arr.mean()), se


def eddhapt_cdf(model: EnsembleModel, b: float, *, epsrel: float = 1e-9, method: str = "auto",
                qmc_samples: int = 8192, qmc_replicates: int = 8, seed: int = 0) -> float:
    """``P(B_n <= b)`` from the half-angle quadratic decomposition.

    Parameters
    ----------
    model : EnsembleModel
        Independent amplitude and (absolutely continuous) phase laws.
    b : float
        Envelope level.
    method : {'auto', 'cubature', 'qmc'}
        ``'cubature'``: adaptive Gauss-Kronrod over the first ``n - 1``
        phases (``n <= 3``, constant amplitudes), with cells split where the
        leading coefficient or the discriminant changes sign.  ``'qmc'``:
        scrambled Sobol points over amplitudes and phases.  ``'auto'`` picks
        cubature when it applies.

    Raises
    ------
    UnsupportedModel
        Discrete phases, a single component, or cubature requested where it
        does not apply.
    """
    if model.phase.kind is PhaseKind.DISCRETE_BINARY:
        raise UnsupportedModel("the half-angle formula needs a phase density")
    if model.n < 2:
        raise UnsupportedModel("need at least two components")
    b = float(b)
    if not math.isfinite(b):
        raise DomainError("b must be finite")
    if b <= 0:
        return 0.0
    amp = model.amplitude
    if amp.is_constant:
        a_vec = np.asarray(amp.values, dtype=float)
        if b >= float(np.sum(np.abs(a_vec))):
            return 1.0
    cubature = amp.is_constant and model.n <= 3
    if method == "cubature" and not cubature:
        raise UnsupportedModel("cubature needs constant amplitudes and n <= 3")
    if method in ("auto", "cubature") and cubature:
        val = _constant_cdf(model, np.asarray(amp.values, dtype=float), b, epsrel)
    elif method in ("auto", "qmc"):
        val, se = _qmc_cdf(model, b, qmc_samples, qmc_replicates, seed)
        log.info("quasi-Monte-Carlo cdf at b=%g: %g +- %g", b, val, se)
    else:
        raise DomainError(f"unknown method {method!r}")
    if not -1e-6 <= val <= 1.0 + 1e-6:
        raise QuadratureError("cdf estimate outside [0, 1]", value=val)
    return min(max(val, 0.0), 1.0)


def cdf_to_pdf(dist: EnvelopeDistribution) -> EnvelopeDistribution:
    """Differentiate a tabulated cdf: second-order central differences, one-sided at the ends.

    Raises
    ------
    GridTooCoarse
        Fewer than 64 grid points.
    """
    if dist.grid.size < 64:
        raise GridTooCoarse("need at least 64 grid points to differentiate a cdf")
    pdf = np.gradient(dist.cdf, dist.grid, edge_order=1)
    return EnvelopeDistribution(dist.grid.copy(), pdf, dist.cdf.copy(), dist.singular_points,
                                "EDDHAPT", list(dist.flags), dict(dist.meta))


def tabulate_cdf(model: EnsembleModel, grid_size: int = 128, **kw) -> EnvelopeDistribution:
    """cdf on a clustered grid over the support, pdf by :func:`cdf_to_pdf`."""
    if grid_size < 64:
        raise GridTooCoarse("grid_size must be at least 64 to recover a pdf")
    bounds = model.support_bounds()
    hi = bounds.M
    if not math.isfinite(hi):
        raise UnsupportedModel("tabulate_cdf needs a bounded support")
    breaks = [bounds.m, hi]
    if model.amplitude.is_constant:
        breaks += [c for c in critical_envelopes(model.amplitude.values) if bounds.m < c < hi]
    grid = clustered_grid(breaks, grid_size)
    cdf = np.array([eddhapt_cdf(model, g, **kw) for g in grid])
    dist = EnvelopeDistribution(grid, np.zeros_like(grid), cdf, method="EDDHAPT",
                                meta={"digest": model.digest()})
    return cdf_to_pdf(dist)
