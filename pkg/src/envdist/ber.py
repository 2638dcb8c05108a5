"""BPSK bit-error probability over a fading envelope.

With coherent detection and envelope ``b`` the conditional error rate is
``Q(sqrt(2 b^2 Eb/N0))``.  Averaging over a tabulated envelope law is done by
parts,

    P_B = Q(c M) F(M) + c int_0^M F(b) phi(c b) db,      c = sqrt(2 Eb/N0),

which only needs the cdf -- bounded and continuous even where the pdf has
integrable singularities.  The SNR axis of a curve is the *average* SNR per
bit ``E[b^2] Eb/N0``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng as _rng
from .eged import EnvelopeDistribution, format_float
from .errors import DomainError, NotBracketed, UnnormalizedDistribution
from .models import EnsembleModel
from .quadrature import gauss_legendre
from .special import q_function

NORMALIZATION_TOL = 1e-2
NOISE_STREAM_BASE = 1 << 32
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _cdf_interpolant(dist: EnvelopeDistribution):
    from scipy.interpolate import PchipInterpolator

    ok = np.isfinite(dist.cdf)
    return PchipInterpolator(dist.grid[ok], np.clip(dist.cdf[ok], 0.0, 1.0), extrapolate=False)


def _check_normalized(dist: EnvelopeDistribution) -> None:
    last = float(dist.cdf[np.isfinite(dist.cdf)][-1])
    if abs(last - 1.0) > NORMALIZATION_TOL or abs(float(dist.cdf[0])) > NORMALIZATION_TOL:
        raise UnnormalizedDistribution(f"tabulated cdf runs from {dist.cdf[0]:.6g} to {last:.6g}")


def _cellwise(dist: EnvelopeDistribution, weight, order: int = 10) -> float:
    """``int F(b) weight(b) db`` over the grid, Gauss-Legendre per cell on the PCHIP cdf."""
    F = _cdf_interpolant(dist)
    x, w = gauss_legendre(order)
    lo, hi = dist.grid[:-1], dist.grid[1:]
    pts = lo[:, None] + (hi - lo)[:, None] * x[None, :]
    vals = np.nan_to_num(F(pts)) * weight(pts)
    return float(np.sum((hi - lo) * (vals @ w)))


def mean_square_envelope(obj) -> float:
    """``E[B^2]`` of a tabulated law (by parts on the cdf) or of a model.

    For a model with independent uniform phases the cross terms vanish and
    ``E[B^2] = sum E[A_i^2]``; other models are not supported here.
    """
    if isinstance(obj, EnsembleModel):
        from .models import PhaseKind
        if obj.phase.kind is not PhaseKind.IID_UNIFORM:
            raise DomainError("closed-form E[B^2] needs independent uniform phases")
        return float(obj.amplitude.second_moment())
    dist: EnvelopeDistribution = obj
    _check_normalized(dist)
    M = float(dist.grid[-1])
    m0 = float(dist.grid[0])
    # E[B^2] = M^2 F(M) - m0^2 F(m0) - int 2 b F(b) db
    F_end = float(dist.cdf[-1])
    F_start = float(dist.cdf[0])
    return M * M * F_end - m0 * m0 * F_start - _cellwise(dist, lambda b: 2.0 * b)


def ber_exact(dist: EnvelopeDistribution, ebn0_linear: float) -> float:
    """``int Q(sqrt(2 b^2 Eb/N0)) f(b) db`` for a tabulated envelope law.

    Parameters
    ----------
    dist : EnvelopeDistribution
        Envelope law; only its cdf column is used.
    ebn0_linear : float
        Per-unit-envelope ``Eb/N0`` (linear, not dB).

    Raises
    ------
    UnnormalizedDistribution
        The cdf does not run from 0 to 1 within 1e-2.

    Examples
    --------
    A point mass at ``b = 1`` gives the AWGN rate ``Q(sqrt(2 Eb/N0))``:

    >>> import numpy as np
    >>> d = point_mass(1.0)
    >>> round(ber_exact(d, 1.0), 6)
    0.078650
    """
    if not ebn0_linear >= 0:
        raise DomainError("Eb/N0 must be non-negative")
    _check_normalized(dist)
    c = math.sqrt(2.0 * ebn0_linear)
    M = float(dist.grid[-1])
    m0 = float(dist.grid[0])
    head = float(q_function(c * M)) * float(dist.cdf[-1]) - float(q_function(c * m0)) * float(dist.cdf[0])
    body = c * _cellwise(dist, lambda b: np.exp(-0.5 * (c * b) ** 2) / _SQRT_2PI)
    # neglected tail beyond the last grid point
    tail = float(q_function(c * M)) * max(0.0, 1.0 - float(dist.cdf[-1]))
    return min(0.5, max(0.0, head + body + tail))


def ber_tail_bound(dist: EnvelopeDistribution, ebn0_linear: float) -> float:
    """Upper bound on the part of the BER integral beyond the last grid point."""
    c = math.sqrt(2.0 * ebn0_linear)
    return float(q_function(c * float(dist.grid[-1]))) * max(0.0, 1.0 - float(dist.cdf[-1]))


def point_mass(value: float) -> EnvelopeDistribution:
    """Step cdf at ``value`` (a constant envelope)."""
    v = float(value)
    if not v > 0:
        raise DomainError("point mass must sit at a positive envelope")
    # the grid ends at the atom, so the by-parts integral reduces to Q(c v)
    eps = v * 1e-12
    grid = np.array([0.0, v - eps, v])
    cdf = np.array([0.0, 0.0, 1.0])
    pdf = np.array([0.0, 0.0, math.inf])
    return EnvelopeDistribution(grid, pdf, cdf, (v,), "CLOSED_FORM", ["", "", "singular"])


def rayleigh_distribution(mean_square: float = 1.0, size: int = 2048) -> EnvelopeDistribution:
    """Tabulated Rayleigh envelope with ``E[B^2] = mean_square`` (cdf ``1 - exp(-b^2 / E[B^2])``)."""
    hi = math.sqrt(mean_square * 40.0)
    grid = np.linspace(0.0, hi, size)
    cdf = -np.expm1(-grid ** 2 / mean_square)
    pdf = 2.0 * grid / mean_square * np.exp(-grid ** 2 / mean_square)
    return EnvelopeDistribution(grid, pdf, cdf, (), "CLOSED_FORM")


def ber_rayleigh_ga(mean_snr_linear: float) -> float:
    """Rayleigh-fading BPSK rate ``(1 - sqrt(g / (1 + g))) / 2`` for average SNR ``g``."""
    g = float(mean_snr_linear)
    if not g >= 0:
        raise DomainError("average SNR must be non-negative")
    if math.isinf(g):
        return 0.0
    return 0.5 * (1.0 - math.sqrt(g / (1.0 + g)))


def wilson_interval(errors: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise DomainError("need at least one trial")
    p = errors / trials
    den = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class SimulatedBer:
    snr_db: np.ndarray
    ber: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    bits: int
    mean_square: float


def ber_simulate(model: EnsembleModel, ebn0_db_grid: Sequence[float], bits_per_point: int,
                 seed: int) -> SimulatedBer:
    """Bit-by-bit BPSK simulation over the fading envelope of ``model``.

    Each bit gets an envelope draw (shared across SNR points, from the
    chunked streams of ``seed``), a random antipodal symbol and Gaussian noise
    of variance ``E[b^2] / (2 SNR)``, where ``E[b^2]`` is the sample mean
    square of the draws and SNR the average per-bit SNR of the grid point.
    Symbols and noise for grid point ``k`` come from stream
    ``2^32 + k``.  Errors are counted after a hard decision.
    """
    from .mc import simulate_envelope

    if bits_per_point < 10_000:
        raise DomainError("bits_per_point must be at least 10^4")
    snr_db = np.asarray(ebn0_db_grid, dtype=float)
    env = simulate_envelope(model, bits_per_point, seed).values
    ms = float(np.mean(env * env))
    ber, lo, hi = [], [], []
    for k, db in enumerate(snr_db):
        gen = _rng.stream(seed, NOISE_STREAM_BASE + k)
        symbols = np.where(gen.random(bits_per_point) < 0.5, -1.0, 1.0)
        sigma = math.sqrt(ms / (2.0 * 10.0 ** (db / 10.0)))
        received = env * symbols + sigma * gen.standard_normal(bits_per_point)
        errors = int(np.count_nonzero(np.where(received >= 0, 1.0, -1.0) != symbols))
        ber.append(errors / bits_per_point)
        a, b = wilson_interval(errors, bits_per_point)
        lo.append(a)
        hi.append(b)
    return SimulatedBer(snr_db, np.array(ber), np.array(lo), np.array(hi), bits_per_point, ms)


@dataclass
class BerCurve:
    """BER against average SNR per bit (dB) for one envelope law."""

    snr_db: np.ndarray
    ber_exact: np.ndarray
    ber_ga: np.ndarray
    n_components: int
    phase_model: str
    ber_sim: np.ndarray | None = None
    sim_ci_low: np.ndarray | None = None
    sim_ci_high: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.snr_db = np.asarray(self.snr_db, dtype=float)
        self.ber_exact = np.asarray(self.ber_exact, dtype=float)
        self.ber_ga = np.asarray(self.ber_ga, dtype=float)
        for col in (self.ber_exact, self.ber_ga):
            if col.shape != self.snr_db.shape:
                raise DomainError("BER columns must match the SNR grid")
            if np.any((col < 0) | (col > 0.5)):
                raise DomainError("BER values must lie in [0, 0.5]")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["snr_db", "ber_exact", "ber_ga", "ber_sim", "sim_ci_low", "sim_ci_high", "n", "phase_model"])
        for i, s in enumerate(self.snr_db):
            sim = [format_float(c[i]) if c is not None else "" for c in (self.ber_sim, self.sim_ci_low,
                                                                           self.sim_ci_high)]
            w.writerow([format_float(s), format_float(self.ber_exact[i]), format_float(self.ber_ga[i]), *sim,
                        self.n_components, self.phase_model])
        return buf.getvalue()


def ber_curve(dist: EnvelopeDistribution, snr_db: Sequence[float], *, n_components: int,
              phase_model: str = "IID_UNIFORM", simulated: SimulatedBer | None = None) -> BerCurve:
    """Exact and Rayleigh-GA columns on an average-SNR grid (optionally with a simulation)."""
    snr_db = np.asarray(snr_db, dtype=float)
    ms = mean_square_envelope(dist)
    gam = 10.0 ** (snr_db / 10.0)
    exact = np.array([ber_exact(dist, g / ms) for g in gam])
    ga = np.array([ber_rayleigh_ga(g) for g in gam])
    tails = [ber_tail_bound(dist, g / ms) for g in gam]
    curve = BerCurve(snr_db, exact, ga, n_components, phase_model,
                     meta={"mean_square": ms, "max_tail_bound": max(tails)})
    if simulated is not None:
        if not np.allclose(simulated.snr_db, snr_db):
            raise DomainError("simulation grid differs from the curve grid")
        curve.ber_sim, curve.sim_ci_low, curve.sim_ci_high = simulated.ber, simulated.ci_low, simulated.ci_high
    return curve


def _crossing_db(snr_db: np.ndarray, ber: np.ndarray, target: float) -> float:
    logb = np.log10(np.maximum(ber, 1e-300))
    lt = math.log10(target)
    for i in range(snr_db.size - 1):
        y0, y1 = logb[i], logb[i + 1]
        if (y0 - lt) * (y1 - lt) <= 0 and y0 != y1:
            return float(snr_db[i] + (lt - y0) * (snr_db[i + 1] - snr_db[i]) / (y1 - y0))
        if y0 == lt:
            return float(snr_db[i])
    raise NotBracketed(f"BER column does not bracket {target:g}")


def ga_gap_db(curve: BerCurve, target_ber: float) -> float:
    """SNR the Gaussian approximation needs minus the SNR the exact curve needs at ``target_ber``.

    Both columns are interpolated linearly in ``(dB, log10 BER)``.  Positive
    means the Rayleigh approximation is pessimistic.

    Raises
    ------
    NotBracketed
        Either column does not straddle ``target_ber``.
    """
    if not 0 < target_ber < 0.5:
        raise DomainError("target BER must lie in (0, 0.5)")
    return _crossing_db(curve.snr_db, curve.ber_ga, target_ber) - _crossing_db(curve.snr_db, curve.ber_exact,
                                                                               target_ber)
