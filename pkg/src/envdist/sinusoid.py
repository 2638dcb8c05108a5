"""Resultant-amplitude algebra for sums of equal-frequency sinusoids.

A sum ``sum_i A_i cos(w t + phi_i)`` collapses to a single sinusoid
``B cos(w t + theta)``.  This module computes ``(B, theta)`` directly, via the
pairwise-cosine form of ``B**2``, and recursively one component at a time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, NumericalError, UnsupportedModel

# relative threshold below which the resultant phase is reported as 0
DEGENERACY_THRESHOLD = 1e-14


@dataclass(frozen=True)
class SinusoidVector:
    """Amplitudes (volts, any sign) and phases (radians in [-pi, pi])."""

    amplitudes: tuple[float, ...]
    phases: tuple[float, ...]

    def __post_init__(self):
        a = tuple(float(x) for x in self.amplitudes)
        p = tuple(float(x) for x in self.phases)
        if len(a) == 0:
            raise DomainError("a sinusoid vector needs at least one component")
        if len(a) != len(p):
            raise DomainError(f"{len(a)} amplitudes but {len(p)} phases")
        for x in a + p:
            if not math.isfinite(x):
                raise DomainError("amplitudes and phases must be finite")
        for x in p:
            if not -math.pi <= x <= math.pi:
                raise DomainError(f"phase {x} outside [-pi, pi]")
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "phases", p)

    @property
    def n(self) -> int:
        return len(self.amplitudes)

    def evaluate(self, omega: float, t: float) -> float:
        """Value of the sum at time ``t`` for angular frequency ``omega``."""
        return math.fsum(a * math.cos(omega * t + p)
                         for a, p in zip(self.amplitudes, self.phases))


@dataclass(frozen=True)
class Resultant:
    envelope: float
    phase: float

    def evaluate(self, omega: float, t: float) -> float:
        return self.envelope * math.cos(omega * t + self.phase)


@dataclass(frozen=True)
class SupportBounds:
    """Smallest and largest attainable envelope."""

    m: float
    M: float

    def __post_init__(self):
        if not 0.0 <= self.m <= self.M:
            raise DomainError(f"invalid support [{self.m}, {self.M}]")

    def contains(self, b: float, slack: float = 0.0) -> bool:
        return self.m - slack <= b <= self.M + slack


def _as_vector(s) -> SinusoidVector:
    if isinstance(s, SinusoidVector):
        return s
    amplitudes, phases = s
    return SinusoidVector(tuple(amplitudes), tuple(phases))


def resultant(s: SinusoidVector | tuple[Sequence[float], Sequence[float]]) -> Resultant:
    """Envelope and phase of the single sinusoid equal to the sum.

    The envelope comes from :func:`envelope_squared`; the phase from the
    two-argument arctangent of the in-phase and quadrature sums, so the
    envelope is always non-negative.  When the envelope is below
    ``1e-14 * sum(|A_i|)`` the phase is undefined and reported as 0.
    """
    s = _as_vector(s)
    x = math.fsum(a * math.cos(p) for a, p in zip(s.amplitudes, s.phases))
    y = math.fsum(a * math.sin(p) for a, p in zip(s.amplitudes, s.phases))
    scale = math.fsum(abs(a) for a in s.amplitudes)
    envelope = math.sqrt(envelope_squared(s))
    if envelope < DEGENERACY_THRESHOLD * scale or scale == 0.0:
        return Resultant(envelope, 0.0)
    return Resultant(envelope, math.atan2(y, x))


def envelope_squared(s: SinusoidVector | tuple[Sequence[float], Sequence[float]]) -> float:
    """``|A|^2 + 2 sum_{j>k} A_j A_k cos(phi_j - phi_k)``, clamped at zero.

    Terms are accumulated in a fixed index order with exactly rounded
    summation so repeated calls are bit-identical.
    """
    s = _as_vector(s)
    a, p = s.amplitudes, s.phases
    terms = [x * x for x in a]
    for j in range(1, len(a)):
        for k in range(j):
            terms.append(2.0 * a[j] * a[k] * math.cos(p[j] - p[k]))
    return max(math.fsum(terms), 0.0)


def est_step(b_prev: float, theta_prev: float, a_n: float, phi_n: float) -> float:
    """Squared envelope after adding one component to a known resultant.

    ``B_n^2 = B_{n-1}^2 + a_n^2 + 2 a_n B_{n-1} cos(phi_n - theta_{n-1})``.
    Round-off negatives down to -1e-9 are clamped to zero; anything lower
    means the inputs were inconsistent.
    """
    if b_prev < 0:
        raise DomainError("previous envelope must be non-negative")
    value = math.fsum((b_prev * b_prev, a_n * a_n,
                       2.0 * a_n * b_prev * math.cos(phi_n - theta_prev)))
    if value < -1e-9:
        raise NumericalError(f"squared envelope {value} is negative")
    return max(value, 0.0)


def envelope_bounds(amplitude_magnitudes: Sequence[float],
                    full_phase_range: Sequence[bool] | None = None) -> SupportBounds:
    """Support ``[m_n, M_n]`` of the envelope by the triangle-inequality recursion.

    ``m_1 = M_1 = |A_1|``; each further component with a phase free over the
    whole circle gives ``M_n = M_{n-1} + |A_n|`` and ``m_n`` equal to the
    distance from ``|A_n|`` to ``[m_{n-1}, M_{n-1}]``.
    """
    mags = [float(x) for x in amplitude_magnitudes]
    if not mags:
        raise DomainError("need at least one amplitude")
    if any(x < 0 or not math.isfinite(x) for x in mags):
        raise DomainError("amplitude magnitudes must be finite and non-negative")
    if full_phase_range is None:
        full_phase_range = [True] * len(mags)
    if len(full_phase_range) != len(mags):
        raise DomainError("full_phase_range length differs from amplitudes")
    if not all(full_phase_range[1:]):
        raise UnsupportedModel("support bounds for restricted phase ranges are not implemented")
    m = M = mags[0]
    for a in mags[1:]:
        if a < m:
            m_new = m - a
        elif a > M:
            m_new = a - M
        else:
            m_new = 0.0
        m, M = m_new, M + a
    return SupportBounds(m, M)


def resultant_batch(amplitudes: np.ndarray, phases: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`resultant` over the last axis (no compensated summation)."""
    amplitudes = np.asarray(amplitudes, dtype=float)
    phases = np.asarray(phases, dtype=float)
    x = np.sum(amplitudes * np.cos(phases), axis=-1)
    y = np.sum(amplitudes * np.sin(phases), axis=-1)
    env = np.hypot(x, y)
    scale = np.sum(np.abs(amplitudes), axis=-1)
    theta = np.where(env < DEGENERACY_THRESHOLD * scale, 0.0, np.arctan2(y, x))
    return env, theta


def critical_envelopes(amplitudes: Sequence[float]) -> list[float]:
    """Envelope values reached by collinear configurations, ``|sum_i s_i |A_i||``.

    For independent uniform phases these are where the envelope density can
    be singular or discontinuous.  Returned sorted and de-duplicated.
    """
    mags = [abs(float(a)) for a in amplitudes]
    sums = {0.0}
    for a in mags:
        sums = {s + a for s in sums} | {s - a for s in sums}
    return sorted({round(abs(s), 14) for s in sums})
