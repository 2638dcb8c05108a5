"""Joint probability laws of amplitudes and phases.

An :class:`EnsembleModel` pairs an :class:`AmplitudeModel` with a
:class:`PhaseModel` for ``n`` components.  Models evaluate densities on
arrays whose last axis has length ``n``, draw exact samples from seeded
streams, and serialise to a small JSON document::

    {"n": 3,
     "amplitude": {"kind": "CONSTANT", "values": [1, 1, 1]},
     "phase": {"kind": "IID_UNIFORM"}}

Amplitude kinds and their keys: ``CONSTANT`` (``values``), ``JOINT_GAUSSIAN``
(``mean``, ``cov``), ``IID_EXPONENTIAL`` (``rate``),
``COMMON_GAUSSIAN_SCALAR`` (``sigma``).  Phase kinds: ``IID_UNIFORM``,
``DEPENDENT_LINEAR`` (n = 2 only), ``DISCRETE_BINARY``.  ``CUSTOM_DENSITY``
models hold Python callables and cannot be serialised.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Any, Callable, Sequence

import numpy as np

from . import rng as _rng
from .errors import ConfigError, DomainError, UnnormalizedDistribution, UnsupportedModel

TWO_PI = 2.0 * math.pi
NORMALIZATION_TOL = 1e-6


class PhaseKind(enum.Enum):
    IID_UNIFORM = "IID_UNIFORM"
    DEPENDENT_LINEAR = "DEPENDENT_LINEAR"
    DISCRETE_BINARY = "DISCRETE_BINARY"
    CUSTOM_DENSITY = "CUSTOM_DENSITY"


class AmplitudeKind(enum.Enum):
    CONSTANT = "CONSTANT"
    JOINT_GAUSSIAN = "JOINT_GAUSSIAN"
    IID_EXPONENTIAL = "IID_EXPONENTIAL"
    COMMON_GAUSSIAN_SCALAR = "COMMON_GAUSSIAN_SCALAR"
    CUSTOM_DENSITY = "CUSTOM_DENSITY"


Density = Callable[[np.ndarray], np.ndarray]
Sampler = Callable[[np.random.Generator, int], np.ndarray]


def _tensor_integral(fn: Density, bounds: Sequence[tuple[float, float]], order: int = 24,
                     panels: int = 4) -> float:
    """Composite Gauss-Legendre product rule over a box (used for normalisation checks)."""
    x0, w0 = np.polynomial.legendre.leggauss(order)
    axes, weights = [], []
    for lo, hi in bounds:
        edges = np.linspace(lo, hi, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        axes.append((mid[:, None] + half[:, None] * x0[None, :]).ravel())
        weights.append((half[:, None] * w0[None, :]).ravel())
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    w = weights[0]
    for extra in weights[1:]:
        w = np.multiply.outer(w, extra)
    vals = np.asarray(fn(pts), dtype=float)
    return float(np.dot(w.ravel(), vals))


@dataclass(frozen=True)
class PhaseModel:
    """Joint law of the phase vector.

    Parameters
    ----------
    kind : PhaseKind
    n : int
        Number of components.
    density : callable, optional
        ``CUSTOM_DENSITY`` only: maps ``(..., n)`` phases to density values.
    sampler : callable, optional
        ``CUSTOM_DENSITY`` only: ``sampler(generator, count) -> (count, n)``.
    bounds : sequence of (lo, hi), optional
        Per-coordinate support of a custom density (default ``[-pi, pi]``).
    """

    kind: PhaseKind
    n: int
    density: Density | None = field(default=None, compare=False)
    sampler: Sampler | None = field(default=None, compare=False)
    bounds: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        kind = PhaseKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.n < 1:
            raise DomainError("need at least one component")
        if kind is PhaseKind.DEPENDENT_LINEAR and self.n != 2:
            raise DomainError("the dependent-linear phase law is defined for n = 2")
        if kind is PhaseKind.CUSTOM_DENSITY:
            if self.density is None:
                raise DomainError("CUSTOM_DENSITY needs a density callback")
            bounds = self.bounds or tuple((-math.pi, math.pi) for _ in range(self.n))
            bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
            if len(bounds) != self.n or any(not (-math.pi <= lo < hi <= math.pi) for lo, hi in bounds):
                raise DomainError("custom phase bounds must lie in [-pi, pi]")
            object.__setattr__(self, "bounds", bounds)
            if self.n <= 4:
                total = _tensor_integral(self.density, bounds, order=16 if self.n > 2 else 32,
                                         panels=2 if self.n > 2 else 8)
                if abs(total - 1.0) > NORMALIZATION_TOL:
                    raise UnnormalizedDistribution(f"phase density integrates to {total:.9g}")

    @property
    def support(self) -> tuple[tuple[float, float], ...]:
        if self.kind is PhaseKind.DEPENDENT_LINEAR:
            return ((0.0, math.pi),) * 2
        if self.kind is PhaseKind.CUSTOM_DENSITY:
            return self.bounds
        return ((-math.pi, math.pi),) * self.n

    @property
    def full_range(self) -> bool:
        """Whether every coordinate ranges over the whole circle."""
        return all(lo == -math.pi and hi == math.pi for lo, hi in self.support) \
            and self.kind is not PhaseKind.DISCRETE_BINARY

    def pdf(self, phi) -> np.ndarray:
        """Joint phase density at ``phi`` (last axis of length ``n``)."""
        phi = np.asarray(phi, dtype=float)
        if phi.shape[-1] != self.n:
            raise DomainError(f"expected {self.n} phases, got shape {phi.shape}")
        if np.isnan(phi).any():
            raise DomainError("NaN phase")
        if self.kind is PhaseKind.DISCRETE_BINARY:
            raise UnsupportedModel("discrete phases have no density; use discrete_support()")
        inside = np.ones(phi.shape[:-1], dtype=bool)
        for i, (lo, hi) in enumerate(self.support):
            inside &= (phi[..., i] >= lo) & (phi[..., i] <= hi)
        if self.kind is PhaseKind.IID_UNIFORM:
            val = np.full(phi.shape[:-1], TWO_PI ** (-self.n))
        elif self.kind is PhaseKind.DEPENDENT_LINEAR:
            val = (phi[..., 0] + phi[..., 1]) / math.pi ** 3
        else:
            val = np.asarray(self.density(phi), dtype=float)
        return np.where(inside, val, 0.0)

    def discrete_support(self) -> tuple[np.ndarray, np.ndarray]:
        """Atoms ``(points, masses)`` of a discrete phase law."""
        if self.kind is not PhaseKind.DISCRETE_BINARY:
            raise UnsupportedModel("only DISCRETE_BINARY phases have atoms")
        pts = np.array(list(product((0.0, math.pi), repeat=self.n)))
        return pts, np.full(len(pts), 0.5 ** self.n)

    def sample(self, gen: np.random.Generator, count: int) -> np.ndarray:
        if self.kind is PhaseKind.IID_UNIFORM:
            return gen.uniform(-math.pi, math.pi, size=(count, self.n))
        if self.kind is PhaseKind.DISCRETE_BINARY:
            return math.pi * gen.integers(0, 2, size=(count, self.n)).astype(float)
        if self.kind is PhaseKind.DEPENDENT_LINEAR:
            u = gen.random((count, 2))
            # inverse cdf of the marginal (x + pi/2)/pi^2 on [0, pi]
            x = 0.5 * math.pi * (np.sqrt(1.0 + 8.0 * u[:, 0]) - 1.0)
            # conditional (x + y)/(pi (x + pi/2)); root of y^2 + 2xy - 2c = 0
            c = u[:, 1] * math.pi * (x + 0.5 * math.pi)
            root = np.sqrt(x * x + 2.0 * c)
            y = np.where(root + x > 0, 2.0 * c / np.where(root + x > 0, root + x, 1.0), 0.0)
            return np.minimum(np.stack([x, y], axis=1), math.pi)
        if self.sampler is None:
            raise UnsupportedModel("custom phase density has no registered sampler")
        return np.asarray(self.sampler(gen, count), dtype=float).reshape(count, self.n)

    def to_dict(self) -> dict:
        if self.kind is PhaseKind.CUSTOM_DENSITY:
            raise ConfigError("custom phase densities cannot be serialised")
        return {"kind": self.kind.value}


@dataclass(frozen=True)
class AmplitudeModel:
    """Law of the amplitude vector.

    Only the fields relevant to ``kind`` are used: ``values`` (CONSTANT),
    ``mean``/``cov`` (JOINT_GAUSSIAN), ``rate`` (IID_EXPONENTIAL), ``sigma``
    (COMMON_GAUSSIAN_SCALAR), ``density``/``bounds``/``sampler``
    (CUSTOM_DENSITY).
    """

    kind: AmplitudeKind
    n: int
    values: tuple[float, ...] | None = None
    mean: tuple[float, ...] | None = None
    cov: tuple[tuple[float, ...], ...] | None = None
    rate: float | None = None
    sigma: float | None = None
    density: Density | None = field(default=None, compare=False)
    bounds: tuple[tuple[float, float], ...] | None = None
    sampler: Sampler | None = field(default=None, compare=False)

    def __post_init__(self):
        kind = AmplitudeKind(self.kind)
        object.__setattr__(self, "kind", kind)
        n = self.n
        if n < 1:
            raise DomainError("need at least one component")
        if kind is AmplitudeKind.CONSTANT:
            if self.values is None or len(self.values) != n:
                raise DomainError(f"CONSTANT amplitudes need {n} values")
            vals = tuple(float(v) for v in self.values)
            if not all(math.isfinite(v) for v in vals):
                raise DomainError("amplitudes must be finite")
            object.__setattr__(self, "values", vals)
        elif kind is AmplitudeKind.JOINT_GAUSSIAN:
            mean = np.asarray(self.mean if self.mean is not None else np.zeros(n), dtype=float)
            cov = np.asarray(self.cov, dtype=float)
            if mean.shape != (n,) or cov.shape != (n, n):
                raise DomainError("mean/covariance shapes do not match n")
            if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
                raise DomainError("covariance must be symmetric")
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError as exc:
                raise DomainError("covariance must be positive definite") from exc
            object.__setattr__(self, "mean", tuple(mean.tolist()))
            object.__setattr__(self, "cov", tuple(tuple(r) for r in cov.tolist()))
        elif kind is AmplitudeKind.IID_EXPONENTIAL:
            if self.rate is None or not self.rate > 0 or not math.isfinite(self.rate):
                raise DomainError("exponential rate must be positive")
            object.__setattr__(self, "rate", float(self.rate))
        elif kind is AmplitudeKind.COMMON_GAUSSIAN_SCALAR:
            if self.sigma is None or not self.sigma > 0 or not math.isfinite(self.sigma):
                raise DomainError("sigma must be positive")
            object.__setattr__(self, "sigma", float(self.sigma))
        else:
            if self.density is None or self.bounds is None or len(self.bounds) != n:
                raise DomainError("CUSTOM_DENSITY amplitudes need a density and per-coordinate bounds")
            bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
            object.__setattr__(self, "bounds", bounds)
            if n <= 4 and all(math.isfinite(lo) and math.isfinite(hi) for lo, hi in bounds):
                total = _tensor_integral(self.density, bounds, order=16 if n > 2 else 32,
                                         panels=2 if n > 2 else 8)
                if abs(total - 1.0) > NORMALIZATION_TOL:
                    raise UnnormalizedDistribution(f"amplitude density integrates to {total:.9g}")

    # -- derived quantities -------------------------------------------------
    @property
    def cholesky(self) -> np.ndarray:
        return np.linalg.cholesky(np.asarray(self.cov))

    @property
    def is_constant(self) -> bool:
        return self.kind is AmplitudeKind.CONSTANT

    def magnitude_bound(self) -> float:
        """Largest possible ``sum |A_i|`` (infinite for unbounded laws)."""
        if self.kind is AmplitudeKind.CONSTANT:
            return math.fsum(abs(v) for v in self.values)
        if self.kind is AmplitudeKind.CUSTOM_DENSITY:
            return math.fsum(max(abs(lo), abs(hi)) for lo, hi in self.bounds)
        return math.inf

    def second_moment(self) -> float:
        """``E[sum_i A_i^2]``, which equals ``E[B^2]`` under independent uniform phases."""
        if self.kind is AmplitudeKind.CONSTANT:
            return math.fsum(v * v for v in self.values)
        if self.kind is AmplitudeKind.JOINT_GAUSSIAN:
            return float(np.trace(np.asarray(self.cov)) + np.dot(self.mean, self.mean))
        if self.kind is AmplitudeKind.IID_EXPONENTIAL:
            return self.n * 2.0 / self.rate ** 2
        if self.kind is AmplitudeKind.COMMON_GAUSSIAN_SCALAR:
            return self.n * self.sigma ** 2
        raise UnsupportedModel("second moment of a custom amplitude law")

    def pdf(self, a) -> np.ndarray:
        """Amplitude density; CONSTANT returns the atom indicator (1 at the atom, else 0)
        and COMMON_GAUSSIAN_SCALAR the density of the shared scalar on the diagonal."""
        a = np.asarray(a, dtype=float)
        if a.shape[-1] != self.n:
            raise DomainError(f"expected {self.n} amplitudes, got shape {a.shape}")
        if np.isnan(a).any():
            raise DomainError("NaN amplitude")
        if self.kind is AmplitudeKind.CONSTANT:
            return np.all(np.isclose(a, self.values, rtol=1e-12, atol=1e-15), axis=-1).astype(float)
        if self.kind is AmplitudeKind.IID_EXPONENTIAL:
            lam = self.rate
            ok = np.all(a >= 0, axis=-1)
            return np.where(ok, lam ** self.n * np.exp(-lam * np.sum(np.maximum(a, 0.0), axis=-1)), 0.0)
        if self.kind is AmplitudeKind.JOINT_GAUSSIAN:
            L = self.cholesky
            z = np.linalg.solve(L, (a - np.asarray(self.mean)).reshape(-1, self.n).T).T
            logdet = 2.0 * np.sum(np.log(np.diag(L)))
            q = np.sum(z * z, axis=-1).reshape(a.shape[:-1])
            return np.exp(-0.5 * q - 0.5 * logdet - 0.5 * self.n * math.log(TWO_PI))
        if self.kind is AmplitudeKind.COMMON_GAUSSIAN_SCALAR:
            g = a[..., 0]
            on_line = np.all(np.isclose(a, g[..., None], rtol=1e-12, atol=1e-15), axis=-1)
            s = self.sigma
            return np.where(on_line, np.exp(-0.5 * (g / s) ** 2) / (s * math.sqrt(TWO_PI)), 0.0)
        inside = np.ones(a.shape[:-1], dtype=bool)
        for i, (lo, hi) in enumerate(self.bounds):
            inside &= (a[..., i] >= lo) & (a[..., i] <= hi)
        return np.where(inside, np.asarray(self.density(a), dtype=float), 0.0)

    def sample(self, gen: np.random.Generator, count: int) -> np.ndarray:
        n = self.n
        if self.kind is AmplitudeKind.CONSTANT:
            return np.broadcast_to(np.asarray(self.values), (count, n)).copy()
        if self.kind is AmplitudeKind.IID_EXPONENTIAL:
            return gen.exponential(1.0 / self.rate, size=(count, n))
        if self.kind is AmplitudeKind.JOINT_GAUSSIAN:
            z = gen.standard_normal((count, n))
            return np.asarray(self.mean) + z @ self.cholesky.T
        if self.kind is AmplitudeKind.COMMON_GAUSSIAN_SCALAR:
            g = self.sigma * gen.standard_normal(count)
            return np.repeat(g[:, None], n, axis=1)
        if self.sampler is None:
            raise UnsupportedModel("custom amplitude density has no registered sampler")
        return np.asarray(self.sampler(gen, count), dtype=float).reshape(count, n)

    def to_dict(self) -> dict:
        kind = self.kind
        if kind is AmplitudeKind.CONSTANT:
            return {"kind": kind.value, "values": list(self.values)}
        if kind is AmplitudeKind.JOINT_GAUSSIAN:
            return {"kind": kind.value, "mean": list(self.mean), "cov": [list(r) for r in self.cov]}
        if kind is AmplitudeKind.IID_EXPONENTIAL:
            return {"kind": kind.value, "rate": self.rate}
        if kind is AmplitudeKind.COMMON_GAUSSIAN_SCALAR:
            return {"kind": kind.value, "sigma": self.sigma}
        raise ConfigError("custom amplitude densities cannot be serialised")


@dataclass(frozen=True)
class EnsembleModel:
    """Amplitude law, phase law and component count of a sinusoid ensemble.

    Only independent amplitude and phase blocks are supported; a joint
    dependence between the blocks must be expressed through a custom
    phase or amplitude density.
    """

    n: int
    amplitude: AmplitudeModel
    phase: PhaseModel
    independent_blocks: bool = True

    def __post_init__(self):
        if self.amplitude.n != self.n or self.phase.n != self.n:
            raise DomainError("amplitude/phase model dimensions differ from n")
        if not self.independent_blocks:
            raise UnsupportedModel("dependent amplitude/phase blocks are not supported")

    # -- convenience constructors -------------------------------------------
    @classmethod
    def constant_uniform(cls, amplitudes: Sequence[float]) -> "EnsembleModel":
        n = len(amplitudes)
        return cls(n, AmplitudeModel(AmplitudeKind.CONSTANT, n, values=tuple(amplitudes)),
                   PhaseModel(PhaseKind.IID_UNIFORM, n))

    def support_bounds(self):
        """:class:`SupportBounds` of the envelope.

        Exact ``[m_n, M_n]`` for constant amplitudes with full-range phases;
        otherwise the conservative ``[0, sum |a_i|]`` (``M`` infinite for
        unbounded amplitude laws).
        """
        from .sinusoid import SupportBounds, envelope_bounds
        if self.amplitude.is_constant and self.phase.full_range:
            return envelope_bounds([abs(v) for v in self.amplitude.values])
        return SupportBounds(0.0, self.amplitude.magnitude_bound())

    def to_dict(self) -> dict:
        return {"n": self.n, "amplitude": self.amplitude.to_dict(), "phase": self.phase.to_dict()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "EnsembleModel":
        try:
            n = int(doc["n"])
            amp = dict(doc["amplitude"])
            ph = dict(doc["phase"])
            akind = AmplitudeKind(amp.pop("kind"))
            pkind = PhaseKind(ph.pop("kind"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed model document: {exc}") from exc
        if akind is AmplitudeKind.CUSTOM_DENSITY or pkind is PhaseKind.CUSTOM_DENSITY:
            raise ConfigError("custom densities cannot be loaded from JSON")
        if ph:
            raise ConfigError(f"unexpected phase keys {sorted(ph)}")
        allowed = {AmplitudeKind.CONSTANT: {"values"}, AmplitudeKind.JOINT_GAUSSIAN: {"mean", "cov"},
                   AmplitudeKind.IID_EXPONENTIAL: {"rate"}, AmplitudeKind.COMMON_GAUSSIAN_SCALAR: {"sigma"}}
        extra = set(amp) - allowed[akind]
        if extra:
            raise ConfigError(f"unexpected amplitude keys {sorted(extra)}")
        if "values" in amp:
            amp["values"] = tuple(amp["values"])
        if "mean" in amp:
            amp["mean"] = tuple(amp["mean"])
        if "cov" in amp:
            amp["cov"] = tuple(tuple(r) for r in amp["cov"])
        try:
            return cls(n, AmplitudeModel(akind, n, **amp), PhaseModel(pkind, n))
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "EnsembleModel":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def digest(self) -> str:
        """Short content hash identifying the model (custom callables by name)."""
        try:
            text = self.to_json()
        except ConfigError:
            text = repr((self.n, self.amplitude.kind.value, self.phase.kind.value,
                         getattr(self.amplitude.density, "__qualname__", None),
                         getattr(self.phase.density, "__qualname__", None),
                         self.amplitude.bounds, self.phase.bounds))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def joint_density(model: EnsembleModel, a, phi) -> np.ndarray | float:
    """Joint density of amplitudes and phases (product of the two blocks).

    CONSTANT amplitudes contribute the indicator of their atom, so the value
    is the phase density at the atom and zero elsewhere.  Discrete phase laws
    have no density and raise :class:`UnsupportedModel`; use
    :meth:`PhaseModel.discrete_support` instead.
    """
    a = np.asarray(a, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.isnan(a).any() or np.isnan(phi).any():
        raise DomainError("NaN input to joint_density")
    val = model.amplitude.pdf(a) * model.phase.pdf(phi)
    return float(val) if np.ndim(val) == 0 else val


def halfangle_tangent_density(model: PhaseModel, t) -> np.ndarray | float:
    """Density of ``T_i = tan(phi_i / 2)``.

    IID_UNIFORM gives ``prod 1/(pi (1 + t_i^2))``; DEPENDENT_LINEAR gives
    ``8 (atan t_1 + atan t_2) / (pi^3 (1 + t_1^2)(1 + t_2^2))`` on ``t >= 0``.
    """
    t = np.asarray(t, dtype=float)
    if t.shape[-1] != model.n:
        raise DomainError(f"expected {model.n} coordinates")
    if np.isnan(t).any():
        raise DomainError("NaN input")
    jac = 1.0 / (1.0 + t * t)
    if model.kind is PhaseKind.IID_UNIFORM:
        val = np.prod(jac / math.pi, axis=-1)
    elif model.kind is PhaseKind.DEPENDENT_LINEAR:
        ok = np.all(t >= 0, axis=-1)
        val = np.where(ok, 8.0 * np.sum(np.arctan(t), axis=-1) * np.prod(jac, axis=-1) / math.pi ** 3, 0.0)
    else:
        raise UnsupportedModel(f"half-angle density not available for {model.kind.value}")
    return float(val) if np.ndim(val) == 0 else val


def sample(model: EnsembleModel, rng_seed: int, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact draws ``(a, phi)``, each of shape ``(count, n)``.

    Draws are produced in fixed chunks, chunk ``k`` from stream ``k`` of
    ``rng_seed``, so any chunk can be regenerated independently.
    """
    if count < 1:
        raise DomainError("count must be positive")
    amps, phases = [], []
    for k, size in enumerate(_rng.chunk_sizes(count)):
        a, p = sample_chunk(model, rng_seed, k, size)
        amps.append(a)
        phases.append(p)
    return np.concatenate(amps), np.concatenate(phases)


def sample_chunk(model: EnsembleModel, seed: int, index: int, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Draws of chunk ``index``: amplitudes first, then phases, from one stream."""
    gen = _rng.stream(seed, index)
    a = model.amplitude.sample(gen, size)
    phi = model.phase.sample(gen, size)
    return a, phi
