"""Seeded Monte Carlo reference for envelope laws.

Draws come from :func:`envdist.models.sample_chunk`, so chunk ``k`` of a run
always uses stream ``k`` of the seed and the result does not depend on the
number of worker threads.  Agreement with an analytic law is measured by the
Kolmogorov-Smirnov distance on a shared grid.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as _rng
from .eged import EnvelopeDistribution
from .errors import ConfigError, DomainError, EmptyInput, GridMismatch
from .models import EnsembleModel, sample_chunk
from .sinusoid import resultant_batch

SAMPLE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EnvelopeSamples:
    """Envelope draws with their provenance."""

    values: np.ndarray
    seed: int
    model_digest: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise DomainError("envelope samples must be one-dimensional")
        if np.any(v < 0) or np.any(~np.isfinite(v)):
            raise DomainError("envelope samples must be finite and non-negative")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    @property
    def size(self) -> int:
        return self.values.size

    def mean(self) -> float:
        return float(self.values.mean())

    def stderr(self) -> float:
        """Standard error of the sample mean."""
        return float(self.values.std(ddof=1) / math.sqrt(self.size)) if self.size > 1 else math.inf


def _chunk(model: EnsembleModel, seed: int, index: int, size: int) -> np.ndarray:
    a, phi = sample_chunk(model, seed, index, size)
    env, _ = resultant_batch(a, phi)
    return env


def simulate_envelope(model: EnsembleModel, n_samples: int, seed: int, *,
                      threads: int | None = None) -> EnvelopeSamples:
    """Draw ``n_samples`` envelopes of ``model`` from ``seed``.

    Work is cut into chunks of :data:`envdist.rng.CHUNK_SIZE` draws; chunk
    ``k`` uses stream ``k`` and the chunks are concatenated in order, so the
    output is bit-identical for any ``threads``.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be at least 1")
    sizes = _rng.chunk_sizes(n_samples)
    workers = threads or int(os.environ.get("ENVDIST_THREADS", "0") or 0) or 1
    jobs = list(enumerate(sizes))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda job: _chunk(model, seed, job[0], job[1]), jobs))
    else:
        parts = [_chunk(model, seed, k, size) for k, size in jobs]
    return EnvelopeSamples(np.concatenate(parts), int(seed), model.digest())


def freedman_diaconis(values: np.ndarray) -> float:
    """Freedman-Diaconis bin width ``2 IQR / N^(1/3)`` (0 when the IQR vanishes)."""
    q75, q25 = np.percentile(values, [75, 25])
    return float(2.0 * (q75 - q25) / values.size ** (1.0 / 3.0))


def empirical_distribution(samples: EnvelopeSamples, grid, *, bin_width: float | None = None
                           ) -> EnvelopeDistribution:
    """Empirical cdf on ``grid`` and a histogram pdf centred on each grid point.

    The pdf at ``g`` is the fraction of samples in ``[g - h/2, g + h/2)``
    divided by ``h``, with ``h`` the Freedman-Diaconis width unless
    ``bin_width`` is given.  Bins are never interpolated, so densities next
    to singular points are reported as the raw bin averages.

    Raises
    ------
    EmptyInput
        No samples.
    """
    values = np.sort(np.asarray(samples.values if isinstance(samples, EnvelopeSamples) else samples,
                                dtype=float))
    if values.size == 0:
        raise EmptyInput("no samples")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be strictly ascending with at least two points")
    h = bin_width if bin_width is not None else freedman_diaconis(values)
    if not h > 0:
        h = float(np.min(np.diff(grid)))
    n = values.size
    cdf = np.searchsorted(values, grid, side="right") / n
    counts = np.searchsorted(values, grid + 0.5 * h, side="left") - np.searchsorted(values, grid - 0.5 * h,
                                                                                     side="left")
    pdf = counts / (n * h)
    meta = {"n_samples": n, "bin_width": h}
    if isinstance(samples, EnvelopeSamples):
        meta.update(seed=samples.seed, digest=samples.model_digest)
    return EnvelopeDistribution(grid, pdf, cdf, method="MC", meta=meta)


def ks_threshold(n: int, alpha: float = 0.01) -> float:
    """Asymptotic one-sample Kolmogorov-Smirnov critical value ``c(alpha) / sqrt(n)``.

    ``c(alpha) = sqrt(-ln(alpha / 2) / 2)``, so ``c(0.01) = 1.628``.
    """
    if n < 1:
        raise DomainError("n must be positive")
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    return math.sqrt(-0.5 * math.log(alpha / 2.0)) / math.sqrt(n)


def ks_distance(empirical: EnvelopeDistribution, analytic: EnvelopeDistribution) -> float:
    """``max |F_emp - F_analytic|`` over the shared grid (NaN entries skipped).

    Raises
    ------
    GridMismatch
        The two tables are not on the same grid.
    """
    if empirical.grid.shape != analytic.grid.shape or not np.allclose(empirical.grid, analytic.grid,
                                                                       rtol=1e-12, atol=1e-15):
        raise GridMismatch("distributions are tabulated on different grids")
    diff = np.abs(empirical.cdf - analytic.cdf)
    if np.all(np.isnan(diff)):
        raise GridMismatch("no comparable grid points")
    return float(np.nanmax(diff))


@dataclass(frozen=True)
class KSResult:
    distance: float
    threshold: float
    n: int

    @property
    def passed(self) -> bool:
        return self.distance <= self.threshold


def ks_test(empirical: EnvelopeDistribution, analytic: EnvelopeDistribution, n: int | None = None,
            alpha: float = 0.01) -> KSResult:
    """Distance, critical value and verdict; ``n`` defaults to the empirical sample count."""
    n = int(n or empirical.meta.get("n_samples", 0))
    return KSResult(ks_distance(empirical, analytic), ks_threshold(n, alpha), n)


def ks_two_sample(x: EnvelopeSamples | np.ndarray, y: EnvelopeSamples | np.ndarray) -> tuple[float, float]:
    """Exact two-sample KS distance and the ``alpha = 0.01`` critical value."""
    xs = np.sort(np.asarray(getattr(x, "values", x), dtype=float))
    ys = np.sort(np.asarray(getattr(y, "values", y), dtype=float))
    if xs.size == 0 or ys.size == 0:
        raise EmptyInput("no samples")
    pooled = np.concatenate([xs, ys])
    d = np.max(np.abs(np.searchsorted(xs, pooled, side="right") / xs.size
                      - np.searchsorted(ys, pooled, side="right") / ys.size))
    crit = math.sqrt(-0.5 * math.log(0.005)) * math.sqrt((xs.size + ys.size) / (xs.size * ys.size))
    return float(d), crit


def save_samples(samples: EnvelopeSamples, path: str | os.PathLike) -> tuple[Path, Path]:
    """Write ``<path>.f64`` (little-endian doubles) and ``<path>.json`` (provenance)."""
    base = Path(path)
    data, side = base.with_suffix(".f64"), base.with_suffix(".json")
    samples.values.astype("<f8").tofile(data)
    side.write_text(json.dumps({"format": SAMPLE_FORMAT_VERSION, "dtype": "<f8", "count": samples.size,
                                "seed": samples.seed, "model_digest": samples.model_digest,
                                "prng": "PCG64/SeedSequence(seed, spawn_key=(chunk,))",
                                "chunk_size": _rng.CHUNK_SIZE}, indent=2) + "\n")
    return data, side


def load_samples(path: str | os.PathLike) -> EnvelopeSamples:
    """Inverse of :func:`save_samples`; checks the sidecar count against the data file."""
    base = Path(path)
    side = json.loads(base.with_suffix(".json").read_text())
    if side.get("format") != SAMPLE_FORMAT_VERSION or side.get("dtype") != "<f8":
        raise ConfigError("unsupported sample file format")
    values = np.fromfile(base.with_suffix(".f64"), dtype="<f8")
    if values.size != side["count"]:
        raise ConfigError(f"sidecar says {side['count']} samples, file holds {values.size}")
    return EnvelopeSamples(values.astype(float), int(side["seed"]), str(side["model_digest"]))
