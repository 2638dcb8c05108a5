"""Command-line front end: tabulate, simulate, compare and regenerate the figure data.

Every command writes RFC 4180 CSV (17 significant digits, ``'.'`` decimal)
either to ``--out`` or to standard output.  Exit status is 0 on success,
1 for a configuration error and 2 for a numerical failure; diagnostics go
to standard error.

Examples
--------
::

    envdist pdf --preset example1 --A 1 --grid 256
    envdist compare --preset example3 --samples 1000000 --seed 7
    envdist ber --preset example1 --snr 0:2:30 --bits 1000000
    envdist figures --out figures/
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import ber as _ber
from . import eddhapt as _eddhapt
from . import mc as _mc
from .eged import EnvelopeDistribution, clustered_grid, format_float, tabulate
from .errors import ConfigError, EnvDistError, NumericalError, UnsupportedModel
from .models import AmplitudeKind, AmplitudeModel, EnsembleModel, PhaseKind, PhaseModel

log = logging.getLogger(__name__)

COMMANDS = ("pdf", "cdf", "ber", "simulate", "compare", "figures")
PRESETS = ("example1", "example2", "example3", "example4", "example5-gaussian", "example6-exp")
FIGURES = ("fig1", "fig2", "fig3", "fig4")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def preset_model(name: str, A: float = 1.0) -> EnsembleModel:
    """Ensemble model behind a named preset.

    ``example1``/``example2``: two equal amplitudes ``A`` with independent /
    linearly dependent uniform phases; ``example3``/``example4``: three / four
    amplitudes ``A`` with independent uniform phases;
    ``example5-gaussian``: two components sharing one zero-mean Gaussian
    amplitude of unit deviation; ``example6-exp``: two iid unit-rate
    exponential amplitudes with binary phases.
    """
    if name == "example1":
        return EnsembleModel.constant_uniform([A, A])
    if name == "example2":
        return EnsembleModel(2, AmplitudeModel(AmplitudeKind.CONSTANT, 2, values=(A, A)),
                             PhaseModel(PhaseKind.DEPENDENT_LINEAR, 2))
    if name == "example3":
        return EnsembleModel.constant_uniform([A] * 3)
    if name == "example4":
        return EnsembleModel.constant_uniform([A] * 4)
    if name == "example5-gaussian":
        return EnsembleModel(2, AmplitudeModel(AmplitudeKind.COMMON_GAUSSIAN_SCALAR, 2, sigma=1.0),
                             PhaseModel(PhaseKind.IID_UNIFORM, 2))
    if name == "example6-exp":
        return EnsembleModel(2, AmplitudeModel(AmplitudeKind.IID_EXPONENTIAL, 2, rate=1.0),
                             PhaseModel(PhaseKind.DISCRETE_BINARY, 2))
    raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


def landmarks(model: EnsembleModel) -> list[float]:
    """Extra grid points worth having in a table (e.g. ``A sqrt 2`` for two equal amplitudes)."""
    amp = model.amplitude
    if not amp.is_constant:
        return []
    vals = [abs(v) for v in amp.values]
    pts = [math.sqrt(math.fsum(v * v for v in vals))]
    if len(set(vals)) == 1:
        pts.append(vals[0])
    return pts


def parse_snr(text: str) -> np.ndarray:
    """``'start:step:stop'`` (dB, stop inclusive) to an array."""
    try:
        start, step, stop = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"--snr expects start:step:stop, got {text!r}") from exc
    if not step > 0 or stop < start:
        raise ConfigError("--snr needs a positive step and stop >= start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


@dataclass
class RunConfig:
    """One command invocation; JSON round-trips through :meth:`to_dict` / :meth:`from_dict`."""

    command: str
    preset: str | None = None
    model: dict | None = None
    A: float = 1.0
    grid: int = 256
    seed: int = 0
    samples: int = 1_000_000
    snr: str = "0:2:30"
    bits: int | None = None
    output_path: str | None = None
    threads: int | None = None
    tol: float | None = None
    method: str = "eged"
    figures: tuple[str, ...] = FIGURES

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.preset is not None and self.model is not None:
            raise ConfigError("give either a preset or a model, not both")
        if self.command != "figures" and self.preset is None and self.model is None:
            raise ConfigError(f"{self.command} needs --preset or --model")
        if self.grid < 16:
            raise ConfigError("--grid must be at least 16")
        if self.seed < 0:
            raise ConfigError("--seed must be non-negative")
        if self.samples < 1:
            raise ConfigError("--samples must be positive")
        if self.bits is not None and self.bits < 10_000:
            raise ConfigError("--bits must be at least 10000")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("--threads must be positive")
        if self.method not in ("eged", "eddhapt"):
            raise ConfigError("--method must be 'eged' or 'eddhapt'")
        if not self.A > 0:
            raise ConfigError("--A must be positive")
        self.figures = tuple(self.figures)
        unknown = set(self.figures) - set(FIGURES)
        if unknown:
            raise ConfigError(f"unknown figures {sorted(unknown)}")
        parse_snr(self.snr)
        self.ensemble()

    def ensemble(self) -> EnsembleModel | None:
        if self.preset is not None:
            return preset_model(self.preset, self.A)
        if self.model is not None:
            return EnsembleModel.from_dict(self.model)
        return None

    def to_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["figures"] = list(self.figures)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        extra = set(doc) - names
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------
def _table(model: EnsembleModel, cfg: RunConfig) -> EnvelopeDistribution:
    if cfg.method == "eddhapt":
        kw = {"epsrel": cfg.tol} if cfg.tol else {}
        return _eddhapt.tabulate_cdf(model, max(cfg.grid, 64), seed=cfg.seed, **kw)
    return tabulate(model, cfg.grid, extra_points=landmarks(model), threads=cfg.threads, tol=cfg.tol)


def _sample_grid(model: EnsembleModel, samples: _mc.EnvelopeSamples, size: int) -> np.ndarray:
    bounds = model.support_bounds()
    hi = bounds.M if math.isfinite(bounds.M) else float(samples.values.max())
    return clustered_grid([bounds.m, hi], size)


def _rows_csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _compare(model: EnsembleModel, cfg: RunConfig) -> tuple[str, bool]:
    analytic = _table(model, cfg)
    samples = _mc.simulate_envelope(model, cfg.samples, cfg.seed, threads=cfg.threads)
    emp = _mc.empirical_distribution(samples, analytic.grid)
    ks = _mc.ks_test(emp, analytic)
    clean = np.array([f == "" for f in analytic.flags]) & np.isfinite(analytic.pdf)
    sup_pdf = float(np.max(np.abs(emp.pdf[clean] - analytic.pdf[clean]))) if clean.any() else math.nan
    rows = [("model_digest", model.digest()), ("seed", cfg.seed), ("n_samples", cfg.samples),
            ("grid_points", analytic.grid.size), ("ks_distance", ks.distance),
            ("ks_threshold", ks.threshold), ("pdf_sup_norm", sup_pdf),
            ("bin_width", float(emp.meta["bin_width"])), ("passed", "true" if ks.passed else "false")]
    return _rows_csv(("metric", "value"), rows), ks.passed


def _ber_curve(model: EnsembleModel | None, dist: EnvelopeDistribution, snr: np.ndarray, bits: int | None,
               seed: int, n: int, phase: str) -> _ber.BerCurve:
    sim = _ber.ber_simulate(model, snr, bits, seed) if bits else None
    return _ber.ber_curve(dist, snr, n_components=n, phase_model=phase, simulated=sim)


def _long_csv(curves: Sequence[tuple[str, EnvelopeDistribution]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["curve", "b", "pdf", "cdf", "flags"])
    for name, d in curves:
        for x, p, c, fl in zip(d.grid, d.pdf, d.cdf, d.flags):
            w.writerow([name, format_float(x), format_float(p), format_float(c), fl])
    return buf.getvalue()


def _with_mc(name: str, model: EnsembleModel, dist: EnvelopeDistribution, cfg: RunConfig):
    samples = _mc.simulate_envelope(model, cfg.samples, cfg.seed, threads=cfg.threads)
    return [(name, dist), (name + "/mc", _mc.empirical_distribution(samples, dist.grid))]


def figure_csv(which: str, cfg: RunConfig) -> str:
    """Data behind one figure as a long-format CSV.

    ``fig1``: two-component pdfs with ``A_1 = 1`` (equal amplitudes with
    independent and dependent phases, unequal amplitudes 0.5 and 1.5);
    ``fig2``/``fig3``: three / four unit amplitudes; each analytic curve is
    followed by its Monte Carlo histogram (``<name>/mc``).  ``fig4``: BER
    against average SNR per bit for one to four components and the
    dependent-phase pair at unit total power, with exact,
    Gaussian-approximation and simulated columns.
    """
    tab = {"threads": cfg.threads, "tol": cfg.tol}
    if which == "fig1":
        curves = []
        for name, model in (("example1", preset_model("example1")), ("example2", preset_model("example2")),
                            ("general-A2=0.5", EnsembleModel.constant_uniform([1.0, 0.5])),
                            ("general-A2=1.5", EnsembleModel.constant_uniform([1.0, 1.5]))):
            dist = tabulate(model, cfg.grid, extra_points=landmarks(model), **tab)
            curves += _with_mc(name, model, dist, cfg)
        return _long_csv(curves)
    if which in ("fig2", "fig3"):
        name = "example3" if which == "fig2" else "example4"
        model = preset_model(name)
        dist = tabulate(model, cfg.grid, extra_points=landmarks(model), **tab)
        return _long_csv(_with_mc(name, model, dist, cfg))
    if which == "fig4":
        snr = parse_snr(cfg.snr)
        bits = cfg.bits or 1_000_000
        chunks = []
        single = EnsembleModel.constant_uniform([1.0])
        curve = _ber_curve(single, _ber.point_mass(1.0), snr, bits, cfg.seed, 1, "IID_UNIFORM")
        chunks.append(curve.to_csv())
        for name, n in (("example1", 2), ("example2", 2), ("example3", 3), ("example4", 4)):
            # equal average power: unit total power split over the components
            model = preset_model(name, 1.0 / math.sqrt(n))
            dist = tabulate(model, cfg.grid, extra_points=landmarks(model), **tab)
            curve = _ber_curve(model, dist, snr, bits, cfg.seed, model.n, model.phase.kind.value)
            chunks.append(curve.to_csv())
        header = chunks[0].split("\r\n", 1)[0] + "\r\n"
        return header + "".join(c.split("\r\n", 1)[1] for c in chunks)
    raise ConfigError(f"unknown figure {which!r}")


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the exit status (exceptions propagate to :func:`main`)."""
    if cfg.threads:
        os.environ["ENVDIST_THREADS"] = str(cfg.threads)
    model = cfg.ensemble()
    if cfg.command in ("pdf", "cdf"):
        _emit(_table(model, cfg).to_csv(), cfg.output_path)
        return EXIT_OK
    if cfg.command == "simulate":
        samples = _mc.simulate_envelope(model, cfg.samples, cfg.seed, threads=cfg.threads)
        emp = _mc.empirical_distribution(samples, _sample_grid(model, samples, cfg.grid))
        if cfg.output_path is not None:
            base = Path(cfg.output_path)
            _mc.save_samples(samples, base)
            emp.to_csv(base.with_suffix(".csv"))
        else:
            sys.stdout.write(emp.to_csv())
        return EXIT_OK
    if cfg.command == "compare":
        report, passed = _compare(model, cfg)
        _emit(report, cfg.output_path)
        if not passed:
            print("envdist: Kolmogorov-Smirnov distance above the critical value", file=sys.stderr)
            return EXIT_NUMERIC
        return EXIT_OK
    if cfg.command == "ber":
        snr = parse_snr(cfg.snr)
        dist = _ber.point_mass(abs(model.amplitude.values[0])) if model.n == 1 and model.amplitude.is_constant \
            else _table(model, cfg)
        curve = _ber_curve(model, dist, snr, cfg.bits, cfg.seed, model.n, model.phase.kind.value)
        _emit(curve.to_csv(), cfg.output_path)
        return EXIT_OK
    # figures
    out = Path(cfg.output_path or ".")
    out.mkdir(parents=True, exist_ok=True)
    for which in cfg.figures:
        text = figure_csv(which, cfg)
        with open(out / f"{which}.csv", "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="envdist", description="Envelope laws of sums of random-phase sinusoids.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration (command-line flags take precedence)")
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--model", help="JSON file with an ensemble model")
    p.add_argument("--A", type=float, help="common amplitude of the constant-amplitude presets")
    p.add_argument("--grid", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--snr", help="average SNR grid in dB as start:step:stop")
    p.add_argument("--bits", type=int, help="simulated bits per SNR point")
    p.add_argument("--out", dest="output_path")
    p.add_argument("--threads", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--method", choices=("eged", "eddhapt"))
    p.add_argument("--figures", help="comma-separated subset of fig1,fig2,fig3,fig4")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(argv: Sequence[str] | None = None) -> RunConfig:
    args = build_parser().parse_args(argv)
    doc: dict[str, Any] = {}
    if args.config:
        try:
            doc = RunConfig.from_json(Path(args.config).read_text()).to_dict()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    doc["command"] = args.command
    for key in ("A", "grid", "seed", "samples", "snr", "bits", "output_path", "tol", "method"):
        val = getattr(args, key)
        if val is not None:
            doc[key] = val
    threads = args.threads
    if threads is None and os.environ.get("ENVDIST_THREADS"):
        try:
            threads = int(os.environ["ENVDIST_THREADS"])
        except ValueError as exc:
            raise ConfigError("ENVDIST_THREADS must be an integer") from exc
    if threads is not None:
        doc["threads"] = threads
    if args.preset is not None:
        doc["preset"], doc["model"] = args.preset, None
    if args.model is not None:
        try:
            doc["model"] = json.loads(Path(args.model).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read model file: {exc}") from exc
        doc["preset"] = None
    if args.figures:
        doc["figures"] = tuple(s.strip() for s in args.figures.split(",") if s.strip())
    if args.verbose:
        logging.basicConfig(level=logging.INFO)
    return RunConfig.from_dict(doc)


def main(argv: Sequence[str] | None = None) -> int:
    """Console entry point; returns the exit status."""
    try:
        cfg = config_from_args(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code else EXIT_OK
    except ConfigError as exc:
        print(f"envdist: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg)
    except (ConfigError, UnsupportedModel) as exc:
        print(f"envdist: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, EnvDistError, FloatingPointError) as exc:
        print(f"envdist: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
