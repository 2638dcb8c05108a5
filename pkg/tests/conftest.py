"""Shared fixtures: session-cached tabulations and Monte Carlo runs.

Several test modules (and the acceptance suite) compare the same expensive
tables against the same seeded simulations; computing each once keeps the
whole run within a few minutes on one core.
"""

import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from envdist.eged import tabulate
from envdist.mc import simulate_envelope
from envdist.models import AmplitudeKind, AmplitudeModel, EnsembleModel, PhaseKind, PhaseModel

settings.register_profile("envdist", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "envdist"))

# published seeds of the Monte Carlo oracles
SEEDS = {
    "example1": 11,
    "example2": 12,
    "general": 13,
    "three": 14,
    "four": 15,
    "common_gaussian": 16,
    "exp_binary": 17,
    "joint_gaussian": 18,
    "exp_uniform": 19,
}
N_MC = 1_000_000


def two_equal(A=1.0):
    return EnsembleModel.constant_uniform([A, A])


def two_dependent(A=1.0):
    return EnsembleModel(2, AmplitudeModel(AmplitudeKind.CONSTANT, 2, values=(A, A)),
                         PhaseModel(PhaseKind.DEPENDENT_LINEAR, 2))


def common_gaussian(sigma=1.0):
    return EnsembleModel(2, AmplitudeModel(AmplitudeKind.COMMON_GAUSSIAN_SCALAR, 2, sigma=sigma),
                         PhaseModel(PhaseKind.IID_UNIFORM, 2))


def exp_binary(rate=1.0):
    return EnsembleModel(2, AmplitudeModel(AmplitudeKind.IID_EXPONENTIAL, 2, rate=rate),
                         PhaseModel(PhaseKind.DISCRETE_BINARY, 2))


def exp_uniform(n, rate=1.0):
    return EnsembleModel(n, AmplitudeModel(AmplitudeKind.IID_EXPONENTIAL, n, rate=rate),
                         PhaseModel(PhaseKind.IID_UNIFORM, n))


def joint_gaussian_three(var=0.04):
    cov = tuple(tuple(var if i == j else 0.0 for j in range(3)) for i in range(3))
    return EnsembleModel(3, AmplitudeModel(AmplitudeKind.JOINT_GAUSSIAN, 3, mean=(1.0, 1.0, 1.0), cov=cov),
                         PhaseModel(PhaseKind.IID_UNIFORM, 3))


@pytest.fixture(scope="session")
def three_table():
    """Three unit amplitudes, 256-point table."""
    return tabulate(EnsembleModel.constant_uniform([1.0, 1.0, 1.0]), 256)


@pytest.fixture(scope="session")
def four_table():
    """Four unit amplitudes, 128-point table."""
    return tabulate(EnsembleModel.constant_uniform([1.0] * 4), 128)


@pytest.fixture(scope="session")
def joint_gaussian_table():
    return tabulate(joint_gaussian_three(), 64)


@pytest.fixture(scope="session")
def mc_samples():
    """Lazily simulated, cached 10^6-draw envelope samples keyed by model name."""
    models = {
        "example1": two_equal(),
        "example2": two_dependent(),
        "general": EnsembleModel.constant_uniform([2.0, 1.0]),
        "three": EnsembleModel.constant_uniform([1.0] * 3),
        "four": EnsembleModel.constant_uniform([1.0] * 4),
        "common_gaussian": common_gaussian(),
        "exp_binary": exp_binary(),
        "joint_gaussian": joint_gaussian_three(),
        "exp_uniform": exp_uniform(3),
    }
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = simulate_envelope(models[name], N_MC, SEEDS[name])
        return cache[name]
    return get


def ks_critical(n, alpha=0.01):
    return math.sqrt(-0.5 * math.log(alpha / 2.0)) / math.sqrt(n)


def ecdf(values, grid):
    v = np.sort(np.asarray(values))
    return np.searchsorted(v, grid, side="right") / v.size


# ---------------------------------------------------------------------------
# Acceptance verdicts: one line per criterion, repeated in the terminal summary
# ---------------------------------------------------------------------------
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(criterion: str, passed: bool, detail: str) -> bool:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
