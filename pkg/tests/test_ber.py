"""BPSK error rate over envelope laws: by-parts integral, Rayleigh reference, simulation, dB gaps."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from envdist import closed_form as cf
from envdist.ber import (BerCurve, ber_curve, ber_exact, ber_rayleigh_ga, ber_simulate, ber_tail_bound,
                         ga_gap_db, mean_square_envelope, point_mass, rayleigh_distribution, wilson_interval)
from envdist.eged import EnvelopeDistribution, tabulate
from envdist.errors import DomainError, NotBracketed, UnnormalizedDistribution
from envdist.models import EnsembleModel
from envdist.special import q_function

from .conftest import two_dependent, two_equal

Q_SQRT2 = 0.078649603525142565329   # mpmath
RAYLEIGH_AT_ONE = 0.1464466094067262378  # (1 - sqrt(1/2)) / 2, mpmath


def _binomial_se(p, n):
    return math.sqrt(p * (1 - p) / n)


@pytest.fixture(scope="module")
def example1_table():
    return tabulate(cf.family("TWO_EQUAL_UNIFORM", 1.0), 256)


class TestExact:
    def test_point_mass_is_awgn(self):
        assert ber_exact(point_mass(1.0), 1.0) == pytest.approx(Q_SQRT2, rel=1e-10)

    @given(st.floats(0.0, 30.0))
    def test_point_mass_any_snr(self, g):
        assert ber_exact(point_mass(1.0), g) == pytest.approx(float(q_function(math.sqrt(2 * g))), rel=1e-9,
                                                              abs=1e-300)

    def test_zero_snr(self, example1_table):
        assert ber_exact(example1_table, 0.0) == 0.5

    def test_strictly_decreasing(self, three_table):
        vals = [ber_exact(three_table, g) for g in np.logspace(-2, 3, 30)]
        assert np.all(np.diff(vals) < 0)
        assert all(0 < v <= 0.5 for v in vals)

    def test_rayleigh_tabulation(self):
        assert ber_exact(rayleigh_distribution(1.0), 1.0) == pytest.approx(RAYLEIGH_AT_ONE, abs=1e-6)

    def test_mean_square(self, example1_table, three_table):
        assert mean_square_envelope(example1_table) == pytest.approx(2.0, abs=1e-6)
        assert mean_square_envelope(three_table) == pytest.approx(3.0, abs=1e-4)
        assert mean_square_envelope(EnsembleModel.constant_uniform([1.0, 2.0])) == pytest.approx(5.0)
        with pytest.raises(DomainError):
            mean_square_envelope(two_dependent())

    def test_dependent_curve_differs(self, example1_table):
        dep = tabulate(cf.family("TWO_DEPENDENT", 1.0), 256)
        assert abs(ber_exact(dep, 5.0) - ber_exact(example1_table, 5.0)) > 1e-3

    def test_unnormalised(self):
        g = np.linspace(0, 1, 16)
        bad = EnvelopeDistribution(g, np.ones(16), 0.5 * g)
        with pytest.raises(UnnormalizedDistribution):
            ber_exact(bad, 1.0)

    def test_negative_snr(self, example1_table):
        with pytest.raises(DomainError):
            ber_exact(example1_table, -1.0)

    def test_tail_bound_bounded_support(self, example1_table):
        assert ber_tail_bound(example1_table, 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_point_mass_domain(self):
        with pytest.raises(DomainError):
            point_mass(0.0)


class TestGaussianApproximation:
    def test_zero(self):
        assert ber_rayleigh_ga(0.0) == 0.5

    def test_infinite(self):
        assert ber_rayleigh_ga(math.inf) == 0.0

    def test_unit(self):
        assert ber_rayleigh_ga(1.0) == pytest.approx(RAYLEIGH_AT_ONE, rel=1e-14)

    def test_domain(self):
        with pytest.raises(DomainError):
            ber_rayleigh_ga(-0.1)


class TestSimulation:
    def test_three_at_ten_db(self, three_table):
        sim = ber_simulate(EnsembleModel.constant_uniform([1.0] * 3), [10.0], 1_000_000, 21)
        exact = ber_exact(three_table, 10.0 / mean_square_envelope(three_table))
        assert abs(sim.ber[0] - exact) < 3 * _binomial_se(exact, sim.bits)

    def test_example1_at_ten_db(self, example1_table):
        sim = ber_simulate(two_equal(), [10.0], 1_000_000, 22)
        exact = ber_exact(example1_table, 10.0 / 2.0)
        assert abs(sim.ber[0] - exact) < 3 * _binomial_se(exact, sim.bits)

    def test_noise_free(self):
        sim = ber_simulate(EnsembleModel.constant_uniform([1.0]), [60.0], 10_000, 1)
        assert sim.ber[0] == 0.0

    def test_pure_noise(self):
        sim = ber_simulate(EnsembleModel.constant_uniform([1.0]), [-40.0], 100_000, 2)
        # still not exactly one half: Q(sqrt(2e-4)) = 0.49436
        exact = float(q_function(math.sqrt(2e-4)))
        assert abs(sim.ber[0] - exact) < 3 * _binomial_se(exact, 100_000)
        assert sim.ci_low[0] <= sim.ber[0] <= sim.ci_high[0]
        assert abs(sim.ber[0] - 0.5) < 0.01

    def test_deterministic(self):
        a = ber_simulate(two_equal(), [0.0, 5.0], 20_000, 3)
        b = ber_simulate(two_equal(), [0.0, 5.0], 20_000, 3)
        np.testing.assert_array_equal(a.ber, b.ber)

    def test_too_few_bits(self):
        with pytest.raises(DomainError):
            ber_simulate(two_equal(), [0.0], 100, 0)

    def test_wilson(self):
        lo, hi = wilson_interval(50, 100)
        assert lo < 0.5 < hi
        assert wilson_interval(0, 100)[0] == pytest.approx(0.0, abs=1e-15)
        with pytest.raises(DomainError):
            wilson_interval(0, 0)


def _synthetic(shift_db):
    snr = np.arange(0.0, 31.0, 1.0)
    ga = np.array([ber_rayleigh_ga(10 ** (s / 10)) for s in snr])
    exact = np.array([ber_rayleigh_ga(10 ** ((s + shift_db) / 10)) for s in snr])
    return BerCurve(snr, exact, ga, 2, "IID_UNIFORM")


class TestCurvesAndGaps:
    def test_identical_columns(self):
        assert ga_gap_db(_synthetic(0.0), 1e-2) == pytest.approx(0.0, abs=1e-12)

    def test_shifted_columns(self):
        # the exact column reaches each BER 2 dB earlier: the approximation is pessimistic by 2 dB
        assert ga_gap_db(_synthetic(2.0), 1e-2) == pytest.approx(2.0, abs=0.05)

    def test_not_bracketed(self):
        with pytest.raises(NotBracketed):
            ga_gap_db(_synthetic(0.0), 1e-6)

    def test_target_domain(self):
        with pytest.raises(DomainError):
            ga_gap_db(_synthetic(0.0), 0.7)

    def test_curve_columns(self, example1_table):
        snr = np.arange(0.0, 21.0, 2.0)
        sim = ber_simulate(two_equal(), snr, 10_000, 4)
        curve = ber_curve(example1_table, snr, n_components=2, simulated=sim)
        assert np.all(np.diff(curve.ber_exact) < 0) and np.all(np.diff(curve.ber_ga) < 0)
        lines = curve.to_csv().splitlines()
        assert lines[0] == "snr_db,ber_exact,ber_ga,ber_sim,sim_ci_low,sim_ci_high,n,phase_model"
        assert len(lines) == snr.size + 1
        assert curve.meta["mean_square"] == pytest.approx(2.0, abs=1e-6)

    def test_curve_grid_mismatch(self, example1_table):
        sim = ber_simulate(two_equal(), [0.0, 1.0], 10_000, 4)
        with pytest.raises(DomainError):
            ber_curve(example1_table, [0.0, 2.0], n_components=2, simulated=sim)

    def test_invalid_column(self):
        with pytest.raises(DomainError):
            BerCurve([0.0], [0.7], [0.1], 1, "x")
