"""Monte Carlo reference: moments, empirical tables, KS machinery, determinism and persistence."""

import math

import numpy as np
import pytest

from envdist import closed_form as cf
from envdist.eged import EnvelopeDistribution, tabulate
from envdist.errors import ConfigError, DomainError, EmptyInput, GridMismatch
from envdist.mc import (EnvelopeSamples, empirical_distribution, freedman_diaconis, ks_distance, ks_test,
                        ks_threshold, ks_two_sample, load_samples, save_samples, simulate_envelope)
from envdist.models import EnsembleModel
from envdist.rng import CHUNK_SIZE
from envdist.sinusoid import envelope_bounds

from .conftest import SEEDS, N_MC, exp_binary, two_equal

SQRT2 = math.sqrt(2.0)


class TestSimulate:
    def test_power_of_three(self, mc_samples):
        b2 = mc_samples("three").values ** 2
        se = b2.std(ddof=1) / math.sqrt(b2.size)
        assert abs(b2.mean() - 3.0) < 3 * se

    def test_binary_exponential_mean(self, mc_samples):
        s = mc_samples("exp_binary")
        assert abs(s.mean() - 1.5) < 3 * s.stderr()

    @pytest.mark.parametrize("name, mags", [("three", [1, 1, 1]), ("four", [1, 1, 1, 1]), ("general", [2, 1])])
    def test_inside_support(self, mc_samples, name, mags):
        v = mc_samples(name).values
        b = envelope_bounds(mags)
        assert v.min() >= b.m - 1e-12 and v.max() <= b.M + 1e-12

    def test_provenance(self, mc_samples):
        s = mc_samples("example1")
        assert s.seed == SEEDS["example1"] and s.size == N_MC
        assert s.model_digest == two_equal().digest()

    def test_deterministic(self):
        m = EnsembleModel.constant_uniform([1.0, 0.4, 0.9])
        a = simulate_envelope(m, 3 * CHUNK_SIZE + 17, 5)
        b = simulate_envelope(m, 3 * CHUNK_SIZE + 17, 5)
        assert np.array_equal(a.values, b.values)

    def test_thread_count_irrelevant(self):
        m = EnsembleModel.constant_uniform([1.0, 0.4, 0.9])
        a = simulate_envelope(m, 3 * CHUNK_SIZE + 17, 5, threads=1)
        b = simulate_envelope(m, 3 * CHUNK_SIZE + 17, 5, threads=3)
        assert np.array_equal(a.values, b.values)

    def test_seeds_independent(self):
        m = EnsembleModel.constant_uniform([1.0, 1.0, 1.0])
        d, crit = ks_two_sample(simulate_envelope(m, 200_000, 1), simulate_envelope(m, 200_000, 2))
        assert d < crit

    def test_bad_count(self):
        with pytest.raises(DomainError):
            simulate_envelope(two_equal(), 0, 1)


class TestEmpirical:
    def test_median_of_example1(self, mc_samples):
        d = empirical_distribution(mc_samples("example1"), [1.0, SQRT2, 1.9])
        assert d.cdf[1] == pytest.approx(0.5, abs=2e-3)
        assert d.method == "MC" and d.meta["n_samples"] == N_MC

    def test_step_cdf(self):
        d = empirical_distribution(np.full(10, 2.0), [1.0, 1.999, 2.0, 3.0], bin_width=0.1)
        np.testing.assert_array_equal(d.cdf, [0.0, 0.0, 1.0, 1.0])
        # zero IQR falls back to the grid spacing
        assert empirical_distribution(np.full(10, 2.0), [1.0, 2.0, 3.0]).meta["bin_width"] == 1.0

    def test_three_peaks_near_one(self, mc_samples):
        grid = np.linspace(0.05, 2.95, 59)
        d = empirical_distribution(mc_samples("three"), grid, bin_width=0.05)
        assert abs(grid[np.argmax(d.pdf)] - 1.0) <= 0.05

    def test_histogram_is_bin_average(self):
        v = np.array([0.1, 0.2, 0.25, 0.9])
        d = empirical_distribution(v, [0.2, 0.9], bin_width=0.2)
        np.testing.assert_allclose(d.pdf, [3 / (4 * 0.2), 1 / (4 * 0.2)])

    def test_freedman_diaconis(self):
        v = np.arange(1000, dtype=float)
        q75, q25 = np.percentile(v, [75, 25])
        assert freedman_diaconis(v) == pytest.approx(2 * (q75 - q25) / 10.0)

    def test_empty(self):
        with pytest.raises(EmptyInput):
            empirical_distribution(np.array([]), [0.0, 1.0])

    def test_bad_grid(self):
        with pytest.raises(DomainError):
            empirical_distribution(np.ones(3), [1.0, 0.5])


class TestKolmogorovSmirnov:
    def test_threshold(self):
        assert ks_threshold(1) == pytest.approx(1.6276, abs=1e-4)
        assert ks_threshold(10 ** 6) == pytest.approx(1.6276e-3, abs=1e-7)
        with pytest.raises(DomainError):
            ks_threshold(0)

    def test_identical(self):
        d = tabulate(cf.family("TWO_EQUAL_UNIFORM", 1.0), 32)
        assert ks_distance(d, d) == 0.0

    def test_example1_passes(self, mc_samples):
        analytic = tabulate(cf.family("TWO_EQUAL_UNIFORM", 1.0), 256)
        res = ks_test(empirical_distribution(mc_samples("example1"), analytic.grid), analytic)
        assert res.passed and res.n == N_MC

    def test_negative_control(self, mc_samples):
        """Independent-phase samples against the dependent-phase law must be rejected."""
        wrong = tabulate(cf.family("TWO_DEPENDENT", 1.0), 256, extra_points=[1.0])
        res = ks_test(empirical_distribution(mc_samples("example1"), wrong.grid), wrong)
        assert not res.passed
        assert res.distance >= 1 / 3 - 1 / 9 - ks_threshold(N_MC)

    def test_grid_mismatch(self):
        a = tabulate(cf.family("TWO_EQUAL_UNIFORM", 1.0), 32)
        b = tabulate(cf.family("TWO_EQUAL_UNIFORM", 1.0), 40)
        with pytest.raises(GridMismatch):
            ks_distance(a, b)

    def test_all_nan(self):
        g = np.linspace(0, 1, 4)
        a = EnvelopeDistribution(g, np.zeros(4), np.full(4, np.nan))
        with pytest.raises(GridMismatch):
            ks_distance(a, a)

    def test_two_sample_empty(self):
        with pytest.raises(EmptyInput):
            ks_two_sample(np.array([]), np.ones(3))


class TestPersistence:
    def test_round_trip(self, tmp_path):
        s = simulate_envelope(exp_binary(), 1000, 3)
        data, side = save_samples(s, tmp_path / "run")
        assert data.stat().st_size == 8000
        back = load_samples(tmp_path / "run")
        assert np.array_equal(back.values, s.values)
        assert (back.seed, back.model_digest) == (s.seed, s.model_digest)

    def test_count_mismatch(self, tmp_path):
        s = simulate_envelope(exp_binary(), 10, 3)
        data, _ = save_samples(s, tmp_path / "run")
        data.write_bytes(data.read_bytes()[:-8])
        with pytest.raises(ConfigError):
            load_samples(tmp_path / "run")

    def test_samples_validated(self):
        with pytest.raises(DomainError):
            EnvelopeSamples(np.array([1.0, -0.5]), 0, "x")
