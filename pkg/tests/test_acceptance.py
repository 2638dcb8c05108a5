"""Acceptance criteria, one test (and one printed verdict line) per criterion.

Tolerances and runtime budgets are pinned below.  Criteria that the
mathematics cannot meet are still evaluated and fail visibly; the analysis
is kept in the project's decision ledger.
"""

import csv
import io
import math
import time

import numpy as np
import pytest
from scipy import integrate as sp_integrate

from envdist import closed_form as cf
from envdist.ber import ber_curve, ga_gap_db
from envdist.cli import RunConfig, figure_csv
from envdist.eddhapt import tabulate_cdf
from envdist.eged import (EnvelopeDistribution, _cell_integral, eged_pdf, pdf_three_elliptic, pdf_three_uniform,
                          tabulate)
from envdist.mc import empirical_distribution, ks_test, ks_threshold, simulate_envelope
from envdist.models import EnsembleModel

from .conftest import N_MC, common_gaussian, exp_uniform, record_acceptance, two_dependent, two_equal

pytestmark = pytest.mark.acceptance

# pinned tolerances
TOL_CLOSED_CDF = 1e-12
TOL_CROSS_THEOREM = 1e-4
TOL_NORM_CLOSED, TOL_NORM_GAUSSIAN, TOL_NORM_THREE, TOL_NORM_FOUR = 1e-9, 1e-6, 1e-4, 1e-3
KS_ALPHA = 0.01
TOL_ELLIPTIC = 1e-6
SINGULAR_HEIGHT = 1e3
GAP_TARGET_BER = 1e-2
GAP_THREE, GAP_FOUR, GAP_WIDTH = 3.0, 1.5, 1.0
SIM_SE = 3.0
TOL_CLT_DB = 0.2
TOL_K0_REL = 1e-8
# runtime budgets in seconds
BUDGET = {"1": 1.0, "2": 60.0, "3": 300.0, "4": 600.0, "fig4": 1800.0}

SNR_FINE = np.arange(0.0, 30.0 + 1e-9, 0.25)


def _equal_power(n):
    return EnsembleModel.constant_uniform([1.0 / math.sqrt(n)] * n)


def test_1_closed_form_fidelity():
    t0 = time.perf_counter()
    a = float(cf.cdf_two_equal_uniform(1.0, 1.0))
    b = float(cf.cdf_two_dependent(1.0, 1.0))
    elapsed = time.perf_counter() - t0
    ok = abs(a - 1 / 3) <= TOL_CLOSED_CDF and abs(b - 1 / 9) <= TOL_CLOSED_CDF and elapsed < BUDGET["1"]
    assert record_acceptance("1", ok, f"cdf errors {abs(a - 1 / 3):.1e}, {abs(b - 1 / 9):.1e} "
                                      f"(tol {TOL_CLOSED_CDF:g}); {elapsed * 1e3:.2f} ms")


def _integrated_eged(model, grid):
    """Cumulative integral of the conditioning-form pdf, cell by cell (square-root rule at the singular end)."""
    M = model.support_bounds().M
    cdf = [0.0]
    for lo, hi in zip(grid[:-1], grid[1:]):
        pts, jac = _cell_integral(lo, hi, False, hi == M)
        cdf.append(cdf[-1] + math.fsum(eged_pdf(model, p) * j for p, j in zip(pts, jac)))
    return np.array(cdf)


def test_2_cross_theorem_agreement():
    details, ok = [], True
    for name, model in (("example1", two_equal()), ("example2", two_dependent())):
        t0 = time.perf_counter()
        half_angle = tabulate_cdf(model, 128)
        conditioned = _integrated_eged(model, half_angle.grid)
        elapsed = time.perf_counter() - t0
        diff = float(np.max(np.abs(half_angle.cdf - conditioned)))
        ok &= diff <= TOL_CROSS_THEOREM and elapsed < BUDGET["2"]
        details.append(f"{name} sup {diff:.1e} in {elapsed:.1f} s")
    assert record_acceptance("2", ok, "; ".join(details) + f" (tol {TOL_CROSS_THEOREM:g})")


def test_3_normalisation(three_table, four_table):
    t0 = time.perf_counter()
    masses = {
        "two_equal": (cf.family("TWO_EQUAL_UNIFORM", 1.0).total_mass(), TOL_NORM_CLOSED),
        "two_dependent": (cf.family("TWO_DEPENDENT", 1.0).total_mass(), TOL_NORM_CLOSED),
        "two_general": (cf.family("TWO_GENERAL", 2.0, 1.0).total_mass(), TOL_NORM_CLOSED),
        "exp_mixture": (cf.family("EXP_MIXTURE", 1.0).total_mass(), TOL_NORM_CLOSED),
        "three": (float(three_table.cdf[-1]), TOL_NORM_THREE),
        "four": (float(four_table.cdf[-1]), TOL_NORM_FOUR),
    }
    # integral form of the common-Gaussian law, integrated by nested quadrature
    f = lambda b: cf.pdf_common_gaussian_integral(1.0, b)  # noqa: E731
    head = sp_integrate.quad(f, 0.0, 1.0, epsabs=1e-12, epsrel=1e-10, limit=200)[0]
    tail = sp_integrate.quad(f, 1.0, 24.0, epsabs=1e-12, epsrel=1e-10, limit=200)[0]
    masses["common_gaussian_integral"] = (head + tail, TOL_NORM_GAUSSIAN)
    elapsed = time.perf_counter() - t0
    worst = {k: abs(m - 1.0) / tol for k, (m, tol) in masses.items()}
    ok = all(v <= 1.0 for v in worst.values()) and elapsed < BUDGET["3"]
    detail = ", ".join(f"{k} {abs(m - 1):.1e}" for k, (m, _) in masses.items())
    assert record_acceptance("3", ok, f"|mass - 1|: {detail}; {elapsed:.1f} s")


def test_4_monte_carlo_oracles(mc_samples, three_table, four_table, joint_gaussian_table):
    t0 = time.perf_counter()
    tables = {
        "example1": cf.family("TWO_EQUAL_UNIFORM", 1.0),
        "example2": cf.family("TWO_DEPENDENT", 1.0),
        "general": cf.family("TWO_GENERAL", 2.0, 1.0),
        "common_gaussian": cf.family("COMMON_GAUSSIAN", 1.0),
        "exp_binary": cf.family("EXP_MIXTURE", 1.0),
    }
    analytic = {k: tabulate(v, 256) for k, v in tables.items()}
    analytic["example2/eged"] = tabulate(two_dependent(), 256)
    analytic["example1/eddhapt"] = tabulate_cdf(two_equal(), 128)
    analytic["example2/eddhapt"] = tabulate_cdf(two_dependent(), 128)
    analytic["three/eddhapt"] = tabulate_cdf(EnsembleModel.constant_uniform([1.0] * 3), 128)
    analytic["three"] = three_table
    analytic["four"] = four_table
    analytic["joint_gaussian"] = joint_gaussian_table
    analytic["exp_uniform"] = tabulate(exp_uniform(3), 64)
    results = {}
    for key, table in analytic.items():
        samples = mc_samples(key.split("/")[0])
        results[key] = ks_test(empirical_distribution(samples, table.grid), table, alpha=KS_ALPHA)
    elapsed = time.perf_counter() - t0
    failed = [k for k, r in results.items() if not r.passed]
    worst = max(results.items(), key=lambda kv: kv[1].distance)
    ok = not failed and elapsed < BUDGET["4"]
    assert record_acceptance("4", ok, f"{len(results) - len(failed)}/{len(results)} cdfs pass KS at "
                                      f"threshold {ks_threshold(N_MC, KS_ALPHA):.5f}; worst {worst[0]} "
                                      f"{worst[1].distance:.5f}; {elapsed:.0f} s")


def test_5a_elliptic_cross_check(caplog):
    grid = np.concatenate([np.linspace(0.01, 0.99, 25), np.linspace(1.01, 2.99, 25)])
    diffs = [abs(pdf_three_elliptic(b) - pdf_three_uniform((1.0, 1.0, 1.0), b)) for b in grid]
    worst = max(diffs)
    # a fallback to quadrature would make the comparison vacuous
    fallbacks = sum("elliptic form rejected" in r.getMessage() for r in caplog.records)
    assert record_acceptance("5a", worst <= TOL_ELLIPTIC and fallbacks == 0,
                             f"elliptic vs quadrature at {grid.size} points, worst {worst:.1e} "
                             f"(tol {TOL_ELLIPTIC:g}), {fallbacks} quadrature fallbacks")


def test_5b_singularity_height():
    """The density diverges at b = 1, but only logarithmically."""
    lo = pdf_three_uniform((1.0, 1.0, 1.0), 1.0 - 1e-3)
    hi = pdf_three_uniform((1.0, 1.0, 1.0), 1.0 + 1e-3)
    assert math.isinf(pdf_three_uniform((1.0, 1.0, 1.0), 1.0))
    ok = min(lo, hi) > SINGULAR_HEIGHT
    record_acceptance("5b", ok, f"pdf(1 -+ 1e-3) = {lo:.4f}, {hi:.4f} vs required > {SINGULAR_HEIGHT:g} "
                                "(logarithmic singularity; see ledger)")
    assert ok


@pytest.fixture(scope="module")
def fig4_rows():
    t0 = time.perf_counter()
    text = figure_csv("fig4", RunConfig("figures", snr="0:2:30", bits=1_000_000, seed=0))
    return list(csv.DictReader(io.StringIO(text))), time.perf_counter() - t0


def test_6_ber_reproduction(fig4_rows):
    gaps = {}
    for n, size in ((3, 256), (4, 128)):
        curve = ber_curve(tabulate(_equal_power(n), size), SNR_FINE, n_components=n)
        gaps[n] = ga_gap_db(curve, GAP_TARGET_BER)
    rows, elapsed = fig4_rows
    worst, worst_at = 0.0, None
    for r in rows:
        p, sim = float(r["ber_exact"]), float(r["ber_sim"])
        se = math.sqrt(max(p * (1 - p), 1e-300) / 1_000_000)
        z = abs(sim - p) / se
        if z > worst:
            worst, worst_at = z, (r["n"], r["phase_model"], r["snr_db"])
    ok3 = abs(gaps[3] - GAP_THREE) <= GAP_WIDTH
    ok4 = abs(gaps[4] - GAP_FOUR) <= GAP_WIDTH
    ok_sim = worst <= SIM_SE
    ok = ok3 and ok4 and ok_sim and elapsed < BUDGET["fig4"]
    record_acceptance("6", ok, f"gap n=3 {gaps[3]:.2f} dB ({'ok' if ok3 else 'out of'} 3+-1), "
                               f"n=4 {gaps[4]:.2f} dB ({'ok' if ok4 else 'out of'} 1.5+-1); "
                               f"simulation worst {worst:.2f} SE at {worst_at} over {len(rows)} points; "
                               f"fig4 in {elapsed:.0f} s")
    assert ok


def test_7_clt_onset():
    n = 32
    samples = simulate_envelope(_equal_power(n), N_MC, 32)
    grid = np.linspace(0.0, float(samples.values.max()), 2048)
    emp = empirical_distribution(samples, grid)
    table = EnvelopeDistribution(grid, emp.pdf, emp.cdf, method="MC")
    gap = ga_gap_db(ber_curve(table, SNR_FINE, n_components=n), GAP_TARGET_BER)
    assert record_acceptance("7", abs(gap) <= TOL_CLT_DB,
                             f"n=32 Monte Carlo law vs Rayleigh approximation: {gap:+.3f} dB (tol {TOL_CLT_DB})")


def test_8_k0_sign():
    b = np.linspace(0.2, 6.0, 59)
    rel = [abs(cf.pdf_common_gaussian(1.0, x) / cf.pdf_common_gaussian_integral(1.0, x) - 1.0) for x in b]
    positive = bool(np.all(cf.pdf_common_gaussian(1.0, b) > 0))
    ok = max(rel) <= TOL_K0_REL and positive
    assert record_acceptance("8", ok, f"positive-sign K0 form vs integral form, worst relative {max(rel):.1e} "
                                      f"over {b.size} points (tol {TOL_K0_REL:g})")
