"""Exact envelope distributions of sums of random-phase sinusoids.

The envelope ``B_n`` of ``sum_i A_i cos(w t + phi_i)`` is tabulated from
closed forms (two components, Gaussian and exponential amplitude families),
from the expectation-with-indicator density formula (any ``n``), or from the
half-angle quadratic cdf formula, and checked against seeded Monte Carlo.
BPSK error rates over the resulting fading laws are compared with the
Rayleigh (Gaussian-approximation) curve.
"""

from .ber import BerCurve, ber_curve, ber_exact, ber_rayleigh_ga, ber_simulate, ga_gap_db, mean_square_envelope
from .closed_form import (ClosedFormDensity, Family, cdf_two_dependent, cdf_two_equal_uniform, cdf_two_general,
                          family, pdf_common_gaussian, pdf_common_gaussian_integral, pdf_exp_mixture,
                          pdf_two_dependent, pdf_two_equal_uniform, pdf_two_general)
from .eddhapt import QuadraticRegion, eddhapt_cdf, quadratic_region
from .eged import (EnvelopeDistribution, eged_pdf, pdf_four_uniform, pdf_three_elliptic, pdf_three_uniform,
                   tabulate)
from .errors import (BranchError, ConfigError, DomainError, EnvDistError, GridMismatch, GridTooCoarse,
                     NotBracketed, NumericalError, QuadratureError, SingularPath, UnnormalizedDistribution,
                     UnsupportedModel)
from .mc import EnvelopeSamples, empirical_distribution, ks_distance, ks_test, simulate_envelope
from .models import AmplitudeKind, AmplitudeModel, EnsembleModel, PhaseKind, PhaseModel
from .sinusoid import SinusoidVector, SupportBounds, envelope_bounds, resultant

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
