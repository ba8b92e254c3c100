"""Equilibrium, optimisation and verification tools for emission-disclosure policies."""

from .density import (
    Density, PiecewiseLinear, PointMass, TruncatedExponential, TruncatedNormal, Uniform, density_from_dict,
)
from .model import (
    AssumptionError, CanonicalInstance, ModelInstance, canonicalize, participation_floor, peak_emission,
    profit, validate_assumptions,
)
from .policy import (
    DisclosurePolicy, EmissionScheme, Menu, Mode, Region, Segment, belief_compatible_menu, best_response,
    check_implementable, equilibrium_scheme, expected_outcomes, is_finer,
)
from .threshold import (
    FocCase, MultimodalWarning, ScalarizedPoint, ThresholdBoundaries, alpha_for_threshold, boundaries, foc_residual,
    optimize_threshold, threshold_outcomes, threshold_scheme, welfare, welfare_derivative,
)
from .certify import (
    Certificate, CertificateError, build_certificate, log_concavity_check, quasiconcavity_check, verify_certificate,
)
from .frontier import (
    FrontierPoint, full_disclosure_only, full_disclosure_point, no_disclosure_point, pareto_filter, trace_frontier,
)
from .oracle import (
    DiscreteInstance, discrete_equilibrium, discrete_pareto_frontier, discretize, enumerate_menus, intro_fixture,
    oracle_vs_threshold,
)

__version__ = "0.1.0"
