import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from disclosure import (
    FocCase, MultimodalWarning, alpha_for_threshold, boundaries, canonicalize, foc_residual, optimize_threshold,
    threshold_outcomes, threshold_scheme, welfare, welfare_derivative,
)
from disclosure.certify import peak_checks, quasiconcavity_check
from disclosure.policy import expected_outcomes
from disclosure.threshold import kink, welfare_grid

from conftest import TNORM, make_instance, qref_welfare_closed_form


def interior_optimum(alpha):
    return 0.95 - 2 * alpha / (1 - alpha)


@pytest.mark.parametrize("e,expected", [(0.7, (0.7, 0.85)), (0.5, (0.6, 0.75)), (0.95, (0.95, 0.95))])
def test_boundaries(qref, e, expected):
    b = boundaries(qref, e)
    assert (b.theta_hat, b.theta_star) == pytest.approx(expected, abs=1e-9)


def test_boundaries_rejects_outside_emissions(qref):
    with pytest.raises(ValueError):
        boundaries(qref, 1.2)


def test_threshold_scheme_cases(qref):
    assert threshold_scheme(qref, 0.7).breaks == pytest.approx((0.7, 0.85))
    assert threshold_scheme(qref, 1.0).describe() == ["[0.6, 0.95] FOLLOW_PEAK"]
    assert threshold_scheme(qref, 0.1).describe() == ["[0.6, 0.95] CONSTANT(1)"]


@pytest.mark.parametrize("e,alpha,expected", [(0.9, 0.5, -0.2330357143), (1.0, 0.0, 0.3054166667),
                                              (1.0, 1.0, -0.775)])
def test_welfare_values(qref, e, alpha, expected):
    assert welfare(qref, e, alpha) == pytest.approx(expected, abs=1e-9)


def test_welfare_matches_closed_form(qref):
    for e in np.linspace(0.0, 1.0, 41):
        for a in (0.0, 0.3, 1.0):
            assert welfare(qref, float(e), a) == pytest.approx(qref_welfare_closed_form(float(e), a), abs=1e-10)


def test_batched_outcomes_match_scalar_path(tnorm):
    c = canonicalize(tnorm)
    es = np.linspace(0.0, 1.0, 37)
    g, p = threshold_outcomes(c, es)
    ref = np.array([expected_outcomes(c, threshold_scheme(c, e)) for e in es])
    assert np.allclose(g, ref[:, 0], atol=1e-13) and np.allclose(p, ref[:, 1], atol=1e-13)


def test_one_sided_derivatives_at_kink(qref):
    assert kink(qref) == pytest.approx(0.9)
    assert welfare_derivative(qref, 0.9, 0.5, "left") == pytest.approx(0.0017857143, abs=1e-9)
    assert welfare_derivative(qref, 0.9, 0.5, "right") == pytest.approx(-0.0696428571, abs=1e-9)


def test_derivative_brackets_interior_root(qref):
    root = interior_optimum(0.01)
    assert welfare_derivative(qref, 0.93, 0.01) < 0
    assert welfare_derivative(qref, root - 1e-3, 0.01) > 0
    assert abs(welfare_derivative(qref, root, 0.01)) < 1e-12


def test_derivative_domain(qref):
    with pytest.raises(ValueError):
        welfare_derivative(qref, 1.0, 0.5, "right")
    with pytest.raises(ValueError):
        welfare_derivative(qref, 0.9, 0.5, "middle")


def test_optimum_at_kink(qref):
    sp = optimize_threshold(qref, 0.5)
    assert sp.e_star == pytest.approx(0.9, abs=1e-9)
    assert sp.foc_case is FocCase.AT_KINK
    assert sp.left_derivative > 0 > sp.right_derivative


@pytest.mark.parametrize("alpha", [0.001, 0.01, 0.02])
def test_interior_optimum_closed_form(qref, alpha):
    sp = optimize_threshold(qref, alpha)
    assert sp.e_star == pytest.approx(interior_optimum(alpha), abs=1e-8)
    assert sp.foc_case is FocCase.ABOVE_KINK


def test_zero_weight_reports_top_peak(qref):
    sp = optimize_threshold(qref, 0.0)
    assert sp.e_star == 0.95 and sp.method == "closed-form"
    assert any("every threshold" in n for n in sp.warnings)


def test_tie_break_on_flat_welfare(qref):
    # alpha = 1 in the uniform case: W is flat on [0.6, 0.9]
    assert optimize_threshold(qref, 1.0, "smallest").e_star == pytest.approx(0.6, abs=1e-9)
    assert optimize_threshold(qref, 1.0, "largest").e_star == pytest.approx(0.9, abs=1e-9)
    with pytest.raises(ValueError):
        optimize_threshold(qref, 0.5, "middle")


def test_optimizer_beats_dense_grid(tnorm):
    es = np.linspace(0.2, 0.95, 3001)
    for alpha in (0.05, 0.2, 0.6, 0.95):
        sp = optimize_threshold(tnorm, alpha)
        assert sp.W >= welfare_grid(tnorm, es, alpha).max() - 1e-10


def test_multimodal_instance_warns():
    bimodal = {"kind": "piecewise-linear-table", "theta": [0.6, 0.65, 0.7, 0.8, 0.9, 0.95],
               "f": [0.2, 5.0, 0.2, 0.2, 5.0, 0.2]}
    inst = make_instance(density=bimodal)
    assert not quasiconcavity_check(inst, 1.0)["quasiconcave"]
    found = []
    for alpha in np.linspace(0.05, 1.0, 20):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            sp = optimize_threshold(inst, float(alpha))
        grid = np.linspace(0.2, 0.95, 3001)
        assert sp.W >= welfare_grid(inst, grid, float(alpha)).max() - 1e-7
        found += [w for w in caught if issubclass(w.category, MultimodalWarning)]
    assert found


def test_foc_residual_cases(qref):
    case, res = foc_residual(qref, 0.9, 0.5)
    assert case is FocCase.AT_KINK and res == 0.0
    case, res = foc_residual(qref, interior_optimum(0.01), 0.01)
    assert case is FocCase.ABOVE_KINK and abs(res) < 1e-12
    case, res = foc_residual(qref, 0.7, 0.01)
    assert case is FocCase.BELOW_KINK and abs(res) > 1e-3


def test_alpha_for_threshold(qref):
    assert alpha_for_threshold(qref, 0.93) == pytest.approx(0.02 / 2.02, abs=1e-9)
    assert alpha_for_threshold(qref, 0.95) == 0.0
    a = alpha_for_threshold(qref, 0.9)
    # the kink is optimal for every weight between the two affine roots
    assert 0.02 / 1.02 < a < 1.0
    assert optimize_threshold(qref, a).e_star == pytest.approx(0.9, abs=1e-9)


def test_alpha_for_threshold_rejects_dominated(tnorm):
    e1 = optimize_threshold(tnorm, 1.0).e_star
    with pytest.raises(ValueError):
        alpha_for_threshold(tnorm, e1 - 0.05)


def test_single_type_economy():
    inst = make_instance(a=0.0, pi0=(0.0, 0.8, -0.5))
    sp = optimize_threshold(inst, 0.5)
    assert sp.e_star == pytest.approx(0.8)
    assert threshold_scheme(inst, 0.5).describe() == ["[0, 0] CONSTANT(1)"]
    assert threshold_scheme(inst, 0.7).describe() == ["[0, 0] CONSTANT(0.7)"]


# -- properties ---------------------------------------------------------------------

@settings(max_examples=50)
@given(st.floats(0.3, 0.95), st.floats(0.0, 1.0), st.sampled_from(["qref", "tnorm"]))
def test_derivative_matches_finite_differences(e, alpha, which):
    inst = make_instance() if which == "qref" else make_instance(density=TNORM)
    if abs(e - kink(inst)) < 1e-4:
        return
    h = 1e-6
    fd = (welfare(inst, e + h, alpha) - welfare(inst, e - h, alpha)) / (2 * h)
    d = welfare_derivative(inst, e, alpha)
    assert abs(d - fd) <= 1e-5 * max(1.0, abs(fd)) + 1e-9


@settings(max_examples=30)
@given(st.floats(0.0, 1.0), st.sampled_from(["qref", "tnorm"]))
def test_optimizer_output_satisfies_first_order_condition(alpha, which):
    inst = make_instance() if which == "qref" else make_instance(density=TNORM)
    sp = optimize_threshold(inst, alpha)
    _, res = foc_residual(inst, sp.e_star, alpha)
    assert abs(res) <= 1e-7


@settings(max_examples=20)
@given(st.floats(0.0, 1.0))
def test_welfare_unimodal_under_strict_quasiconcavity(alpha):
    inst = make_instance(density=TNORM)
    if not quasiconcavity_check(inst, alpha)["strict"]:
        return
    es = np.linspace(0.2, 0.95, 200)
    w = np.array([welfare(inst, float(e), alpha) for e in es])
    d = np.diff(w)
    d[np.abs(d) < 1e-13] = 0
    s = np.sign(d[d != 0])
    assert np.all(np.diff(s) <= 0), "interior strict local minimum"


@settings(max_examples=20)
@given(st.floats(0.0, 1.0), st.sampled_from(["qref", "tnorm"]))
def test_peak_conditions_hold_at_optima(alpha, which):
    inst = make_instance() if which == "qref" else make_instance(density=TNORM)
    sp = optimize_threshold(inst, alpha)
    rep = peak_checks(inst, alpha, sp.e_star)
    assert rep["all_pass"], rep

