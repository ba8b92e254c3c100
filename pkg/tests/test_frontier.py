import math

import numpy as np
import pytest

from disclosure import (
    MultimodalWarning, alpha_for_threshold, build_certificate, foc_residual, full_disclosure_only, full_disclosure_point,
    no_disclosure_point, optimize_threshold, pareto_filter, trace_frontier, verify_certificate, welfare,
)
from disclosure.frontier import write_frontier_csv

from conftest import TNORM, make_instance, qref_threshold_closed_form

EXP_UP = {"kind": "truncated-exponential", "rate": 2.0}


@pytest.fixture(scope="module")
def qref_front():
    return trace_frontier(make_instance(), 101)


@pytest.fixture(scope="module")
def tnorm_front():
    return trace_frontier(make_instance(density=TNORM), 41)


def test_reference_frontier_endpoints(qref_front):
    first, last = qref_front[0], qref_front[-1]
    assert (first.Gamma, first.Pi) == pytest.approx((0.7714285714, 0.3053571429), abs=1e-9)
    assert first.e_star == pytest.approx(0.9) and "kink" in first.flags
    assert (last.Gamma, last.Pi) == pytest.approx((0.775, 0.3054166667), abs=1e-9)
    assert last.e_star == 0.95 and last.alpha == 0.0


def test_reference_interior_points_follow_closed_form(qref_front):
    for p in qref_front:
        if 0 < p.alpha and p.e_star > 0.9 + 1e-9:
            assert p.e_star == pytest.approx(0.95 - 2 * p.alpha / (1 - p.alpha), abs=1e-8)
        assert (p.Gamma, p.Pi) == pytest.approx(qref_threshold_closed_form(p.e_star), abs=1e-9)


def test_two_weights_give_endpoints_only():
    pts = trace_frontier(make_instance(), 2)
    assert [p.alpha for p in pts] == [1.0, 0.0]
    assert [p.e_star for p in pts] == pytest.approx([0.9, 0.95])


def test_frontier_is_deterministic():
    a = trace_frontier(make_instance(density=TNORM), 11)
    b = trace_frontier(make_instance(density=TNORM), 11)
    assert [p.to_dict() for p in a] == [p.to_dict() for p in b]


def test_alpha_count_validated():
    with pytest.raises(ValueError):
        trace_frontier(make_instance(), 1)


def test_heuristic_flag_for_non_log_concave_density():
    dip = make_instance(density={"kind": "piecewise-linear-table", "theta": [0.6, 0.75, 0.95], "f": [3, 1, 3]})
    with pytest.warns(MultimodalWarning):
        pts = trace_frontier(dip, 6)
    assert all("heuristic" in p.flags for p in pts)


def test_frontier_invariants(tnorm_front):
    inst = make_instance(density=TNORM)
    full = full_disclosure_point(inst)
    assert tnorm_front[-1].Gamma == pytest.approx(full.Gamma) and tnorm_front[-1].Pi == pytest.approx(full.Pi)
    assert max(p.Gamma for p in tnorm_front) == pytest.approx(full.Gamma)
    assert np.all(np.diff([p.Gamma for p in tnorm_front]) > 0)
    assert np.all(np.diff([p.Pi for p in tnorm_front]) > 0)
    for p in tnorm_front:
        assert abs(foc_residual(inst, p.e_star, p.alpha)[1]) <= 1e-7
        assert verify_certificate(build_certificate(inst, p.alpha, p.e_star))["all_pass"]


def test_supporting_weight_round_trip(tnorm_front):
    inst = make_instance(density=TNORM)
    for p in tnorm_front:
        a = alpha_for_threshold(inst, p.e_star)
        best = optimize_threshold(inst, a)
        assert welfare(inst, p.e_star, a) >= best.W - 1e-6


def test_named_points():
    q = make_instance()
    full = full_disclosure_point(q)
    none = no_disclosure_point(q)
    assert (full.Gamma, full.Pi, full.alpha) == pytest.approx((0.775, 0.3054166667, 0.0))
    assert (none.Gamma, none.Pi) == pytest.approx((1.0, 0.275))
    assert math.isnan(none.alpha)
    single = make_instance(a=0.0, pi0=(0.0, 0.8, -0.5))
    assert (full_disclosure_point(single).Gamma, full_disclosure_point(single).Pi) == pytest.approx((0.8, 0.32))
    assert (no_disclosure_point(single).Gamma, no_disclosure_point(single).Pi) == pytest.approx((1.0, 0.3))
    shifted = full_disclosure_point(make_instance(b=0.3))
    assert shifted.Pi == pytest.approx(full.Pi - 0.3 * 0.775)
    assert no_disclosure_point(make_instance(density=TNORM)).Gamma == 1.0


def test_pareto_filter_examples():
    assert pareto_filter([(1, 0.275), (0.775, 0.3054)]) == [(0.775, 0.3054)]
    assert pareto_filter([(0.5, 0.2)]) == [(0.5, 0.2)]
    assert pareto_filter([(0.8, 0.3), (0.5, 0.2)]) == [(0.5, 0.2), (0.8, 0.3)]
    # equal pairs are not strictly dominated by each other
    assert len(pareto_filter([(0.5, 0.2), (0.5, 0.2)])) == 2


def test_full_disclosure_only():
    assert full_disclosure_only(make_instance()) == (False, None)
    ok, witness = full_disclosure_only(make_instance(lower=0.9, upper=1.2, density=EXP_UP))
    assert ok and witness == pytest.approx(1.0)


def test_frontier_csv(tmp_path, qref_front):
    path = tmp_path / "front.csv"
    write_frontier_csv(path, qref_front, header_comment="instance sha256=0")
    lines = path.read_text().splitlines()
    assert lines[:2] == ["# instance sha256=0", "alpha,e_star,gamma,pi,w,flags"]
    assert len(lines) == 2 + len(qref_front)
