import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from disclosure import (
    DisclosurePolicy, EmissionScheme, Menu, Mode, Region, belief_compatible_menu, best_response, canonicalize,
    check_implementable, equilibrium_scheme, is_finer,
)
from disclosure.policy import coarsen, policy_outcomes, random_policy, write_scheme_csv

from conftest import make_instance, qref_threshold_closed_form

CAP = 1.0


def test_transparent_menu_is_interval():
    assert belief_compatible_menu(DisclosurePolicy.full_disclosure(CAP)).intervals == ((0.0, 1.0),)


def test_threshold_menu():
    m = belief_compatible_menu(DisclosurePolicy.threshold(0.7, CAP))
    assert m.intervals == ((0.0, 0.7), (1.0, 1.0))
    assert 0.5 in m and 0.85 not in m and 1.0 in m


def test_mixed_menu_merges_pooled_top_with_transparent_region():
    d = DisclosurePolicy((Region(0, 0.4, Mode.POOLED), Region(0.4, 0.8, Mode.TRANSPARENT),
                          Region(0.8, 1.0, Mode.POOLED)))
    assert belief_compatible_menu(d).intervals == ((0.4, 0.8), (1.0, 1.0))


def test_policy_validation():
    with pytest.raises(ValueError):
        DisclosurePolicy((Region(0.1, 1.0, Mode.POOLED),))
    with pytest.raises(ValueError):
        DisclosurePolicy((Region(0.0, 0.5, Mode.POOLED), Region(0.6, 1.0, Mode.POOLED)))


def test_policy_dict_round_trip():
    d = DisclosurePolicy.threshold(0.7, CAP)
    assert DisclosurePolicy.from_dict(d.to_dict()) == d


@pytest.mark.parametrize("theta,menu,expected", [
    (0.8, Menu(((0.0, 1.0),)), 0.8),
    (0.8, Menu(((0.0, 0.7), (1.0, 1.0))), 0.7),
    (0.95, Menu(((0.2, 0.2), (1.0, 1.0))), 1.0),
])
def test_best_response(qref, theta, menu, expected):
    assert best_response(qref, theta, menu) == pytest.approx(expected, abs=1e-12)


def test_best_response_tie_goes_low():
    # type 0.75: pi(0.5) = 0.25 = pi(1)
    assert best_response(make_instance(), 0.75, Menu(((0.5, 0.5), (1.0, 1.0)))) == 0.5


def test_schemes_of_named_policies(qref):
    assert equilibrium_scheme(qref, DisclosurePolicy.full_disclosure(CAP)).describe() == ["[0.6, 0.95] FOLLOW_PEAK"]
    assert equilibrium_scheme(qref, DisclosurePolicy.no_disclosure(CAP)).describe() == ["[0.6, 0.95] CONSTANT(1)"]


def test_threshold_scheme_structure(qref):
    s = equilibrium_scheme(qref, DisclosurePolicy.threshold(0.7, CAP))
    assert [seg.describe() for seg in s.segments] == ["FOLLOW_PEAK", "CONSTANT(0.7)", "CONSTANT(1)"]
    assert s.breaks == pytest.approx((0.7, 0.85), abs=1e-9)
    c = canonicalize(qref)
    # interval ends: (0.7, 0.85] pools at 0.7, (0.85, 0.95] at the cap
    assert s.emission(c, [0.7, 0.7000001, 0.85, 0.8500001]) == pytest.approx([0.7, 0.7, 0.7, 1.0])


@pytest.mark.parametrize("policy,expected", [
    (DisclosurePolicy.full_disclosure(CAP), (0.775, 0.3054166667)),
    (DisclosurePolicy.no_disclosure(CAP), (1.0, 0.275)),
    (DisclosurePolicy.threshold(0.7, CAP), (0.7714285714, 0.3022619048)),
])
def test_expected_outcomes(qref, policy, expected):
    assert policy_outcomes(qref, policy) == pytest.approx(expected, abs=1e-9)


def test_expected_outcomes_match_closed_form_on_many_thresholds(qref):
    for e in np.linspace(0.05, 1.0, 23):
        got = policy_outcomes(qref, DisclosurePolicy.threshold(float(e), CAP))
        assert got == pytest.approx(qref_threshold_closed_form(float(e)), abs=1e-9)


def test_profit_reported_in_original_units():
    shifted = make_instance(b=0.3)
    base = policy_outcomes(make_instance(), DisclosurePolicy.full_disclosure(CAP))
    got = policy_outcomes(shifted, DisclosurePolicy.full_disclosure(CAP))
    assert got[0] == pytest.approx(base[0])
    assert got[1] == pytest.approx(base[1] - 0.3 * 0.775)


def test_is_finer_examples():
    full = DisclosurePolicy.full_disclosure(CAP)
    assert is_finer(full, DisclosurePolicy.threshold(0.3, CAP))
    assert is_finer(DisclosurePolicy.threshold(0.8, CAP), DisclosurePolicy.threshold(0.7, CAP))
    assert not is_finer(DisclosurePolicy.no_disclosure(CAP), DisclosurePolicy.threshold(0.5, CAP))


def test_implementability(qref):
    c = canonicalize(qref)
    ok, _ = check_implementable(qref, equilibrium_scheme(qref, DisclosurePolicy.threshold(0.7, CAP)))
    assert ok
    assert check_implementable(qref, EmissionScheme.follow_peak(c))[0]
    ok, witness = check_implementable(qref, EmissionScheme.constant(c, 0.4))
    assert not ok
    assert witness["kind"] == "IR" and witness["theta"] == pytest.approx(0.95)
    assert witness["violation"] == pytest.approx(0.15)


def test_scheme_csv(tmp_path, qref):
    path = tmp_path / "scheme.csv"
    write_scheme_csv(path, qref, equilibrium_scheme(qref, DisclosurePolicy.threshold(0.7, CAP)), n=5,
                     header_comment="instance sha256=abc")
    lines = path.read_text().splitlines()
    assert lines[0] == "# instance sha256=abc"
    assert lines[1] == "theta,emission,profit"
    assert len(lines) == 7


# -- properties over random policies -------------------------------------------------

INSTANCES = [
    make_instance(),
    make_instance(density={"kind": "truncated-normal", "mean": 0.775, "sd": 0.1}),
    make_instance(pi0=(0.0, 0.3, -0.4, 0.0, -0.1), lower=0.5, upper=1.1,
                  density={"kind": "piecewise-linear-table", "theta": [0.5, 0.8, 1.1], "f": [1, 3, 1]}),
]
seeds = st.integers(0, 2**32 - 1)
which = st.integers(0, len(INSTANCES) - 1)


@given(seeds, which)
def test_coarsening_never_raises_any_types_profit(seed, k):
    inst = INSTANCES[k]
    c = canonicalize(inst)
    rng = np.random.default_rng(seed)
    fine = random_policy(rng, inst.emission_cap)
    n = len(fine.regions)
    i = int(rng.integers(0, n))
    j = int(rng.integers(i, n))
    coarse = coarsen(fine, range(i, j + 1))
    assert is_finer(fine, coarse)
    theta = c.type_grid(101)
    e1 = equilibrium_scheme(c, fine).emission(c, theta)
    e2 = equilibrium_scheme(c, coarse).emission(c, theta)
    assert np.all(c.profit(theta, e1) >= c.profit(theta, e2) - 1e-9)


@given(seeds, which)
def test_named_policies_are_extreme(seed, k):
    inst = INSTANCES[k]
    d = random_policy(np.random.default_rng(seed), inst.emission_cap)
    g, p = policy_outcomes(inst, d)
    g_none, p_none = policy_outcomes(inst, DisclosurePolicy.no_disclosure(inst.emission_cap))
    _, p_full = policy_outcomes(inst, DisclosurePolicy.full_disclosure(inst.emission_cap))
    assert g_none >= g - 1e-9
    assert p_none <= p + 1e-9
    assert p_full >= p - 1e-9


@settings(max_examples=25)
@given(seeds, which)
def test_equilibrium_schemes_implementable_and_monotone(seed, k):
    inst = INSTANCES[k]
    c = canonicalize(inst)
    scheme = equilibrium_scheme(c, random_policy(np.random.default_rng(seed), inst.emission_cap))
    ok, witness = check_implementable(c, scheme, grid_size=101)
    assert ok, witness
    assert np.all(np.diff(scheme.emission(c, c.type_grid(401))) >= -1e-12)


@given(seeds, which)
def test_scheme_agrees_with_pointwise_best_response(seed, k):
    inst = INSTANCES[k]
    c = canonicalize(inst)
    d = random_policy(np.random.default_rng(seed), inst.emission_cap)
    theta = c.type_grid(57)
    menu = belief_compatible_menu(d)
    direct = best_response(c, theta, menu)
    scheme = equilibrium_scheme(c, d).emission(c, theta)
    assert np.allclose(c.profit(theta, direct), c.profit(theta, scheme), atol=1e-9)
