import numpy as np
import pytest
from hypothesis import settings

from disclosure import ModelInstance

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def make_instance(lower=0.6, upper=0.95, density=None, pi0=(0.0, 0.0, -0.5), a=-1.0, b=0.0, cap=1.0):
    doc = {"emission_cap": cap, "pi0": list(pi0), "a": a, "b": b,
           "types": {"lower": lower, "upper": upper, "density": density or {"kind": "uniform"}}}
    return ModelInstance.from_dict(doc)


QREF_DOC = {"emission_cap": 1.0, "pi0": [0.0, 0.0, -0.5], "a": -1.0, "b": 0.0,
            "types": {"lower": 0.6, "upper": 0.95, "density": {"kind": "uniform"}}}
TNORM = {"kind": "truncated-normal", "mean": 0.775, "sd": 0.1}


@pytest.fixture
def qref():
    return make_instance()


@pytest.fixture
def tnorm():
    return make_instance(density=TNORM)


# Closed-form outcomes of a threshold policy on the quadratic uniform instance,
# written out independently of the package's quadrature.
LO, HI = 0.6, 0.95
WIDTH = HI - LO


def qref_threshold_closed_form(e):
    th = min(max(e, LO), HI)
    ts = min(max((e + 1.0) / 2.0, th), HI)
    if e < 2 * LO - 1:
        th = ts = LO
    gamma = ((th ** 2 - LO ** 2) / 2 + e * (ts - th) + (HI - ts)) / WIDTH
    pi = ((th ** 3 - LO ** 3) / 6
          + e * (ts ** 2 - th ** 2) / 2 - e * e / 2 * (ts - th)
          + (HI ** 2 - ts ** 2) / 2 - (HI - ts) / 2) / WIDTH
    return gamma, pi


def qref_welfare_closed_form(e, alpha):
    g, p = qref_threshold_closed_form(e)
    return -alpha * g + (1 - alpha) * p


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
