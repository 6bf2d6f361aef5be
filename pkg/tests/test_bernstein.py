import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subordlab import bernstein as bf

FAMILIES = [bf.linear(), bf.stable(0.3), bf.stable(0.5), bf.stable(0.8), bf.gamma(),
            bf.b1(0.25), bf.b1(0.5), bf.b1(0.75), bf.b2()]


# -- evaluation ---------------------------------------------------------------

def test_closed_forms():
    assert bf.evaluate(bf.b2(), 1.0) == pytest.approx(0.5, abs=1e-15)
    assert bf.evaluate(bf.stable(0.5), 4.0) == pytest.approx(2.0, abs=1e-15)
    assert bf.evaluate(bf.b1(0.0), 1.0) == pytest.approx(0.5, abs=1e-15)
    assert bf.evaluate(bf.gamma(), math.e - 1) == pytest.approx(1.0, abs=1e-15)
    assert bf.evaluate(bf.linear(), 3.5) == 3.5


def test_negative_argument_rejected():
    with pytest.raises(ValueError):
        bf.evaluate(bf.stable(0.5), -1.0)


def test_from_tag_forms():
    assert bf.from_tag("stable", 0.5) == bf.stable(0.5)
    assert bf.from_tag("stable(0.5)") == bf.stable(0.5)
    assert bf.from_tag("B2").family == "b2"
    with pytest.raises(ValueError):
        bf.from_tag("stable")
    with pytest.raises(ValueError):
        bf.from_tag("nope")


@pytest.mark.parametrize("B", FAMILIES, ids=lambda B: B.tag)
def test_nonnegative_nondecreasing(B):
    lam = np.logspace(-6, 10, 400)
    v = bf.evaluate(B, lam)
    assert np.all(v >= 0)
    assert np.all(np.diff(v) >= 0)


@pytest.mark.parametrize("B", FAMILIES, ids=lambda B: B.tag)
def test_alternating_differences(B):
    assert bf.alternating_differences(B, np.logspace(-3, 4, 60))


@given(st.lists(st.floats(0.0, 1e9, allow_nan=False), min_size=1, max_size=50))
def test_b1_zero_equals_b2(lams):
    lam = np.asarray(lams)
    np.testing.assert_allclose(bf.evaluate(bf.b1(0.0), lam), bf.evaluate(bf.b2(), lam), rtol=0, atol=1e-14)


def test_custom_family():
    B = bf.custom(lambda x: np.sqrt(x) + x)
    assert B(4.0) == pytest.approx(6.0)
    rep = bf.classify(B, 0.5)
    assert rep.in_B_upper_alpha.verdict == "yes"
    assert rep.in_B_lower_alpha.verdict == "no"


# -- classification -------------------------------------------------------------

@pytest.mark.parametrize("a", [0.25, 0.5, 0.75])
def test_b1_memberships(a):
    B = bf.b1(a)
    # bounded, so the limsup condition holds for every exponent in [0, 1)
    for beta in (0.0, a, 0.99):
        assert bf.classify(B, beta).in_B_lower_alpha.verdict == "yes"
    assert bf.classify(B, 0.0).in_B_upper_alpha.verdict == "yes"
    assert bf.classify(B, a).in_B_upper_alpha.verdict == "no"
    for d in (1, 2, 3):
        assert bf.check_condition_1_2(B, d, 1.0).verdict == "infinite"


def test_b2_memberships():
    B = bf.b2()
    for beta in (0.0, 0.3, 0.5, 1.0):
        assert bf.classify(B, beta).in_B_lower_alpha.verdict == "yes"
    assert bf.classify(B, 0.0).in_B_upper_alpha.verdict == "yes"
    for beta in (0.1, 0.3, 0.7, 1.0):
        assert bf.classify(B, beta).in_B_upper_alpha.verdict == "no"
    assert bf.check_condition_1_2(B, 2, 1.0).verdict == "infinite"


def test_grid_heuristic_agrees_with_closed_form():
    for B, a in [(bf.b1(0.5), 0.5), (bf.b2(), 0.3), (bf.stable(0.7), 0.7), (bf.linear(), 0.5)]:
        rep = bf.classify(B, a)
        assert rep.in_B_upper_alpha.grid_verdict == rep.in_B_upper_alpha.verdict
        assert rep.in_B_lower_alpha.grid_verdict == rep.in_B_lower_alpha.verdict


def test_stable_equality_case():
    rep = bf.classify(bf.stable(0.7), 0.7)
    assert rep.in_B_upper_alpha.verdict == rep.in_B_lower_alpha.verdict == "yes"
    np.testing.assert_allclose(rep.in_B_upper_alpha.ratios, 1.0, rtol=1e-12)


def test_probe_grid_requirements():
    with pytest.raises(ValueError):
        bf.classify(bf.b2(), 0.5, probe_grid=np.logspace(0, 5, 20))
    with pytest.raises(ValueError):
        bf.classify(bf.b2(), 1.5)


def test_integrability_finite_cases():
    c = bf.check_condition_1_2(bf.stable(0.5), 2, 1.0)
    assert c.verdict == "finite"
    # int_1^inf exp(-sqrt r) dr = 4/e
    assert c.estimate == pytest.approx(4.0 / math.e, rel=1e-7)
    c = bf.check_condition_1_2(bf.linear(), 1, 1.0)
    assert c.estimate == pytest.approx(math.sqrt(math.pi) * math.erfc(1.0), rel=1e-7)


def test_report_json_roundtrip():
    import json
    rep = bf.classify(bf.b1(0.5), 0.5, pairs=[(1, 1.0)])
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["in_B_lower_alpha"]["verdict"] == "yes"
    assert d["satisfies_1_2"]["d=1,t=1"]["verdict"] == "infinite"


# -- constants -------------------------------------------------------------------

# maximum of (1 - (1+t)^(-1/2)) / t^(1/2), attained at the golden ratio
B1_HALF_KAPPA_UPPER = 0.3002831060


def test_bound_constants_fixtures():
    assert bf.bound_constants(bf.stable(0.5), 0.5) == pytest.approx((1.0, 1.0), abs=1e-12)
    kl, _ = bf.bound_constants(bf.linear(), 1.0)
    assert kl == pytest.approx(1.0, abs=1e-12)
    kl, ku = bf.bound_constants(bf.b1(0.5), 0.5)
    assert kl is None
    assert ku == pytest.approx(B1_HALF_KAPPA_UPPER, abs=1e-6)
    dense = np.linspace(1.5, 1.75, 200_001)
    _, ku = bf.bound_constants(bf.b1(0.5), 0.5, grid=dense)
    assert ku == pytest.approx(B1_HALF_KAPPA_UPPER, abs=1e-10)


def test_bound_constants_prerequisite():
    # b2 has liminf b2/lam**0.5 = 0, so only the upper constant exists
    kl, ku = bf.bound_constants(bf.b2(), 0.5)
    assert kl is None and ku is not None


@pytest.mark.parametrize("B,a", [(bf.stable(0.3), 0.3), (bf.gamma(), 0.2), (bf.b1(0.25), 0.5),
                                 (bf.b2(), 0.0), (bf.linear(), 1.0), (bf.stable(0.8), 0.5)],
                         ids=str)
def test_bound_constants_sandwich_on_grid(B, a):
    grid = np.logspace(-8, 8, 1601)
    kl, ku = bf.bound_constants(B, a, grid=grid)
    v = bf.evaluate(B, grid)
    if kl is not None:
        assert np.all(kl * np.minimum(grid, grid**a) <= v * (1 + 1e-12))
    if ku is not None:
        assert np.all(v <= ku * grid**a * (1 + 1e-12))
