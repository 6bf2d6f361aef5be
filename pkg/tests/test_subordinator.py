import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from subordlab import bernstein as bf
from subordlab.bernstein import LevyTriplet
from subordlab.subordinator import (fractional_moment, positive_stable, replica_rng, sample_increments,
                                    sample_marginal, validate_laplace)

# E[S_1^(1/2)] for b2 by quadrature; agreed with a 1e6-sample MC (0.70997 +- 0.00070)
B2_HALF_MOMENT = 0.7102719520

BUILTINS = [bf.linear(), bf.stable(0.3), bf.stable(0.5), bf.stable(0.8), bf.gamma(), bf.b1(0.5), bf.b2()]


def test_linear_is_identity():
    p = sample_increments(bf.linear(), [0.0, 1.0, 2.0], replica_rng(0))
    np.testing.assert_array_equal(p.values, [0.0, 1.0, 2.0])


def test_b2_no_jump_probability():
    # total Levy mass of exp(-x) dx is 1, so P(S_1 = 0) = exp(-1)
    mass, _ = integrate.quad(lambda x: math.exp(-x), 0, np.inf)
    assert mass == pytest.approx(1.0)
    lam = 0.7
    val, _ = integrate.quad(lambda x: (1 - math.exp(-lam * x)) * math.exp(-x), 0, np.inf)
    assert val == pytest.approx(lam / (1 + lam), rel=1e-10)
    n = 100_000
    s = sample_marginal(bf.b2(), 1.0, n, replica_rng(11))
    frac = np.mean(s == 0.0)
    se = math.sqrt(math.exp(-1) * (1 - math.exp(-1)) / n)
    assert abs(frac - math.exp(-1)) <= 4 * se


def test_stable_laplace_mean():
    n = 100_000
    s = sample_marginal(bf.stable(0.5), 1.0, n, replica_rng(12))
    y = np.exp(-s)
    assert abs(y.mean() - math.exp(-1)) <= 4 * y.std(ddof=1) / math.sqrt(n)


def test_linear_laplace_exact_zero():
    chk = validate_laplace(bf.linear(), 1.0, 1.0, 10_000, replica_rng(0))
    assert chk.z == 0.0


@pytest.mark.parametrize("B,lam,t", [(bf.b2(), 1.0, 1.0), (bf.stable(0.3), 2.0, 0.5),
                                     (bf.gamma(), 0.5, 1.0), (bf.b1(0.5), 2.0, 0.5)],
                         ids=["b2", "stable0.3", "gamma", "b1"])
def test_laplace_conformance(B, lam, t):
    chk = validate_laplace(B, lam, t, 100_000, replica_rng(5, 1))
    assert abs(chk.z) <= 4


def test_validate_needs_samples():
    with pytest.raises(ValueError):
        validate_laplace(bf.b2(), 1.0, 1.0, 100, replica_rng(0))


@pytest.mark.parametrize("B", BUILTINS, ids=lambda B: B.tag)
def test_paths_nondecreasing(B):
    grid = np.linspace(0, 10, 501)
    p = sample_increments(B, grid, replica_rng(3))
    assert p.values[0] == 0.0
    assert np.all(np.diff(p.values) >= 0)
    assert p.grid is grid or np.array_equal(p.grid, grid)


def test_grid_validation():
    with pytest.raises(ValueError):
        sample_increments(bf.b2(), [0.0, 1.0, 1.0], replica_rng(0))
    with pytest.raises(ValueError):
        sample_increments(bf.b2(), [-1.0, 1.0], replica_rng(0))


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
def test_stable_self_similarity(alpha):
    n = 10_000
    t = 3.0
    st_ = sample_marginal(bf.stable(alpha), t, n, replica_rng(21, 1)) / t ** (1 / alpha)
    s1 = sample_marginal(bf.stable(alpha), 1.0, n, replica_rng(21, 2))
    ks = stats.ks_2samp(st_, s1).statistic
    # two-sample statistic compared with the one-sample 1% scale, widened by sqrt(2)
    assert ks < 1.63 * math.sqrt(2.0 / n)


def test_positive_stable_half_is_levy():
    # alpha = 1/2: X = 1/(4 G) with G ~ Gamma(1/2), i.e. a Levy law with scale 1/2
    x = positive_stable(0.5, 10_000, replica_rng(4))
    ks = stats.kstest(x, stats.levy(scale=0.5).cdf).statistic
    assert ks < 1.63 / math.sqrt(10_000)


@pytest.mark.parametrize("B", [bf.stable(0.5), bf.gamma(), bf.b2()], ids=lambda B: B.tag)
def test_increment_independence(B):
    n = 20_000
    a = np.empty(n)
    b = np.empty(n)
    for i in range(n // 1000):
        rng = replica_rng(31, i)
        for j in range(1000):
            p = sample_increments(B, [0.0, 1.0, 2.0], rng)
            a[i * 1000 + j], b[i * 1000 + j] = p.increments
    rho = stats.spearmanr(a, b).statistic
    assert abs(rho) <= 4 / math.sqrt(n)


def test_replica_streams_distinct_and_reproducible():
    x = replica_rng(7, 1, 2).random(4)
    np.testing.assert_array_equal(x, replica_rng(7, 1, 2).random(4))
    assert not np.array_equal(x, replica_rng(7, 2, 1).random(4))
    assert not np.array_equal(x, replica_rng(8, 1, 2).random(4))


def test_fractional_moment_fixtures():
    assert fractional_moment(bf.linear(), 1.0, 0.5) == pytest.approx(1.0, rel=1e-8)
    assert fractional_moment(bf.linear(), 0.25, 0.5) == pytest.approx(0.5, rel=1e-8)
    assert fractional_moment(bf.b2(), 1.0, 0.5) == pytest.approx(B2_HALF_MOMENT, rel=1e-9)
    with pytest.raises(ValueError):
        fractional_moment(bf.linear(), 4.0, 0.5)
    with pytest.raises(ValueError):
        fractional_moment(bf.linear(), 1.0, 1.0)


@settings(max_examples=15, deadline=None)
@given(r=st.floats(0.05, 1.0), p=st.floats(0.1, 0.9))
def test_fractional_moment_stable_closed_form(r, p):
    # S_r = r^(1/a) S_1 and E[S_1^p] = Gamma(1 - p/a) / Gamma(1 - p) for p < a
    a = 0.95
    want = r ** (p / a) * math.gamma(1 - p / a) / math.gamma(1 - p)
    assert fractional_moment(bf.stable(a), r, p) == pytest.approx(want, rel=1e-6)


@pytest.mark.parametrize("B", [bf.gamma(), bf.b1(0.5)], ids=lambda B: B.tag)
def test_fractional_moment_matches_mc(B):
    n = 200_000
    s = sample_marginal(B, 0.7, n, replica_rng(41))
    y = s**0.5
    assert abs(y.mean() - fractional_moment(B, 0.7, 0.5)) <= 4 * y.std(ddof=1) / math.sqrt(n)


def test_custom_family_with_levy_triplet():
    # jump density exp(-x) rebuilt from a table: Laplace exponent lam/(1+lam)
    trip = LevyTriplet.from_density(0.0, lambda x: np.exp(-x), cutoff=1e-4)
    B = bf.custom(lambda lam: lam / (1 + lam), levy_triplet=trip)
    chk = validate_laplace(B, 1.0, 1.0, 100_000, replica_rng(51))
    assert abs(chk.z) <= 4


def test_custom_family_without_triplet():
    with pytest.raises(ValueError, match="levy_triplet"):
        sample_marginal(bf.custom(np.sqrt), 1.0, 10, replica_rng(0))
