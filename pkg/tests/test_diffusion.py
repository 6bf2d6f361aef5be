import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from subordlab import diffusion as dm
from subordlab.subordinator import replica_rng

KS_1PCT = 1.63


# -- model spaces ---------------------------------------------------------------

MODELS = [dm.circle(), dm.torus(2), dm.interval(1.0), dm.euclidean(1, q=1.5), dm.euclidean(2, q=3.0),
          dm.ou(1), dm.ou(2, kappa=0.5)]


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.kind}{m.d}")
def test_distance_is_metric_on_samples(model):
    rng = replica_rng(1)
    x, y, z = (dm.sample_invariant(model, 500, rng) for _ in range(3))
    dxy, dyx = model.distance(x, y), model.distance(y, x)
    assert np.all(dxy >= 0)
    np.testing.assert_allclose(dxy, dyx, rtol=0, atol=1e-12)
    assert np.all(model.distance(x, z) <= dxy + model.distance(y, z) + 1e-12)
    np.testing.assert_allclose(model.distance(x, x), 0.0, atol=1e-15)


def test_circle_geodesic():
    c = dm.circle()
    assert c.distance(0.1, 2 * math.pi - 0.1) == pytest.approx(0.2)
    assert c.distance(0.0, math.pi) == pytest.approx(math.pi)


@pytest.mark.parametrize("model", [dm.interval(2.0), dm.euclidean(1, q=1.5), dm.euclidean(1, kappa=2.0, q=3.0),
                                   dm.euclidean(2, q=1.5), dm.ou(1), dm.ou(2)],
                         ids=lambda m: f"{m.kind}{m.d}q{m.q}")
def test_normalizer_matches_quadrature(model):
    if model.d == 1:
        lo, hi = (0.0, model.size) if model.compact else (-np.inf, np.inf)
        z, _ = integrate.quad(lambda x: math.exp(float(model.V(np.array(x)))), lo, hi, epsrel=1e-12)
    else:
        z, _ = integrate.dblquad(lambda y, x: math.exp(float(model.V(np.array([x, y])))),
                                 -np.inf, np.inf, -np.inf, np.inf, epsrel=1e-10)
    assert model.normalizer == pytest.approx(z, rel=1e-6)


def test_perturbed_interval_normalizer():
    U = lambda x: np.sin(2 * np.pi * np.asarray(x))  # noqa: E731
    gU = lambda x: 2 * np.pi * np.cos(2 * np.pi * np.asarray(x))  # noqa: E731
    m = dm.interval(1.0, U=U, grad_U=gU)
    z, _ = integrate.quad(lambda x: math.exp(math.sin(2 * math.pi * x)), 0, 1, epsrel=1e-12)
    assert m.normalizer == pytest.approx(z, rel=1e-8)
    x = dm.sample_invariant(m, 20_000, replica_rng(2))
    ks = stats.kstest(x, m.cdf).statistic
    assert ks < KS_1PCT / math.sqrt(x.size)


def test_constructor_validation():
    with pytest.raises(ValueError):
        dm.euclidean(1, q=1.0)
    with pytest.raises(ValueError):
        dm.euclidean(1, U=lambda x: x)
    with pytest.raises(NotImplementedError):
        dm.interval(1.0, reflecting=False)


def test_model_dict_roundtrip():
    for m in [dm.circle(3.0), dm.torus(2, 1.5), dm.interval(2.0), dm.euclidean(2, 0.5, 1.5), dm.ou(1, 2.0)]:
        assert dm.model_from_dict(m.to_dict()) == m


# -- stepping ---------------------------------------------------------------------

def test_zero_step_is_identity():
    s = dm.DiffusionState(np.array(1.234), 0.5)
    out = dm.step(dm.circle(), s, 0.0, replica_rng(0))
    assert float(out.position) == 1.234 and out.clock == 0.5


def test_step_respects_max_dt():
    m = dm.euclidean(1, q=3.0)
    with pytest.raises(ValueError):
        dm.step(m, dm.DiffusionState(np.zeros(1)), 1.0, replica_rng(0))


def test_blow_up_carries_state():
    m = dm.euclidean(1, q=2.0, U=lambda x: np.zeros_like(x), grad_U=lambda x: np.full_like(x, np.nan))
    st0 = dm.DiffusionState(np.array([0.5]))
    with pytest.raises(dm.DiffusionBlowUp) as exc:
        dm.step(m, st0, 1e-3, replica_rng(0))
    assert exc.value.state is st0


def test_ou_stationary_moments():
    n = 10_000
    x = dm.evolve(dm.ou(1), np.full(n, 3.0), 10.0, replica_rng(3))
    assert abs(x.mean()) <= 4 * x.std() / math.sqrt(n)
    v = x.var(ddof=1)
    assert abs(v - 0.5) <= 4 * 0.5 * math.sqrt(2.0 / (n - 1))


def test_ou_weak_order_one():
    # Euler-Maruyama on euclidean(q=2) is the same SDE as ou(1, 1)
    n, t, dt = 20_000, 1.0, 1e-3
    m = dm.euclidean(1, q=2.0)
    x = dm.evolve(m, np.ones(n), t, replica_rng(4), fine_dt=dt)
    target = math.exp(-2 * t)
    bias = 2 * dt * t * target + 1e-3  # first-order bias bound
    assert abs(x.mean() - target) <= 4 * x.std() / math.sqrt(n) + bias


def test_interval_stays_inside():
    m = dm.interval(1.0)
    rng = replica_rng(5)
    state = dm.DiffusionState(np.full(2000, 0.01))
    for _ in range(200):
        state = dm.step(m, state, 5e-3, rng)
        assert np.all((state.position >= 0.0) & (state.position <= 1.0))
    paths = dm.simulate_at(m, 0.99, np.linspace(0.01, 3, 300), rng)
    assert np.all((paths >= 0) & (paths <= 1))


def test_reflection_preserves_uniform():
    m = dm.interval(1.0)
    x0 = dm.sample_invariant(m, 20_000, replica_rng(6))
    x = dm.evolve(m, x0, 0.3, replica_rng(7))
    assert stats.kstest(x, "uniform").statistic < KS_1PCT / math.sqrt(x.size)


@pytest.mark.parametrize("model", [dm.circle(), dm.euclidean(1, q=1.5), dm.euclidean(1, q=3.0)],
                         ids=lambda m: f"{m.kind}q{m.q}")
@pytest.mark.parametrize("t", [0.5, 1.0])
def test_stationarity(model, t):
    n = 5000
    rng = replica_rng(8, int(t * 10))
    x0 = dm.sample_invariant(model, n, rng)
    x = dm.evolve(model, x0, t, rng)
    ks = stats.kstest(x, model.cdf if not model.periodic else
                      (lambda v: np.asarray(v) / model.size)).statistic
    assert ks < KS_1PCT / math.sqrt(n)


def test_simulate_at_is_reproducible():
    m = dm.euclidean(1, q=1.5)
    a = dm.simulate_at(m, 0.0, [0.3, 1.0, 2.5], replica_rng(9))
    b = dm.simulate_at(m, 0.0, [0.3, 1.0, 2.5], replica_rng(9))
    np.testing.assert_array_equal(a, b)


def test_exact_transition_matches_wrapped_gaussian():
    n = 20_000
    x = dm.transition(dm.circle(), np.zeros(n), 0.7, replica_rng(10))
    # E cos(X_t) = exp(-t) from the heat semigroup on the unit-speed circle
    c = np.cos(x)
    assert abs(c.mean() - math.exp(-0.7)) <= 4 * c.std() / math.sqrt(n)


# -- invariant sampling ---------------------------------------------------------

def test_circle_invariant_uniform():
    x = dm.sample_invariant(dm.circle(), 10_000, replica_rng(11))
    assert dm.ks_uniform_statistic(x, 2 * math.pi) < KS_1PCT / math.sqrt(10_000)


def test_ou_invariant_variance():
    n = 100_000
    x = dm.sample_invariant(dm.ou(1), n, replica_rng(12))
    assert abs(x.var(ddof=1) - 0.5) <= 4 * 0.5 * math.sqrt(2.0 / (n - 1))


def test_power_invariant_moment():
    m = dm.euclidean(1, q=1.5)
    num, _ = integrate.quad(lambda x: abs(x) ** 1.5 * math.exp(-abs(x) ** 1.5), -np.inf, np.inf)
    want = num / m.normalizer
    assert want == pytest.approx(2.0 / 3.0, rel=1e-9)  # Gamma(5/3)/Gamma(2/3)
    n = 100_000
    y = np.abs(dm.sample_invariant(m, n, replica_rng(13))) ** 1.5
    assert abs(y.mean() - want) <= 4 * y.std() / math.sqrt(n)


def test_radial_sampler_in_2d():
    m = dm.euclidean(2, q=3.0)
    x = dm.sample_invariant(m, 50_000, replica_rng(14))
    # kappa |x|^q ~ Gamma(d/q)
    g = np.linalg.norm(x, axis=1) ** 3
    assert stats.kstest(g, stats.gamma(2 / 3).cdf).statistic < KS_1PCT / math.sqrt(g.size)


def test_approximate_sampler_is_flagged():
    m = dm.euclidean(2, q=2.0, U=lambda x: np.zeros(np.shape(x)[:-1]), grad_U=lambda x: np.zeros_like(x))
    _, meta = dm.sample_invariant(m, 5, replica_rng(15), return_meta=True, burn_in=1.0, thin=0.1)
    assert meta["exact"] is False
    _, meta = dm.sample_invariant(dm.ou(2), 5, replica_rng(15), return_meta=True)
    assert meta["exact"] is True


@settings(max_examples=30, deadline=None)
@given(u=st.floats(1e-9, 1 - 1e-9), q=st.sampled_from([1.5, 2.0, 3.0]), kappa=st.floats(0.3, 3.0))
def test_quantile_inverts_cdf(u, q, kappa):
    m = dm.euclidean(1, kappa=kappa, q=q)
    assert float(m.cdf(m.quantile(u))) == pytest.approx(u, rel=1e-9, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-4, 4), k=st.sampled_from([0, 1, 2]), q=st.sampled_from([1.5, 2.0, 3.0]))
def test_partial_moment_matches_quadrature(x, k, q):
    m = dm.euclidean(1, q=q)
    want, _ = integrate.quad(lambda y: y**k * float(m.density(np.array(y))), -np.inf, x, epsabs=1e-13)
    assert float(m.partial_moment(x, k)) == pytest.approx(want, abs=1e-9)


# -- potential moments ------------------------------------------------------------

def test_potential_moments():
    assert dm.potential_moments(dm.circle()).grad_sq == 0.0
    g = dm.potential_moments(dm.euclidean(1, q=2.0)).grad_sq
    assert g == pytest.approx(2.0, rel=1e-9)
    assert dm.potential_moments(dm.ou(1)).grad_sq == pytest.approx(g, rel=1e-12)
    num, _ = integrate.quad(lambda x: 4 * x * x * math.exp(-x * x), -np.inf, np.inf)
    den, _ = integrate.quad(lambda x: math.exp(-x * x), -np.inf, np.inf)
    assert g == pytest.approx(num / den, rel=1e-9)
