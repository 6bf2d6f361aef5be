import json
import math

import numpy as np
import pytest

from subordlab import harness as hs
from subordlab.harness import ExperimentConfig


def _small(**kw):
    base = dict(model={"kind": "circle"}, bernstein={"family": "stable", "alpha": 0.5},
                t_grid=[1.0, 2.0], replicas=4, obs_dt=0.1, seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


# -- config --------------------------------------------------------------------------

def test_default_replicas():
    assert ExperimentConfig().replicas == 200
    assert ExperimentConfig(model={"kind": "ou", "d": 1}).replicas == 64
    assert ExperimentConfig(replicas=7).replicas == 7
    assert ExperimentConfig().fast().replicas == 30


def test_config_roundtrip(tmp_path):
    cfg = _small(distance={"shape": "truncated", "p": 1.0})
    f = tmp_path / "c.json"
    cfg.save(f)
    back = ExperimentConfig.load(f)
    assert back == cfg and back.fingerprint == cfg.fingerprint
    assert _small(seed=4).fingerprint != cfg.fingerprint
    with pytest.raises(ValueError, match="unknown"):
        ExperimentConfig.from_dict({"nope": 1})


def test_fit_validation():
    with pytest.raises(ValueError, match="30 replicas"):
        _small(t_grid=[1.0, 100.0]).validate(for_fit=True)
    with pytest.raises(ValueError, match="decades"):
        _small(replicas=30, t_grid=[1.0, 10.0]).validate(for_fit=True)
    _small(replicas=30, t_grid=[1.0, 40.0]).validate(for_fit=True)
    with pytest.raises(ValueError):
        _small(obs_dt=1e-4).validate()


# -- experiments -------------------------------------------------------------------

def test_degenerate_smoke_run():
    table = hs.run_experiment(_small())
    assert [r.t for r in table.rows] == [1.0, 2.0]
    assert all(r.error is None and r.n == 4 and r.mean > 0 for r in table.rows)
    assert table.notes and table.notes[0].startswith("exact")


def test_bit_identical_rerun():
    a = hs.run_experiment(_small(), keep_samples=True)
    b = hs.run_experiment(_small(), keep_samples=True)
    for ra, rb in zip(a.rows, b.rows):
        np.testing.assert_array_equal(ra.samples, rb.samples)
    c = hs.run_experiment(_small(seed=4), keep_samples=True)
    assert not np.array_equal(a.rows[0].samples, c.rows[0].samples)


def test_failed_row_is_recorded(monkeypatch):
    real = hs.distance_to_invariant

    def flaky(m, model, cost, *a, **kw):
        if m.weights.size > 15:  # only the t = 2 row has this many atoms
            raise RuntimeError("solver down")
        return real(m, model, cost, *a, **kw)

    monkeypatch.setattr(hs, "distance_to_invariant", flaky)
    table = hs.run_experiment(_small())
    ok, bad = table.rows
    assert ok.error is None and ok.mean > 0
    assert bad.error == "RuntimeError: solver down" and math.isnan(bad.mean) and bad.n == 0
    assert table.summary()["failures"] == {"2.0": "RuntimeError: solver down"}


# -- exponents ---------------------------------------------------------------------

@pytest.mark.parametrize("args,want", [((1, 1.5, 0.0), (-2.0 / 3.0, "subcritical", False)),
                                       ((1, 2.0, 0.0), (-1.0, "critical", True)),
                                       ((1, 3.0, 0.5), (-1.0, "supercritical", False))],
                         ids=["sub", "crit", "super"])
def test_theoretical_exponent(args, want):
    e, regime, logf = hs.theoretical_exponent(*args)
    assert e == pytest.approx(want[0], rel=1e-12)
    assert (regime, logf) == want[1:]


def test_theoretical_exponent_rejects_q():
    with pytest.raises(ValueError):
        hs.theoretical_exponent(1, 1.0, 0.0)


def test_fit_exact_power():
    t = np.logspace(0, 3, 8)
    fit = hs.fit_exponent((t, 5.0 / t))
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(5.0), abs=1e-12)


def test_fit_noisy_power():
    rng = np.random.default_rng(0)
    t = np.logspace(1, 3, 10)
    y = 3 * t ** (-2 / 3) * (1 + 0.01 * rng.standard_normal(t.size))
    fit = hs.fit_exponent((t, y), se=0.01 * y)
    assert abs(fit.slope + 2 / 3) <= 0.05
    assert fit.preferred == "power"


def test_fit_prefers_log_model():
    t = np.logspace(1, 4, 12)
    y = np.log(np.log1p(t)) / t
    fit = hs.fit_exponent((t, y))
    assert fit.preferred == "log"


def test_fit_window_and_size():
    t = np.logspace(0, 3, 8)
    with pytest.raises(ValueError):
        hs.fit_exponent((t, 1 / t), window=(1.0, 5.0))
    fit = hs.fit_exponent((t, 1 / t), window=(2.0, 1000.0))
    assert fit.n == 7


def test_upper_index():
    from subordlab import bernstein as bf
    assert hs.upper_index(bf.stable(0.4)) == 0.4
    assert hs.upper_index(bf.linear()) == 1.0
    assert hs.upper_index(bf.b2()) == 0.0


# -- brackets -----------------------------------------------------------------------

def test_sandwich_divergent_on_torus_b2():
    rep = hs.sandwich_check(_small(model={"kind": "torus", "d": 2}, bernstein={"family": "b2"}))
    assert rep["verdict"] == "divergent" and rep["estimate"] is None


def test_sandwich_smoke():
    rep = hs.sandwich_check(_small(t_grid=[8.0], replicas=8))
    assert rep["verdict"] in ("inside", "outside")
    lo, hi = rep["bracket"]
    assert lo == pytest.approx(0.8 * rep["lower_sum"]["sum"])
    assert hi == pytest.approx(1.2 * rep["upper_sum"]["sum"])
    assert rep["upper_sum"]["sum"] == pytest.approx(4 * rep["lower_sum"]["sum"], rel=1e-6)


def test_lower_bound_suite_structure():
    cfg = _small(t_grid=[2.0, 4.0, 8.0, 16.0], replicas=6, distance={"bins": 512})
    rep = hs.lower_bound_suite(cfg, quant_N=(8, 16, 32, 64))
    assert set(rep["verdicts"]) == {"w1_slope", "no_downward_trend", "quantization", "dual_certificate"}
    assert rep["verdicts"]["quantization"] and rep["verdicts"]["dual_certificate"]
    assert rep["quantizer_slope"] == pytest.approx(-1.0, abs=0.05)


# -- outputs ------------------------------------------------------------------------

def test_outputs(tmp_path):
    table = hs.run_experiment(_small())
    csv_path, json_path = hs.write_outputs(table, str(tmp_path), "rates", {"ok": True},
                                           {"sum": math.inf, "arr": np.array([1.0, np.nan])})
    lines = open(csv_path).read().splitlines()
    assert lines[0] == "t,mean,se,n" and len(lines) == 3
    text = open(json_path).read()
    d = json.loads(text, parse_constant=lambda c: pytest.fail(f"non-strict constant {c}"))
    assert d["config_fingerprint"] == table.fingerprint and d["seed"] == 3
    assert d["sum"] is None and d["arr"] == [1.0, None]
