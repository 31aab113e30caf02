from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate, special

from roma.errors import ConfigError
from roma.simulation import (
    CampaignConfig,
    ScenarioSpec,
    _draw_noise,
    g_one,
    g_two,
    generate,
    h_one,
    h_two,
    reference_inner,
    run_campaign,
    true_effects,
    with_scales,
)

FAST = CampaignConfig(tune=False, eps=0.1, eps_tilde=0.05, bandwidth_x=0.5, bandwidth_m=0.5)


class TestFormulas:
    def test_g_one_at_zero(self):
        assert g_one(0.0) == pytest.approx(np.e / 2)

    def test_h_one_at_zero(self):
        assert h_one(0.0) == 1.0

    def test_scenario_two_functions(self):
        assert g_two(0.0) == pytest.approx(1.0)
        assert h_two(0.0) == pytest.approx(1.0 + np.e / 2)

    def test_standard_normal_self_inner(self):
        assert reference_inner(0.0, 1.0, 0.0, 1.0, 20_000) == pytest.approx(1.0, abs=1e-3)

    def test_inner_matches_quadrature(self):
        mu, sd, a, s = 0.3, 0.8, 0.7, 0.5
        want = integrate.quad(lambda t: (mu + sd * special.ndtri(t)) * (a + s * special.ndtri(t)), 0, 1)[0]
        assert reference_inner(mu, sd, a, s, 50_000) == pytest.approx(want, abs=1e-3)


class TestSpec:
    def test_unknown_setting(self):
        with pytest.raises(ConfigError):
            ScenarioSpec("III.1")

    def test_small_n(self):
        with pytest.raises(ConfigError):
            ScenarioSpec("I.1", n=5)

    def test_scales_only_for_first_setting(self):
        with pytest.raises(ConfigError):
            with_scales(ScenarioSpec("I.2"), 0.0, 1.0)

    def test_kernel_modes(self):
        assert ScenarioSpec("II.1").kernel_mode == "linear"
        assert ScenarioSpec("II.5").kernel_mode == "nonlinear"


class TestGenerate:
    def test_deterministic(self):
        spec = ScenarioSpec("I.2", n=30, m=20, seed=4)
        a, b = generate(spec), generate(spec)
        assert np.array_equal(a.x, b.x) and np.array_equal(a.m_draws, b.m_draws) and np.array_equal(a.y, b.y)

    def test_shapes(self):
        d = generate(ScenarioSpec("I.1", n=25, m=15))
        assert d.x.shape == (25,) and d.m_draws.shape == (25, 15) and d.y.shape == (25, 15)
        assert np.all(np.diff(d.m_draws, axis=1) >= 0)
        assert generate(ScenarioSpec("II.5", n=25, m=15)).y.shape == (25,)

    def test_inverse_gamma_mean(self):
        rng = np.random.default_rng(0)
        nz = _draw_noise(ScenarioSpec("II.1"), rng, 200_000, False, False)
        assert nz.sd_m.mean() == pytest.approx(0.5 * 3.0 / 3.0, rel=0.02)

    def test_laplace_scale(self):
        rng = np.random.default_rng(0)
        nz = _draw_noise(ScenarioSpec("II.1"), rng, 200_000, False, False)
        assert nz.u.var() == pytest.approx(2.0, rel=0.03)

    def test_uniform_mediator_noise(self):
        rng = np.random.default_rng(0)
        u = _draw_noise(ScenarioSpec("I.4"), rng, 50_000, False, False).u
        assert u.min() >= -1 and u.max() <= 1 and u.var() == pytest.approx(1 / 3, rel=0.03)


class TestTruth:
    @pytest.mark.parametrize("sid", ["I.3", "I.4", "II.3", "II.7"])
    def test_no_indirect_effect(self, sid):
        t = true_effects(ScenarioSpec(sid, m=20), size=2000)
        assert np.all(np.abs(t.nie) <= 3 * t.se["nie"] + 1e-12)

    def test_no_direct_effect(self):
        t = true_effects(with_scales(ScenarioSpec("I.1", m=20), 0.0, 1.0), size=2000)
        assert np.allclose(t.nde, 0.0)

    def test_no_indirect_path(self):
        t = true_effects(with_scales(ScenarioSpec("I.1", m=20), 1.0, 0.0), size=2000)
        assert np.allclose(t.nie, 0.0) and not np.allclose(t.nde, 0.0)

    def test_indirect_scale_grows_effect(self):
        small = true_effects(with_scales(ScenarioSpec("I.1", m=20), 1.0, 1.0), size=2000)
        big = true_effects(with_scales(ScenarioSpec("I.1", m=20), 1.0, 2.0), size=2000)
        assert np.linalg.norm(big.nie) > 1.8 * np.linalg.norm(small.nie)

    def test_linear_direct_effect(self):
        t = true_effects(ScenarioSpec("II.1"), 1.0, 0.0, size=20_000)
        assert t.nde[0] == pytest.approx(-2.0, abs=1e-10)

    def test_te_decomposition(self):
        t = true_effects(ScenarioSpec("I.2", m=20), size=2000)
        assert np.allclose(t.te, t.nde + t.nie)


class TestCampaign:
    def test_smoke(self):
        r = run_campaign(ScenarioSpec("I.1", n=30, m=20), 2, FAST, oracle_size=2000)
        assert r.n_ok == 2 and not r.failures
        assert all(0 <= v <= 1 for v in list(r.coverage.values()) + list(r.rejection.values()))
        assert all(v[1] >= 0 for v in r.mse.values())
        assert r.to_dict()["setting"] == "I.1"

    def test_reps_must_exceed_one(self):
        with pytest.raises(ConfigError):
            run_campaign(ScenarioSpec("II.1", n=20), 1, FAST)

    def test_deterministic(self):
        spec = ScenarioSpec("II.5", n=30, m=20)
        a = run_campaign(spec, 3, FAST, oracle_size=2000)
        b = run_campaign(spec, 3, FAST, oracle_size=2000)
        assert a.mse == b.mse and a.coverage == b.coverage

    def test_serial_equals_parallel(self):
        spec = ScenarioSpec("II.2", n=30, m=20)
        a = run_campaign(spec, 4, FAST, oracle_size=2000)
        b = run_campaign(spec, 4, replace(FAST, workers=2), oracle_size=2000)
        assert a.mse == b.mse and a.rejection == b.rejection

    def test_tuned_replicate(self):
        r = run_campaign(ScenarioSpec("II.1", n=30, m=20), 2, CampaignConfig(), oracle_size=2000)
        assert r.n_ok == 2

    def test_missing_fixed_hyperparameters_recorded(self):
        r = run_campaign(ScenarioSpec("II.5", n=20, m=20), 2, CampaignConfig(tune=False), oracle_size=2000)
        assert r.n_ok == 0 and len(r.failures) == 2
