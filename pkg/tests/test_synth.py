import numpy as np
import pytest

from regimes.core import FittedRegime
from regimes.errors import ConfigurationError, DimensionError
from regimes.synth import (GenerativeSpec, ModelPreset, draw_noise, generate, logistic, model_preset,
                           preset_ids, simulate_subjects, true_profit, working_alpha_bar)
from regimes.synth.generator import mean_outcome, outcome_design


def constant_regime(preset, i1=0, treat1=False, i2=0, treat2=False):
    """Regime that always picks (i1, i2) and treats by a fixed sign."""
    cat = preset.catalog
    regime = FittedRegime(alpha_bar=np.zeros(2 * cat.d1 + 2), alpha={}, beta_bar={}, beta={},
                          gamma_bar={}, gamma={}, delta={}, catalog=cat, costs=preset.costs)
    for u in range(len(cat.cand1)):
        regime.gamma_bar[u] = np.zeros(regime.design_length("gamma_bar"))
        regime.gamma[u] = np.zeros(regime.design_length("gamma", u))
        regime.gamma[u][-1] = 1.0 if treat1 else -1.0
        regime.delta[u] = np.zeros(regime.design_length("delta"))
        regime.delta[u][-1] = float(u == i1)
        for v in range(len(cat.cand2)):
            regime.beta_bar[(u, v)] = np.zeros(regime.design_length("beta_bar"))
            for a1 in (0, 1):
                regime.beta[(u, a1, v)] = np.zeros(regime.design_length("beta", u, v))
                regime.beta[(u, a1, v)][-1] = float(v == i2)
                regime.alpha[(u, a1, v)] = np.zeros(regime.design_length("alpha", u, v))
                regime.alpha[(u, a1, v)][-1] = 1.0 if treat2 else -1.0
    assert regime.problems() == []
    return regime


# ========== Simulator ==========

def test_generate_is_deterministic(model1):
    a = generate(model1.spec, 50, 3)
    b = generate(model1.spec, 50, 3)
    np.testing.assert_array_equal(a.S2, b.S2)
    np.testing.assert_array_equal(a.Y, b.Y)
    assert not np.array_equal(a.Y, generate(model1.spec, 50, 4).Y)


def test_first_subjects_do_not_depend_on_sample_size(model1):
    small = generate(model1.spec, 10, 8)
    large = generate(model1.spec, 2000, 8)
    np.testing.assert_array_equal(small.S1, large.S1[:10])
    np.testing.assert_array_equal(small.Y, large.Y[:10])


def test_stage2_law_and_outcome(model1):
    spec = model1.spec
    noise = draw_noise(spec.p, 100, 1)
    d = simulate_subjects(spec, noise)
    np.testing.assert_allclose(d.S2, noise.S1 * (1 + d.A1[:, None]) + noise.Z2)
    X = outcome_design(d.S1, d.A1, d.S2)
    np.testing.assert_allclose(d.Y - mean_outcome(spec, X, d.A1, d.A2), spec.noise_sd_y * noise.E)


def test_supplied_treatments_are_used(model1):
    noise = draw_noise(model1.spec.p, 30, 2)
    d = simulate_subjects(model1.spec, noise, a1=1, a2=np.zeros(30, dtype=int))
    assert set(d.A1.tolist()) == {1}
    assert set(d.A2.tolist()) == {0}


def test_behavior_policy_follows_propensity(model1):
    d = generate(model1.spec, 20000, 5)
    expected = logistic(d.S1 @ model1.spec.alpha1).mean()
    assert d.A1.mean() == pytest.approx(expected, abs=0.02)


def test_logistic_is_stable():
    with np.errstate(over="raise"):
        values = logistic(np.array([-1000.0, 0.0, 1000.0]))
    np.testing.assert_allclose(values, [0.0, 0.5, 1.0])


def test_spec_validation():
    with pytest.raises(DimensionError):
        GenerativeSpec(p=2, alpha1=[1.0], alpha2=np.zeros(5), beta1=np.zeros(5),
                       beta2=np.zeros(5), beta3=np.zeros(5))
    with pytest.raises(ConfigurationError):
        GenerativeSpec(p=1, alpha1=[1.0], alpha2=np.zeros(3), beta1=np.zeros(3),
                       beta2=np.zeros(3), beta3=np.zeros(3), noise_sd_y=0.0)
    data = dict(model_preset(3).spec.to_dict(), s2_law="S2 = 2*S1")
    with pytest.raises(ConfigurationError):
        GenerativeSpec.from_dict(data)


def test_draw_noise_needs_subjects():
    with pytest.raises(ConfigurationError):
        draw_noise(2, 0, 1)


# ========== Ground Truth ==========

def test_true_profit_of_untreated_regime(model1):
    spec = model1.spec
    noise = draw_noise(spec.p, 500, 6)
    regime = constant_regime(model1)
    estimate = true_profit(spec, regime, noise=noise)
    S2 = noise.S1 + noise.Z2
    X = outcome_design(noise.S1, np.zeros(500), S2)
    expected = X @ spec.beta1 + spec.noise_sd_y * noise.E
    assert estimate.utility == pytest.approx(expected.mean())
    assert estimate.mean == pytest.approx(expected.mean())
    assert estimate.n == 500
    mean, se = estimate
    assert se == pytest.approx(expected.std(ddof=1) / np.sqrt(500))


def test_true_profit_charges_lambda_times_costs(model1):
    regime = constant_regime(model1, i2=1, treat2=True)
    noise = draw_noise(model1.spec.p, 300, 7)
    free = true_profit(model1.spec, regime, lam=0.0, noise=noise)
    charged = true_profit(model1.spec, regime, lam=2.0, noise=noise)
    assert charged.utility == free.utility
    assert charged.assessment_cost == pytest.approx(0.1)
    assert charged.mean == pytest.approx(free.mean - 0.2)
    assert charged.decisions.a2.tolist() == [1] * 300


def test_common_random_numbers(model1):
    regime = constant_regime(model1, treat1=True)
    assert true_profit(model1.spec, regime, n_mc=200, seed=3).mean == \
        true_profit(model1.spec, regime, n_mc=200, seed=3).mean
    with pytest.raises(ConfigurationError):
        true_profit(model1.spec, regime, n_mc=0)


def test_working_alpha_bar_of_linear_contrast(model1):
    coef = working_alpha_bar(model1.spec, model1.costs, n=4000, seed=1)
    expected = np.zeros(12)
    expected[5:10] = [0.0, 1.0, 0.5, 0.0, 1.0]
    np.testing.assert_allclose(coef, expected, atol=1e-8)


def test_working_alpha_bar_subtracts_treatment_gap():
    preset = model_preset(6)
    coef = working_alpha_bar(preset.spec, preset.costs_at(15.0), n=4000, seed=1)
    assert coef[-1] == pytest.approx(-7.5, abs=1e-8)


# ========== Presets ==========

def test_preset_ids():
    assert preset_ids() == (1, 2, 3, 4, 5, 6, 7)
    with pytest.raises(ConfigurationError):
        model_preset(8)
    with pytest.raises(ConfigurationError):
        model_preset("two")


@pytest.mark.parametrize("model_id", [1, 2, 3, 4, 5, 6, 7])
def test_presets_are_consistent(model_id):
    preset = model_preset(model_id)
    preset.catalog.validate()
    assert preset.spec.p == preset.catalog.d1 == preset.catalog.d2
    back = ModelPreset.from_dict(preset.to_dict())
    assert back.to_dict() == preset.to_dict()


def test_model2_catalog():
    cat = model_preset(2).catalog
    assert [str(j) for j in cat.cand1] == ["{3,4,5}", "{2,3,4,5}"]
    assert [str(j) for j in cat.cand2] == ["{2,3}", "{2,3,4}", "{2,3,4,5}"]


def test_model3_enumerates_all_subsets():
    preset = model_preset(3)
    assert len(preset.catalog.cand2) == 8
    assert preset.spec.beta2.tolist() == [0.0] * 7
    assert preset.costs.c2c[preset.catalog.j2_full] == pytest.approx(0.3)


def test_model4_sweeps_sample_size():
    preset = model_preset(4)
    assert preset.grid_kind == "n"
    assert preset.costs.lam == 0.0
    assert preset.n_at(1000.0) == 1000
    assert model_preset(1).n_at(2.0) == 500


def test_treatment_sweeps():
    stage2 = model_preset(6).costs_at(5.0)
    assert stage2.c2t == (7.5, 5.0) and stage2.c1t == (0.0, 0.0)
    stage1 = model_preset(7).costs_at(5.0)
    assert stage1.c1t == (7.5, 5.0) and stage1.c2t == (0.0, 0.0)
    assert model_preset(1).costs_at(2.0).lam == 2.0
