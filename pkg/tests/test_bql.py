from dataclasses import replace

import numpy as np
import pytest

from regimes.bql import (BalancedQLearner, BqlConfig, design_norm_maxima, fit_bql,
                         fit_stage1_assessment, fit_stage1_treatment, fit_stage2_assessment,
                         fit_stage2_treatment, minimum_rows, stage_label)
from regimes.core import CostSpec, Dataset
from regimes.errors import ConfigurationError, DataError, NumericError
from regimes.nuisance import LearnerSpec, make_folds
from regimes.synth import generate, model_preset

RIDGE = LearnerSpec(kind="ridge")


def partially_linear(n, alpha, seed, noise=0.5):
    """Two-stage data whose stage-2 contrast is exactly linear in (S1, S2, A1, 1)."""
    rng = np.random.default_rng(seed)
    S1 = rng.normal(size=(n, 2))
    S2 = rng.normal(size=(n, 2))
    A1 = rng.integers(0, 2, size=n)
    A2 = rng.integers(0, 2, size=n)
    X = np.column_stack([S1, S2, A1, np.ones(n)])
    Y = S1[:, 0] - 0.5 * S2[:, 1] + A2 * (X @ alpha) + noise * rng.normal(size=n)
    return Dataset.from_arrays(S1, A1, S2, A2, Y)


@pytest.fixture(scope="module")
def fitted_model1():
    preset = model_preset(1)
    d = generate(preset.spec, 400, 2024)
    learner = BalancedQLearner(BqlConfig.with_learner(RIDGE, seed=5))
    regime = learner.fit(d, preset.catalog, preset.costs.with_lambda(1.0))
    return preset, d, learner, regime


def test_fit_is_complete(fitted_model1):
    preset, d, learner, regime = fitted_model1
    assert regime.problems() == []
    assert regime.kind == "bql"
    assert regime.metadata["n"] == 400
    assert regime.metadata["config"]["seed"] == 5
    assert set(regime.metadata["nuisance_learners"]) == {"f2", "g2", "g1"}
    assert learner.trace_ is not None
    assert learner.trace_.plan.n == 400


def test_full_set_contrasts_are_zero(fitted_model1):
    preset, _, _, regime = fitted_model1
    cat = preset.catalog
    full1, full2 = cat.full1_position, cat.full2_position
    assert not np.any(regime.delta[full1])
    for i1 in range(len(cat.cand1)):
        assert not np.any(regime.beta_bar[(i1, full2)])
        for a1 in (0, 1):
            assert not np.any(regime.beta[(i1, a1, full2)])


def test_full_history_alpha_is_alpha_bar_at_fixed_a1(fitted_model1):
    preset, _, _, regime = fitted_model1
    cat = preset.catalog
    p = cat.d1 + cat.d2
    ab = regime.alpha_bar
    for a1 in (0, 1):
        coef = regime.alpha[(cat.full1_position, a1, cat.full2_position)]
        np.testing.assert_allclose(coef[:p], ab[:p], atol=1e-8)
        assert coef[-1] == pytest.approx(ab[-1] + a1 * ab[p], abs=1e-8)


def test_fit_is_deterministic(fitted_model1):
    preset, d, _, regime = fitted_model1
    again = BalancedQLearner(BqlConfig.with_learner(RIDGE, seed=5)).fit(
        d, preset.catalog, preset.costs.with_lambda(1.0))
    np.testing.assert_array_equal(again.alpha_bar, regime.alpha_bar)
    for key in regime.beta:
        np.testing.assert_array_equal(again.beta[key], regime.beta[key])
    for key in regime.gamma:
        np.testing.assert_array_equal(again.gamma[key], regime.gamma[key])
        np.testing.assert_array_equal(again.delta[key], regime.delta[key])


def test_lambda_zero_equals_zero_costs():
    preset = model_preset(2)
    d = generate(preset.spec, 300, 9)
    cfg = BqlConfig.with_learner(RIDGE, seed=1)
    zero_lambda = fit_bql(d, preset.catalog, preset.costs.with_lambda(0.0), cfg)
    zero_costs = fit_bql(d, preset.catalog, CostSpec.uniform(preset.catalog, lam=1.0), cfg)
    np.testing.assert_allclose(zero_lambda.alpha_bar, zero_costs.alpha_bar, atol=1e-12)
    for key in zero_lambda.delta:
        np.testing.assert_allclose(zero_lambda.delta[key], zero_costs.delta[key], atol=1e-10)


def test_residual_on_residual_recovers_stage2_contrast(small_catalog):
    alpha = np.array([0.5, -0.5, 1.0, 0.0, 0.3, 0.2])
    d = partially_linear(4000, alpha, seed=3)
    costs = CostSpec.uniform(small_catalog)
    alpha_bar, _ = fit_stage2_treatment(d, small_catalog, costs, BqlConfig.with_learner(RIDGE, seed=2))
    np.testing.assert_allclose(alpha_bar, alpha, atol=0.08)


def test_treatment_cost_gap_shifts_intercept(small_catalog):
    d = partially_linear(600, np.array([0.5, 0, 0, 0, 0, 0.1]), seed=4)
    cfg = BqlConfig.with_learner(RIDGE, seed=2)
    free = fit_stage2_treatment(d, small_catalog, CostSpec.uniform(small_catalog), cfg).alpha_bar
    priced = fit_stage2_treatment(d, small_catalog, CostSpec.uniform(small_catalog, c2t=(0.1, 0.4)),
                                  cfg).alpha_bar
    np.testing.assert_allclose(priced[:-1], free[:-1], atol=1e-8)
    assert priced[-1] == pytest.approx(free[-1] - 0.3, abs=1e-8)


def test_stage_operations_compose_to_full_fit(small_catalog, small_costs):
    d = partially_linear(400, np.array([0.5, 0, 0.5, 0, 0, 0]), seed=6)
    cfg = BqlConfig.with_learner(RIDGE, seed=8)
    stage2 = fit_stage2_treatment(d, small_catalog, small_costs, cfg)
    beta_bar, beta = fit_stage2_assessment(d, small_catalog, small_costs, cfg, stage2)
    stage2.beta_bar, stage2.beta = beta_bar, beta
    alpha_bar, alpha = stage2
    assert alpha is stage2.alpha
    assert stage2.assessment == (beta_bar, beta)
    stage1 = fit_stage1_treatment(d, small_catalog, small_costs, cfg, stage2)
    gamma_bar, gamma = stage1
    delta = fit_stage1_assessment(d, small_catalog, small_costs, cfg, stage1, stage2)

    whole = fit_bql(d, small_catalog, small_costs, cfg)
    np.testing.assert_allclose(stage2.alpha_bar, whole.alpha_bar)
    for i1 in gamma:
        np.testing.assert_allclose(gamma[i1], whole.gamma[i1])
        np.testing.assert_allclose(delta[i1], whole.delta[i1])


def test_stage1_needs_assessment_fit(small_catalog, small_costs):
    d = partially_linear(200, np.zeros(6), seed=1)
    cfg = BqlConfig.with_learner(RIDGE)
    stage2 = fit_stage2_treatment(d, small_catalog, small_costs, cfg)
    with pytest.raises(ConfigurationError):
        fit_stage1_treatment(d, small_catalog, small_costs, cfg, stage2)


def test_shared_inner_policy_runs(small_catalog, small_costs):
    d = partially_linear(300, np.array([0.5, 0, 0, 0, 0, 0]), seed=2)
    cfg = BqlConfig.with_learner(RIDGE, seed=1, inner_policy="shared")
    assert fit_bql(d, small_catalog, small_costs, cfg).problems() == []


def test_catalog_dimension_mismatch(small_catalog, small_costs, make_dataset):
    d = make_dataset(d1=3)
    with pytest.raises(DataError, match="dimensions"):
        fit_bql(d, small_catalog, small_costs, BqlConfig.with_learner(RIDGE))


def test_too_few_rows_for_folds(small_catalog, small_costs):
    d = Dataset.from_arrays(np.zeros((4, 2)), [0, 1, 0, 1], np.zeros((4, 2)), [1, 0, 0, 1], np.zeros(4))
    with pytest.raises(ConfigurationError):
        fit_bql(d, small_catalog, small_costs, BqlConfig.with_learner(RIDGE))


def test_minimum_rows_is_enforced(small_catalog, small_costs, make_dataset):
    cfg = BqlConfig.with_learner(RIDGE, seed=3)
    assert minimum_rows(cfg.K) == 40
    with pytest.raises(ConfigurationError, match="need n >= 40"):
        fit_bql(make_dataset(n=39), small_catalog, small_costs, cfg)


def one_untreated_row_per_fold(make_dataset, cfg):
    d = make_dataset(n=40, seed=4)
    plan = make_folds(d.n, cfg.K, cfg.seed)
    A2 = np.ones(d.n, dtype=int)
    A2[[plan.test_rows(k)[0] for k in range(cfg.K)]] = 0
    return Dataset.from_arrays(d.S1, d.A1, d.S2, A2, d.Y)


def test_inner_fold_missing_an_arm_is_refused(small_catalog, small_costs, make_dataset):
    cfg = BqlConfig.with_learner(RIDGE, seed=6)
    d = one_untreated_row_per_fold(make_dataset, cfg)
    # every outer complement still holds both stage-2 arms
    BalancedQLearner(replace(cfg, inner_policy="shared")).plan_for(d)
    with pytest.raises(ConfigurationError, match=r"inner fold \d complement lacks a treatment arm at stage 2"):
        fit_bql(d, small_catalog, small_costs, cfg)
    with pytest.raises(ConfigurationError, match="n=40"):
        BalancedQLearner(cfg).inner_pseudo_outcomes(d, small_catalog, small_costs, 0)


def test_inner_pseudo_outcomes_cover_the_complement(small_catalog, small_costs, make_dataset):
    d = make_dataset(n=200, seed=2)
    learner = BalancedQLearner(BqlConfig.with_learner(RIDGE, seed=9))
    pseudo = learner.inner_pseudo_outcomes(d, small_catalog, small_costs, 1)
    rows = learner.plan_for(d).train_rows(1)
    assert set(pseudo) == set(range(len(small_catalog.cand1)))
    assert all(values.shape == rows.shape for values in pseudo.values())


def test_stage_label_is_prefixed():
    with pytest.raises(NumericError, match="^stage 2 treatment: singular"):
        with stage_label("stage 2 treatment"):
            raise NumericError("singular")


def test_config_round_trip():
    cfg = BqlConfig.with_learner(RIDGE, K=3, seed=4, intercept=False)
    assert BqlConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigurationError):
        BqlConfig.from_dict({"folds": 3})
    with pytest.raises(ConfigurationError):
        BqlConfig(K=1)


def test_design_norm_maxima_keys(small_catalog, make_dataset):
    norms = design_norm_maxima(make_dataset(), small_catalog)
    assert set(norms) == {"delta", "gamma:0", "gamma:1", "beta:0", "beta:1",
                          "alpha:0,0", "alpha:0,1", "alpha:1,0", "alpha:1,1"}
    assert norms["alpha:1,1"] >= norms["gamma:1"] >= norms["delta"] > 0
