from dataclasses import replace

import numpy as np
import pytest

from regimes.core import CostSpec, Dataset
from regimes.errors import ConfigurationError, DimensionError, EnumerationSizeError, EvaluationError, InstanceError
from regimes.evaluation import (DiscreteInstance, TabularRegime, backward_induction_optimal,
                                brute_force_optimal, empirical_regret, evaluate_on_data, exact_profit,
                                expected_costs, fit_propensities, ipw_estimate, ipw_utility, ipw_weights,
                                profit_lambda, random_instance, read_instance, sample_discrete,
                                selection_frequencies, write_instance)
from regimes.deploy import decide_batch
from regimes.nuisance import LearnerSpec


# ========== Oracle ==========

def test_solvers_agree_on_tiny_instance(tiny_instance):
    bf = brute_force_optimal(tiny_instance)
    bi = backward_induction_optimal(tiny_instance)
    assert bf.profit == pytest.approx(bi.profit, abs=1e-10)
    assert bf.evaluations > 0
    assert exact_profit(tiny_instance, bf.regime) == pytest.approx(bf.profit, abs=1e-10)
    assert exact_profit(tiny_instance, bi.regime) == pytest.approx(bi.profit, abs=1e-10)


@pytest.mark.parametrize("seed", range(20))
def test_solvers_agree_on_random_instances(seed):
    inst = random_instance(np.random.default_rng(seed))
    bf = brute_force_optimal(inst)
    bi = backward_induction_optimal(inst)
    assert bf.profit == pytest.approx(bi.profit, abs=1e-10)
    assert exact_profit(inst, bi.regime) == pytest.approx(bf.profit, abs=1e-10)


def test_full_information_without_costs_is_plain_dynamic_programming(tiny_instance):
    cat = tiny_instance.catalog.full_only()
    inst = replace(tiny_instance, catalog=cat, costs=CostSpec.uniform(cat))
    mu, T, p = inst.mean_outcome, inst.transition, inst.p_s1
    stage2 = mu.max(axis=3)
    stage1 = (T * stage2).sum(axis=2)
    expected = float(p @ stage1.max(axis=1))
    assert brute_force_optimal(inst).profit == pytest.approx(expected, abs=1e-12)
    assert backward_induction_optimal(inst).profit == pytest.approx(expected, abs=1e-12)


def test_empty_table_regime_never_assesses_or_treats(tiny_instance):
    regime = TabularRegime(tiny_instance.catalog, tiny_instance.costs)
    inst = tiny_instance
    expected = float(np.sum(inst.p_s1[:, None] * inst.transition[:, 0, :] * inst.mean_outcome[:, 0, :, 0]))
    assert exact_profit(inst, regime) == pytest.approx(expected)
    assert regime.assessment_scores(1, np.array([[9.0]])).tolist() == [[0.0, 0.0]]
    assert regime.treatment_scores(1, np.array([[9.0]]), 0).tolist() == [-1.0]


def test_costlier_tradeoff_never_raises_optimal_profit(tiny_instance):
    free = backward_induction_optimal(tiny_instance, lam=0.0).profit
    costly = backward_induction_optimal(tiny_instance, lam=1.0).profit
    empty = exact_profit(tiny_instance, TabularRegime(tiny_instance.catalog, tiny_instance.costs))
    assert free >= costly >= empty - 1e-12


def test_enumeration_limit(tiny_instance):
    with pytest.raises(EnumerationSizeError) as info:
        brute_force_optimal(tiny_instance, limit=1)
    assert info.value.exit_code == 2
    assert info.value.limit == 1


def test_instance_problems_are_listed(tiny_instance):
    broken = replace(tiny_instance, p_s1=[0.5, 0.5, 0.5, 0.5], propensity1=[0.0, 0.5, 0.5, 1.0])
    problems = broken.problems()
    assert any("p_s1" in p for p in problems)
    assert any("propensity1" in p for p in problems)
    with pytest.raises(InstanceError):
        brute_force_optimal(broken)


def test_instance_shape_check(tiny_instance):
    broken = replace(tiny_instance, transition=np.ones((4, 2, 3)) / 3)
    assert broken.problems() == ["transition has shape (4, 2, 3), expected (4, 2, 2)"]


def test_instance_file_round_trip(tmp_path, tiny_instance):
    path = tmp_path / "inst.json"
    write_instance(tiny_instance, path)
    assert read_instance(path).to_dict() == tiny_instance.to_dict()


def test_instance_read_errors(tmp_path, tiny_instance):
    with pytest.raises(InstanceError):
        read_instance(tmp_path / "missing.json")
    data = tiny_instance.to_dict()
    del data["p_s1"]
    with pytest.raises(InstanceError, match="p_s1"):
        DiscreteInstance.from_dict(data)


def test_sample_discrete(tiny_instance):
    d = sample_discrete(tiny_instance, 500, seed=4)
    again = sample_discrete(tiny_instance, 500, seed=4)
    np.testing.assert_array_equal(d.Y, again.Y)
    assert {tuple(r) for r in d.S1} <= {tuple(r) for r in tiny_instance.s1_support}
    assert {tuple(r) for r in d.S2} <= {tuple(r) for r in tiny_instance.s2_support}


# ========== Off-Policy Metrics ==========

def logged(A1, A2, Y):
    n = len(Y)
    return Dataset.from_arrays(np.zeros((n, 2)), A1, np.zeros((n, 2)), A2, Y)


def test_hajek_estimate_by_hand(small_catalog, small_costs):
    test = logged([0, 0, 1, 0], [0, 0, 0, 1], [1.0, 3.0, 5.0, 7.0])
    regime = TabularRegime(small_catalog, small_costs)
    half = np.full(4, 0.5)
    estimate = ipw_estimate(test, regime, half, half)
    assert estimate.utility == pytest.approx(2.0)
    assert estimate.matched == 2
    assert estimate.effective_n == pytest.approx(2.0)
    assert estimate.se == pytest.approx(np.sqrt(32) / 8)
    utility, se = estimate
    assert utility == estimate.utility
    assert ipw_utility(test, regime, half, half) == estimate.utility


def test_ipw_needs_a_matching_subject(small_catalog, small_costs):
    test = logged([1, 1], [0, 1], [1.0, 2.0])
    with pytest.raises(EvaluationError):
        ipw_estimate(test, TabularRegime(small_catalog, small_costs), np.full(2, 0.5), np.full(2, 0.5))


def test_ipw_weights_shape_check(small_catalog, small_costs):
    test = logged([0, 1], [0, 1], [1.0, 2.0])
    decisions = decide_batch(TabularRegime(small_catalog, small_costs), test.S1, test.S2)
    with pytest.raises(DimensionError):
        ipw_weights(test, decisions, np.full(3, 0.5), np.full(2, 0.5))


def test_ipw_recovers_exact_value(tiny_instance):
    inst = tiny_instance
    regime = backward_induction_optimal(inst).regime
    d = sample_discrete(inst, 40000, seed=1)
    k1 = (2 * d.S1[:, 0] + d.S1[:, 1]).astype(int)
    k2 = d.S2[:, 1].astype(int)
    g1 = inst.propensity1[k1]
    g2 = inst.propensity2[k1, d.A1.astype(int), k2]
    estimate = ipw_estimate(d, regime, g1, g2)
    assert estimate.utility == pytest.approx(exact_profit(inst, regime, lam=0.0), abs=0.05)
    assert estimate.se < 0.05


def test_evaluate_on_data(small_catalog, small_costs):
    test = logged([0, 0, 1, 0], [0, 0, 0, 1], [1.0, 3.0, 5.0, 7.0])
    costs = small_costs.with_treatment_costs(c1t=(0.3, 0.0))
    regime = TabularRegime(small_catalog, costs)
    half = np.full(4, 0.5)
    row = evaluate_on_data(test, regime, half, half)
    assert set(row) == {"utility", "utility_se", "matched", "c1c", "c1t", "c2c", "c2t", "lambda", "profit"}
    assert row["c1t"] == pytest.approx(0.3)
    assert row["profit"] == pytest.approx(1.7)
    assert evaluate_on_data(test, regime, half, half, lam=2.0)["profit"] == pytest.approx(1.4)


def test_expected_costs(tiny_instance):
    regime = backward_induction_optimal(tiny_instance).regime
    inst = tiny_instance
    decisions = decide_batch(regime, inst.s1_support[[0, 1, 2, 3]], inst.s2_support[[0, 1, 0, 1]])
    parts = expected_costs(decisions, inst.costs)
    assert set(parts) == {"c1c", "c1t", "c2c", "c2t"}
    assert parts["c1t"] == pytest.approx(0.1 * decisions.a1.mean())


def test_profit_lambda():
    parts = {"c1c": 0.1, "c1t": 0.2, "c2c": 0.3, "c2t": 0.4}
    assert profit_lambda(5.0, parts, 2.0) == pytest.approx(3.0)
    assert profit_lambda(5.0, [0.1, 0.2, 0.3, 0.4], 0.0) == 5.0
    with pytest.raises(ConfigurationError):
        profit_lambda(5.0, {"c1c": 0.1}, 1.0)


def test_selection_frequencies(small_catalog, small_costs, make_dataset):
    freq = selection_frequencies(TabularRegime(small_catalog, small_costs), make_dataset(n=40))
    assert freq.freq1.tolist() == [1.0, 0.0]
    row = freq.as_row()
    assert set(row) == {"freq1_{}", "freq1_{2}", "freq2_{}", "freq2_{2}", "treat1", "treat2"}
    assert row["treat1"] == 0.0


def test_regret(tiny_instance, model1):
    best = backward_induction_optimal(tiny_instance)
    assert empirical_regret(tiny_instance, best.regime).regret == pytest.approx(0.0, abs=1e-10)
    empty = TabularRegime(tiny_instance.catalog, tiny_instance.costs)
    regret, se = empirical_regret(tiny_instance, empty)
    assert regret >= 0.0 and se == 0.0
    with pytest.raises(ConfigurationError):
        empirical_regret(model1.spec, empty)
    with pytest.raises(ConfigurationError):
        empirical_regret("model 1", empty)


def test_fit_propensities(make_dataset):
    d = make_dataset(n=120)
    g1, g2 = fit_propensities(d, LearnerSpec(kind="ridge"), K=2, seed=0)
    assert g1.shape == g2.shape == (120,)
    assert g1.min() >= 0.01 and g2.max() <= 0.99
