import logging

import numpy as np
import pandas as pd
import pytest

from regimes.core import FeatureIndexSet, FittedRegime
from regimes.deploy import (DECISION_COLUMNS, ArrayOracle, CountingOracle, CovariateOracle,
                            DecisionRules, SimulatedSubject, choose_assessment, choose_treatment,
                            decide_batch, deploy, realized_costs, write_decisions_csv)
from regimes.errors import DimensionError, OracleError


def hand_regime(catalog, costs, metadata=None):
    """
    Rules on the small catalog:
        assess s1_2 iff s1_1 > 0; without it never treat, with it treat iff s1_2 > 0;
        assess s2_2 iff a1 = 1; treat at stage 2 iff the last assessed s2 is positive.
    """
    regime = FittedRegime(
        alpha_bar=np.zeros(6), alpha={}, beta_bar={}, beta={}, gamma_bar={}, gamma={}, delta={},
        catalog=catalog, costs=costs, metadata=metadata or {},
    )
    for i1 in (0, 1):
        regime.gamma_bar[i1] = np.zeros(3)
        regime.delta[i1] = np.array([float(i1), 0.0])
        for i2 in (0, 1):
            regime.beta_bar[(i1, i2)] = np.zeros(5)
            for a1 in (0, 1):
                beta = np.zeros(regime.design_length("beta", i1, i2))
                beta[-1] = float(a1 == 1 and i2 == 1)
                regime.beta[(i1, a1, i2)] = beta
                alpha = np.zeros(regime.design_length("alpha", i1, i2))
                alpha[-2] = 1.0
                regime.alpha[(i1, a1, i2)] = alpha
    regime.gamma[0] = np.array([0.0, -1.0])
    regime.gamma[1] = np.array([0.0, 1.0, 0.0])
    assert regime.problems() == []
    return regime


@pytest.fixture
def regime(small_catalog, small_costs):
    return hand_regime(small_catalog, small_costs)


def test_regime_satisfies_rules_protocol(regime):
    assert isinstance(regime, DecisionRules)


def test_deploy_assesses_and_treats(regime):
    oracle = CountingOracle(ArrayOracle([1.0, 2.0], [0.5, -1.0]))
    record = deploy(regime, oracle)
    assert record.j1 == FeatureIndexSet.of(2) and record.a1 == 1
    assert record.j2 == FeatureIndexSet.of(2) and record.a2 == 0
    assert oracle.requested(1) == [1, 2]
    assert oracle.requested(2) == [1, 2]
    assert oracle.assignments == [(1, 1), (2, 0)]
    assert record.assessment_cost == pytest.approx(0.3)
    assert record.treatment_cost == pytest.approx(0.05)


def test_deploy_never_reads_unassessed_covariates(regime):
    oracle = CountingOracle(ArrayOracle([-1.0, 2.0], [0.5, -1.0]))
    record = deploy(regime, oracle)
    assert (record.i1, record.a1, record.i2, record.a2) == (0, 0, 0, 1)
    assert oracle.requested(1) == [1]
    assert oracle.requested(2) == [1]
    assert record.assessed == {1: {1: -1.0}, 2: {1: 0.5}}


def test_stage2_covariates_follow_assigned_treatment(regime):
    subject = SimulatedSubject([1.0, 1.0], lambda a1: [1.0, -1.0] if a1 else [1.0, 1.0])
    record = deploy(regime, subject)
    assert record.a1 == 1
    assert record.assessed[2] == {1: 1.0, 2: -1.0}
    assert record.a2 == 0


def test_simulated_subject_requires_a1_first():
    subject = SimulatedSubject([0.0], lambda a1: [a1])
    with pytest.raises(OracleError):
        subject.read(2, FeatureIndexSet.of(1))


def test_batch_matches_single_subject_pipeline(regime):
    rng = np.random.default_rng(0)
    S1 = rng.normal(size=(60, 2))
    S2 = rng.normal(size=(60, 2))
    batch = decide_batch(regime, S1, S2)
    for row in range(60):
        record = deploy(regime, ArrayOracle(S1[row], S2[row]))
        assert (batch.i1[row], batch.a1[row], batch.i2[row], batch.a2[row]) == \
            (record.i1, record.a1, record.i2, record.a2)
        assert batch.assessment_cost[row] == pytest.approx(record.assessment_cost)
        assert batch.treatment_cost[row] == pytest.approx(record.treatment_cost)


def test_batch_with_treatment_dependent_stage2(regime):
    S1 = np.array([[1.0, 1.0], [1.0, -1.0]])
    batch = decide_batch(regime, S1, lambda a1: np.column_stack([np.ones(2), 2 * a1 - 1.0]))
    assert batch.a1.tolist() == [1, 0]
    assert batch.S2[:, 1].tolist() == [1.0, -1.0]
    assert batch.a2.tolist() == [1, 1]


def test_batch_rejects_wrong_stage2_rows(regime):
    with pytest.raises(DimensionError):
        decide_batch(regime, np.zeros((3, 2)), np.zeros((2, 2)))


def test_empty_batch(regime):
    batch = decide_batch(regime, np.zeros((0, 2)), np.zeros((0, 2)))
    assert len(batch) == 0
    assert batch.S2.shape == (0, 2)
    assert batch.assessment_cost.shape == batch.extrapolation.shape == (0,)


def test_ties_go_to_first_candidate(regime):
    j, scores = choose_assessment(regime, 1, np.array([0.0]))
    assert j == regime.catalog.cand1[0]
    assert scores.tolist() == [0.0, 0.0]


def test_treatment_needs_a_positive_score(regime):
    assert choose_treatment(regime, 1, np.array([[0.4, 2.5]]), 1) == (1, pytest.approx(2.5))
    assert choose_treatment(regime, 1, np.array([[0.4, 0.0]]), 1) == (0, 0.0)
    assert choose_treatment(regime, 1, np.array([[5.0]]), 0) == (0, -1.0)


def test_history_length_is_checked(regime):
    with pytest.raises(DimensionError):
        regime.treatment_scores(1, np.zeros(3), 0)


class FailingOracle(CovariateOracle):
    def read(self, stage, indices):
        if stage == 2:
            raise RuntimeError("lab closed")
        return np.ones(len(indices))


class LongOracle(CovariateOracle):
    def read(self, stage, indices):
        return np.ones(len(indices) + 1)


def test_oracle_failure_names_the_step(regime):
    with pytest.raises(OracleError, match="read S_l2: covariate oracle failed"):
        deploy(regime, FailingOracle())


def test_oracle_wrong_value_count(regime):
    with pytest.raises(OracleError, match="read S_l1: oracle returned 2 values for 1 positions"):
        deploy(regime, LongOracle())


def test_extrapolation_is_flagged(small_catalog, small_costs, caplog):
    rules = hand_regime(small_catalog, small_costs, {"design_norm_max": {"delta": 1.0}})
    with caplog.at_level(logging.WARNING, logger="regimes.deploy"):
        assert deploy(rules, ArrayOracle([5.0, 0.0], [0.0, 0.0])).extrapolation
    assert "extrapolate" in caplog.text
    assert not deploy(rules, ArrayOracle([0.5, 0.0], [0.0, 0.0])).extrapolation
    batch = decide_batch(rules, np.array([[5.0, 0.0], [0.5, 0.0]]), np.zeros((2, 2)))
    assert batch.extrapolation.tolist() == [True, False]


def test_realized_costs_are_unscaled(small_catalog, small_costs):
    costs = small_costs.with_lambda(10.0)
    assessment, treatment = realized_costs(costs, FeatureIndexSet.of(2), 1, FeatureIndexSet(), 1)
    assert assessment == pytest.approx(0.1)
    assert treatment == pytest.approx(0.1)


def test_write_decisions_csv(tmp_path, regime):
    S1 = np.array([[1.0, 2.0], [-1.0, 2.0]])
    S2 = np.array([[0.5, -1.0], [0.5, -1.0]])
    path = tmp_path / "decisions.csv"
    write_decisions_csv(decide_batch(regime, S1, S2), path)
    df = pd.read_csv(path)
    assert list(df.columns) == DECISION_COLUMNS
    assert df["j1_set"].tolist() == ["{2}", "{}"]
    assert df["a2"].tolist() == [0, 1]

    records = [deploy(regime, ArrayOracle(S1[r], S2[r])) for r in range(2)]
    from_records = write_decisions_csv(records, tmp_path / "records.csv")
    pd.testing.assert_frame_equal(from_records, df, check_dtype=False)
