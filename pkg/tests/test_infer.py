import numpy as np
import pytest
from scipy.stats import norm

from regimes.bql import BalancedQLearner, BqlConfig, DesignBank
from regimes.core import AssessmentCatalog, CostSpec, FeatureIndexSet
from regimes.errors import ConfigurationError, DimensionError
from regimes.infer import (FAMILIES, confidence_intervals, family_ids, parse_family,
                           plugin_covariance)
from tests.conftest import RIDGE, random_dataset


@pytest.fixture(scope="module")
def fitted():
    cat = AssessmentCatalog(
        d1=2, d2=2, l1=FeatureIndexSet.of(1), l2=FeatureIndexSet.of(1),
        cand1=(FeatureIndexSet(), FeatureIndexSet.of(2)),
        cand2=(FeatureIndexSet(), FeatureIndexSet.of(2)),
    )
    costs = CostSpec({cat.cand1[0]: 0.0, cat.cand1[1]: 0.1}, {cat.cand2[0]: 0.0, cat.cand2[1]: 0.2},
                     (0.0, 0.05), (0.0, 0.1), 1.0)
    d = random_dataset(n=400, seed=3)
    learner = BalancedQLearner(BqlConfig.with_learner(RIDGE, seed=4))
    regime = learner.fit(d, cat, costs)
    return regime, d, learner.trace_


@pytest.mark.parametrize("text,expected", [
    ("alpha_bar", ("alpha_bar", ())),
    ("beta:0,1,1", ("beta", (0, 1, 1))),
    (" delta : 1 ", ("delta", (1,))),
    ("beta_bar:1,0", ("beta_bar", (1, 0))),
])
def test_parse_family(text, expected):
    assert parse_family(text) == expected


@pytest.mark.parametrize("text", ["theta", "alpha:0,1", "gamma", "delta:x", "alpha_bar:0"])
def test_parse_family_rejects(text):
    with pytest.raises(ConfigurationError):
        parse_family(text)


def test_family_ids_cover_every_family(fitted):
    regime, _, _ = fitted
    ids = family_ids(regime)
    assert len(ids) == 1 + 2 * (2 * 5 + 3)
    assert {parse_family(f)[0] for f in ids} == set(FAMILIES)


def test_every_family_has_a_valid_covariance(fitted):
    regime, d, trace = fitted
    for fid in family_ids(regime):
        report = plugin_covariance(fid, regime, d, trace)
        p = report.coefficients.shape[0]
        assert report.covariance.shape == (p, p)
        np.testing.assert_allclose(report.covariance, report.covariance.T)
        assert np.min(np.linalg.eigvalsh(report.covariance)) >= -1e-8 * max(np.trace(report.covariance), 1.0)
        assert np.all(report.se >= 0)
        assert 0.0 <= report.boundary_fraction <= 1.0


def test_full_position_contrasts_have_zero_covariance(fitted):
    regime, d, trace = fitted
    full1 = regime.catalog.full1_position
    full2 = regime.catalog.full2_position
    assert not np.any(plugin_covariance(f"delta:{full1}", regime, d, trace).covariance)
    assert not np.any(plugin_covariance(f"beta_bar:0,{full2}", regime, d, trace).covariance)


def test_alpha_bar_is_the_sandwich_of_the_residual_fit(fitted):
    regime, d, trace = fitted
    X = DesignBank(d, regime.catalog, True).xbar()
    rf = d.Y - trace.stage2.f2.oof
    rg = d.A2 - trace.stage2.g2.oof
    e = rf - rg * (X @ regime.alpha_bar + trace.costs.treatment_gap(2))
    W = X * rg[:, None]
    bread = W.T @ W / d.n
    meat = (W * e[:, None]).T @ (W * e[:, None]) / d.n
    expected = np.linalg.solve(bread, np.linalg.solve(bread, meat).T)
    report = plugin_covariance("alpha_bar", regime, d, trace)
    np.testing.assert_allclose(report.covariance, expected, rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(report.bread, bread)


def test_projection_of_contained_design_keeps_covariance(fitted):
    regime, d, trace = fitted
    cat = regime.catalog
    source = plugin_covariance("gamma_bar:1", regime, d, trace).covariance
    # stage-1 history of the full candidate is all of S1, so the projection is the identity
    projected = plugin_covariance(f"gamma:{cat.full1_position}", regime, d, trace).covariance
    np.testing.assert_allclose(projected, source, atol=1e-10)


def test_confidence_intervals(fitted):
    regime, d, trace = fitted
    report = plugin_covariance("alpha_bar", regime, d, trace)
    ci = confidence_intervals(report, 0.9)
    half = norm.ppf(0.95) * report.se / np.sqrt(d.n)
    np.testing.assert_allclose(ci[:, 0], report.coefficients - half)
    np.testing.assert_allclose(ci[:, 1], report.coefficients + half)
    doc = report.to_dict(0.9)
    assert doc["family"] == "alpha_bar" and doc["level"] == 0.9
    assert len(doc["intervals"]) == report.coefficients.shape[0]
    with pytest.raises(ConfigurationError):
        confidence_intervals(report, 1.0)


def test_trace_must_match_dataset(fitted):
    regime, d, trace = fitted
    with pytest.raises(DimensionError):
        plugin_covariance("alpha_bar", regime, d.subset(np.arange(10)), trace)


def test_missing_key_is_reported(fitted):
    regime, d, trace = fitted
    with pytest.raises(ConfigurationError, match="gamma:5"):
        plugin_covariance("gamma:5", regime, d, trace)
