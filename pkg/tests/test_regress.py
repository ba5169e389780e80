import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from regimes.errors import ConfigurationError, DimensionError, NumericError
from regimes.regress import lasso, lasso_cv, nested_projection, ols, residual_on_residual


def test_ols_exact_fit():
    X = np.column_stack([np.arange(5.0), np.ones(5)])
    y = 2 * np.arange(5.0) + 1
    fit = ols(X, y)
    np.testing.assert_allclose(fit.coefficients, [2.0, 1.0], atol=1e-12)
    assert fit.rank == 2
    assert fit.residual_sum_squares == pytest.approx(0.0, abs=1e-20)


def test_ols_rank_deficient_gives_minimum_norm():
    x = np.arange(1.0, 6.0)
    X = np.column_stack([x, x])
    fit = ols(X, 2 * x)
    assert fit.rank == 1
    np.testing.assert_allclose(fit.coefficients, [1.0, 1.0], atol=1e-10)


def test_ols_zero_design():
    fit = ols(np.zeros((4, 3)), np.ones(4))
    assert fit.rank == 0
    assert fit.coefficients.tolist() == [0.0, 0.0, 0.0]


def test_ols_rejects_bad_input():
    with pytest.raises(DimensionError):
        ols(np.ones((3, 2)), np.ones(4))
    with pytest.raises(NumericError):
        ols(np.array([[1.0], [np.nan]]), np.ones(2))


@given(arrays(np.float64, (12, 3), elements=st.floats(-5, 5).filter(lambda v: v == 0 or abs(v) > 1e-3)),
       arrays(np.float64, 12, elements=st.floats(-5, 5)))
def test_ols_normal_equations(X, y):
    fit = ols(X, y)
    # residual is orthogonal to the column space
    gradient = X.T @ (y - X @ fit.coefficients)
    assert np.max(np.abs(gradient)) <= 1e-6 * (1 + np.max(np.abs(fit.coefficients)))
    assert fit.residual_sum_squares <= y @ y + 1e-9


def test_residual_on_residual_recovers_contrast():
    rng = np.random.default_rng(0)
    n = 4000
    X = np.column_stack([rng.normal(size=n), np.ones(n)])
    alpha = np.array([0.7, -0.3])
    rg = rng.choice([-0.5, 0.5], size=n)
    rf = rg * (X @ alpha) + 0.01 * rng.normal(size=n)
    fit = residual_on_residual(rf, rg, X)
    np.testing.assert_allclose(fit.coefficients, alpha, atol=0.01)


def test_residual_on_residual_offset_shifts_intercept():
    rng = np.random.default_rng(1)
    n = 500
    X = np.column_stack([rng.normal(size=n), np.ones(n)])
    rg = rng.choice([-0.5, 0.5], size=n)
    rf = rg * (X @ np.array([1.0, 0.5]))
    plain = residual_on_residual(rf, rg, X, 0.0).coefficients
    shifted = residual_on_residual(rf, rg, X, 0.2).coefficients
    np.testing.assert_allclose(shifted - plain, [0.0, -0.2], atol=1e-10)


def test_residual_on_residual_shape_check():
    with pytest.raises(DimensionError):
        residual_on_residual(np.ones(3), np.ones(4), np.ones((3, 1)))


def test_nested_projection_of_contained_design_is_exact():
    rng = np.random.default_rng(2)
    Z = rng.normal(size=(50, 2))
    fitted = Z @ np.array([1.5, -2.0])
    np.testing.assert_allclose(nested_projection(fitted, Z).coefficients, [1.5, -2.0], atol=1e-10)


def test_lasso_zero_penalty_matches_ols():
    rng = np.random.default_rng(3)
    W = rng.normal(size=(80, 4))
    z = W @ np.array([1.0, 0.0, -1.0, 0.5]) + 0.1 * rng.normal(size=80)
    np.testing.assert_allclose(lasso(W, z, 0.0).coefficients, ols(W, z).coefficients, atol=1e-8)


def test_lasso_large_penalty_keeps_only_unpenalized():
    rng = np.random.default_rng(4)
    W = np.column_stack([rng.normal(size=(60, 3)), np.ones(60)])
    z = W[:, 0] + 3.0
    fit = lasso(W, z, 1e3, unpenalized=[3])
    assert fit.support().size == 0
    assert fit.coefficients[3] == pytest.approx(np.mean(z), rel=1e-8)


def test_lasso_optimality_conditions():
    rng = np.random.default_rng(5)
    W = rng.normal(size=(100, 6))
    z = W @ np.array([2.0, 0, 0, -1.0, 0, 0]) + rng.normal(size=100)
    penalty = 0.1
    fit = lasso(W, z, penalty)
    grad = fit.gradient()
    b = fit.standardized[fit.penalized]
    active = b != 0
    np.testing.assert_allclose(grad[active], penalty * np.sign(b[active]), atol=1e-6)
    assert np.all(np.abs(grad[~active]) <= penalty + 1e-6)


def test_lasso_rejects_negative_penalty():
    with pytest.raises(ConfigurationError):
        lasso(np.ones((3, 1)), np.ones(3), -1.0)


def test_lasso_cv_is_deterministic_and_sparse():
    rng = np.random.default_rng(6)
    W = rng.normal(size=(200, 8))
    z = 2 * W[:, 0] + rng.normal(size=200)
    p1, f1 = lasso_cv(W, z, seed=9)
    p2, f2 = lasso_cv(W, z, seed=9)
    assert p1 == p2 > 0
    np.testing.assert_array_equal(f1.coefficients, f2.coefficients)
    assert 0 in f1.support()
    assert f1.support().size < 8


def test_lasso_cv_small_sample_falls_back_to_least_squares():
    W = np.eye(4)
    penalty, fit = lasso_cv(W, np.arange(4.0), seed=0)
    assert penalty == 0.0
    np.testing.assert_allclose(fit.coefficients, np.arange(4.0), atol=1e-10)
