"""
Least-Squares Engine

Deterministic regressions used by every estimation step:

- ``ols``: minimum-norm least squares (SVD cutoff 1e-10 of the largest
  singular value)
- ``residual_on_residual``: the R-learner regression of outcome residuals
  on treatment residuals times a design, with a constant cost offset
- ``nested_projection``: projection of fitted values onto a smaller design
- ``lasso`` / ``lasso_cv``: penalized least squares on standardized
  columns, used by the sparse comparator

Example:
    >>> fit = ols(np.eye(2), np.array([3.0, 4.0]))
    >>> fit.coefficients
    array([3., 4.])
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import Lasso, LassoCV
from sklearn.model_selection import KFold

from .errors import ConfigurationError, DimensionError, NumericError

logger = logging.getLogger(__name__)

RCOND = 1e-10
LASSO_TOL = 1e-10
LASSO_MAX_ITER = 100_000
CV_FOLDS = 5


@dataclass(frozen=True, eq=False)
class LinearFit:
    """Coefficients of a least-squares fit with its rank and residual sum of squares."""

    coefficients: np.ndarray
    rank: int
    residual_sum_squares: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coefficients


def _check(X: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1:
        raise DimensionError(f"expected a 2-D design and 1-D response, got {X.shape} and {y.shape}")
    if X.shape[0] != y.shape[0]:
        raise DimensionError(f"design has {X.shape[0]} rows, response has {y.shape[0]}")
    if X.shape[0] < 1:
        raise DimensionError("regression needs at least one row")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NumericError("regression input contains non-finite values")
    return X, y


def ols(X: np.ndarray, y: np.ndarray) -> LinearFit:
    """
    Minimum-norm least-squares fit.

    Args:
        X: Design matrix, shape (n, p)
        y: Response, shape (n,)

    Returns:
        LinearFit; a design without columns or with all-zero entries gives
        zero coefficients and rank 0

    Raises:
        DimensionError: If shapes disagree
        NumericError: If any input is not finite
    """
    X, y = _check(X, y)
    if X.shape[1] == 0 or not np.any(X):
        return LinearFit(np.zeros(X.shape[1]), 0, float(y @ y))

    coefficients, _, rank, _ = np.linalg.lstsq(X, y, rcond=RCOND)
    if not np.all(np.isfinite(coefficients)):
        raise NumericError("least-squares solution is not finite")
    residual = y - X @ coefficients
    return LinearFit(coefficients, int(rank), float(residual @ residual))


def residual_on_residual(rf: np.ndarray, rg: np.ndarray, X: np.ndarray,
                         offset: float = 0.0) -> LinearFit:
    """
    Minimize sum_i [rf_i - rg_i (X_i' alpha + offset)]^2 over alpha.

    Args:
        rf: Outcome residuals Y - f_hat
        rg: Treatment residuals A - g_hat
        X: Contrast design, shape (n, p)
        offset: Constant added to the contrast (treatment cost gap)
    """
    rf = np.asarray(rf, dtype=float)
    rg = np.asarray(rg, dtype=float)
    X = np.asarray(X, dtype=float)
    if not (rf.shape == rg.shape and rf.shape[0] == X.shape[0]):
        raise DimensionError("residual vectors and design disagree on the number of rows")
    return ols(rg[:, None] * X, rf - rg * offset)


def nested_projection(fitted_values: np.ndarray, Z: np.ndarray) -> LinearFit:
    """Project fitted values onto the columns of a (smaller) design."""
    return ols(Z, fitted_values)


# ========== Lasso ==========

@dataclass(frozen=True, eq=False)
class LassoFit:
    """
    Lasso solution on standardized columns.

    ``coefficients`` are on the original scale. ``design`` and ``response``
    hold the standardized penalized problem after unpenalized columns were
    partialled out, so ``gradient()`` gives the optimality residuals.
    """

    coefficients: np.ndarray
    standardized: np.ndarray
    scale: np.ndarray
    penalty: float
    penalized: np.ndarray
    design: np.ndarray
    response: np.ndarray

    def gradient(self) -> np.ndarray:
        """(1/n) W'(z - W b) over the penalized columns."""
        b = self.standardized[self.penalized]
        n = self.response.shape[0]
        return self.design.T @ (self.response - self.design @ b) / n

    def support(self) -> np.ndarray:
        """Positions of nonzero penalized coefficients."""
        return self.penalized[self.standardized[self.penalized] != 0.0]


def _standardize(W: np.ndarray, z: np.ndarray, unpenalized: Sequence[int]):
    scale = np.sqrt(np.mean(W ** 2, axis=0))
    scale[scale == 0.0] = 1.0
    Ws = W / scale
    free = np.asarray(sorted(set(int(u) for u in unpenalized)), dtype=np.intp)
    penalized = np.setdiff1d(np.arange(W.shape[1]), free)

    # Frisch-Waugh: partial the unpenalized columns out of everything else
    if free.size:
        U = Ws[:, free]
        z_r = z - U @ np.linalg.lstsq(U, z, rcond=RCOND)[0]
        P_r = Ws[:, penalized] - U @ np.linalg.lstsq(U, Ws[:, penalized], rcond=RCOND)[0]
    else:
        z_r = z
        P_r = Ws[:, penalized]
    return Ws, scale, free, penalized, P_r, z_r


def lasso(W: np.ndarray, z: np.ndarray, penalty: float,
          unpenalized: Sequence[int] = ()) -> LassoFit:
    """
    Lasso on standardized columns via coordinate descent.

    Minimizes (1/2n)||z - W~ b||^2 + penalty * ||b_penalized||_1 where W~
    has columns scaled to unit root-mean-square. No additive intercept is
    fitted; pass the intercept column in ``unpenalized`` instead.

    Args:
        W: Design, shape (n, p)
        z: Response, shape (n,)
        penalty: Nonnegative penalty; 0 gives the least-squares solution
        unpenalized: Column positions excluded from the penalty

    Returns:
        LassoFit with original-scale coefficients
    """
    W, z = _check(W, z)
    if penalty < 0:
        raise ConfigurationError(f"penalty must be nonnegative, got {penalty}")
    Ws, scale, free, penalized, P_r, z_r = _standardize(W, z, unpenalized)

    b = np.zeros(W.shape[1])
    if penalized.size:
        if penalty == 0.0:
            b[penalized] = ols(P_r, z_r).coefficients
        else:
            model = Lasso(alpha=penalty, fit_intercept=False, tol=LASSO_TOL,
                          max_iter=LASSO_MAX_ITER, selection="cyclic")
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                model.fit(P_r, z_r)
            b[penalized] = model.coef_
    if free.size:
        rest = z - Ws[:, penalized] @ b[penalized]
        b[free] = np.linalg.lstsq(Ws[:, free], rest, rcond=RCOND)[0]

    return LassoFit(b / scale, b, scale, float(penalty), penalized, P_r, z_r)


def lasso_cv(W: np.ndarray, z: np.ndarray, seed: int, unpenalized: Sequence[int] = (),
             n_folds: int = CV_FOLDS) -> Tuple[float, LassoFit]:
    """
    Pick the lasso penalty by K-fold cross-validation with the one-standard-error rule.

    The largest penalty whose mean CV error is within one standard error of
    the minimum is chosen, then the lasso is refitted on all rows.

    Returns:
        (penalty, fit)
    """
    W, z = _check(W, z)
    _, _, _, penalized, P_r, z_r = _standardize(W, z, unpenalized)
    if penalized.size == 0 or not np.any(P_r) or W.shape[0] < 2 * n_folds:
        return 0.0, lasso(W, z, 0.0, unpenalized)

    cv = KFold(n_splits=n_folds, shuffle=True, random_state=seed)
    model = LassoCV(cv=cv, fit_intercept=False,
                    tol=1e-8, max_iter=LASSO_MAX_ITER)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model.fit(P_r, z_r)

    mse = model.mse_path_
    mean = mse.mean(axis=1)
    se = mse.std(axis=1, ddof=1) / np.sqrt(mse.shape[1])
    best = int(np.argmin(mean))
    # alphas_ are in decreasing order: the first within one SE is the largest
    within = np.flatnonzero(mean <= mean[best] + se[best])
    penalty = float(model.alphas_[within[0]])
    logger.debug("lasso CV: min penalty %.4g, one-SE penalty %.4g", model.alphas_[best], penalty)
    return penalty, lasso(W, z, penalty, unpenalized)
