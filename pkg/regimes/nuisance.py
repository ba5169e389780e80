"""
Cross-Fitted Nuisance Estimation

Fold plans and cross-fitted regressions for the nuisance functions of the
estimator: outcome means (f2, f_j1) and propensities (g2, g1).

Base learners come from scikit-learn:
- ``ridge``: Ridge regression (unpenalized intercept)
- ``forest``: RandomForestRegressor, 200 trees, depth 8, min leaf 5,
  sqrt(p) features per split, bootstrap, seeded per fold
- ``super``: discrete super learner choosing ridge or forest per fold by
  5-fold internal CV mean squared error (ties go to ridge)

Propensities are regressions on 0/1 responses clipped into [0.01, 0.99].

Example:
    >>> plan = make_folds(n=500, K=2, seed=7)
    >>> fit = fit_crossfit(X, y, plan, LearnerSpec(kind="ridge"))
    >>> fit.oof.shape
    (500,)
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
from sklearn.ensemble import RandomForestRegressor
from sklearn.linear_model import Ridge
from sklearn.model_selection import KFold, cross_val_predict

from .core import check_keys, derive_seed
from .errors import ConfigurationError, DimensionError

logger = logging.getLogger(__name__)

PROPENSITY_CLIP = (0.01, 0.99)
LEARNER_KINDS = ("ridge", "forest", "super")


# ========== Learner Specification ==========

@dataclass(frozen=True)
class LearnerSpec:
    """
    Base-learner choice and hyperparameters.

    Example:
        >>> LearnerSpec(kind="forest", n_estimators=50)
    """

    kind: str = "super"
    ridge_alpha: float = 1.0
    n_estimators: int = 200
    max_depth: int = 8
    min_samples_leaf: int = 5
    max_features: Union[str, float] = "sqrt"
    cv_folds: int = 5
    n_jobs: int = 1

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ConfigurationError(f"learner kind must be one of {LEARNER_KINDS}, got {self.kind!r}")
        if self.ridge_alpha <= 0:
            raise ConfigurationError("ridge_alpha must be positive")
        for name in ("n_estimators", "max_depth", "min_samples_leaf", "n_jobs"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.cv_folds < 2:
            raise ConfigurationError("cv_folds must be at least 2")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "LearnerSpec":
        check_keys(data, set(cls.__dataclass_fields__), "learner")
        return cls(**data)


# ========== Folds ==========

@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Assignment of n rows to K folds (labels 0..K-1)."""

    n: int
    K: int
    assignment: np.ndarray
    seed: int

    def test_rows(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)

    def train_rows(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != k)

    def sizes(self) -> List[int]:
        return [int(np.sum(self.assignment == k)) for k in range(self.K)]


def make_folds(n: int, K: int, seed: int) -> FoldPlan:
    """
    Split n rows into K balanced folds from a seeded permutation.

    Raises:
        ConfigurationError: If K < 2 or K > n
    """
    if K < 2:
        raise ConfigurationError(f"need at least 2 folds, got K={K}")
    if K > n:
        raise ConfigurationError(f"cannot split {n} rows into {K} folds")
    assignment = np.empty(n, dtype=np.intp)
    splitter = KFold(n_splits=K, shuffle=True, random_state=derive_seed(seed))
    for k, (_, test) in enumerate(splitter.split(np.zeros((n, 1)))):
        assignment[test] = k
    return FoldPlan(n=n, K=K, assignment=assignment, seed=int(seed))


# ========== Cross-Fitting ==========

@dataclass(eq=False)
class CrossFitPredictor:
    """
    Per-fold predictors and their out-of-fold predictions.

    ``models[k]`` was trained without fold k and produced ``oof`` on fold k.
    ``chosen[k]`` names the learner used; ``fold_scores[k]`` holds the
    internal-CV MSE of each base learner when the super learner ran.
    """

    plan: FoldPlan
    models: List[Any]
    oof: np.ndarray
    chosen: List[str]
    fold_scores: List[Dict[str, float]] = field(default_factory=list)
    clip: Optional[Tuple[float, float]] = None

    def predict(self, X: np.ndarray, k: int) -> np.ndarray:
        """Predict with the model trained without fold k."""
        pred = self.models[k].predict(np.asarray(X, dtype=float))
        return _clip(pred, self.clip)

    @property
    def fold_mse(self) -> List[float]:
        """Internal-CV MSE of the selected learner per fold (NaN without selection)."""
        return [scores.get(name, float("nan")) for scores, name in zip(self.fold_scores, self.chosen)]


def _clip(pred: np.ndarray, clip: Optional[Tuple[float, float]]) -> np.ndarray:
    if clip is None:
        return pred
    return np.clip(pred, clip[0], clip[1])


def _make_learner(spec: LearnerSpec, kind: str, seed: int):
    if kind == "ridge":
        return Ridge(alpha=spec.ridge_alpha)
    return RandomForestRegressor(
        n_estimators=spec.n_estimators,
        max_depth=spec.max_depth,
        min_samples_leaf=spec.min_samples_leaf,
        max_features=spec.max_features,
        bootstrap=True,
        random_state=seed,
        n_jobs=spec.n_jobs,
    )


def _select(X: np.ndarray, y: np.ndarray, spec: LearnerSpec, seed: int) -> Tuple[str, Dict[str, float]]:
    """Discrete super learner: internal-CV MSE of each base learner."""
    folds = min(spec.cv_folds, X.shape[0])
    cv = KFold(n_splits=folds, shuffle=True, random_state=derive_seed(seed, 1))
    scores = {}
    for kind in ("ridge", "forest"):
        pred = cross_val_predict(_make_learner(spec, kind, derive_seed(seed, 2)), X, y, cv=cv)
        scores[kind] = float(np.mean((y - pred) ** 2))
    chosen = "ridge" if scores["ridge"] <= scores["forest"] else "forest"
    return chosen, scores


def fit_learner(X: np.ndarray, y: np.ndarray, spec: LearnerSpec,
                seed: int) -> Tuple[Any, str, Dict[str, float]]:
    """
    Train one learner on all given rows.

    Returns:
        (fitted model, learner kind used, internal-CV scores or {})
    """
    if spec.kind == "super":
        kind, scores = _select(X, y, spec, seed)
    else:
        kind, scores = spec.kind, {}
    model = _make_learner(spec, kind, derive_seed(seed, 2))
    model.fit(X, y)
    return model, kind, scores


def fit_crossfit(X: np.ndarray, y: np.ndarray, plan: FoldPlan, spec: LearnerSpec,
                 clip: Optional[Tuple[float, float]] = None) -> CrossFitPredictor:
    """
    Cross-fit a learner over a fold plan.

    Args:
        X: Features, shape (n, p)
        y: Response, shape (n,)
        plan: Fold plan over the same n rows
        spec: Learner specification
        clip: Optional [lo, hi] clamp for propensity use

    Returns:
        CrossFitPredictor whose out-of-fold prediction for row i comes from
        the model trained without fold(i)
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != plan.n or y.shape != (plan.n,):
        raise DimensionError(f"features {X.shape} and response {y.shape} do not match plan n={plan.n}")

    oof = np.empty(plan.n)
    models, chosen, scores = [], [], []
    for k in range(plan.K):
        train = plan.train_rows(k)
        test = plan.test_rows(k)
        if train.size < 2:
            raise ConfigurationError(f"fold {k} leaves only {train.size} training rows")
        model, kind, fold_scores = fit_learner(X[train], y[train], spec, derive_seed(plan.seed, k))
        oof[test] = _clip(model.predict(X[test]), clip)
        models.append(model)
        chosen.append(kind)
        scores.append(fold_scores)

    logger.debug("cross-fit %s over %d folds: %s", spec.kind, plan.K, chosen)
    return CrossFitPredictor(plan=plan, models=models, oof=oof, chosen=chosen,
                             fold_scores=scores, clip=clip)


class NuisanceCache:
    """
    Memo of cross-fits keyed by the bytes of (X, y, fold plan, spec, clip).

    Sweeps over lambda on one training draw refit the same propensity and
    outcome-mean nuisances; the cache returns the stored fit instead.
    """

    def __init__(self):
        self._fits: Dict[str, CrossFitPredictor] = {}
        self.hits = 0

    @staticmethod
    def _key(X, y, plan: FoldPlan, spec: LearnerSpec, clip) -> str:
        digest = hashlib.sha1()
        for array in (np.ascontiguousarray(X, dtype=float), np.ascontiguousarray(y, dtype=float),
                      np.ascontiguousarray(plan.assignment)):
            digest.update(array.tobytes())
            digest.update(str(array.shape).encode())
        digest.update(repr((plan.seed, spec, clip)).encode())
        return digest.hexdigest()

    def fit(self, X: np.ndarray, y: np.ndarray, plan: FoldPlan, spec: LearnerSpec,
            clip: Optional[Tuple[float, float]] = None) -> CrossFitPredictor:
        key = self._key(X, y, plan, spec, clip)
        if key in self._fits:
            self.hits += 1
            return self._fits[key]
        result = fit_crossfit(X, y, plan, spec, clip)
        self._fits[key] = result
        return result

    def __len__(self) -> int:
        return len(self._fits)
