"""
Comparator Regimes

Two cost-adjusted comparators that decide treatments from full-design
contrasts and ignore assessment costs when fitting:

- ``dense``: R-learner Q-learning on the full designs. It always assesses
  every covariate, so its assessment cost is the full-set cost.
- ``sparse``: the same contrasts fitted by the lasso. Each stage assesses
  the cheapest catalog candidate covering the covariates with nonzero
  coefficients.

Both treat iff the contrast exceeds the scaled treatment cost gap
lambda * (C(1) - C(0)) of the stage, and both learn the stage-1 outcome
mean with the same nested cross-fitting as the Balanced Q-learner.

Example:
    >>> dense = fit_dense(d, catalog, costs, BqlConfig(seed=3))
    >>> dense.assessment_scores(1, S1[:, catalog.l1.positions()]).argmax(axis=1)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .bql import (
    FORMAT_VERSION,
    BalancedQLearner,
    BqlConfig,
    DesignBank,
    crossfit_stage1_nuisance,
    design_norm_maxima,
    stage_label,
    treatment_cost,
)
from .core import AssessmentCatalog, CostSpec, Dataset, FeatureIndexSet, derive_seed
from .errors import ConfigurationError, DimensionError
from .nuisance import PROPENSITY_CLIP, FoldPlan, NuisanceCache
from .regress import lasso, lasso_cv, residual_on_residual

logger = logging.getLogger(__name__)

BASELINE_KINDS = ("dense", "sparse")

# Seed streams for the lasso cross-validation
_CV_STAGE2 = 303
_CV_STAGE1 = 404


# ========== Regime ==========

@dataclass(eq=False)
class BaselineRegime:
    """
    Comparator regime with full-design contrasts and fixed assessment choices.

    Attributes:
        kind: "dense" or "sparse"
        alpha: Stage-2 contrast over (S1, S2, a1, 1)
        gamma: Stage-1 contrast over (S1, 1)
        thresholds: Scaled treatment cost gaps (stage 1, stage 2)
        i1, i2: Catalog positions always assessed
        penalty: Lasso penalties (stage 1, stage 2); None for dense
        support: Selected covariate positions per stage
    """

    kind: str
    alpha: np.ndarray
    gamma: np.ndarray
    thresholds: Tuple[float, float]
    i1: int
    i2: int
    catalog: AssessmentCatalog
    costs: CostSpec
    intercept: bool = True
    penalty: Optional[Tuple[float, float]] = None
    support: Dict[int, FeatureIndexSet] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ConfigurationError(f"baseline kind must be one of {BASELINE_KINDS}")
        extra = 1 if self.intercept else 0
        cat = self.catalog
        if len(self.alpha) != cat.d1 + cat.d2 + 1 + extra:
            raise DimensionError(f"alpha has length {len(self.alpha)}, expected {cat.d1 + cat.d2 + 1 + extra}")
        if len(self.gamma) != cat.d1 + extra:
            raise DimensionError(f"gamma has length {len(self.gamma)}, expected {cat.d1 + extra}")

    def assessment_scores(self, stage: int, history: np.ndarray,
                          i1: Optional[int] = None, a1: Optional[int] = None) -> np.ndarray:
        """One-hot scores on the fixed assessment choice of the stage."""
        history = np.atleast_2d(np.asarray(history, dtype=float))
        size, chosen = ((len(self.catalog.cand1), self.i1) if stage == 1
                        else (len(self.catalog.cand2), self.i2))
        scores = np.zeros((history.shape[0], size))
        scores[:, chosen] = 1.0
        return scores

    def _scatter(self, history: np.ndarray, stage1: FeatureIndexSet,
                 stage2: Optional[FeatureIndexSet] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Place history columns at their covariate positions; unknown ones stay 0."""
        cat = self.catalog
        history = np.atleast_2d(np.asarray(history, dtype=float))
        expected = len(stage1) + (len(stage2) if stage2 is not None else 0)
        if history.shape[1] != expected:
            raise DimensionError(f"history has {history.shape[1]} covariates, rule expects {expected}")
        S1 = np.zeros((history.shape[0], cat.d1))
        S1[:, stage1.positions()] = history[:, :len(stage1)]
        S2 = np.zeros((history.shape[0], cat.d2))
        if stage2 is not None:
            S2[:, stage2.positions()] = history[:, len(stage1):]
        return S1, S2

    def treatment_scores(self, stage: int, history: np.ndarray, i1: int,
                         a1: Optional[int] = None, i2: Optional[int] = None) -> np.ndarray:
        """Contrast minus the stage's threshold; treat iff positive."""
        cat = self.catalog
        extra = [1.0] if self.intercept else []
        if stage == 1:
            S1, _ = self._scatter(history, cat.stage1_history(i1))
            X = np.column_stack([S1] + [np.full(S1.shape[0], v) for v in extra])
            return X @ self.gamma - self.thresholds[0]
        S1, S2 = self._scatter(history, cat.stage1_history(i1), cat.stage2_history(i2))
        m = S1.shape[0]
        X = np.column_stack([S1, S2, np.full(m, float(a1))] + [np.full(m, v) for v in extra])
        return X @ self.alpha - self.thresholds[1]

    def __repr__(self) -> str:
        return (f"BaselineRegime(kind={self.kind}, j1={self.catalog.cand1[self.i1]}, "
                f"j2={self.catalog.cand2[self.i2]}, thresholds={self.thresholds})")


# ========== Shared Steps ==========

def _thresholds(costs: CostSpec) -> Tuple[float, float]:
    sc = costs.scaled()
    return sc.treatment_gap(1), sc.treatment_gap(2)


def _stage2_residuals(d: Dataset, cfg: BqlConfig, plan: FoldPlan,
                      cache: NuisanceCache) -> Tuple[np.ndarray, np.ndarray]:
    X = np.column_stack([d.S1, d.S2, d.A1])
    f2 = cache.fit(X, d.Y, plan, cfg.f2)
    g2 = cache.fit(X, d.A2, plan, cfg.g2, PROPENSITY_CLIP)
    return d.Y - f2.oof, d.A2 - g2.oof


def _stage1_pseudo(d: Dataset, bank: DesignBank, sc: CostSpec, alpha: np.ndarray, thr2: float) -> np.ndarray:
    """Y - C2t(A2) + (contrast - threshold)(I(contrast > threshold) - A2)."""
    margin = bank.xbar() @ alpha - thr2
    return d.Y - treatment_cost(sc.c2t, d.A2) + margin * ((margin > 0).astype(float) - d.A2)


class _ComparatorFit:
    """Two-stage fit shared by both comparators; ``solve`` gives a stage contrast."""

    def __init__(self, cfg: BqlConfig, cache: NuisanceCache, solve):
        self.cfg = cfg
        self.cache = cache
        self.solve = solve

    def stage2(self, d: Dataset, bank: DesignBank, plan: FoldPlan) -> np.ndarray:
        rf, rg = _stage2_residuals(d, self.cfg, plan, self.cache)
        return self.solve(2, rf, rg, bank.xbar())

    def run(self, d: Dataset, catalog: AssessmentCatalog, costs: CostSpec,
            plan: FoldPlan) -> Tuple[np.ndarray, np.ndarray]:
        cfg = self.cfg
        sc = costs.scaled()
        _, thr2 = _thresholds(costs)
        bank = DesignBank(d, catalog, cfg.intercept)

        with stage_label("stage 2 treatment"):
            alpha = self.stage2(d, bank, plan)

        def inner(sub: Dataset, sub_plan: FoldPlan) -> Dict[int, np.ndarray]:
            sub_bank = DesignBank(sub, catalog, cfg.intercept)
            return {0: _stage1_pseudo(sub, sub_bank, sc, self.stage2(sub, sub_bank, sub_plan), thr2)}

        with stage_label("stage 1 treatment"):
            pseudo = _stage1_pseudo(d, bank, sc, alpha, thr2)
            g1, f1_oof = crossfit_stage1_nuisance(d, cfg, plan, self.cache, {0: pseudo}, inner)
            gamma = self.solve(1, pseudo - f1_oof[0], d.A1 - g1.oof, bank.s1())
        return alpha, gamma


def _metadata(d: Dataset, catalog: AssessmentCatalog, cfg: BqlConfig, **extra) -> Dict[str, Any]:
    meta = {
        "format_version": FORMAT_VERSION,
        "n": d.n,
        "config": cfg.to_dict(),
        "design_norm_max": design_norm_maxima(d, catalog),
    }
    meta.update(extra)
    return meta


def _prepare(d: Dataset, catalog: AssessmentCatalog, costs: CostSpec,
             cfg: Optional[BqlConfig], cache: Optional[NuisanceCache]):
    learner = BalancedQLearner(cfg, cache)
    learner.check_inputs(d, catalog, costs)
    return learner.config, learner.cache, learner.plan_for(d)


# ========== Dense ==========

def fit_dense(d: Dataset, catalog: AssessmentCatalog, costs: CostSpec,
              cfg: Optional[BqlConfig] = None, cache: Optional[NuisanceCache] = None) -> BaselineRegime:
    """
    Dense comparator: full-design R-learner contrasts with cost thresholds.

    With zero costs and only the full candidate sets this makes the same
    decisions as the Balanced Q-learner fitted with the same seeds.
    """
    cfg, cache, plan = _prepare(d, catalog, costs, cfg, cache)

    def solve(stage, rf, rg, X):
        return residual_on_residual(rf, rg, X, 0.0).coefficients

    alpha, gamma = _ComparatorFit(cfg, cache, solve).run(d, catalog, costs, plan)
    regime = BaselineRegime(
        kind="dense", alpha=alpha, gamma=gamma, thresholds=_thresholds(costs),
        i1=catalog.full1_position, i2=catalog.full2_position,
        catalog=catalog, costs=costs, intercept=cfg.intercept,
        support={1: catalog.j1_full, 2: catalog.j2_full},
        metadata=_metadata(d, catalog, cfg),
    )
    logger.info("fitted dense comparator on n=%d (thresholds %g, %g)", d.n, *regime.thresholds)
    return regime


# ========== Sparse ==========

def covering_candidate(catalog: AssessmentCatalog, costs: CostSpec, stage: int,
                       needed: FeatureIndexSet) -> int:
    """
    Cheapest candidate containing every needed position (lowest position on ties).

    Falls back to the full set with a warning when nothing covers.
    """
    cands = catalog.cand1 if stage == 1 else catalog.cand2
    prices = costs.assessment_costs(catalog, stage)
    covering = [i for i, j in enumerate(cands) if needed.issubset(j)]
    if not covering:
        full = catalog.full1_position if stage == 1 else catalog.full2_position
        logger.warning("stage %d: no candidate covers the selected covariates %s; assessing %s",
                       stage, needed, cands[full])
        return full
    return min(covering, key=lambda i: (prices[i], i))


def _positions(coef: np.ndarray, start: int, count: int) -> FeatureIndexSet:
    block = coef[start:start + count]
    return FeatureIndexSet(tuple(int(p) + 1 for p in np.flatnonzero(block != 0.0)))


def fit_sparse(d: Dataset, catalog: AssessmentCatalog, costs: CostSpec,
               penalty: Optional[float] = None, cfg: Optional[BqlConfig] = None,
               cache: Optional[NuisanceCache] = None) -> BaselineRegime:
    """
    Sparse comparator: lasso R-learner contrasts with cost thresholds.

    Args:
        penalty: Lasso penalty for both stages; None picks each stage's
            penalty by 5-fold cross-validation with the one-standard-error
            rule. Inner refits for the stage-1 outcome mean reuse the
            penalty chosen on the full sample.

    Raises:
        ConfigurationError: On a negative penalty
    """
    if penalty is not None and penalty < 0:
        raise ConfigurationError(f"penalty must be nonnegative, got {penalty}")
    cfg, cache, plan = _prepare(d, catalog, costs, cfg, cache)
    chosen: Dict[int, float] = {}

    def solve(stage, rf, rg, X):
        W = rg[:, None] * X
        free = (X.shape[1] - 1,) if cfg.intercept else ()
        if stage in chosen:
            return lasso(W, rf, chosen[stage], free).coefficients
        if penalty is None:
            stream = _CV_STAGE2 if stage == 2 else _CV_STAGE1
            level, fit = lasso_cv(W, rf, derive_seed(cfg.seed, stream), free)
        else:
            level, fit = float(penalty), lasso(W, rf, float(penalty), free)
        chosen[stage] = level
        return fit.coefficients

    alpha, gamma = _ComparatorFit(cfg, cache, solve).run(d, catalog, costs, plan)

    d1, d2 = catalog.d1, catalog.d2
    support2 = _positions(alpha, d1, d2)
    support1 = _positions(gamma, 0, d1).union(_positions(alpha, 0, d1))
    i1 = covering_candidate(catalog, costs, 1, support1.difference(catalog.l1))
    i2 = covering_candidate(catalog, costs, 2, support2.difference(catalog.l2))
    regime = BaselineRegime(
        kind="sparse", alpha=alpha, gamma=gamma, thresholds=_thresholds(costs),
        i1=i1, i2=i2, catalog=catalog, costs=costs, intercept=cfg.intercept,
        penalty=(chosen[1], chosen[2]), support={1: support1, 2: support2},
        metadata=_metadata(d, catalog, cfg, penalty_source="cv" if penalty is None else "fixed"),
    )
    logger.info("fitted sparse comparator on n=%d: penalties %s, assesses %s then %s",
                d.n, regime.penalty, catalog.cand1[i1], catalog.cand2[i2])
    return regime
