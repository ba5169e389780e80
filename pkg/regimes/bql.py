"""
Balanced Q-learning

Estimates the four families of linear contrasts that define a two-stage
regime choosing, at each stage, which extra covariates to assess and
whether to treat:

    stage 2 treatment   alpha_bar (full information), alpha[i1, a1, i2]
    stage 2 assessment  beta_bar[i1, i2], beta[i1, a1, i2]
    stage 1 treatment   gamma_bar[i1], gamma[i1]
    stage 1 assessment  delta[i1]

Steps:
    1. split the data into K folds
    2. cross-fit f2 = E[Y | S1, S2, A1] and g2 = P(A2 = 1 | S1, S2, A1)
    3. R-learner fit of alpha_bar with the stage-2 treatment cost gap as
       offset, then project onto every (j1, j2) history
    4-5. pseudo-outcomes for the stage-2 assessment contrasts against the
       full set, regressed on (S1, S_l2, A1) and projected onto S_l̄2
    6. stage-1 pseudo-outcomes under the fitted stage-2 rules
    7. cross-fitted versions of those pseudo-outcomes, centered by f_j1
       and g1 learned out of fold
    8. R-learner fit of gamma_bar, projected onto S_j̄1
    9. pseudo-outcomes for the stage-1 assessment contrasts, regressed on S_l1

Every cost is multiplied by lambda before fitting.

Example:
    >>> learner = BalancedQLearner(BqlConfig(K=2, seed=11))
    >>> regime = learner.fit(dataset, catalog, costs)
    >>> regime.delta[0]
"""

from __future__ import annotations

import contextlib
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Iterator, Mapping, Optional, Tuple

import numpy as np

from .core import (
    AssessmentCatalog,
    CostSpec,
    Dataset,
    FeatureIndexSet,
    FittedRegime,
    check_keys,
    derive_seed,
    history_design,
    require_valid,
)
from .errors import ConfigurationError, DataError, RegimeError
from .nuisance import (
    PROPENSITY_CLIP,
    CrossFitPredictor,
    FoldPlan,
    LearnerSpec,
    NuisanceCache,
    fit_learner,
    make_folds,
)
from .regress import nested_projection, ols, residual_on_residual

logger = logging.getLogger(__name__)

INNER_POLICIES = ("nested", "shared")
MIN_ROWS_PER_FOLD = 10
FORMAT_VERSION = 1

# Seed streams
_INNER_PLAN = 101
_F1_MODEL = 202


# ========== Configuration ==========

@dataclass(frozen=True)
class BqlConfig:
    """
    Estimator settings.

    Attributes:
        K: Number of cross-fitting folds
        f2, g2, f1, g1: Learners for the nuisance functions
        intercept: Append an intercept column to every contrast design
        seed: Seed for fold plans and learners
        inner_policy: "nested" re-runs the stage-2 steps on each D_-k with a
            fresh K-fold split; "shared" reuses the full-sample stage-1
            pseudo-outcomes restricted to D_-k
    """

    K: int = 2
    f2: LearnerSpec = LearnerSpec()
    g2: LearnerSpec = LearnerSpec()
    f1: LearnerSpec = LearnerSpec()
    g1: LearnerSpec = LearnerSpec()
    intercept: bool = True
    seed: int = 0
    inner_policy: str = "nested"

    def __post_init__(self):
        if self.K < 2:
            raise ConfigurationError(f"K must be at least 2, got {self.K}")
        if self.inner_policy not in INNER_POLICIES:
            raise ConfigurationError(f"inner_policy must be one of {INNER_POLICIES}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "K": self.K,
            "f2": self.f2.to_dict(),
            "g2": self.g2.to_dict(),
            "f1": self.f1.to_dict(),
            "g1": self.g1.to_dict(),
            "intercept": self.intercept,
            "seed": self.seed,
            "inner_policy": self.inner_policy,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BqlConfig":
        check_keys(data, set(cls.__dataclass_fields__), "bql config")
        kwargs = dict(data)
        for name in ("f2", "g2", "f1", "g1"):
            if name in kwargs:
                kwargs[name] = LearnerSpec.from_dict(kwargs[name])
        return cls(**kwargs)

    @classmethod
    def with_learner(cls, spec: LearnerSpec, **kwargs) -> "BqlConfig":
        """Same learner for all four nuisance functions."""
        return cls(f2=spec, g2=spec, f1=spec, g1=spec, **kwargs)


# ========== Designs ==========

class DesignBank:
    """
    Design matrices of one dataset under a catalog, built once and reused.

    Raw covariate blocks follow the history order (stage 1 positions, then
    stage 2 positions); ``a1`` is either the observed column or a constant.
    """

    def __init__(self, d: Dataset, catalog: AssessmentCatalog, intercept: bool):
        self.d = d
        self.catalog = catalog
        self.intercept = intercept
        self.full1 = FeatureIndexSet.full(catalog.d1)
        self.full2 = FeatureIndexSet.full(catalog.d2)
        self._memo: Dict[Tuple, np.ndarray] = {}

    def _get(self, key: Tuple, build: Callable[[], np.ndarray]) -> np.ndarray:
        if key not in self._memo:
            self._memo[key] = build()
        return self._memo[key]

    def xbar(self, a1: Optional[int] = None) -> np.ndarray:
        """(S1, S2, a1, 1); observed A1 when a1 is None."""
        d = self.d
        col = d.A1 if a1 is None else a1
        return self._get(("xbar", a1), lambda: history_design(
            d.S1, self.full1, d.S2, self.full2, col, self.intercept))

    def xl(self, a1: Optional[int] = None) -> np.ndarray:
        """(S1, S_l2, a1, 1)."""
        d = self.d
        col = d.A1 if a1 is None else a1
        return self._get(("xl", a1), lambda: history_design(
            d.S1, self.full1, d.S2, self.catalog.l2, col, self.intercept))

    def s1(self) -> np.ndarray:
        """(S1, 1)."""
        return self._get(("s1",), lambda: history_design(self.d.S1, self.full1, intercept=self.intercept))

    def z_alpha(self, i1: int, i2: int) -> np.ndarray:
        """(S_l1∪j1, S_l2∪j2, 1)."""
        cat = self.catalog
        return self._get(("za", i1, i2), lambda: history_design(
            self.d.S1, cat.stage1_history(i1), self.d.S2, cat.stage2_history(i2),
            intercept=self.intercept))

    def z_beta(self, i1: int) -> np.ndarray:
        """(S_l1∪j1, S_l2, 1)."""
        cat = self.catalog
        return self._get(("zb", i1), lambda: history_design(
            self.d.S1, cat.stage1_history(i1), self.d.S2, cat.l2, intercept=self.intercept))

    def z_gamma(self, i1: int) -> np.ndarray:
        """(S_l1∪j1, 1)."""
        return self._get(("zg", i1), lambda: history_design(
            self.d.S1, self.catalog.stage1_history(i1), intercept=self.intercept))

    def z_delta(self) -> np.ndarray:
        """(S_l1, 1)."""
        return self._get(("zd",), lambda: history_design(
            self.d.S1, self.catalog.l1, intercept=self.intercept))


def by_observed_a1(Z: np.ndarray, coef0: np.ndarray, coef1: np.ndarray, A1: np.ndarray) -> np.ndarray:
    """Row-wise score using the coefficient vector of each row's observed a1."""
    return np.where(A1 == 1, Z @ coef1, Z @ coef0)


def treatment_cost(pair: Tuple[float, float], actions: np.ndarray) -> np.ndarray:
    """C(a) for each action in a 0/1 vector."""
    return pair[0] + actions * (pair[1] - pair[0])


# ========== Fit Containers ==========

@dataclass(eq=False)
class Stage2Fit:
    """Stage-2 coefficient families with the nuisance fits they used."""

    alpha_bar: np.ndarray
    alpha: Dict[Tuple[int, int, int], np.ndarray]
    beta_bar: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)
    beta: Dict[Tuple[int, int, int], np.ndarray] = field(default_factory=dict)
    f2: Optional[CrossFitPredictor] = None
    g2: Optional[CrossFitPredictor] = None
    pseudo2: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)

    @property
    def treatment(self) -> Tuple[np.ndarray, Dict[Tuple[int, int, int], np.ndarray]]:
        return self.alpha_bar, self.alpha

    @property
    def assessment(self) -> Tuple[Dict[Tuple[int, int], np.ndarray], Dict[Tuple[int, int, int], np.ndarray]]:
        """(beta_bar, beta); both empty until the assessment step has run."""
        return self.beta_bar, self.beta

    def __iter__(self) -> Iterator:
        return iter(self.treatment)


@dataclass(eq=False)
class Stage1Fit:
    """Stage-1 treatment contrasts with the pseudo-outcomes and nuisances behind them."""

    gamma_bar: Dict[int, np.ndarray]
    gamma: Dict[int, np.ndarray]
    pseudo1t: Dict[int, np.ndarray]
    f1_oof: Dict[int, np.ndarray]
    g1: CrossFitPredictor

    def __iter__(self) -> Iterator:
        return iter((self.gamma_bar, self.gamma))


@dataclass(eq=False)
class FitTrace:
    """Sample quantities of a fit, kept for inference and diagnostics."""

    plan: FoldPlan
    costs: CostSpec
    stage2: Stage2Fit
    stage1: Stage1Fit
    pseudo1c: Dict[int, np.ndarray]


# ========== Stage Steps ==========

@contextlib.contextmanager
def stage_label(label: str):
    """
    Prefix errors raised inside a stage with its label.

    Example:
        >>> with stage_label("stage 2 treatment"):
        ...     raise NumericError("singular")
        NumericError: stage 2 treatment: singular
    """
    try:
        yield
    except RegimeError as e:
        try:
            wrapped = type(e)(f"{label}: {e}")
        except TypeError:
            raise e
        raise wrapped from e


def minimum_rows(K: int) -> int:
    """Smallest n accepted with K folds: MIN_ROWS_PER_FOLD rows in every inner fold."""
    return MIN_ROWS_PER_FOLD * K * K


def check_fold_plan(d: Dataset, plan: FoldPlan, label: str = "fold") -> None:
    """
    Refuse a plan with a training complement that misses a treatment arm.

    Raises:
        ConfigurationError: Naming the fold, the stage and the minimum n
    """
    for k in range(plan.K):
        train = plan.train_rows(k)
        for stage, actions in ((1, d.A1[train]), (2, d.A2[train])):
            if np.unique(actions).size < 2:
                raise ConfigurationError(
                    f"{label} {k} complement lacks a treatment arm at stage {stage}; "
                    f"use at least n={minimum_rows(plan.K)} rows with both arms"
                )


def inner_fold_plan(sub: Dataset, K: int, outer_seed: int, k: int) -> FoldPlan:
    """Checked fold plan for re-running the stage-2 steps on the complement of outer fold k."""
    plan = make_folds(sub.n, K, derive_seed(outer_seed, _INNER_PLAN, k))
    check_fold_plan(sub, plan, f"outer fold {k}: inner fold")
    return plan


def _stage2_treatment(d: Dataset, bank: DesignBank, sc: CostSpec, cfg: BqlConfig,
                      plan: FoldPlan, cache: NuisanceCache) -> Stage2Fit:
    cat = bank.catalog
    X = np.column_stack([d.S1, d.S2, d.A1])
    f2 = cache.fit(X, d.Y, plan, cfg.f2)
    g2 = cache.fit(X, d.A2, plan, cfg.g2, PROPENSITY_CLIP)

    rf = d.Y - f2.oof
    rg = d.A2 - g2.oof
    alpha_bar = residual_on_residual(rf, rg, bank.xbar(), sc.treatment_gap(2)).coefficients

    alpha = {}
    for a1 in (0, 1):
        fitted = bank.xbar(a1) @ alpha_bar
        for i1 in range(len(cat.cand1)):
            for i2 in range(len(cat.cand2)):
                alpha[(i1, a1, i2)] = nested_projection(fitted, bank.z_alpha(i1, i2)).coefficients
    return Stage2Fit(alpha_bar=alpha_bar, alpha=alpha, f2=f2, g2=g2)


def _stage2_assessment(d: Dataset, bank: DesignBank, sc: CostSpec, s2: Stage2Fit) -> Stage2Fit:
    cat = bank.catalog
    full2 = cat.full2_position
    costs2 = sc.assessment_costs(cat, 2)
    contrast = bank.xbar() @ s2.alpha_bar

    beta_bar, beta, pseudo2 = {}, {}, {}
    for i1 in range(len(cat.cand1)):
        def indicator(i2: int) -> np.ndarray:
            score = by_observed_a1(bank.z_alpha(i1, i2), s2.alpha[(i1, 0, i2)],
                                   s2.alpha[(i1, 1, i2)], d.A1)
            return (score > 0).astype(float)

        full_indicator = indicator(full2)
        zb = bank.z_beta(i1)
        for i2 in range(len(cat.cand2)):
            if i2 == full2:
                # the baseline contrast against itself is identically zero
                pseudo = np.zeros(d.n)
                bb = np.zeros(bank.xl().shape[1])
                beta_bar[(i1, i2)] = bb
                for a1 in (0, 1):
                    beta[(i1, a1, i2)] = np.zeros(zb.shape[1])
            else:
                pseudo = contrast * (indicator(i2) - full_indicator) - costs2[i2] + costs2[full2]
                bb = ols(bank.xl(), pseudo).coefficients
                beta_bar[(i1, i2)] = bb
                for a1 in (0, 1):
                    beta[(i1, a1, i2)] = nested_projection(bank.xl(a1) @ bb, zb).coefficients
            pseudo2[(i1, i2)] = pseudo
    return replace(s2, beta_bar=beta_bar, beta=beta, pseudo2=pseudo2)


def stage1_pseudo_outcomes(d: Dataset, bank: DesignBank, sc: CostSpec,
                           s2: Stage2Fit) -> Dict[int, np.ndarray]:
    """
    Stage-1 pseudo-outcomes for every j1 under the fitted stage-2 rules.

    Y - C2t(A2) + (full contrast) x {I(full-history rule) - A2} - C2c(j2 full)
    + beta_bar contrast of the j2 the assessment rule picks - C1t(A1).
    """
    cat = bank.catalog
    full2 = cat.full2_position
    costs2 = sc.assessment_costs(cat, 2)
    contrast = bank.xbar() @ s2.alpha_bar
    base = (d.Y - treatment_cost(sc.c2t, d.A2) - costs2[full2]
            - treatment_cost(sc.c1t, d.A1))

    pseudo = {}
    for i1 in range(len(cat.cand1)):
        score_full = by_observed_a1(bank.z_alpha(i1, full2), s2.alpha[(i1, 0, full2)],
                                    s2.alpha[(i1, 1, full2)], d.A1)
        treat = (score_full > 0).astype(float)
        zb = bank.z_beta(i1)
        scores = np.column_stack([
            by_observed_a1(zb, s2.beta[(i1, 0, i2)], s2.beta[(i1, 1, i2)], d.A1)
            for i2 in range(len(cat.cand2))
        ])
        choice = np.argmax(scores, axis=1)
        gains = np.column_stack([bank.xl() @ s2.beta_bar[(i1, i2)] for i2 in range(len(cat.cand2))])
        chosen_gain = np.take_along_axis(gains, choice[:, None], axis=1).ravel()
        pseudo[i1] = base + contrast * (treat - d.A2) + chosen_gain
    return pseudo


def _stage1_treatment(d: Dataset, bank: DesignBank, cfg: BqlConfig, plan: FoldPlan,
                      cache: NuisanceCache, pseudo1t: Dict[int, np.ndarray],
                      inner: Callable[[Dataset, FoldPlan], Dict[int, np.ndarray]]) -> Stage1Fit:
    g1, f1_oof = crossfit_stage1_nuisance(d, cfg, plan, cache, pseudo1t, inner)
    rg1 = d.A1 - g1.oof
    s1 = bank.s1()

    gamma_bar, gamma = {}, {}
    for i1 in pseudo1t:
        rf1 = pseudo1t[i1] - f1_oof[i1]
        gb = residual_on_residual(rf1, rg1, s1, 0.0).coefficients
        gamma_bar[i1] = gb
        gamma[i1] = nested_projection(s1 @ gb, bank.z_gamma(i1)).coefficients
    return Stage1Fit(gamma_bar=gamma_bar, gamma=gamma, pseudo1t=pseudo1t, f1_oof=f1_oof, g1=g1)


def crossfit_stage1_nuisance(d: Dataset, cfg: BqlConfig, plan: FoldPlan, cache: NuisanceCache,
                             full_pseudo: Dict[int, np.ndarray],
                             inner: Callable[[Dataset, FoldPlan], Dict[int, np.ndarray]]
                             ) -> Tuple[CrossFitPredictor, Dict[int, np.ndarray]]:
    """
    Out-of-fold g1 and f_j1 predictions.

    For each outer fold k the pseudo-outcomes are rebuilt from D_-k alone
    (``inner`` runs the stage-2 steps on D_-k with a fresh split seeded by
    (seed, k)), f_j1 is learned on D_-k and evaluated on fold k.
    """
    g1 = cache.fit(d.S1, d.A1, plan, cfg.g1, PROPENSITY_CLIP)
    f1_oof = {key: np.empty(d.n) for key in full_pseudo}
    for k in range(plan.K):
        train = plan.train_rows(k)
        test = plan.test_rows(k)
        if cfg.inner_policy == "nested":
            sub = d.subset(train)
            pseudo = inner(sub, inner_fold_plan(sub, cfg.K, plan.seed, k))
        else:
            pseudo = {key: values[train] for key, values in full_pseudo.items()}
        for key, response in pseudo.items():
            model, _, _ = fit_learner(d.S1[train], response, cfg.f1,
                                      derive_seed(plan.seed, _F1_MODEL, k, key))
            f1_oof[key][test] = model.predict(d.S1[test])
    return g1, f1_oof


def _stage1_assessment(d: Dataset, bank: DesignBank, sc: CostSpec,
                       s1fit: Stage1Fit) -> Tuple[Dict[int, np.ndarray], Dict[int, np.ndarray]]:
    cat = bank.catalog
    full1 = cat.full1_position
    costs1 = sc.assessment_costs(cat, 1)
    s1 = bank.s1()

    pseudo1c = {}
    for i1, y1t in s1fit.pseudo1t.items():
        treat = (bank.z_gamma(i1) @ s1fit.gamma[i1] > 0).astype(float)
        pseudo1c[i1] = y1t + (s1 @ s1fit.gamma_bar[i1]) * (treat - d.A1) - costs1[i1]

    zd = bank.z_delta()
    delta = {}
    for i1 in pseudo1c:
        if i1 == full1:
            delta[i1] = np.zeros(zd.shape[1])
        else:
            delta[i1] = ols(zd, pseudo1c[i1] - pseudo1c[full1]).coefficients
    return delta, pseudo1c


def design_norm_maxima(d: Dataset, catalog: AssessmentCatalog) -> Dict[str, float]:
    """Largest raw-history norm seen in training for every deployed rule."""
    def widest(S1_set, S2_set=None) -> float:
        parts = [d.S1[:, S1_set.positions()]]
        if S2_set is not None:
            parts.append(d.S2[:, S2_set.positions()])
        block = np.hstack(parts)
        return float(np.max(np.linalg.norm(block, axis=1))) if block.size else 0.0

    norms = {"delta": widest(catalog.l1)}
    for i1 in range(len(catalog.cand1)):
        h1 = catalog.stage1_history(i1)
        norms[f"gamma:{i1}"] = widest(h1)
        norms[f"beta:{i1}"] = widest(h1, catalog.l2)
        for i2 in range(len(catalog.cand2)):
            norms[f"alpha:{i1},{i2}"] = widest(h1, catalog.stage2_history(i2))
    return norms


# ========== Estimator ==========

class BalancedQLearner:
    """
    Balanced Q-learning estimator.

    Example:
        >>> learner = BalancedQLearner(BqlConfig(seed=3))
        >>> regime = learner.fit(d, catalog, costs)
        >>> learner.trace_.stage1.pseudo1t[0][:5]
    """

    def __init__(self, config: Optional[BqlConfig] = None, cache: Optional[NuisanceCache] = None):
        self.config = config or BqlConfig()
        self.cache = cache if cache is not None else NuisanceCache()
        self.trace_: Optional[FitTrace] = None

    # ========== Checks ==========

    def check_inputs(self, d: Dataset, catalog: AssessmentCatalog, costs: CostSpec) -> None:
        require_valid(d)
        catalog.validate()
        costs.validate(catalog)
        if (catalog.d1, catalog.d2) != (d.d1, d.d2):
            raise DataError(f"catalog dimensions ({catalog.d1}, {catalog.d2}) do not match "
                            f"dataset ({d.d1}, {d.d2})")

    def plan_for(self, d: Dataset) -> FoldPlan:
        """
        Outer fold plan, refused before any fitting when it or (under the
        nested policy) one of its inner plans misses a treatment arm.
        """
        K = self.config.K
        if d.n < minimum_rows(K):
            raise ConfigurationError(f"n={d.n} is too small for inner cross-fitting with K={K}; "
                                     f"need n >= {minimum_rows(K)}")
        plan = make_folds(d.n, K, self.config.seed)
        check_fold_plan(d, plan)
        if self.config.inner_policy == "nested":
            for k in range(K):
                inner_fold_plan(d.subset(plan.train_rows(k)), K, plan.seed, k)
        return plan

    # ========== Steps ==========

    def stage2(self, d: Dataset, bank: DesignBank, sc: CostSpec, plan: FoldPlan) -> Stage2Fit:
        """Steps 2-5 on a dataset."""
        with stage_label("stage 2 treatment"):
            s2 = _stage2_treatment(d, bank, sc, self.config, plan, self.cache)
        with stage_label("stage 2 assessment"):
            s2 = _stage2_assessment(d, bank, sc, s2)
        return s2

    def _inner(self, catalog: AssessmentCatalog, sc: CostSpec):
        def run(sub: Dataset, sub_plan: FoldPlan) -> Dict[int, np.ndarray]:
            bank = DesignBank(sub, catalog, self.config.intercept)
            s2 = self.stage2(sub, bank, sc, sub_plan)
            return stage1_pseudo_outcomes(sub, bank, sc, s2)
        return run

    def inner_pseudo_outcomes(self, d: Dataset, catalog: AssessmentCatalog,
                              costs: CostSpec, k: int) -> Dict[int, np.ndarray]:
        """Stage-1 pseudo-outcomes rebuilt from D_-k only (rows outside fold k)."""
        plan = self.plan_for(d)
        sub = d.subset(plan.train_rows(k))
        inner_plan = inner_fold_plan(sub, self.config.K, plan.seed, k)
        return self._inner(catalog, costs.scaled())(sub, inner_plan)

    def fit(self, d: Dataset, catalog: AssessmentCatalog, costs: CostSpec) -> FittedRegime:
        """
        Run all steps and return the fitted regime.

        Raises:
            DataError: Invalid dataset or catalog/dataset mismatch
            ConfigurationError: Invalid catalog, costs or folds too small
        """
        self.check_inputs(d, catalog, costs)
        cfg = self.config
        sc = costs.scaled()
        plan = self.plan_for(d)
        bank = DesignBank(d, catalog, cfg.intercept)

        s2 = self.stage2(d, bank, sc, plan)
        with stage_label("stage 1 treatment"):
            pseudo1t = stage1_pseudo_outcomes(d, bank, sc, s2)
            s1fit = _stage1_treatment(d, bank, cfg, plan, self.cache, pseudo1t,
                                      self._inner(catalog, sc))
        with stage_label("stage 1 assessment"):
            delta, pseudo1c = _stage1_assessment(d, bank, sc, s1fit)

        self.trace_ = FitTrace(plan=plan, costs=sc, stage2=s2, stage1=s1fit, pseudo1c=pseudo1c)
        regime = FittedRegime(
            alpha_bar=s2.alpha_bar, alpha=s2.alpha, beta_bar=s2.beta_bar, beta=s2.beta,
            gamma_bar=s1fit.gamma_bar, gamma=s1fit.gamma, delta=delta,
            catalog=catalog, costs=costs, intercept=cfg.intercept,
            metadata={
                "format_version": FORMAT_VERSION,
                "n": d.n,
                "config": cfg.to_dict(),
                "design_norm_max": design_norm_maxima(d, catalog),
                "nuisance_learners": {
                    "f2": s2.f2.chosen, "g2": s2.g2.chosen, "g1": s1fit.g1.chosen,
                },
            },
        )
        logger.info("fitted BQL regime on n=%d (|J1|=%d, |J2|=%d, lambda=%g)",
                    d.n, len(catalog.cand1), len(catalog.cand2), costs.lam)
        return regime


# ========== Stage Operations ==========

def fit_stage2_treatment(d: Dataset, cat: AssessmentCatalog, costs: CostSpec,
                         cfg: BqlConfig) -> Stage2Fit:
    """alpha_bar and the projected alpha family; unpacks as (alpha_bar, alpha)."""
    learner = BalancedQLearner(cfg)
    learner.check_inputs(d, cat, costs)
    bank = DesignBank(d, cat, cfg.intercept)
    with stage_label("stage 2 treatment"):
        return _stage2_treatment(d, bank, costs.scaled(), cfg, learner.plan_for(d), learner.cache)


def fit_stage2_assessment(d: Dataset, cat: AssessmentCatalog, costs: CostSpec,
                          cfg: BqlConfig, stage2t: Stage2Fit) -> Tuple[Dict, Dict]:
    """(beta_bar, beta) given a stage-2 treatment fit."""
    bank = DesignBank(d, cat, cfg.intercept)
    with stage_label("stage 2 assessment"):
        s2 = _stage2_assessment(d, bank, costs.scaled(), stage2t)
    return s2.beta_bar, s2.beta


def _complete_stage2(d, cat, costs, cfg, stage2) -> Stage2Fit:
    if isinstance(stage2, Stage2Fit) and stage2.beta:
        return stage2
    raise ConfigurationError("stage 2 fit must include the assessment contrasts")


def fit_stage1_treatment(d: Dataset, cat: AssessmentCatalog, costs: CostSpec,
                         cfg: BqlConfig, stage2: Stage2Fit) -> Stage1Fit:
    """gamma_bar and gamma; unpacks as (gamma_bar, gamma)."""
    stage2 = _complete_stage2(d, cat, costs, cfg, stage2)
    learner = BalancedQLearner(cfg)
    sc = costs.scaled()
    bank = DesignBank(d, cat, cfg.intercept)
    with stage_label("stage 1 treatment"):
        pseudo1t = stage1_pseudo_outcomes(d, bank, sc, stage2)
        return _stage1_treatment(d, bank, cfg, learner.plan_for(d), learner.cache, pseudo1t,
                                 learner._inner(cat, sc))


def fit_stage1_assessment(d: Dataset, cat: AssessmentCatalog, costs: CostSpec, cfg: BqlConfig,
                          stage1t: Stage1Fit, stage2: Stage2Fit) -> Dict[int, np.ndarray]:
    """delta family given both treatment fits."""
    _complete_stage2(d, cat, costs, cfg, stage2)
    bank = DesignBank(d, cat, cfg.intercept)
    with stage_label("stage 1 assessment"):
        delta, _ = _stage1_assessment(d, bank, costs.scaled(), stage1t)
    return delta


def fit_bql(d: Dataset, cat: AssessmentCatalog, costs: CostSpec,
            cfg: Optional[BqlConfig] = None) -> FittedRegime:
    """Fit a Balanced Q-learning regime."""
    return BalancedQLearner(cfg).fit(d, cat, costs)
