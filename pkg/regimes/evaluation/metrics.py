"""
Regime Evaluation Metrics

Off-policy value of a regime on logged data, cost-penalized profit,
assessment and treatment frequencies, and regret against an oracle.

The off-policy value is the self-normalized (Hajek) inverse propensity
weighted mean of outcomes over subjects whose logged treatments match the
regime's:

    w_i = I(A1_i = d1_i) I(A2_i = d2_i) / (P(A1_i | S1_i) P(A2_i | H2_i))
    V   = sum_i w_i Y_i / sum_i w_i

Example:
    >>> g1, g2 = fit_propensities(test, LearnerSpec(kind="ridge"), K=2, seed=0)
    >>> value = ipw_utility(test, regime, g1, g2)
    >>> profit_lambda(value, (0.0, 0.1, 0.0, 0.0), lam=1.0)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterator, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..core import CostSpec, Dataset
from ..deploy import BatchDecisions, DecisionRules, decide_batch
from ..errors import ConfigurationError, DimensionError, EvaluationError
from ..nuisance import PROPENSITY_CLIP, LearnerSpec, fit_crossfit, make_folds

logger = logging.getLogger(__name__)

COST_PARTS = ("c1c", "c1t", "c2c", "c2t")


# ========== Inverse Propensity Weighting ==========

@dataclass(frozen=True)
class IpwEstimate:
    """Hajek estimate with its linearization standard error."""

    utility: float
    se: float
    matched: int
    effective_n: float

    def __iter__(self) -> Iterator[float]:
        return iter((self.utility, self.se))


def _prob_of_logged(p_treat: np.ndarray, actions: np.ndarray) -> np.ndarray:
    return np.where(actions == 1, p_treat, 1.0 - p_treat)


def ipw_weights(test: Dataset, decisions: BatchDecisions, g1: np.ndarray, g2: np.ndarray) -> np.ndarray:
    """Inverse propensity weights of the logged subjects under the regime's decisions."""
    g1 = np.clip(np.asarray(g1, dtype=float).ravel(), *PROPENSITY_CLIP)
    g2 = np.clip(np.asarray(g2, dtype=float).ravel(), *PROPENSITY_CLIP)
    if g1.shape[0] != test.n or g2.shape[0] != test.n:
        raise DimensionError(f"propensities have {g1.shape[0]} and {g2.shape[0]} rows, data has {test.n}")
    A1 = test.A1.astype(int)
    A2 = test.A2.astype(int)
    match = (decisions.a1 == A1) & (decisions.a2 == A2)
    return match / (_prob_of_logged(g1, A1) * _prob_of_logged(g2, A2))


def ipw_estimate(test: Dataset, rules: DecisionRules, g1: np.ndarray, g2: np.ndarray,
                 decisions: Optional[BatchDecisions] = None) -> IpwEstimate:
    """
    Hajek IPW value of a regime on logged data.

    The regime is deployed on the logged covariates; stage-2 decisions of
    subjects whose logged A1 differs from the regime's carry zero weight.

    Raises:
        EvaluationError: If no logged subject follows the regime
    """
    if decisions is None:
        decisions = decide_batch(rules, test.S1, test.S2)
    w = ipw_weights(test, decisions, g1, g2)
    total = float(w.sum())
    if total <= 0:
        raise EvaluationError("no logged subject follows the regime; IPW weights sum to zero")
    utility = float(np.sum(w * test.Y) / total)
    se = float(np.sqrt(np.sum((w * (test.Y - utility)) ** 2)) / total)
    effective_n = total ** 2 / float(np.sum(w ** 2))
    return IpwEstimate(utility=utility, se=se, matched=int(np.count_nonzero(w)), effective_n=effective_n)


def ipw_utility(test: Dataset, rules: DecisionRules, g1: np.ndarray, g2: np.ndarray) -> float:
    """Hajek IPW estimate of E[Y] under the regime."""
    return ipw_estimate(test, rules, g1, g2).utility


def fit_propensities(d: Dataset, spec: Optional[LearnerSpec] = None, K: int = 2,
                     seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cross-fitted behavior propensities for evaluation.

    g1 regresses A1 on S1; g2 regresses A2 on (S1, S2, A1). Both are clipped
    into [0.01, 0.99].
    """
    spec = spec or LearnerSpec()
    plan = make_folds(d.n, K, seed)
    g1 = fit_crossfit(d.S1, d.A1, plan, spec, PROPENSITY_CLIP).oof
    g2 = fit_crossfit(np.column_stack([d.S1, d.S2, d.A1]), d.A2, plan, spec, PROPENSITY_CLIP).oof
    return g1, g2


# ========== Profit ==========

CostParts = Union[Mapping[str, float], Sequence[float]]


def profit_lambda(utility: float, costs: CostParts, lam: float) -> float:
    """
    Profit = utility - lambda * (c1c + c1t + c2c + c2t).

    ``costs`` is either a mapping with those four keys or a sequence of
    expected costs in that order.
    """
    if isinstance(costs, Mapping):
        missing = [k for k in COST_PARTS if k not in costs]
        if missing:
            raise ConfigurationError(f"cost parts missing: {', '.join(missing)}")
        values = [float(costs[k]) for k in COST_PARTS]
    else:
        values = [float(c) for c in costs]
    return float(utility) - float(lam) * sum(values)


def expected_costs(decisions: BatchDecisions, costs: CostSpec) -> Dict[str, float]:
    """Mean unscaled cost of each kind over the decided subjects."""
    cat = decisions.catalog
    return {
        "c1c": float(np.mean(costs.assessment_costs(cat, 1)[decisions.i1])),
        "c1t": float(np.mean(np.asarray(costs.c1t)[decisions.a1])),
        "c2c": float(np.mean(costs.assessment_costs(cat, 2)[decisions.i2])),
        "c2t": float(np.mean(np.asarray(costs.c2t)[decisions.a2])),
    }


def evaluate_on_data(test: Dataset, rules: DecisionRules, g1: np.ndarray, g2: np.ndarray,
                     costs: Optional[CostSpec] = None, lam: Optional[float] = None) -> Dict[str, Any]:
    """Utility, expected costs and profit of a regime estimated from logged data."""
    costs = costs if costs is not None else rules.costs
    lam = costs.lam if lam is None else float(lam)
    decisions = decide_batch(rules, test.S1, test.S2)
    estimate = ipw_estimate(test, rules, g1, g2, decisions)
    parts = expected_costs(decisions, costs)
    return {
        "utility": estimate.utility,
        "utility_se": estimate.se,
        "matched": estimate.matched,
        **parts,
        "lambda": lam,
        "profit": profit_lambda(estimate.utility, parts, lam),
    }


# ========== Frequencies ==========

@dataclass(frozen=True)
class FrequencyTable:
    """Share of subjects choosing each candidate set and each treatment."""

    cand1: Tuple[str, ...]
    freq1: np.ndarray
    cand2: Tuple[str, ...]
    freq2: np.ndarray
    treat1: float
    treat2: float

    @classmethod
    def from_decisions(cls, decisions: BatchDecisions) -> "FrequencyTable":
        cat = decisions.catalog
        m = max(len(decisions), 1)
        return cls(
            cand1=tuple(str(j) for j in cat.cand1),
            freq1=np.bincount(decisions.i1, minlength=len(cat.cand1)) / m,
            cand2=tuple(str(j) for j in cat.cand2),
            freq2=np.bincount(decisions.i2, minlength=len(cat.cand2)) / m,
            treat1=float(np.mean(decisions.a1)) if len(decisions) else 0.0,
            treat2=float(np.mean(decisions.a2)) if len(decisions) else 0.0,
        )

    def as_row(self) -> Dict[str, float]:
        """Flat columns freq1_<set>, freq2_<set>, treat1, treat2."""
        row = {f"freq1_{c}": float(f) for c, f in zip(self.cand1, self.freq1)}
        row.update({f"freq2_{c}": float(f) for c, f in zip(self.cand2, self.freq2)})
        row["treat1"] = self.treat1
        row["treat2"] = self.treat2
        return row


def selection_frequencies(rules: DecisionRules, subjects: Any) -> FrequencyTable:
    """
    Selection frequencies of a regime.

    Args:
        rules: Regime to deploy
        subjects: BatchDecisions already made, a Dataset (stage-2 covariates
            as logged) or simulator noise with ``S1`` and ``stage2(a1)``
    """
    if isinstance(subjects, BatchDecisions):
        decisions = subjects
    elif isinstance(subjects, Dataset):
        decisions = decide_batch(rules, subjects.S1, subjects.S2)
    else:
        decisions = decide_batch(rules, subjects.S1, subjects.stage2)
    return FrequencyTable.from_decisions(decisions)


# ========== Regret ==========

@dataclass(frozen=True)
class RegretEstimate:
    """Oracle profit minus the regime's profit."""

    regret: float
    se: float
    oracle_profit: float
    profit: float

    def __iter__(self) -> Iterator[float]:
        return iter((self.regret, self.se))


def empirical_regret(target: Any, rules: DecisionRules, oracle_profit: Optional[float] = None,
                     lam: Optional[float] = None, n_mc: int = 5000, seed: int = 0) -> RegretEstimate:
    """
    Regret of a regime against the best achievable profit.

    On a ``DiscreteInstance`` both profits are exact and the oracle defaults
    to backward induction. On a simulator the regime's profit is a Monte
    Carlo estimate and ``oracle_profit`` must be supplied.
    """
    from ..synth.generator import GenerativeSpec, true_profit
    from .oracle import DiscreteInstance, backward_induction_optimal, exact_profit

    if isinstance(target, DiscreteInstance):
        best = backward_induction_optimal(target, lam).profit if oracle_profit is None else float(oracle_profit)
        profit = exact_profit(target, rules, lam)
        return RegretEstimate(regret=best - profit, se=0.0, oracle_profit=best, profit=profit)
    if isinstance(target, GenerativeSpec):
        if oracle_profit is None:
            raise ConfigurationError("a simulator target needs oracle_profit")
        estimate = true_profit(target, rules, lam=lam, n_mc=n_mc, seed=seed)
        return RegretEstimate(regret=float(oracle_profit) - estimate.mean, se=estimate.se,
                              oracle_profit=float(oracle_profit), profit=estimate.mean)
    raise ConfigurationError(f"cannot compute regret against {type(target).__name__}")
