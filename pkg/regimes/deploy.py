"""
Regime Deployment

Applies fitted decision rules to new subjects in the order a clinic would:

    1. read the free stage-1 covariates S_l1
    2. pick the stage-1 assessment set j1 (argmax of the assessment scores)
    3. assess S_j1 and decide A1 (treat iff score > 0)
    4. read S_l2, which reflects the A1 actually given
    5. pick j2, assess S_j2 and decide A2

Covariates are pulled from a ``CovariateOracle``; the pipeline only ever
requests l1, the chosen j1, l2 and the chosen j2.

Example:
    >>> oracle = CountingOracle(ArrayOracle(s1, s2))
    >>> record = deploy(regime, oracle)
    >>> record.a1, record.j2
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Protocol, Sequence, Tuple, Union, runtime_checkable

import numpy as np
import pandas as pd

from .core import AssessmentCatalog, CostSpec, FeatureIndexSet, subvector
from .errors import DimensionError, OracleError

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-9


# ========== Decision Rules ==========

@runtime_checkable
class DecisionRules(Protocol):
    """
    Anything that scores assessment candidates and treatments from raw histories.

    Histories are raw covariates in history order: stage-1 assessment reads
    S_l1; stage-1 treatment reads S_l1∪j1; stage-2 assessment reads
    (S_l1∪j1, S_l2); stage-2 treatment reads (S_l1∪j1, S_l2∪j2).
    """

    catalog: AssessmentCatalog
    costs: CostSpec
    metadata: Dict[str, Any]

    def assessment_scores(self, stage: int, history: np.ndarray,
                          i1: Optional[int] = None, a1: Optional[int] = None) -> np.ndarray:
        ...

    def treatment_scores(self, stage: int, history: np.ndarray, i1: int,
                         a1: Optional[int] = None, i2: Optional[int] = None) -> np.ndarray:
        ...


def choose_assessment(rules: DecisionRules, stage: int, history: np.ndarray,
                      i1: Optional[int] = None, a1: Optional[int] = None) -> Tuple[FeatureIndexSet, np.ndarray]:
    """
    Candidate set with the largest assessment score.

    Returns:
        (chosen set, scores of all candidates); ties go to the lowest
        catalog position
    """
    scores = np.asarray(rules.assessment_scores(stage, history, i1, a1), dtype=float).reshape(-1)
    cands = rules.catalog.cand1 if stage == 1 else rules.catalog.cand2
    if scores.shape[0] != len(cands):
        raise DimensionError(f"expected one score per candidate ({len(cands)}), got {scores.shape[0]}")
    return cands[int(np.argmax(scores))], scores


def choose_treatment(rules: DecisionRules, stage: int, history: np.ndarray, i1: int,
                     a1: Optional[int] = None, i2: Optional[int] = None) -> Tuple[int, float]:
    """Treatment decision: 1 iff the score is strictly positive."""
    score = float(np.asarray(rules.treatment_scores(stage, history, i1, a1, i2), dtype=float).reshape(-1)[0])
    return int(score > 0), score


# ========== Covariate Oracles ==========

class CovariateOracle(ABC):
    """
    Source of a single subject's covariates.

    Subclasses must implement:
        - read(stage, indices): values of the requested 1-based positions
    ``assign`` is told every treatment before later reads, so stage-2
    covariates can depend on the A1 given.
    """

    @abstractmethod
    def read(self, stage: int, indices: FeatureIndexSet) -> np.ndarray:
        pass

    def assign(self, stage: int, action: int) -> None:
        """Record the treatment given at a stage."""


class ArrayOracle(CovariateOracle):
    """Oracle over one row of fully observed covariates (offline deployment)."""

    def __init__(self, s1: np.ndarray, s2: np.ndarray):
        self.s1 = np.asarray(s1, dtype=float).ravel()
        self.s2 = np.asarray(s2, dtype=float).ravel()

    def read(self, stage: int, indices: FeatureIndexSet) -> np.ndarray:
        return subvector(self.s1 if stage == 1 else self.s2, indices)


class SimulatedSubject(CovariateOracle):
    """
    Simulated subject whose stage-2 covariates are drawn under the assigned A1.

    Args:
        s1: Stage-1 covariates
        s2_given_a1: Maps the stage-1 treatment to the stage-2 covariates
    """

    def __init__(self, s1: np.ndarray, s2_given_a1: Callable[[int], np.ndarray]):
        self.s1 = np.asarray(s1, dtype=float).ravel()
        self.s2_given_a1 = s2_given_a1
        self.a1: Optional[int] = None
        self.a2: Optional[int] = None

    def assign(self, stage: int, action: int) -> None:
        if stage == 1:
            self.a1 = int(action)
        else:
            self.a2 = int(action)

    def read(self, stage: int, indices: FeatureIndexSet) -> np.ndarray:
        if stage == 1:
            return subvector(self.s1, indices)
        if self.a1 is None:
            raise OracleError("stage-2 covariates requested before A1 was assigned")
        s2 = np.asarray(self.s2_given_a1(self.a1), dtype=float).ravel()
        return subvector(s2, indices)


class CountingOracle(CovariateOracle):
    """Wrapper that records every request made to another oracle."""

    def __init__(self, inner: CovariateOracle):
        self.inner = inner
        self.requests: List[Tuple[int, FeatureIndexSet]] = []
        self.assignments: List[Tuple[int, int]] = []

    def read(self, stage: int, indices: FeatureIndexSet) -> np.ndarray:
        self.requests.append((stage, indices))
        return self.inner.read(stage, indices)

    def assign(self, stage: int, action: int) -> None:
        self.assignments.append((stage, action))
        self.inner.assign(stage, action)

    def requested(self, stage: int) -> List[int]:
        """All positions requested at a stage, in request order."""
        return [i for s, indices in self.requests if s == stage for i in indices]

    def request_count(self, stage: int) -> int:
        return len(self.requested(stage))


# ========== Single-Subject Pipeline ==========

@dataclass
class DecisionRecord:
    """One subject's path through the deployment pipeline."""

    i1: int
    j1: FeatureIndexSet
    a1: int
    i2: int
    j2: FeatureIndexSet
    a2: int
    assessed: Dict[int, Dict[int, float]]
    assessment_scores1: np.ndarray
    assessment_scores2: np.ndarray
    treatment_score1: float
    treatment_score2: float
    assessment_cost: float = 0.0
    treatment_cost: float = 0.0
    extrapolation: bool = False


def _read(oracle: CovariateOracle, step: str, stage: int, indices: FeatureIndexSet) -> Dict[int, float]:
    if len(indices) == 0:
        return {}
    try:
        values = np.asarray(oracle.read(stage, indices), dtype=float).ravel()
    except OracleError as e:
        raise OracleError(f"{step}: {e}") from e
    except Exception as e:
        raise OracleError(f"{step}: covariate oracle failed ({e})") from e
    if values.shape[0] != len(indices):
        raise OracleError(f"{step}: oracle returned {values.shape[0]} values for {len(indices)} positions")
    return dict(zip(indices, values))


def _assign(oracle: CovariateOracle, step: str, stage: int, action: int) -> None:
    try:
        oracle.assign(stage, action)
    except Exception as e:
        raise OracleError(f"{step}: oracle rejected the treatment ({e})") from e


def _ordered(known: Mapping[int, float], indices: FeatureIndexSet) -> np.ndarray:
    return np.array([known[i] for i in indices], dtype=float)


def _over_norm(rules: DecisionRules, key: str, history: np.ndarray) -> np.ndarray:
    """Rows whose raw-history norm exceeds the training maximum of a rule."""
    maxima = (getattr(rules, "metadata", None) or {}).get("design_norm_max", {})
    history = np.atleast_2d(history)
    if key not in maxima or history.shape[1] == 0:
        return np.zeros(history.shape[0], dtype=bool)
    limit = float(maxima[key]) * (1 + NORM_TOLERANCE)
    return np.linalg.norm(history, axis=1) > limit


def realized_costs(costs: CostSpec, j1: FeatureIndexSet, a1: Any, j2: FeatureIndexSet,
                   a2: Any) -> Tuple[Any, Any]:
    """Unscaled (assessment cost, treatment cost) of a decision path."""
    assessment = costs.c1c[j1] + costs.c2c[j2]
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    treatment = (costs.c1t[0] + a1 * (costs.c1t[1] - costs.c1t[0])
                 + costs.c2t[0] + a2 * (costs.c2t[1] - costs.c2t[0]))
    return assessment, treatment


def deploy(rules: DecisionRules, oracle: CovariateOracle) -> DecisionRecord:
    """
    Run the two-stage pipeline for one subject.

    Raises:
        OracleError: When the oracle fails; the message names the step
        DimensionError: When the oracle's answers do not fit the rules
    """
    cat = rules.catalog

    # Stage 1
    known1 = _read(oracle, "read S_l1", 1, cat.l1)
    h_l1 = _ordered(known1, cat.l1)
    j1, scores1 = choose_assessment(rules, 1, h_l1)
    i1 = cat.cand1.index(j1)
    known1.update(_read(oracle, "assess S_j1", 1, j1))
    h1 = _ordered(known1, cat.stage1_history(i1))
    a1, t1 = choose_treatment(rules, 1, h1, i1)
    _assign(oracle, "assign A1", 1, a1)

    # Stage 2
    known2 = _read(oracle, "read S_l2", 2, cat.l2)
    h_l2 = np.concatenate([h1, _ordered(known2, cat.l2)])
    j2, scores2 = choose_assessment(rules, 2, h_l2, i1, a1)
    i2 = cat.cand2.index(j2)
    known2.update(_read(oracle, "assess S_j2", 2, j2))
    h2 = np.concatenate([h1, _ordered(known2, cat.stage2_history(i2))])
    a2, t2 = choose_treatment(rules, 2, h2, i1, a1, i2)
    _assign(oracle, "assign A2", 2, a2)

    extrapolation = bool(
        _over_norm(rules, "delta", h_l1)[0] or _over_norm(rules, f"gamma:{i1}", h1)[0]
        or _over_norm(rules, f"beta:{i1}", h_l2)[0] or _over_norm(rules, f"alpha:{i1},{i2}", h2)[0]
    )
    if extrapolation:
        logger.warning("subject history lies outside the training design range; rules extrapolate")

    assessment_cost, treatment_cost = realized_costs(rules.costs, j1, a1, j2, a2)
    return DecisionRecord(
        i1=i1, j1=j1, a1=a1, i2=i2, j2=j2, a2=a2,
        assessed={1: known1, 2: known2},
        assessment_scores1=scores1, assessment_scores2=scores2,
        treatment_score1=t1, treatment_score2=t2,
        assessment_cost=float(assessment_cost), treatment_cost=float(treatment_cost),
        extrapolation=extrapolation,
    )


# ========== Batch Deployment ==========

@dataclass(eq=False)
class BatchDecisions:
    """Decisions for m subjects; arrays are indexed by subject."""

    i1: np.ndarray
    a1: np.ndarray
    i2: np.ndarray
    a2: np.ndarray
    S2: np.ndarray
    assessment_cost: np.ndarray
    treatment_cost: np.ndarray
    extrapolation: np.ndarray
    catalog: AssessmentCatalog = field(repr=False)

    def __len__(self) -> int:
        return self.i1.shape[0]

    def record(self, row: int) -> Dict[str, Any]:
        cat = self.catalog
        return {
            "j1": int(self.i1[row]),
            "j1_set": str(cat.cand1[self.i1[row]]),
            "a1": int(self.a1[row]),
            "j2": int(self.i2[row]),
            "j2_set": str(cat.cand2[self.i2[row]]),
            "a2": int(self.a2[row]),
            "assessment_cost": float(self.assessment_cost[row]),
            "treatment_cost": float(self.treatment_cost[row]),
            "extrapolation": bool(self.extrapolation[row]),
        }


S2Source = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


def decide_batch(rules: DecisionRules, S1: np.ndarray, s2_given_a1: S2Source) -> BatchDecisions:
    """
    Deploy the rules on many subjects at once.

    Args:
        rules: Fitted decision rules
        S1: Stage-1 covariates, shape (m, d1)
        s2_given_a1: Stage-2 covariates, either a fixed (m, d2) array or a
            function of the assigned A1 vector returning one

    Returns:
        BatchDecisions identical to running ``deploy`` per subject
    """
    cat = rules.catalog
    S1 = np.atleast_2d(np.asarray(S1, dtype=float))
    m = S1.shape[0]
    l1 = cat.l1.positions()
    if m == 0:
        none = np.zeros(0, dtype=int)
        return BatchDecisions(
            i1=none, a1=none.copy(), i2=none.copy(), a2=none.copy(), S2=np.zeros((0, cat.d2)),
            assessment_cost=np.zeros(0), treatment_cost=np.zeros(0),
            extrapolation=np.zeros(0, dtype=bool), catalog=cat,
        )

    scores1 = np.asarray(rules.assessment_scores(1, S1[:, l1]), dtype=float).reshape(m, -1)
    i1 = np.argmax(scores1, axis=1)
    flagged = _over_norm(rules, "delta", S1[:, l1])

    a1 = np.zeros(m, dtype=int)
    for u in np.unique(i1):
        rows = np.flatnonzero(i1 == u)
        h1 = S1[rows][:, cat.stage1_history(u).positions()]
        a1[rows] = np.asarray(rules.treatment_scores(1, h1, int(u)), dtype=float).reshape(-1) > 0
        flagged[rows] |= _over_norm(rules, f"gamma:{u}", h1)

    S2 = s2_given_a1(a1) if callable(s2_given_a1) else s2_given_a1
    S2 = np.atleast_2d(np.asarray(S2, dtype=float))
    if S2.shape[0] != m:
        raise DimensionError(f"stage-2 covariates have {S2.shape[0]} rows, expected {m}")

    i2 = np.zeros(m, dtype=int)
    a2 = np.zeros(m, dtype=int)
    for u in np.unique(i1):
        h1_positions = cat.stage1_history(u).positions()
        for a in (0, 1):
            rows = np.flatnonzero((i1 == u) & (a1 == a))
            if rows.size == 0:
                continue
            h1 = S1[rows][:, h1_positions]
            hist = np.hstack([h1, S2[rows][:, cat.l2.positions()]])
            scores2 = np.asarray(rules.assessment_scores(2, hist, int(u), a), dtype=float).reshape(rows.size, -1)
            i2[rows] = np.argmax(scores2, axis=1)
            flagged[rows] |= _over_norm(rules, f"beta:{u}", hist)
            for v in np.unique(i2[rows]):
                sub = rows[i2[rows] == v]
                h2 = np.hstack([S1[sub][:, h1_positions], S2[sub][:, cat.stage2_history(v).positions()]])
                t2 = np.asarray(rules.treatment_scores(2, h2, int(u), a, int(v)), dtype=float).reshape(-1)
                a2[sub] = t2 > 0
                flagged[sub] |= _over_norm(rules, f"alpha:{u},{v}", h2)

    c1c = rules.costs.assessment_costs(cat, 1)
    c2c = rules.costs.assessment_costs(cat, 2)
    _, treatment = realized_costs(rules.costs, cat.cand1[0], a1, cat.cand2[0], a2)
    if np.any(flagged):
        logger.warning("%d of %d subjects lie outside the training design range", int(flagged.sum()), m)
    return BatchDecisions(
        i1=i1, a1=a1, i2=i2, a2=a2, S2=S2,
        assessment_cost=c1c[i1] + c2c[i2],
        treatment_cost=np.broadcast_to(treatment, (m,)).astype(float),
        extrapolation=flagged, catalog=cat,
    )


DECISION_COLUMNS = ["j1", "j1_set", "a1", "j2", "j2_set", "a2",
                    "assessment_cost", "treatment_cost", "extrapolation"]


def write_decisions_csv(decisions: Union[BatchDecisions, Sequence[DecisionRecord]],
                        path: Union[str, Path]) -> pd.DataFrame:
    """Write one row per subject with the chosen sets, treatments and realized costs."""
    if isinstance(decisions, BatchDecisions):
        rows = [decisions.record(r) for r in range(len(decisions))]
    else:
        rows = [{
            "j1": r.i1, "j1_set": str(r.j1), "a1": r.a1,
            "j2": r.i2, "j2_set": str(r.j2), "a2": r.a2,
            "assessment_cost": r.assessment_cost, "treatment_cost": r.treatment_cost,
            "extrapolation": r.extrapolation,
        } for r in decisions]
    df = pd.DataFrame(rows, columns=DECISION_COLUMNS)
    df.to_csv(path, index=False)
    return df
