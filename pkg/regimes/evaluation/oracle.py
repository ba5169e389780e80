"""
Exact Small-Instance Oracle

Discrete two-stage problems whose profit can be computed by summation, and
two independent solvers for the best information-feasible regime:

- ``brute_force_optimal``: exhaustive search over assessment choices and
  treatment maps. Profit is additive over the information sets a regime
  can tell apart, so the search runs per set (per value of S_l1 at the top,
  per reachable stage-2 branch below) and every map is evaluated by a full
  sum. ``evaluations`` counts the maps scored.
- ``backward_induction_optimal``: the Q-function chain computed with exact
  conditional expectations, stage 2 first.

Both return the optimal profit and a ``TabularRegime`` that can be deployed
like any fitted regime.

Example:
    >>> inst = random_instance(np.random.default_rng(0))
    >>> bf = brute_force_optimal(inst)
    >>> bi = backward_induction_optimal(inst)
    >>> abs(bf.profit - bi.profit) < 1e-10
    True
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Tuple, Union

import numpy as np

from ..core import AssessmentCatalog, CostSpec, Dataset, FeatureIndexSet, check_keys
from ..deploy import DecisionRules, decide_batch
from ..errors import EnumerationSizeError, InstanceError

logger = logging.getLogger(__name__)

ENUMERATION_LIMIT = 1_000_000
PROBABILITY_TOLERANCE = 1e-9


# ========== Instances ==========

@dataclass(frozen=True, eq=False)
class DiscreteInstance:
    """
    Two-stage problem over finite covariate supports.

    Attributes:
        s1_support: Stage-1 covariate vectors, shape (K1, d1)
        p_s1: P(S1 = row k1), shape (K1,)
        s2_support: Stage-2 covariate vectors, shape (K2, d2)
        transition: P(S2 = row k2 | S1 = k1, A1 = a1), shape (K1, 2, K2)
        mean_outcome: E[Y | k1, a1, k2, a2], shape (K1, 2, K2, 2)
        propensity1: Behavior P(A1 = 1 | k1), shape (K1,)
        propensity2: Behavior P(A2 = 1 | k1, a1, k2), shape (K1, 2, K2)
        noise_sd: Outcome noise of sampled data
        catalog: Assessment catalog over (d1, d2)
        costs: Cost table
    """

    s1_support: np.ndarray
    p_s1: np.ndarray
    s2_support: np.ndarray
    transition: np.ndarray
    mean_outcome: np.ndarray
    propensity1: np.ndarray
    propensity2: np.ndarray
    catalog: AssessmentCatalog
    costs: CostSpec
    noise_sd: float = 1.0

    def __post_init__(self):
        for name in ("s1_support", "p_s1", "s2_support", "transition", "mean_outcome",
                     "propensity1", "propensity2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def K1(self) -> int:
        return self.s1_support.shape[0]

    @property
    def K2(self) -> int:
        return self.s2_support.shape[0]

    def problems(self) -> List[str]:
        found = []
        K1, K2 = self.K1, self.K2
        shapes = {
            "s1_support": (K1, self.catalog.d1),
            "p_s1": (K1,),
            "s2_support": (K2, self.catalog.d2),
            "transition": (K1, 2, K2),
            "mean_outcome": (K1, 2, K2, 2),
            "propensity1": (K1,),
            "propensity2": (K1, 2, K2),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                found.append(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if found:
            return found
        if np.any(self.p_s1 < 0) or abs(self.p_s1.sum() - 1) > PROBABILITY_TOLERANCE:
            found.append("p_s1 is not a probability vector")
        sums = self.transition.sum(axis=2)
        if np.any(self.transition < 0) or np.any(np.abs(sums - 1) > PROBABILITY_TOLERANCE):
            found.append("transition rows do not sum to 1 for every (s1, a1)")
        for name in ("propensity1", "propensity2"):
            values = getattr(self, name)
            if np.any(values <= 0) or np.any(values >= 1):
                found.append(f"{name} must lie strictly inside (0, 1)")
        if np.unique(self.s1_support, axis=0).shape[0] != K1:
            found.append("s1_support has duplicate rows")
        if np.unique(self.s2_support, axis=0).shape[0] != K2:
            found.append("s2_support has duplicate rows")
        if not np.all(np.isfinite(self.mean_outcome)):
            found.append("mean_outcome is not finite")
        if not self.noise_sd >= 0:
            found.append("noise_sd must be nonnegative")
        found.extend(self.catalog.problems())
        if not self.catalog.problems():
            found.extend(self.costs.problems(self.catalog))
        return found

    def validate(self) -> None:
        """Raise InstanceError listing every broken invariant."""
        problems = self.problems()
        if problems:
            raise InstanceError("invalid instance: " + "; ".join(problems))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "s1_support": self.s1_support.tolist(),
            "p_s1": self.p_s1.tolist(),
            "s2_support": self.s2_support.tolist(),
            "transition": self.transition.tolist(),
            "mean_outcome": self.mean_outcome.tolist(),
            "propensity1": self.propensity1.tolist(),
            "propensity2": self.propensity2.tolist(),
            "noise_sd": self.noise_sd,
            "catalog": self.catalog.to_dict(),
            "costs": self.costs.to_dict(self.catalog),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DiscreteInstance":
        fields_ = {"s1_support", "p_s1", "s2_support", "transition", "mean_outcome",
                   "propensity1", "propensity2", "noise_sd", "catalog", "costs"}
        check_keys(data, fields_, "instance")
        try:
            catalog = AssessmentCatalog.from_dict(data["catalog"])
            inst = cls(
                s1_support=data["s1_support"], p_s1=data["p_s1"],
                s2_support=data["s2_support"], transition=data["transition"],
                mean_outcome=data["mean_outcome"], propensity1=data["propensity1"],
                propensity2=data["propensity2"], catalog=catalog,
                costs=CostSpec.from_dict(data.get("costs", {}), catalog),
                noise_sd=float(data.get("noise_sd", 1.0)),
            )
        except KeyError as e:
            raise InstanceError(f"instance: missing field {e}") from e
        except ValueError as e:
            if isinstance(e, InstanceError):
                raise
            raise InstanceError(f"instance: malformed tables ({e})") from e
        inst.validate()
        return inst


def read_instance(path: Union[str, Path]) -> DiscreteInstance:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise InstanceError(f"cannot read instance {path}: {e}") from e
    return DiscreteInstance.from_dict(data)


def write_instance(inst: DiscreteInstance, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(inst.to_dict(), f, indent=2, sort_keys=True)


# ========== Tabular Regime ==========

def _key(row: np.ndarray) -> Tuple[float, ...]:
    return tuple(float(v) for v in np.asarray(row, dtype=float).ravel())


@dataclass(eq=False)
class TabularRegime:
    """
    Regime given by lookup tables over discrete histories.

    Tables map (context, history values) to the chosen candidate position or
    treatment. Histories never seen score as ties and no treatment.
    """

    catalog: AssessmentCatalog
    costs: CostSpec
    assess1: Dict[Tuple, int] = field(default_factory=dict)
    treat1: Dict[Tuple, int] = field(default_factory=dict)
    assess2: Dict[Tuple, int] = field(default_factory=dict)
    treat2: Dict[Tuple, int] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)

    kind = "tabular"

    def assessment_scores(self, stage: int, history: np.ndarray,
                          i1: Optional[int] = None, a1: Optional[int] = None) -> np.ndarray:
        history = np.atleast_2d(np.asarray(history, dtype=float))
        if stage == 1:
            size, table, context = len(self.catalog.cand1), self.assess1, ()
        else:
            size, table, context = len(self.catalog.cand2), self.assess2, (int(i1), int(a1))
        scores = np.zeros((history.shape[0], size))
        for r, row in enumerate(history):
            chosen = table.get(context + _key(row))
            if chosen is not None:
                scores[r, chosen] = 1.0
        return scores

    def treatment_scores(self, stage: int, history: np.ndarray, i1: int,
                         a1: Optional[int] = None, i2: Optional[int] = None) -> np.ndarray:
        history = np.atleast_2d(np.asarray(history, dtype=float))
        if stage == 1:
            table, context = self.treat1, (int(i1),)
        else:
            table, context = self.treat2, (int(i1), int(a1), int(i2))
        return np.array([1.0 if table.get(context + _key(row), 0) == 1 else -1.0 for row in history])


@dataclass(frozen=True, eq=False)
class OracleSolution:
    """Optimal profit, the regime achieving it and the number of maps scored."""

    profit: float
    regime: TabularRegime
    evaluations: int = 0

    def __iter__(self) -> Iterator:
        return iter((self.profit, self.regime))


# ========== Shared Structure ==========

def _classes(rows: np.ndarray) -> Tuple[np.ndarray, int]:
    """Label rows by their distinct values; returns (labels, number of classes)."""
    if rows.shape[1] == 0:
        return np.zeros(rows.shape[0], dtype=int), 1
    _, labels = np.unique(rows, axis=0, return_inverse=True)
    labels = np.asarray(labels).ravel()
    return labels, int(labels.max()) + 1


class _Problem:
    """Instance tables with lambda-scaled costs and precomputed history classes."""

    def __init__(self, inst: DiscreteInstance, lam: Optional[float]):
        inst.validate()
        self.inst = inst
        cat = inst.catalog
        lam = inst.costs.lam if lam is None else float(lam)
        self.lam = lam
        sc = inst.costs.with_lambda(lam).scaled()
        self.c1c = sc.assessment_costs(cat, 1)
        self.c2c = sc.assessment_costs(cat, 2)
        self.c1t = np.array(sc.c1t, dtype=float)
        self.c2t = np.array(sc.c2t, dtype=float)
        S1, S2 = inst.s1_support, inst.s2_support
        self.l1_labels, self.n_l1 = _classes(S1[:, cat.l1.positions()])
        self.h1_labels = [_classes(S1[:, cat.stage1_history(i1).positions()]) for i1 in range(len(cat.cand1))]
        self.l2_labels, self.n_l2 = _classes(S2[:, cat.l2.positions()])
        self.h2_labels = [_classes(S2[:, cat.stage2_history(i2).positions()]) for i2 in range(len(cat.cand2))]
        # joint weight of (k1, a1, k2) given the action path
        self.weight = inst.p_s1[:, None, None] * inst.transition

    def tabulate(self, regime: TabularRegime, i1_by_k1, a1_by_k1, i2_by, a2_by) -> TabularRegime:
        """Fill lookup tables from per-state decisions."""
        inst, cat = self.inst, self.inst.catalog
        S1, S2 = inst.s1_support, inst.s2_support
        for k1 in range(inst.K1):
            i1 = int(i1_by_k1[k1])
            a1 = int(a1_by_k1[i1][k1])
            h1 = S1[k1, cat.stage1_history(i1).positions()]
            regime.assess1[_key(S1[k1, cat.l1.positions()])] = i1
            regime.treat1[(i1,) + _key(h1)] = a1
            for k2 in range(inst.K2):
                i2 = int(i2_by[(i1, a1)][k1, k2])
                a2 = int(a2_by[(i1, a1, i2)][k1, k2])
                regime.assess2[(i1, a1) + _key(np.concatenate([h1, S2[k2, cat.l2.positions()]]))] = i2
                regime.treat2[(i1, a1, i2) + _key(np.concatenate([h1, S2[k2, cat.stage2_history(i2).positions()]]))] = a2
        return regime


# ========== Brute Force ==========

def _count_evaluations(pb: _Problem) -> int:
    cat = pb.inst.catalog
    total = 0
    for c in range(pb.n_l1):
        members = np.flatnonzero(pb.l1_labels == c)
        for i1 in range(len(cat.cand1)):
            labels, _ = pb.h1_labels[i1]
            n_h1 = np.unique(labels[members]).size
            total += 2 ** n_h1
            branch = 0
            for m in range(pb.n_l2):
                k2s = np.flatnonzero(pb.l2_labels == m)
                branch += sum(2 ** np.unique(pb.h2_labels[i2][0][k2s]).size for i2 in range(len(cat.cand2)))
            total += n_h1 * 2 * branch
    return total


def _best_stage2(pb: _Problem, k1s: np.ndarray, a1: int, k2s: np.ndarray) -> Tuple[float, int, Dict[int, int], int]:
    """Best (j2, treatment map) for one stage-2 information set, by enumeration."""
    mu = pb.inst.mean_outcome
    w = pb.weight[k1s, a1][:, k2s]
    mass = w.sum()
    best = (-np.inf, 0, {})
    evaluations = 0
    for i2 in range(len(pb.c2c)):
        labels = pb.h2_labels[i2][0][k2s]
        groups = np.unique(labels)
        # value of each treatment per stage-2 history class
        value = {a2: {g: float(np.sum(w[:, labels == g] * (mu[k1s, a1][:, k2s][:, labels == g, a2] - pb.c2t[a2])))
                      for g in groups} for a2 in (0, 1)}
        for choice in itertools.product((0, 1), repeat=groups.size):
            evaluations += 1
            total = sum(value[a][g] for g, a in zip(groups, choice)) - pb.c2c[i2] * mass
            if total > best[0]:
                best = (total, i2, dict(zip(groups.tolist(), choice)))
    return best[0], best[1], best[2], evaluations


def brute_force_optimal(inst: DiscreteInstance, lam: Optional[float] = None,
                        limit: int = ENUMERATION_LIMIT) -> OracleSolution:
    """
    Best regime by exhaustive search, with exact expected profit.

    Raises:
        EnumerationSizeError: If more than ``limit`` maps would be scored
        InstanceError: If the instance is invalid
    """
    pb = _Problem(inst, lam)
    count = _count_evaluations(pb)
    if count > limit:
        raise EnumerationSizeError(count, limit)
    cat = inst.catalog
    K1, K2 = inst.K1, inst.K2
    n1, n2 = len(cat.cand1), len(cat.cand2)

    i1_by_k1 = np.zeros(K1, dtype=int)
    a1_by = {i1: np.zeros(K1, dtype=int) for i1 in range(n1)}
    i2_by = {(i1, a1): np.zeros((K1, K2), dtype=int) for i1 in range(n1) for a1 in (0, 1)}
    a2_by = {(i1, a1, i2): np.zeros((K1, K2), dtype=int)
             for i1 in range(n1) for a1 in (0, 1) for i2 in range(n2)}

    profit = 0.0
    evaluations = 0
    for c in range(pb.n_l1):
        members = np.flatnonzero(pb.l1_labels == c)
        best_c = (-np.inf, None)
        for i1 in range(n1):
            labels = pb.h1_labels[i1][0]
            h_groups = np.unique(labels[members])
            branch_value, branch_plan = {}, {}
            for h in h_groups:
                k1s = members[labels[members] == h]
                for a1 in (0, 1):
                    stage1_cost = pb.c1t[a1] * inst.p_s1[k1s].sum()
                    total, plan = -stage1_cost, []
                    for m in range(pb.n_l2):
                        k2s = np.flatnonzero(pb.l2_labels == m)
                        value, i2, a2_map, used = _best_stage2(pb, k1s, a1, k2s)
                        evaluations += used
                        total += value
                        plan.append((k2s, i2, a2_map))
                    branch_value[(h, a1)] = total
                    branch_plan[(h, a1)] = (k1s, plan)
            for choice in itertools.product((0, 1), repeat=h_groups.size):
                evaluations += 1
                total = (sum(branch_value[(h, a)] for h, a in zip(h_groups, choice))
                         - pb.c1c[i1] * inst.p_s1[members].sum())
                if total > best_c[0]:
                    best_c = (total, (i1, [branch_plan[(h, a)] + (a,) for h, a in zip(h_groups, choice)]))
        profit += best_c[0]
        i1, plans = best_c[1]
        for k1s, plan, a1 in plans:
            i1_by_k1[k1s] = i1
            a1_by[i1][k1s] = a1
            for k2s, i2, a2_map in plan:
                for k1 in k1s:
                    i2_by[(i1, a1)][k1, k2s] = i2
                    labels = pb.h2_labels[i2][0]
                    a2_by[(i1, a1, i2)][k1, k2s] = [a2_map[int(labels[k2])] for k2 in k2s]

    regime = pb.tabulate(TabularRegime(cat, inst.costs, metadata={"solver": "brute_force"}),
                         i1_by_k1, a1_by, i2_by, a2_by)
    logger.debug("brute force scored %d maps (bound %d)", evaluations, count)
    return OracleSolution(float(profit), regime, evaluations)


# ========== Backward Induction ==========

def _conditional_mean(values: np.ndarray, weights: np.ndarray, labels: np.ndarray, n_classes: int) -> np.ndarray:
    """Weighted mean of values within each class; 0 for classes of zero weight."""
    totals = np.bincount(labels, weights=weights * values, minlength=n_classes)
    mass = np.bincount(labels, weights=weights, minlength=n_classes)
    out = np.zeros(n_classes)
    np.divide(totals, mass, out=out, where=mass > 0)
    return out


def backward_induction_optimal(inst: DiscreteInstance, lam: Optional[float] = None,
                               limit: int = ENUMERATION_LIMIT) -> OracleSolution:
    """
    Best regime from the backward chain of Q-functions.

    Stage-2 treatment Q given the full state, restricted to each observed
    stage-2 history, and its treatment rule; the stage-2 assessment Q
    under that rule, restricted to (S_l1∪j1, A1, S_l2), and its argmax;
    then the same two steps at stage 1. Treatment ties go to 0 and
    assessment ties to the lowest catalog position.

    Raises:
        EnumerationSizeError: On instances too large for the brute-force check
    """
    pb = _Problem(inst, lam)
    count = _count_evaluations(pb)
    if count > limit:
        raise EnumerationSizeError(count, limit)
    cat = inst.catalog
    K1, K2 = inst.K1, inst.K2
    n1, n2 = len(cat.cand1), len(cat.cand2)
    mu = inst.mean_outcome
    W = pb.weight  # (K1, 2, K2)

    # full-state stage-2 treatment Q
    Qbar2t = mu - pb.c2t[None, None, None, :]

    a2_by, i2_by = {}, {}
    Qbar1t = np.zeros((n1, K1, 2))
    for i1 in range(n1):
        h1, n_h1 = pb.h1_labels[i1]
        for a1 in (0, 1):
            w = W[:, a1, :].ravel()
            Qbar2c = np.zeros((n2, K1, K2))
            for i2 in range(n2):
                h2, n_h2 = pb.h2_labels[i2]
                info = (h1[:, None] * n_h2 + h2[None, :]).ravel()
                n_info = n_h1 * n_h2
                Q2t = np.stack([_conditional_mean(Qbar2t[:, a1, :, a2].ravel(), w, info, n_info)
                                for a2 in (0, 1)])
                rule = (Q2t[1] > Q2t[0]).astype(int)
                a2_state = rule[info].reshape(K1, K2)
                a2_by[(i1, a1, i2)] = a2_state
                Qbar2c[i2] = (np.take_along_axis(Qbar2t[:, a1, :, :], a2_state[..., None], axis=2)[..., 0]
                              - pb.c2c[i2])
            info = (h1[:, None] * pb.n_l2 + pb.l2_labels[None, :]).ravel()
            n_info = n_h1 * pb.n_l2
            Q2c = np.stack([_conditional_mean(Qbar2c[i2].ravel(), w, info, n_info) for i2 in range(n2)])
            i2_state = np.argmax(Q2c, axis=0)[info].reshape(K1, K2)
            i2_by[(i1, a1)] = i2_state
            chosen = np.take_along_axis(Qbar2c, i2_state[None], axis=0)[0]
            Qbar1t[i1, :, a1] = (inst.transition[:, a1, :] * chosen).sum(axis=1) - pb.c1t[a1]

    a1_by = {}
    Qbar1c = np.zeros((n1, K1))
    for i1 in range(n1):
        h1, n_h1 = pb.h1_labels[i1]
        Q1t = np.stack([_conditional_mean(Qbar1t[i1, :, a1], inst.p_s1, h1, n_h1) for a1 in (0, 1)])
        a1_state = (Q1t[1] > Q1t[0]).astype(int)[h1]
        a1_by[i1] = a1_state
        Qbar1c[i1] = Qbar1t[i1, np.arange(K1), a1_state] - pb.c1c[i1]

    Q1c = np.stack([_conditional_mean(Qbar1c[i1], inst.p_s1, pb.l1_labels, pb.n_l1) for i1 in range(n1)])
    i1_by_k1 = np.argmax(Q1c, axis=0)[pb.l1_labels]
    profit = float(np.sum(inst.p_s1 * Qbar1c[i1_by_k1, np.arange(K1)]))

    regime = pb.tabulate(TabularRegime(cat, inst.costs, metadata={"solver": "backward_induction"}),
                         i1_by_k1, a1_by, i2_by, a2_by)
    return OracleSolution(profit, regime, 0)


# ========== Forward Evaluation ==========

def exact_profit(inst: DiscreteInstance, rules: DecisionRules, lam: Optional[float] = None) -> float:
    """
    Expected profit of any deployable regime on an instance, by summation.

    Costs are the instance's, multiplied by lam (default: the instance's lambda).
    """
    pb = _Problem(inst, lam)
    K1, K2 = inst.K1, inst.K2
    k1 = np.repeat(np.arange(K1), K2)
    k2 = np.tile(np.arange(K2), K1)
    batch = decide_batch(rules, inst.s1_support[k1], inst.s2_support[k2])
    a1, a2 = batch.a1, batch.a2
    w = inst.p_s1[k1] * inst.transition[k1, a1, k2]
    reward = (inst.mean_outcome[k1, a1, k2, a2]
              - pb.c1c[batch.i1] - pb.c1t[a1] - pb.c2c[batch.i2] - pb.c2t[a2])
    return float(np.sum(w * reward))


def sample_discrete(inst: DiscreteInstance, n: int, seed: int) -> Dataset:
    """Logged data from an instance under its behavior propensities with Gaussian outcome noise."""
    inst.validate()
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1)))
    k1 = rng.choice(inst.K1, size=n, p=inst.p_s1)
    a1 = (rng.random(n) < inst.propensity1[k1]).astype(int)
    cdf = np.cumsum(inst.transition[k1, a1], axis=1)
    k2 = np.minimum((rng.random(n)[:, None] > cdf).sum(axis=1), inst.K2 - 1)
    a2 = (rng.random(n) < inst.propensity2[k1, a1, k2]).astype(int)
    y = inst.mean_outcome[k1, a1, k2, a2] + inst.noise_sd * rng.standard_normal(n)
    return Dataset.from_arrays(inst.s1_support[k1], a1, inst.s2_support[k2], a2, y)


def random_instance(rng: np.random.Generator, max_s1: int = 4, max_s2: int = 4,
                    max_cand1: int = 2, max_cand2: int = 3, d1: int = 2, d2: int = 2,
                    lam: float = 1.0) -> DiscreteInstance:
    """
    Random valid instance with binary covariates, small enough to enumerate.

    Stage 1 has l1 = {1}; stage 2 has l2 = {1} or no free covariate. The
    full set is always a candidate.
    """
    def support(d: int, size: int) -> np.ndarray:
        grid = np.array(list(itertools.product((0.0, 1.0), repeat=d)))
        size = int(min(size, grid.shape[0]))
        return grid[np.sort(rng.choice(grid.shape[0], size=size, replace=False))]

    S1 = support(d1, rng.integers(1, max_s1 + 1))
    S2 = support(d2, rng.integers(1, max_s2 + 1))
    K1, K2 = S1.shape[0], S2.shape[0]

    l1 = FeatureIndexSet.of(1)
    l2 = FeatureIndexSet.of(1) if rng.random() < 0.5 else FeatureIndexSet()
    full1 = FeatureIndexSet.full(d1).difference(l1)
    full2 = FeatureIndexSet.full(d2).difference(l2)

    def candidates(full: FeatureIndexSet, limit: int) -> Tuple[FeatureIndexSet, ...]:
        subsets = [FeatureIndexSet(c) for r in range(len(full)) for c in itertools.combinations(full, r)]
        extra = int(rng.integers(0, min(limit - 1, len(subsets)) + 1))
        picked = [subsets[i] for i in sorted(rng.choice(len(subsets), size=extra, replace=False))] if extra else []
        return tuple(picked) + (full,)

    cat = AssessmentCatalog(d1, d2, l1, l2, candidates(full1, max_cand1), candidates(full2, max_cand2))
    costs = CostSpec(
        {j: float(rng.uniform(0, 0.5)) * (len(j) > 0) for j in cat.cand1},
        {j: float(rng.uniform(0, 0.5)) * (len(j) > 0) for j in cat.cand2},
        (0.0, float(rng.uniform(0, 0.5))),
        (0.0, float(rng.uniform(0, 0.5))),
        float(lam),
    )
    return DiscreteInstance(
        s1_support=S1,
        p_s1=rng.dirichlet(np.ones(K1)),
        s2_support=S2,
        transition=rng.dirichlet(np.ones(K2), size=(K1, 2)),
        mean_outcome=rng.normal(0.0, 1.0, size=(K1, 2, K2, 2)),
        propensity1=rng.uniform(0.2, 0.8, size=K1),
        propensity2=rng.uniform(0.2, 0.8, size=(K1, 2, K2)),
        catalog=cat,
        costs=costs,
        noise_sd=1.0,
    )
