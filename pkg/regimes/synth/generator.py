"""
Two-Stage Trial Simulator

Data-generating process for the synthetic studies:

    S1 ~ N(0, I_p)
    A1 ~ Bernoulli(logistic(S1' alpha1))
    S2 = S1 + A1 * S1 + N(0, I_p)
    A2 ~ Bernoulli(logistic(X' alpha2)),  X = (S1, A1, S2)
    Y  = X' (beta1 + A1 beta2 + A2 beta3) + N(0, noise_sd_y^2)

All randomness of a subject lives in ``SubjectNoise`` (S1, two uniforms
for the treatment draws, the stage-2 shock and the outcome shock), so two
regimes can be evaluated on the same subjects (common random numbers).
Noise is drawn in fixed blocks of subjects, each from its own seed, so the
first n subjects do not depend on how many are drawn.

Example:
    >>> spec = model_preset(1).spec
    >>> d = generate(spec, n=500, seed=1)
    >>> d.d1, d.d2
    (5, 5)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Sequence

import numpy as np
from scipy.special import expit

from ..core import CostSpec, Dataset, FeatureIndexSet, check_keys, derive_seed, history_design
from ..deploy import BatchDecisions, DecisionRules, decide_batch
from ..errors import ConfigurationError, DimensionError
from ..regress import ols

logger = logging.getLogger(__name__)

BLOCK_SIZE = 1024
S2_LAW = "S2 = S1 + A1*S1 + N(0, I)"


def logistic(t):
    """exp(t) / (1 + exp(t)), stable for large |t|."""
    return expit(t)


# ========== Generative Specification ==========

def _vector(values: Sequence[float]) -> np.ndarray:
    return np.asarray(values, dtype=float).ravel()


@dataclass(frozen=True, eq=False)
class GenerativeSpec:
    """
    Parameters of the simulator.

    ``alpha1`` has length p; ``alpha2`` and the three outcome vectors have
    length 2p+1 and are indexed by X = (S1, A1, S2).
    """

    p: int
    alpha1: np.ndarray
    alpha2: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    beta3: np.ndarray
    noise_sd_y: float = 0.5

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "beta1", "beta2", "beta3"):
            object.__setattr__(self, name, _vector(getattr(self, name)))
        if self.p < 1:
            raise ConfigurationError(f"p must be positive, got {self.p}")
        if self.alpha1.shape[0] != self.p:
            raise DimensionError(f"alpha1 has length {self.alpha1.shape[0]}, expected p={self.p}")
        for name in ("alpha2", "beta1", "beta2", "beta3"):
            length = getattr(self, name).shape[0]
            if length != self.x_length:
                raise DimensionError(f"{name} has length {length}, expected 2p+1={self.x_length}")
        if not (self.noise_sd_y > 0 and math.isfinite(self.noise_sd_y)):
            raise ConfigurationError("noise_sd_y must be positive")

    @property
    def x_length(self) -> int:
        return 2 * self.p + 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p": self.p,
            "alpha1": self.alpha1.tolist(),
            "alpha2": self.alpha2.tolist(),
            "beta1": self.beta1.tolist(),
            "beta2": self.beta2.tolist(),
            "beta3": self.beta3.tolist(),
            "noise_sd_y": self.noise_sd_y,
            "s2_law": S2_LAW,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GenerativeSpec":
        check_keys(data, {"p", "alpha1", "alpha2", "beta1", "beta2", "beta3", "noise_sd_y", "s2_law"},
                   "generative spec")
        if data.get("s2_law", S2_LAW) != S2_LAW:
            raise ConfigurationError(f"only the stage-2 law {S2_LAW!r} is supported")
        try:
            return cls(p=int(data["p"]), alpha1=data["alpha1"], alpha2=data["alpha2"],
                       beta1=data["beta1"], beta2=data["beta2"], beta3=data["beta3"],
                       noise_sd_y=float(data.get("noise_sd_y", 0.5)))
        except KeyError as e:
            raise ConfigurationError(f"generative spec: missing field {e}") from e


# ========== Noise and Simulation ==========

@dataclass(frozen=True, eq=False)
class SubjectNoise:
    """Every random draw of n simulated subjects."""

    S1: np.ndarray
    U1: np.ndarray
    Z2: np.ndarray
    U2: np.ndarray
    E: np.ndarray

    @property
    def n(self) -> int:
        return self.S1.shape[0]

    def stage2(self, a1: np.ndarray) -> np.ndarray:
        """Stage-2 covariates under the given stage-1 treatments."""
        a1 = np.asarray(a1, dtype=float).reshape(-1, 1)
        return self.S1 + a1 * self.S1 + self.Z2


def draw_noise(p: int, n: int, seed: int) -> SubjectNoise:
    """
    Draw the randomness of n subjects.

    Args:
        p: Covariate dimension
        n: Number of subjects (>= 1)
        seed: Base seed; block b uses SeedSequence([seed, b])
    """
    if n < 1:
        raise ConfigurationError(f"n must be at least 1, got {n}")
    blocks = []
    for b in range(-(-n // BLOCK_SIZE)):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), b]))
        blocks.append((
            rng.standard_normal((BLOCK_SIZE, p)),
            rng.random(BLOCK_SIZE),
            rng.standard_normal((BLOCK_SIZE, p)),
            rng.random(BLOCK_SIZE),
            rng.standard_normal(BLOCK_SIZE),
        ))
    parts = [np.concatenate([blk[k] for blk in blocks])[:n] for k in range(5)]
    return SubjectNoise(*parts)


def outcome_design(S1: np.ndarray, a1: np.ndarray, S2: np.ndarray) -> np.ndarray:
    """X = (S1, A1, S2) as used by the outcome and propensity models."""
    return np.column_stack([S1, np.asarray(a1, dtype=float), S2])


def propensity1(spec: GenerativeSpec, S1: np.ndarray) -> np.ndarray:
    return logistic(S1 @ spec.alpha1)


def propensity2(spec: GenerativeSpec, X: np.ndarray) -> np.ndarray:
    return logistic(X @ spec.alpha2)


def mean_outcome(spec: GenerativeSpec, X: np.ndarray, a1: np.ndarray, a2: np.ndarray) -> np.ndarray:
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    return X @ spec.beta1 + a1 * (X @ spec.beta2) + a2 * (X @ spec.beta3)


def simulate_subjects(spec: GenerativeSpec, noise: SubjectNoise,
                      a1: Optional[np.ndarray] = None, a2: Optional[np.ndarray] = None) -> Dataset:
    """
    Subjects from fixed noise, drawing any treatment not supplied from the behavior policy.

    The outcome of a subject depends only on (S1, a1, S2(a1), a2) and the
    subject's own noise.
    """
    if noise.S1.shape[1] != spec.p:
        raise DimensionError(f"noise has dimension {noise.S1.shape[1]}, spec has p={spec.p}")
    if a1 is None:
        a1 = (noise.U1 < propensity1(spec, noise.S1)).astype(int)
    a1 = np.broadcast_to(np.asarray(a1, dtype=int), (noise.n,))
    S2 = noise.stage2(a1)
    X = outcome_design(noise.S1, a1, S2)
    if a2 is None:
        a2 = (noise.U2 < propensity2(spec, X)).astype(int)
    a2 = np.broadcast_to(np.asarray(a2, dtype=int), (noise.n,))
    Y = mean_outcome(spec, X, a1, a2) + spec.noise_sd_y * noise.E
    return Dataset.from_arrays(noise.S1, a1, S2, a2, Y)


def generate(spec: GenerativeSpec, n: int, seed: int) -> Dataset:
    """n i.i.d. subjects from the behavior policy; deterministic given the seed."""
    return simulate_subjects(spec, draw_noise(spec.p, n, seed))


# ========== Ground Truth ==========

@dataclass(frozen=True, eq=False)
class ProfitEstimate:
    """Monte Carlo profit of a regime with its parts."""

    mean: float
    se: float
    utility: float
    assessment_cost: float
    treatment_cost: float
    n: int
    decisions: Optional[BatchDecisions] = None

    def __iter__(self):
        return iter((self.mean, self.se))


def true_profit(spec: GenerativeSpec, rules: DecisionRules, costs: Optional[CostSpec] = None,
                lam: Optional[float] = None, n_mc: int = 5000, seed: int = 0,
                noise: Optional[SubjectNoise] = None) -> ProfitEstimate:
    """
    Monte Carlo profit of deployed rules under the simulator.

    Every cost is multiplied by lam. Passing the same ``noise`` for two
    regimes compares them on identical subjects.

    Args:
        spec: Simulator parameters
        rules: Regime to deploy
        costs: Cost table (default: the regime's own)
        lam: Trade-off scalar (default: the cost table's lambda)
        n_mc: Number of simulated subjects
        seed: Seed of the subjects when ``noise`` is not given

    Returns:
        ProfitEstimate; iterating gives (mean, standard error)
    """
    if n_mc < 1 and noise is None:
        raise ConfigurationError(f"n_mc must be at least 1, got {n_mc}")
    costs = costs if costs is not None else rules.costs
    lam = costs.lam if lam is None else float(lam)
    if noise is None:
        noise = draw_noise(spec.p, n_mc, seed)

    batch = decide_batch(rules, noise.S1, noise.stage2)
    X = outcome_design(noise.S1, batch.a1, batch.S2)
    Y = mean_outcome(spec, X, batch.a1, batch.a2) + spec.noise_sd_y * noise.E

    cat = rules.catalog
    assessment = (costs.assessment_costs(cat, 1)[batch.i1] + costs.assessment_costs(cat, 2)[batch.i2])
    treatment = (costs.c1t[0] + batch.a1 * costs.treatment_gap(1)
                 + costs.c2t[0] + batch.a2 * costs.treatment_gap(2))
    profit = Y - lam * (assessment + treatment)
    m = profit.shape[0]
    se = float(np.std(profit, ddof=1) / np.sqrt(m)) if m > 1 else float("nan")
    return ProfitEstimate(
        mean=float(np.mean(profit)), se=se, utility=float(np.mean(Y)),
        assessment_cost=float(np.mean(assessment)), treatment_cost=float(np.mean(treatment)),
        n=m, decisions=batch,
    )


def working_alpha_bar(spec: GenerativeSpec, costs: CostSpec, n: int = 1_000_000, seed: int = 0,
                      intercept: bool = True) -> np.ndarray:
    """
    Best linear approximation of the stage-2 treatment contrast.

    Weighted least squares of the true contrast minus the scaled treatment
    cost gap on (S1, S2, A1, 1), with weights g2 (1 - g2) from the true
    propensity; this is the population target of the residual-on-residual
    fit. Behavior-policy subjects are drawn in chunks to bound memory.
    """
    offset = costs.scaled().treatment_gap(2)
    full = FeatureIndexSet.full(spec.p)
    gram = None
    moment = None
    remaining = n
    chunk = 0
    while remaining > 0:
        size = min(remaining, 200_000)
        noise = draw_noise(spec.p, size, derive_seed(seed, chunk))
        a1 = (noise.U1 < propensity1(spec, noise.S1)).astype(float)
        S2 = noise.stage2(a1)
        X = outcome_design(noise.S1, a1, S2)
        g2 = propensity2(spec, X)
        w = g2 * (1 - g2)
        contrast = X @ spec.beta3 - offset
        Z = history_design(noise.S1, full, S2, full, a1, intercept)
        gram = (Z.T * w) @ Z if gram is None else gram + (Z.T * w) @ Z
        part = (Z.T * w) @ contrast
        moment = part if moment is None else moment + part
        remaining -= size
        chunk += 1
    return ols(gram, moment).coefficients
