"""
Plug-in Inference

Sandwich covariance estimates for the linear parameters of a Balanced
Q-learning fit, built from per-subject influence vectors.

Each family's estimator solves a least-squares normal equation. Its
influence vector is the inverse bread times the subject's score, plus
the terms inherited from the parameters its response depends on:

    alpha_bar          R-learner score on (S1, S2, A1, 1)
    alpha[i1,a1,i2]    projection residual + (design cross moment) x alpha_bar
    beta_bar[i1,i2]    OLS score + pseudo-outcome gradient in alpha_bar
    beta[i1,a1,i2]     projection of beta_bar
    gamma_bar[i1]      R-learner score + gradients in alpha_bar and beta_bar
    gamma[i1]          projection of gamma_bar
    delta[i1]          OLS score + gradients in alpha_bar, beta_bar, gamma_bar

Fitted decision indicators are held fixed (strict inequalities). The
reported covariance is that of sqrt(n) (theta_hat - theta*); intervals are
theta_hat +/- z se / sqrt(n).

Example:
    >>> learner = BalancedQLearner(BqlConfig(seed=1))
    >>> regime = learner.fit(d, catalog, costs)
    >>> report = plugin_covariance("alpha_bar", regime, d, learner.trace_)
    >>> confidence_intervals(report, 0.95)
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import norm

from .bql import DesignBank, FitTrace, by_observed_a1
from .core import Dataset, FittedRegime
from .errors import ConfigurationError, DimensionError, NumericError

logger = logging.getLogger(__name__)

PSD_TOLERANCE = 1e-8
BOUNDARY_WIDTH = 1e-6
BOUNDARY_SHARE = 0.01

FAMILIES = ("alpha_bar", "alpha", "beta_bar", "beta", "gamma_bar", "gamma", "delta")
_KEY_LENGTH = {"alpha_bar": 0, "alpha": 3, "beta_bar": 2, "beta": 3, "gamma_bar": 1, "gamma": 1, "delta": 1}
_FAMILY = re.compile(r"^\s*([a-z_]+)\s*(?::\s*([0-9,\s]*))?$")


# ========== Family Ids ==========

def parse_family(text: str) -> Tuple[str, Tuple[int, ...]]:
    """Split "beta:0,1,2" into ("beta", (0, 1, 2))."""
    match = _FAMILY.match(text)
    if not match or match.group(1) not in FAMILIES:
        raise ConfigurationError(f"unknown parameter family {text!r}; expected one of {', '.join(FAMILIES)}")
    name = match.group(1)
    raw = match.group(2) or ""
    try:
        key = tuple(int(t) for t in raw.split(",") if t.strip())
    except ValueError:
        raise ConfigurationError(f"malformed family key in {text!r}") from None
    if len(key) != _KEY_LENGTH[name]:
        raise ConfigurationError(f"family {name} takes {_KEY_LENGTH[name]} indices, got {len(key)}")
    return name, key


def family_id(name: str, key: Tuple[int, ...] = ()) -> str:
    return name if not key else f"{name}:{','.join(str(k) for k in key)}"


def family_ids(regime: FittedRegime) -> List[str]:
    """Every parameter family of a fitted regime."""
    n1, n2 = len(regime.catalog.cand1), len(regime.catalog.cand2)
    ids = ["alpha_bar"]
    for i1 in range(n1):
        for i2 in range(n2):
            ids.append(family_id("beta_bar", (i1, i2)))
            for a1 in (0, 1):
                ids.append(family_id("alpha", (i1, a1, i2)))
                ids.append(family_id("beta", (i1, a1, i2)))
        ids += [family_id("gamma_bar", (i1,)), family_id("gamma", (i1,)), family_id("delta", (i1,))]
    return ids


# ========== Report ==========

@dataclass(frozen=True, eq=False)
class CovarianceReport:
    """
    Plug-in covariance of one parameter family.

    ``covariance`` estimates the asymptotic covariance of
    sqrt(n) (theta_hat - theta*); ``se`` is the square root of its diagonal.
    ``bread`` is the family's normal-equation matrix.
    """

    family: str
    coefficients: np.ndarray
    covariance: np.ndarray
    se: np.ndarray
    n: int
    bread: np.ndarray
    boundary_fraction: float = 0.0
    boundary_flag: bool = False

    def to_dict(self, level: Optional[float] = None) -> Dict[str, Any]:
        out = {
            "family": self.family,
            "n": self.n,
            "coefficients": self.coefficients.tolist(),
            "covariance": self.covariance.tolist(),
            "se": self.se.tolist(),
            "boundary_fraction": self.boundary_fraction,
            "boundary_flag": self.boundary_flag,
        }
        if level is not None:
            out["level"] = level
            out["intervals"] = confidence_intervals(self, level).tolist()
        return out


def confidence_intervals(report: CovarianceReport, level: float = 0.95) -> np.ndarray:
    """
    Per-coordinate intervals theta_hat +/- z_{(1+level)/2} se / sqrt(n).

    Returns:
        Array of shape (p, 2) with lower and upper bounds
    """
    if not 0.0 < level < 1.0:
        raise ConfigurationError(f"level must lie in (0, 1), got {level}")
    half = norm.ppf((1.0 + level) / 2.0) * report.se / np.sqrt(report.n)
    return np.column_stack([report.coefficients - half, report.coefficients + half])


def _checked(cov: np.ndarray, family: str) -> np.ndarray:
    cov = (cov + cov.T) / 2.0
    if cov.size:
        floor = -PSD_TOLERANCE * max(float(np.trace(cov)), 0.0)
        smallest = float(np.min(np.linalg.eigvalsh(cov)))
        if smallest < floor:
            raise NumericError(f"{family}: covariance is not positive semidefinite (min eigenvalue {smallest:.3g})")
    return cov


def _solve(bread: np.ndarray, rows: np.ndarray, family: str) -> np.ndarray:
    """Rows of ``rows`` premultiplied by the inverse bread."""
    if bread.size == 0:
        return rows
    if np.linalg.matrix_rank(bread) < bread.shape[0]:
        raise NumericError(f"{family}: normal-equation matrix is singular; more data or fewer covariates needed")
    return np.linalg.solve(bread, rows.T).T


# ========== Influence Vectors ==========

class _Influence:
    """Influence vectors of every family of one fit, memoized."""

    def __init__(self, regime: FittedRegime, d: Dataset, trace: FitTrace):
        if trace.stage2.f2 is None or trace.stage2.g2 is None:
            raise ConfigurationError("fit trace lacks the stage-2 nuisance fits")
        if trace.plan.n != d.n:
            raise DimensionError(f"fit trace covers {trace.plan.n} rows, dataset has {d.n}")
        self.regime = regime
        self.d = d
        self.trace = trace
        self.cat = regime.catalog
        self.bank = DesignBank(d, regime.catalog, regime.intercept)
        self.n = d.n
        self.full1 = self.cat.full1_position
        self.full2 = self.cat.full2_position
        self.breads: Dict[str, np.ndarray] = {}
        self.influence = lru_cache(maxsize=None)(self._influence)

    def _cross(self, Z: np.ndarray, G: np.ndarray) -> np.ndarray:
        return Z.T @ G / self.n

    def _projection(self, fid: str, source: np.ndarray, X: np.ndarray, source_if: np.ndarray,
                    Z: np.ndarray, coef: np.ndarray) -> np.ndarray:
        residual = X @ source - Z @ coef
        bread = self._cross(Z, Z)
        self.breads[fid] = bread
        return _solve(bread, Z * residual[:, None] + source_if @ self._cross(Z, X).T, fid)

    # ========== Indicators ==========

    def treat2(self, i1: int, i2: int) -> np.ndarray:
        r = self.regime
        score = by_observed_a1(self.bank.z_alpha(i1, i2), r.alpha[(i1, 0, i2)], r.alpha[(i1, 1, i2)], self.d.A1)
        return (score > 0).astype(float)

    def assess2_scores(self, i1: int) -> np.ndarray:
        r = self.regime
        zb = self.bank.z_beta(i1)
        return np.column_stack([by_observed_a1(zb, r.beta[(i1, 0, i2)], r.beta[(i1, 1, i2)], self.d.A1)
                                for i2 in range(len(self.cat.cand2))])

    def treat1(self, i1: int) -> np.ndarray:
        return (self.bank.z_gamma(i1) @ self.regime.gamma[i1] > 0).astype(float)

    # ========== Gradients ==========

    def pseudo1t_gradients(self, i1: int, sign: float = 1.0) -> List[Tuple[np.ndarray, np.ndarray]]:
        """(d pseudo1t / d theta, influence of theta) pairs for the stage-1 pseudo-outcome of i1."""
        d = self.d
        pairs = [(sign * self.bank.xbar() * (self.treat2(i1, self.full2) - d.A2)[:, None],
                  self.influence("alpha_bar", ()))]
        choice = np.argmax(self.assess2_scores(i1), axis=1)
        for i2 in range(len(self.cat.cand2)):
            if i2 != self.full2:
                pairs.append((sign * self.bank.xl() * (choice == i2)[:, None],
                              self.influence("beta_bar", (i1, i2))))
        return pairs

    def _composed(self, Z: np.ndarray, pairs: List[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
        total = np.zeros((self.n, Z.shape[1]))
        for gradient, source_if in pairs:
            total += source_if @ self._cross(Z, gradient).T
        return total

    # ========== Families ==========

    def _influence(self, name: str, key: Tuple[int, ...]) -> np.ndarray:
        r, d, bank, trace = self.regime, self.d, self.bank, self.trace
        fid = family_id(name, key)

        if name == "alpha_bar":
            X = bank.xbar()
            rf = d.Y - trace.stage2.f2.oof
            rg = d.A2 - trace.stage2.g2.oof
            residual = rf - rg * (X @ r.alpha_bar + trace.costs.treatment_gap(2))
            bread = self._cross(X * rg[:, None], X * rg[:, None])
            self.breads[fid] = bread
            return _solve(bread, X * (rg * residual)[:, None], fid)

        if name == "alpha":
            i1, a1, i2 = key
            return self._projection(fid, r.alpha_bar, bank.xbar(a1), self.influence("alpha_bar", ()),
                                    bank.z_alpha(i1, i2), r.alpha[key])

        if name == "beta_bar":
            i1, i2 = key
            X = bank.xl()
            bread = self._cross(X, X)
            self.breads[fid] = bread
            if i2 == self.full2:
                return np.zeros((self.n, X.shape[1]))
            residual = trace.stage2.pseudo2[key] - X @ r.beta_bar[key]
            gradient = bank.xbar() * (self.treat2(i1, i2) - self.treat2(i1, self.full2))[:, None]
            score = X * residual[:, None] + self._composed(X, [(gradient, self.influence("alpha_bar", ()))])
            return _solve(bread, score, fid)

        if name == "beta":
            i1, a1, i2 = key
            return self._projection(fid, r.beta_bar[(i1, i2)], bank.xl(a1), self.influence("beta_bar", (i1, i2)),
                                    bank.z_beta(i1), r.beta[key])

        if name == "gamma_bar":
            (i1,) = key
            s1 = bank.s1()
            rf = trace.stage1.pseudo1t[i1] - trace.stage1.f1_oof[i1]
            rg = d.A1 - trace.stage1.g1.oof
            residual = rf - rg * (s1 @ r.gamma_bar[i1])
            bread = self._cross(s1 * rg[:, None], s1 * rg[:, None])
            self.breads[fid] = bread
            weighted = s1 * rg[:, None]
            score = s1 * (rg * residual)[:, None] + self._composed(weighted, self.pseudo1t_gradients(i1))
            return _solve(bread, score, fid)

        if name == "gamma":
            (i1,) = key
            return self._projection(fid, r.gamma_bar[i1], bank.s1(), self.influence("gamma_bar", (i1,)),
                                    bank.z_gamma(i1), r.gamma[i1])

        if name == "delta":
            (i1,) = key
            Z = bank.z_delta()
            bread = self._cross(Z, Z)
            self.breads[fid] = bread
            if i1 == self.full1:
                return np.zeros((self.n, Z.shape[1]))
            response = trace.pseudo1c[i1] - trace.pseudo1c[self.full1]
            residual = response - Z @ r.delta[i1]
            s1 = bank.s1()
            pairs = self.pseudo1t_gradients(i1) + self.pseudo1t_gradients(self.full1, -1.0)
            pairs.append((s1 * (self.treat1(i1) - d.A1)[:, None], self.influence("gamma_bar", (i1,))))
            pairs.append((-s1 * (self.treat1(self.full1) - d.A1)[:, None],
                          self.influence("gamma_bar", (self.full1,))))
            return _solve(bread, Z * residual[:, None] + self._composed(Z, pairs), fid)

        raise ConfigurationError(f"unknown parameter family {name!r}")

    # ========== Boundary ==========

    def boundary_scores(self, name: str, key: Tuple[int, ...]) -> List[np.ndarray]:
        """Scores whose sign or ordering the family's estimator conditions on."""
        r, bank = self.regime, self.bank
        if name in ("alpha_bar", "alpha"):
            return [bank.xbar() @ r.alpha_bar]
        i1 = key[0]
        alpha_scores = [by_observed_a1(bank.z_alpha(i1, i2), r.alpha[(i1, 0, i2)], r.alpha[(i1, 1, i2)], self.d.A1)
                        for i2 in range(len(self.cat.cand2))]
        if name in ("beta_bar", "beta"):
            return alpha_scores
        top = np.sort(self.assess2_scores(i1), axis=1)
        gaps = [top[:, -1] - top[:, -2]] if top.shape[1] > 1 else []
        if name in ("gamma_bar", "gamma"):
            return alpha_scores + gaps
        return alpha_scores + gaps + [bank.z_gamma(i1) @ r.gamma[i1], bank.z_gamma(self.full1) @ r.gamma[self.full1]]


def _coefficients(regime: FittedRegime, name: str, key: Tuple[int, ...]) -> np.ndarray:
    table = getattr(regime, name)
    if name == "alpha_bar":
        return np.asarray(table, dtype=float)
    lookup = key[0] if len(key) == 1 else key
    if lookup not in table:
        raise ConfigurationError(f"regime has no coefficients for {family_id(name, key)}")
    return np.asarray(table[lookup], dtype=float)


def plugin_covariance(family: str, regime: FittedRegime, d: Dataset, trace: FitTrace) -> CovarianceReport:
    """
    Plug-in sandwich covariance of one parameter family.

    Args:
        family: Family id such as "alpha_bar", "alpha:0,1,2" or "delta:0"
        regime: Fitted regime
        d: Training dataset of the fit
        trace: The fit's trace (``BalancedQLearner.trace_``)

    Raises:
        ConfigurationError: Unknown family or key
        NumericError: Singular normal-equation matrix or a covariance that
            fails the positive semidefinite check
    """
    name, key = parse_family(family)
    coef = _coefficients(regime, name, key)
    engine = _Influence(regime, d, trace)
    fid = family_id(name, key)

    psi = engine.influence(name, key)
    cov = _checked(psi.T @ psi / engine.n, fid)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))

    scores = engine.boundary_scores(name, key)
    near = np.zeros(engine.n, dtype=bool)
    for s in scores:
        near |= np.abs(s) < BOUNDARY_WIDTH
    fraction = float(np.mean(near))
    flag = fraction > BOUNDARY_SHARE
    if flag:
        logger.warning("%s: %.1f%% of scores lie within %g of a decision boundary; intervals may undercover",
                       fid, 100 * fraction, BOUNDARY_WIDTH)

    return CovarianceReport(family=fid, coefficients=coef, covariance=cov, se=se, n=engine.n,
                            bread=engine.breads[fid], boundary_fraction=fraction, boundary_flag=flag)
