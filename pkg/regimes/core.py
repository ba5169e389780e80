"""
Core Domain Types

Trajectories, datasets, covariate index sets, assessment catalogs, cost
tables and the fitted regime, together with the small feature-assembly
helpers every other module builds its designs with.

Conventions:
    - Covariate positions are 1-based inside a stage, as in index sets
      such as {2,3,4}; arrays are indexed with ``FeatureIndexSet.positions()``.
    - Candidate sets are addressed by their position in the catalog's
      ordered lists (``i1`` for stage 1, ``i2`` for stage 2).
    - Designs carry the intercept column last.

Example:
    >>> s = FeatureIndexSet.of(4, 2, 3)
    >>> s.indices
    (2, 3, 4)
    >>> subvector(np.array([1.0, 2.0, 3.0, 4.0, 5.0]), s)
    array([2., 3., 4.])
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import CatalogError, ConfigurationError, DataError, DimensionError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence[float]]

# Real-data parametrization: lambda = 1% / tau
TAU_PERCENT = 0.01


# ========== Index Sets ==========

@dataclass(frozen=True)
class FeatureIndexSet:
    """Sorted, duplicate-free set of 1-based covariate positions."""

    indices: Tuple[int, ...] = ()

    def __post_init__(self):
        normalized = tuple(sorted({int(i) for i in self.indices}))
        if normalized and normalized[0] < 1:
            raise DimensionError(f"covariate positions are 1-based, got {normalized[0]}")
        object.__setattr__(self, "indices", normalized)

    @classmethod
    def of(cls, *indices: int) -> "FeatureIndexSet":
        return cls(tuple(indices))

    @classmethod
    def full(cls, d: int) -> "FeatureIndexSet":
        """The set [d] = {1, ..., d}."""
        return cls(tuple(range(1, d + 1)))

    @classmethod
    def parse(cls, text: str) -> "FeatureIndexSet":
        """Parse "{2,3,4}", "2;3;4" or "" into an index set."""
        tokens = [t for t in re.split(r"[\s,;{}]+", text.strip()) if t]
        try:
            return cls(tuple(int(t) for t in tokens))
        except ValueError as e:
            raise DataError(f"invalid index set {text!r}") from e

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices)

    def __contains__(self, item: object) -> bool:
        return item in self.indices

    def __str__(self) -> str:
        return "{" + ",".join(str(i) for i in self.indices) + "}"

    def union(self, other: "FeatureIndexSet") -> "FeatureIndexSet":
        return FeatureIndexSet(self.indices + other.indices)

    def difference(self, other: "FeatureIndexSet") -> "FeatureIndexSet":
        return FeatureIndexSet(tuple(i for i in self.indices if i not in other.indices))

    def isdisjoint(self, other: "FeatureIndexSet") -> bool:
        return not set(self.indices) & set(other.indices)

    def issubset(self, other: "FeatureIndexSet") -> bool:
        return set(self.indices) <= set(other.indices)

    def positions(self) -> np.ndarray:
        """Zero-based array positions of the indices."""
        return np.asarray(self.indices, dtype=np.intp) - 1

    def max(self) -> int:
        return self.indices[-1] if self.indices else 0


# ========== Trajectories and Datasets ==========

@dataclass(frozen=True, eq=False)
class Trajectory:
    """One subject's observed record (s1, a1, s2, a2, y)."""

    s1: np.ndarray
    a1: int
    s2: np.ndarray
    a2: int
    y: float


def _action(value: Any) -> Union[int, float]:
    # Integral values become ints so that membership in {0, 1} is exact
    value = float(value)
    return int(value) if value.is_integer() else value


@dataclass(frozen=True)
class Violation:
    """A broken dataset invariant; ``row`` is the 0-based trajectory index or None."""

    row: Optional[int]
    reason: str

    def __str__(self) -> str:
        where = f"row {self.row}" if self.row is not None else "dataset"
        return f"{where}: {self.reason}"


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Ordered collection of trajectories with declared stage dimensions.

    Column views (``S1``, ``A1``, ``S2``, ``A2``, ``Y``) are built on first
    access. Construction does not validate; call ``validate_dataset``.
    """

    trajectories: Tuple[Trajectory, ...]
    d1: int
    d2: int

    @classmethod
    def from_arrays(cls, S1: ArrayLike, A1: ArrayLike, S2: ArrayLike,
                    A2: ArrayLike, Y: ArrayLike) -> "Dataset":
        """Build a dataset from column arrays."""
        S1 = np.asarray(S1, dtype=float)
        S2 = np.asarray(S2, dtype=float)
        A1 = np.asarray(A1)
        A2 = np.asarray(A2)
        Y = np.asarray(Y, dtype=float)
        if S1.ndim != 2 or S2.ndim != 2:
            raise DimensionError("S1 and S2 must be 2-D arrays")
        n = S1.shape[0]
        if not (S2.shape[0] == A1.shape[0] == A2.shape[0] == Y.shape[0] == n):
            raise DimensionError("column arrays disagree on the number of rows")
        trajectories = tuple(
            Trajectory(S1[i], _action(A1[i]), S2[i], _action(A2[i]), float(Y[i]))
            for i in range(n)
        )
        d = cls(trajectories, S1.shape[1], S2.shape[1])
        d.__dict__["_columns"] = (S1, A1.astype(float), S2, A2.astype(float), Y)
        return d

    @cached_property
    def _columns(self) -> Tuple[np.ndarray, ...]:
        try:
            S1 = np.vstack([np.asarray(t.s1, dtype=float).reshape(1, -1) for t in self.trajectories])
            S2 = np.vstack([np.asarray(t.s2, dtype=float).reshape(1, -1) for t in self.trajectories])
        except ValueError as e:
            raise DimensionError("trajectories are not dimension-consistent") from e
        A1 = np.array([t.a1 for t in self.trajectories], dtype=float)
        A2 = np.array([t.a2 for t in self.trajectories], dtype=float)
        Y = np.array([t.y for t in self.trajectories], dtype=float)
        return S1, A1, S2, A2, Y

    @property
    def S1(self) -> np.ndarray:
        return self._columns[0]

    @property
    def A1(self) -> np.ndarray:
        return self._columns[1]

    @property
    def S2(self) -> np.ndarray:
        return self._columns[2]

    @property
    def A2(self) -> np.ndarray:
        return self._columns[3]

    @property
    def Y(self) -> np.ndarray:
        return self._columns[4]

    @property
    def n(self) -> int:
        return len(self.trajectories)

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    def __getitem__(self, i: int) -> Trajectory:
        return self.trajectories[i]

    def subset(self, rows: ArrayLike) -> "Dataset":
        """Dataset restricted to the given row positions (boolean mask or indices)."""
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return Dataset.from_arrays(self.S1[rows], self.A1[rows], self.S2[rows],
                                   self.A2[rows], self.Y[rows])


def validate_dataset(d: Dataset) -> List[Violation]:
    """
    Check every Dataset invariant.

    Returns:
        List of violations, empty iff the dataset is usable. Pure: the same
        dataset always gives the same list in the same order.
    """
    violations: List[Violation] = []
    if len(d.trajectories) == 0:
        return [Violation(None, "dataset is empty")]

    for i, t in enumerate(d.trajectories):
        s1 = np.asarray(t.s1, dtype=float).ravel()
        s2 = np.asarray(t.s2, dtype=float).ravel()
        if s1.shape[0] != d.d1:
            violations.append(Violation(i, f"s1 has length {s1.shape[0]}, expected {d.d1}"))
        if s2.shape[0] != d.d2:
            violations.append(Violation(i, f"s2 has length {s2.shape[0]}, expected {d.d2}"))
        if t.a1 not in (0, 1):
            violations.append(Violation(i, f"stage-1 treatment not binary: {t.a1}"))
        if t.a2 not in (0, 1):
            violations.append(Violation(i, f"stage-2 treatment not binary: {t.a2}"))
        if not (np.all(np.isfinite(s1)) and np.all(np.isfinite(s2))):
            violations.append(Violation(i, "covariates not finite"))
        if not math.isfinite(float(t.y)):
            violations.append(Violation(i, "outcome not finite"))

    for stage, actions in ((1, [t.a1 for t in d.trajectories]),
                           (2, [t.a2 for t in d.trajectories])):
        for arm in (0, 1):
            if arm not in actions:
                violations.append(Violation(None, f"positivity: arm {arm} absent at stage {stage}"))
    return violations


def require_valid(d: Dataset) -> None:
    """Raise DataError listing the violations, if any."""
    violations = validate_dataset(d)
    if violations:
        shown = "; ".join(str(v) for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        raise DataError(f"invalid dataset: {shown}{more}")


# ========== Feature Assembly ==========

def subvector(x: ArrayLike, s: FeatureIndexSet) -> np.ndarray:
    """
    Components of x at the positions of s, in ascending index order.

    Raises:
        DimensionError: If s reaches past the end of x
    """
    x = np.asarray(x, dtype=float)
    if s.max() > x.shape[-1]:
        raise DimensionError(f"index {s.max()} out of range for vector of length {x.shape[-1]}")
    return x[..., s.positions()]


def assemble_design(parts: Sequence[Union[ArrayLike, float]], intercept: bool) -> np.ndarray:
    """Concatenate vectors and scalars in order, appending 1 when intercept is set."""
    pieces = [np.atleast_1d(np.asarray(p, dtype=float)).ravel() for p in parts]
    if intercept:
        pieces.append(np.ones(1))
    if not pieces:
        return np.zeros(0)
    return np.concatenate(pieces)


def history_design(S1: np.ndarray, set1: FeatureIndexSet,
                   S2: Optional[np.ndarray] = None, set2: Optional[FeatureIndexSet] = None,
                   a1: Optional[Union[np.ndarray, float]] = None,
                   intercept: bool = True) -> np.ndarray:
    """
    Row-wise design matrix (S1[set1], S2[set2], a1, 1).

    Args:
        S1: Stage-1 covariates, shape (n, d1)
        set1: Stage-1 positions to keep
        S2: Stage-2 covariates, shape (n, d2), or None for stage-1 designs
        set2: Stage-2 positions to keep
        a1: Stage-1 treatment column, a scalar broadcast to all rows, or None
        intercept: Append a column of ones

    Returns:
        Design matrix with one row per subject
    """
    S1 = np.atleast_2d(np.asarray(S1, dtype=float))
    n = S1.shape[0]
    columns = [subvector(S1, set1)]
    if S2 is not None and set2 is not None:
        columns.append(subvector(np.atleast_2d(np.asarray(S2, dtype=float)), set2))
    if a1 is not None:
        columns.append(np.broadcast_to(np.asarray(a1, dtype=float), (n,)).reshape(n, 1))
    if intercept:
        columns.append(np.ones((n, 1)))
    return np.hstack(columns) if columns else np.zeros((n, 0))


def with_intercept(history: np.ndarray, intercept: bool) -> np.ndarray:
    """Append the intercept column to a raw history matrix."""
    history = np.atleast_2d(np.asarray(history, dtype=float))
    if not intercept:
        return history
    return np.hstack([history, np.ones((history.shape[0], 1))])


# ========== Catalog and Costs ==========

@dataclass(frozen=True)
class AssessmentCatalog:
    """
    Free baseline covariates and the candidate assessment sets per stage.

    Example:
        >>> cat = AssessmentCatalog(
        ...     d1=5, d2=5,
        ...     l1=FeatureIndexSet.full(5), l2=FeatureIndexSet.of(1),
        ...     cand1=(FeatureIndexSet(),),
        ...     cand2=(FeatureIndexSet.of(2, 3, 4), FeatureIndexSet.of(2, 3, 4, 5)))
        >>> cat.full2_position
        1
    """

    d1: int
    d2: int
    l1: FeatureIndexSet
    l2: FeatureIndexSet
    cand1: Tuple[FeatureIndexSet, ...]
    cand2: Tuple[FeatureIndexSet, ...]

    def __post_init__(self):
        object.__setattr__(self, "cand1", tuple(self.cand1))
        object.__setattr__(self, "cand2", tuple(self.cand2))

    @property
    def j1_full(self) -> FeatureIndexSet:
        return FeatureIndexSet.full(self.d1).difference(self.l1)

    @property
    def j2_full(self) -> FeatureIndexSet:
        return FeatureIndexSet.full(self.d2).difference(self.l2)

    @property
    def full1_position(self) -> int:
        return self.cand1.index(self.j1_full)

    @property
    def full2_position(self) -> int:
        return self.cand2.index(self.j2_full)

    def stage1_history(self, i1: int) -> FeatureIndexSet:
        """Stage-1 positions known after assessing candidate i1 (l1 and j1)."""
        return self.l1.union(self.cand1[i1])

    def stage2_history(self, i2: int) -> FeatureIndexSet:
        """Stage-2 positions known after assessing candidate i2 (l2 and j2)."""
        return self.l2.union(self.cand2[i2])

    def problems(self) -> List[str]:
        """List every broken catalog invariant."""
        found = []
        for stage, d, base, cands, full in ((1, self.d1, self.l1, self.cand1, None),
                                            (2, self.d2, self.l2, self.cand2, None)):
            if d < 1:
                found.append(f"stage {stage}: dimension must be positive")
                continue
            if base.max() > d:
                found.append(f"stage {stage}: baseline set {base} exceeds dimension {d}")
            full = FeatureIndexSet.full(d).difference(base)
            if not cands:
                found.append(f"stage {stage}: candidate list is empty")
            if len(set(cands)) != len(cands):
                found.append(f"stage {stage}: candidate list has duplicates")
            for j in cands:
                if not j.isdisjoint(base):
                    found.append(f"stage {stage}: candidate {j} overlaps baseline {base}")
                if not j.issubset(full):
                    found.append(f"stage {stage}: candidate {j} not within {full}")
            if full not in cands:
                found.append(f"stage {stage}: full set {full} missing from candidates")
        return found

    def validate(self) -> None:
        """Raise CatalogError when any invariant is broken."""
        problems = self.problems()
        if problems:
            raise CatalogError("; ".join(problems))

    def full_only(self) -> "AssessmentCatalog":
        """Catalog that always assesses everything."""
        return AssessmentCatalog(self.d1, self.d2, self.l1, self.l2,
                                 (self.j1_full,), (self.j2_full,))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "d1": self.d1,
            "d2": self.d2,
            "l1": list(self.l1.indices),
            "l2": list(self.l2.indices),
            "cand1": [list(j.indices) for j in self.cand1],
            "cand2": [list(j.indices) for j in self.cand2],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AssessmentCatalog":
        check_keys(data, {"d1", "d2", "l1", "l2", "cand1", "cand2"}, "catalog")
        try:
            return cls(
                d1=int(data["d1"]), d2=int(data["d2"]),
                l1=FeatureIndexSet(tuple(data["l1"])), l2=FeatureIndexSet(tuple(data["l2"])),
                cand1=tuple(FeatureIndexSet(tuple(j)) for j in data["cand1"]),
                cand2=tuple(FeatureIndexSet(tuple(j)) for j in data["cand2"]),
            )
        except (KeyError, TypeError) as e:
            raise ConfigurationError(f"catalog: missing or malformed field ({e})") from e


@dataclass(frozen=True)
class CostSpec:
    """
    Assessment and treatment costs with the trade-off scalar lambda.

    ``c1c`` and ``c2c`` map candidate sets to costs; ``c1t`` and ``c2t``
    hold (cost of a=0, cost of a=1).
    """

    c1c: Mapping[FeatureIndexSet, float]
    c2c: Mapping[FeatureIndexSet, float]
    c1t: Tuple[float, float] = (0.0, 0.0)
    c2t: Tuple[float, float] = (0.0, 0.0)
    lam: float = 1.0

    __hash__ = None  # mappings are not hashable

    def problems(self, catalog: AssessmentCatalog) -> List[str]:
        found = []
        if self.lam < 0 or not math.isfinite(self.lam):
            found.append(f"lambda must be a finite nonnegative number, got {self.lam}")
        for stage, costs, cands in ((1, self.c1c, catalog.cand1), (2, self.c2c, catalog.cand2)):
            if set(costs) != set(cands):
                found.append(f"stage {stage}: assessment costs must cover exactly the candidate sets")
            if any(c < 0 for c in costs.values()):
                found.append(f"stage {stage}: assessment costs must be nonnegative")
        for name, pair in (("c1t", self.c1t), ("c2t", self.c2t)):
            if len(pair) != 2:
                found.append(f"{name} must be a pair")
        return found

    def validate(self, catalog: AssessmentCatalog) -> None:
        problems = self.problems(catalog)
        if problems:
            raise CatalogError("; ".join(problems))

    @classmethod
    def uniform(cls, catalog: AssessmentCatalog, lam: float = 1.0,
                c1t: Tuple[float, float] = (0.0, 0.0),
                c2t: Tuple[float, float] = (0.0, 0.0)) -> "CostSpec":
        """Zero assessment costs on every candidate."""
        return cls({j: 0.0 for j in catalog.cand1}, {j: 0.0 for j in catalog.cand2},
                   tuple(c1t), tuple(c2t), lam)

    def scaled(self) -> "CostSpec":
        """Every cost multiplied by lambda; the result carries lambda = 1."""
        lam = float(self.lam)
        return CostSpec(
            {j: lam * c for j, c in self.c1c.items()},
            {j: lam * c for j, c in self.c2c.items()},
            (lam * self.c1t[0], lam * self.c1t[1]),
            (lam * self.c2t[0], lam * self.c2t[1]),
            1.0,
        )

    def with_lambda(self, lam: float) -> "CostSpec":
        return CostSpec(dict(self.c1c), dict(self.c2c), self.c1t, self.c2t, float(lam))

    def with_treatment_costs(self, c1t: Optional[Tuple[float, float]] = None,
                             c2t: Optional[Tuple[float, float]] = None) -> "CostSpec":
        return CostSpec(dict(self.c1c), dict(self.c2c),
                        tuple(c1t) if c1t is not None else self.c1t,
                        tuple(c2t) if c2t is not None else self.c2t, self.lam)

    def without_assessment(self) -> "CostSpec":
        """Same treatment costs, zero assessment costs."""
        return CostSpec({j: 0.0 for j in self.c1c}, {j: 0.0 for j in self.c2c},
                        self.c1t, self.c2t, self.lam)

    def restrict(self, catalog: AssessmentCatalog) -> "CostSpec":
        """Costs limited to the candidate sets of a smaller catalog."""
        return CostSpec({j: self.c1c[j] for j in catalog.cand1},
                        {j: self.c2c[j] for j in catalog.cand2},
                        self.c1t, self.c2t, self.lam)

    def assessment_costs(self, catalog: AssessmentCatalog, stage: int) -> np.ndarray:
        """Unscaled assessment costs by catalog position."""
        if stage == 1:
            return np.array([self.c1c[j] for j in catalog.cand1], dtype=float)
        return np.array([self.c2c[j] for j in catalog.cand2], dtype=float)

    def treatment_gap(self, stage: int) -> float:
        """Unscaled C(1) - C(0) at a stage."""
        pair = self.c1t if stage == 1 else self.c2t
        return float(pair[1] - pair[0])

    def to_dict(self, catalog: AssessmentCatalog) -> Dict[str, Any]:
        return {
            "c1c": [self.c1c[j] for j in catalog.cand1],
            "c2c": [self.c2c[j] for j in catalog.cand2],
            "c1t": list(self.c1t),
            "c2t": list(self.c2t),
            "lambda": self.lam,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], catalog: AssessmentCatalog) -> "CostSpec":
        """Costs listed in catalog order."""
        check_keys(data, {"c1c", "c2c", "c1t", "c2t", "lambda"}, "costs")
        c1c = list(data.get("c1c", [0.0] * len(catalog.cand1)))
        c2c = list(data.get("c2c", [0.0] * len(catalog.cand2)))
        if len(c1c) != len(catalog.cand1) or len(c2c) != len(catalog.cand2):
            raise CatalogError("assessment cost lists must match the candidate lists")
        costs = cls(
            {j: float(c) for j, c in zip(catalog.cand1, c1c)},
            {j: float(c) for j, c in zip(catalog.cand2, c2c)},
            tuple(float(c) for c in data.get("c1t", (0.0, 0.0))),
            tuple(float(c) for c in data.get("c2t", (0.0, 0.0))),
            float(data.get("lambda", 1.0)),
        )
        costs.validate(catalog)
        return costs


def lambda_from_tau(tau: float) -> float:
    """
    Trade-off scalar for a willingness-to-pay tau per percentage point.

    tau = inf gives lambda = 0 (costs ignored).
    """
    tau = float(tau)
    if tau <= 0 or math.isnan(tau):
        raise ConfigurationError(f"tau must be positive, got {tau}")
    if math.isinf(tau):
        return 0.0
    return TAU_PERCENT / tau


def check_keys(data: Mapping[str, Any], allowed: set, where: str) -> None:
    """Reject unknown fields in a JSON mapping."""
    if not isinstance(data, Mapping):
        raise ConfigurationError(f"{where}: expected an object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigurationError(f"{where}: unknown field(s) {', '.join(unknown)}")


# ========== Fitted Regime ==========

Key3 = Tuple[int, int, int]


@dataclass(eq=False)
class FittedRegime:
    """
    All contrast coefficient families of a Balanced Q-learning fit.

    Keys are catalog positions: ``alpha[(i1, a1, i2)]``, ``beta_bar[(i1, i2)]``,
    ``gamma[i1]`` and so on. Coefficients are over the raw-covariate designs
    with the intercept last when ``intercept`` is set.
    """

    alpha_bar: np.ndarray
    alpha: Dict[Key3, np.ndarray]
    beta_bar: Dict[Tuple[int, int], np.ndarray]
    beta: Dict[Key3, np.ndarray]
    gamma_bar: Dict[int, np.ndarray]
    gamma: Dict[int, np.ndarray]
    delta: Dict[int, np.ndarray]
    catalog: AssessmentCatalog
    costs: CostSpec
    intercept: bool = True
    metadata: Dict[str, Any] = field(default_factory=dict)

    kind = "bql"

    # ========== Design Lengths ==========

    def design_length(self, family: str, i1: int = 0, i2: int = 0) -> int:
        """Number of coefficients of a family member (intercept included)."""
        cat = self.catalog
        extra = 1 if self.intercept else 0
        if family == "alpha_bar":
            return cat.d1 + cat.d2 + 1 + extra
        if family == "alpha":
            return len(cat.stage1_history(i1)) + len(cat.stage2_history(i2)) + extra
        if family == "beta_bar":
            return cat.d1 + len(cat.l2) + 1 + extra
        if family == "beta":
            return len(cat.stage1_history(i1)) + len(cat.l2) + extra
        if family == "gamma_bar":
            return cat.d1 + extra
        if family == "gamma":
            return len(cat.stage1_history(i1)) + extra
        if family == "delta":
            return len(cat.l1) + extra
        raise ConfigurationError(f"unknown coefficient family {family!r}")

    def problems(self) -> List[str]:
        """Check completeness and coefficient lengths."""
        cat = self.catalog
        found = []

        def check(family, coef, i1=0, i2=0, label=""):
            if coef is None:
                found.append(f"{family}{label} missing")
            elif len(coef) != self.design_length(family, i1, i2):
                found.append(f"{family}{label} has length {len(coef)}, "
                             f"expected {self.design_length(family, i1, i2)}")

        check("alpha_bar", self.alpha_bar)
        for i1 in range(len(cat.cand1)):
            check("gamma_bar", self.gamma_bar.get(i1), i1, label=f"[{i1}]")
            check("gamma", self.gamma.get(i1), i1, label=f"[{i1}]")
            check("delta", self.delta.get(i1), i1, label=f"[{i1}]")
            for i2 in range(len(cat.cand2)):
                check("beta_bar", self.beta_bar.get((i1, i2)), i1, i2, f"[{i1},{i2}]")
                for a1 in (0, 1):
                    check("alpha", self.alpha.get((i1, a1, i2)), i1, i2, f"[{i1},{a1},{i2}]")
                    check("beta", self.beta.get((i1, a1, i2)), i1, i2, f"[{i1},{a1},{i2}]")
        return found

    # ========== Decision Rules ==========

    def _design(self, history: np.ndarray, expected: int) -> np.ndarray:
        history = np.atleast_2d(np.asarray(history, dtype=float))
        if history.shape[1] != expected:
            raise DimensionError(
                f"history has {history.shape[1]} covariates, rule design expects {expected}"
            )
        return with_intercept(history, self.intercept)

    def assessment_scores(self, stage: int, history: np.ndarray,
                          i1: Optional[int] = None, a1: Optional[int] = None) -> np.ndarray:
        """
        Linear assessment scores for every candidate of a stage.

        Args:
            stage: 1 (history = S_l1) or 2 (history = S_l1∪j1 then S_l2)
            history: Raw covariates, shape (m, k) or (k,)
            i1: Stage-1 candidate position (stage 2 only)
            a1: Stage-1 treatment (stage 2 only)

        Returns:
            Array of shape (m, number of candidates)
        """
        cat = self.catalog
        if stage == 1:
            X = self._design(history, len(cat.l1))
            return np.column_stack([X @ self.delta[i] for i in range(len(cat.cand1))])
        X = self._design(history, len(cat.stage1_history(i1)) + len(cat.l2))
        return np.column_stack([X @ self.beta[(i1, int(a1), i2)] for i2 in range(len(cat.cand2))])

    def treatment_scores(self, stage: int, history: np.ndarray, i1: int,
                         a1: Optional[int] = None, i2: Optional[int] = None) -> np.ndarray:
        """Linear treatment scores; treat iff score > 0."""
        cat = self.catalog
        if stage == 1:
            X = self._design(history, len(cat.stage1_history(i1)))
            return X @ self.gamma[i1]
        X = self._design(history, len(cat.stage1_history(i1)) + len(cat.stage2_history(i2)))
        return X @ self.alpha[(i1, int(a1), i2)]

    def __repr__(self) -> str:
        return (f"FittedRegime(|J1|={len(self.catalog.cand1)}, |J2|={len(self.catalog.cand2)}, "
                f"lambda={self.costs.lam}, intercept={self.intercept})")


# ========== Dataset CSV ==========

_S1_COLUMN = re.compile(r"^s1_(\d+)$")
_S2_COLUMN = re.compile(r"^s2_(\d+)$")


def dataset_columns(d1: int, d2: int) -> List[str]:
    """Header of the dataset CSV."""
    return ([f"s1_{k}" for k in range(1, d1 + 1)] + ["a1"]
            + [f"s2_{k}" for k in range(1, d2 + 1)] + ["a2", "y"])


def read_dataset_csv(path: Union[str, Path], require_outcomes: bool = True) -> Dataset:
    """
    Read a dataset CSV with header ``s1_1..s1_d1,a1,s2_1..s2_d2,a2,y``.

    Args:
        path: CSV file path
        require_outcomes: When False, a1, a2 and y may be absent (subject
            files for deployment); missing columns are filled with zeros.

    Raises:
        DataError: On a malformed header or non-numeric cells
    """
    try:
        df = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"cannot read dataset {path}: {e}") from e

    d1 = sum(1 for c in df.columns if _S1_COLUMN.match(str(c)))
    d2 = sum(1 for c in df.columns if _S2_COLUMN.match(str(c)))
    if d1 == 0 or d2 == 0:
        raise DataError(f"{path}: header must contain s1_* and s2_* columns")
    expected = dataset_columns(d1, d2)
    if not require_outcomes:
        for name in ("a1", "a2", "y"):
            if name not in df.columns:
                df[name] = 0
    if list(df.columns) != expected:
        present = [c for c in expected if c in df.columns]
        if len(present) != len(expected) or require_outcomes:
            raise DataError(f"{path}: expected columns {','.join(expected)}")
        df = df[expected]
    try:
        values = df.to_numpy(dtype=float)
    except ValueError as e:
        raise DataError(f"{path}: non-numeric cell ({e})") from e
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: missing or non-finite values")
    S1 = values[:, :d1]
    A1 = values[:, d1]
    S2 = values[:, d1 + 1:d1 + 1 + d2]
    A2 = values[:, d1 + 1 + d2]
    Y = values[:, -1]
    return Dataset.from_arrays(S1, A1, S2, A2, Y)


def write_dataset_csv(d: Dataset, path: Union[str, Path]) -> None:
    """Write a dataset in the CSV layout read by ``read_dataset_csv``."""
    table = np.column_stack([d.S1, d.A1, d.S2, d.A2, d.Y])
    df = pd.DataFrame(table, columns=dataset_columns(d.d1, d.d2))
    df["a1"] = df["a1"].astype(int)
    df["a2"] = df["a2"].astype(int)
    df.to_csv(path, index=False)


# ========== Seeds ==========

def derive_seed(seed: int, *keys: int) -> int:
    """
    Child seed for a sub-task, a 32-bit integer usable by numpy and scikit-learn.

    Identical (seed, keys) always give the same child; distinct keys give
    independent streams.
    """
    entropy = [int(seed) & (2**64 - 1)] + [int(k) for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])
