"""
Simulation Model Presets

Models 1-3 study covariate-assessment costs; Model 4 repeats Model 1 at
lambda = 0 over sample sizes; Model 5 has geometric propensity vectors and
three nested stage-2 candidates; Models 6 and 7 sweep the stage-2 and
stage-1 treatment cost of A = 1 with C(0) = 7.5 and lambda = 1.

Model 3 states beta2 = 0 with 11 entries while p = 3 gives a design of
length 7; the stated dimension wins and beta2 is the zero vector of
length 7.

Example:
    >>> preset = model_preset(2)
    >>> [str(j) for j in preset.catalog.cand2]
    ['{2,3}', '{2,3,4}', '{2,3,4,5}']
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

import numpy as np

from ..core import AssessmentCatalog, CostSpec, FeatureIndexSet, check_keys
from ..errors import ConfigurationError
from .generator import GenerativeSpec

GRID_KINDS = ("lambda", "c2t1", "c1t1", "n")
SWEPT_TREATMENT_COST0 = 7.5


def _z(k: int) -> list:
    return [0.0] * k


def _ones(k: int, value: float = 1.0) -> list:
    return [value] * k


def _geometric(base: float, k: int) -> list:
    return [base ** (i + 1) for i in range(k)]


@dataclass(frozen=True, eq=False)
class ModelPreset:
    """A simulator, its assessment catalog, its cost template and the default sweep."""

    id: int
    spec: GenerativeSpec
    catalog: AssessmentCatalog
    costs: CostSpec
    grid_kind: str = "lambda"
    grid: Tuple[float, ...] = (0.0,)
    n_train: int = 500

    def __post_init__(self):
        if self.grid_kind not in GRID_KINDS:
            raise ConfigurationError(f"grid kind must be one of {GRID_KINDS}")
        if len(self.grid) == 0:
            raise ConfigurationError("grid must be nonempty")
        self.catalog.validate()
        self.costs.validate(self.catalog)

    def costs_at(self, value: float, grid_kind: Optional[str] = None) -> CostSpec:
        """Cost table at one grid point."""
        kind = grid_kind or self.grid_kind
        if kind == "lambda":
            return self.costs.with_lambda(value)
        if kind == "c2t1":
            return self.costs.with_treatment_costs(c2t=(SWEPT_TREATMENT_COST0, float(value)))
        if kind == "c1t1":
            return self.costs.with_treatment_costs(c1t=(SWEPT_TREATMENT_COST0, float(value)))
        if kind == "n":
            return self.costs
        raise ConfigurationError(f"unknown grid kind {kind!r}")

    def n_at(self, value: float, grid_kind: Optional[str] = None, default: Optional[int] = None) -> int:
        """Training size at one grid point."""
        if (grid_kind or self.grid_kind) == "n":
            return int(value)
        return int(default if default is not None else self.n_train)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "spec": self.spec.to_dict(),
            "catalog": self.catalog.to_dict(),
            "costs": self.costs.to_dict(self.catalog),
            "grid_kind": self.grid_kind,
            "grid": list(self.grid),
            "n_train": self.n_train,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelPreset":
        check_keys(data, {"id", "spec", "catalog", "costs", "grid_kind", "grid", "n_train"}, "model")
        try:
            catalog = AssessmentCatalog.from_dict(data["catalog"])
            return cls(
                id=int(data.get("id", 0)),
                spec=GenerativeSpec.from_dict(data["spec"]),
                catalog=catalog,
                costs=CostSpec.from_dict(data.get("costs", {}), catalog),
                grid_kind=data.get("grid_kind", "lambda"),
                grid=tuple(float(g) for g in data.get("grid", (0.0,))),
                n_train=int(data.get("n_train", 500)),
            )
        except KeyError as e:
            raise ConfigurationError(f"model: missing field {e}") from e


def _catalog(p: int, l1, l2, cand1, cand2) -> AssessmentCatalog:
    return AssessmentCatalog(
        d1=p, d2=p,
        l1=FeatureIndexSet(tuple(l1)), l2=FeatureIndexSet(tuple(l2)),
        cand1=tuple(FeatureIndexSet(tuple(j)) for j in cand1),
        cand2=tuple(FeatureIndexSet(tuple(j)) for j in cand2),
    )


def _costs(catalog: AssessmentCatalog, c1c, c2c, c1t=(0.0, 0.0), c2t=(0.0, 0.0)) -> CostSpec:
    return CostSpec(dict(zip(catalog.cand1, map(float, c1c))), dict(zip(catalog.cand2, map(float, c2c))),
                    tuple(c1t), tuple(c2t), 1.0)


def _model1() -> ModelPreset:
    spec = GenerativeSpec(
        p=5,
        alpha1=_ones(2) + _z(3),
        alpha2=_ones(2) + _z(4) + _ones(2) + _z(3),
        beta1=_ones(2) + [0.5] + _z(4) + [1, 0.5, 0, 1],
        beta2=_ones(2) + [0.5] + _z(8),
        beta3=_z(7) + [1, 0.5, 0, 1],
    )
    cat = _catalog(5, range(1, 6), [1], [()], [(2, 3, 4), (2, 3, 4, 5)])
    return ModelPreset(1, spec, cat, _costs(cat, [0], [0, 0.1]), "lambda", (0, 0.5, 1, 2, 4))


def _model2() -> ModelPreset:
    spec = GenerativeSpec(
        p=5,
        alpha1=[1] + _z(4),
        alpha2=[1, 0] + _ones(5, 0.5) + [0] + _ones(2, 0.5) + [0],
        beta1=[1, 0, 0.5] + _z(3) + [1, 0] + _ones(2) + [0],
        beta2=[1, 0, 0.5] + _z(8),
        beta3=_z(6) + [1, 0] + _ones(2) + [0],
    )
    cat = _catalog(5, [1], [1], [(3, 4, 5), (2, 3, 4, 5)], [(2, 3), (2, 3, 4), (2, 3, 4, 5)])
    return ModelPreset(2, spec, cat, _costs(cat, [0, 0.2], [0, 0.1, 0.2]), "lambda", (0, 0.25, 0.5, 1, 2))


def _model3() -> ModelPreset:
    spec = GenerativeSpec(
        p=3,
        alpha1=_geometric(0.6, 3),
        alpha2=_geometric(0.6, 4) + [0] + [0.6 ** 6, 0.6 ** 7],
        beta1=[1.5, 1] + _z(3) + [1, 2],
        beta2=_z(7),
        beta3=[0.5] + _z(4) + [1, 2],
    )
    subsets = [c for size in range(4) for c in combinations((1, 2, 3), size)]
    cat = _catalog(3, [1, 2, 3], [], [()], subsets)
    return ModelPreset(3, spec, cat, _costs(cat, [0], [0.1 * len(j) for j in subsets]),
                       "lambda", (0, 0.5, 1, 2, 4, 8))


def _model4() -> ModelPreset:
    base = _model1()
    return ModelPreset(4, base.spec, base.catalog, base.costs.with_lambda(0.0), "n", (250, 500, 1000, 2000))


def _model5() -> ModelPreset:
    spec = GenerativeSpec(
        p=5,
        alpha1=_geometric(0.5, 5),
        alpha2=_geometric(0.5, 11),
        beta1=[1.2] + _ones(4, 0.4) + _ones(4, 0.2) + [1.5, 1],
        beta2=[0.5] + _ones(4, 0.2) + _z(6),
        beta3=_ones(9, 0.2) + [1.5, 1],
    )
    cat = _catalog(5, range(1, 6), [1], [()], [(2, 3), (2, 3, 4), (2, 3, 4, 5)])
    return ModelPreset(5, spec, cat, _costs(cat, [0], [0, 0.1, 0.2]), "lambda", (0, 0.5, 1, 2, 4))


def _treatment_sweep(model_id: int, stage: int) -> ModelPreset:
    base = _model1()
    cat = base.catalog
    pair = (SWEPT_TREATMENT_COST0, 0.0)
    costs = _costs(cat, [0], [0, 0], c1t=pair if stage == 1 else (0.0, 0.0),
                   c2t=pair if stage == 2 else (0.0, 0.0))
    grid = tuple(float(v) for v in np.linspace(0.0, 15.0, 7))
    return ModelPreset(model_id, base.spec, cat, costs, "c2t1" if stage == 2 else "c1t1", grid)


_PRESETS: Dict[int, Callable[[], ModelPreset]] = {
    1: _model1,
    2: _model2,
    3: _model3,
    4: _model4,
    5: _model5,
    6: lambda: _treatment_sweep(6, 2),
    7: lambda: _treatment_sweep(7, 1),
}


def model_preset(model_id: int) -> ModelPreset:
    """
    Preset for a simulation model.

    Raises:
        ConfigurationError: If the id is not 1..7
    """
    try:
        factory = _PRESETS[int(model_id)]
    except (KeyError, TypeError, ValueError):
        raise ConfigurationError(f"unknown model {model_id!r}; choose 1-7") from None
    return factory()


def preset_ids() -> Tuple[int, ...]:
    return tuple(sorted(_PRESETS))
