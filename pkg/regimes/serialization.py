"""
Regime Files

Versioned JSON documents for fitted and comparator regimes. Coefficient
families keyed by catalog positions are stored as objects keyed by
"i1", "i1,i2" or "i1,a1,i2". Documents are written with sorted keys, so
identical regimes give identical files.

Example:
    >>> save_regime(regime, "out/regime.json")
    >>> same = load_regime("out/regime.json")
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Union

import numpy as np

from .baselines import BASELINE_KINDS, BaselineRegime
from .core import AssessmentCatalog, CostSpec, FeatureIndexSet, FittedRegime, check_keys
from .errors import ConfigurationError, DataError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
REGIME_KINDS = ("bql",) + BASELINE_KINDS

Regime = Union[FittedRegime, BaselineRegime]


def _encode_key(key: Any) -> str:
    return ",".join(str(k) for k in key) if isinstance(key, tuple) else str(key)


def _decode_key(text: str, length: int) -> Any:
    try:
        parts = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise DataError(f"malformed coefficient key {text!r}") from None
    if len(parts) != length:
        raise DataError(f"coefficient key {text!r} should have {length} parts")
    return parts[0] if length == 1 else parts


def _encode_family(table: Mapping[Any, np.ndarray]) -> Dict[str, list]:
    return {_encode_key(k): np.asarray(v, dtype=float).tolist() for k, v in table.items()}


def _decode_family(data: Mapping[str, list], length: int) -> Dict[Any, np.ndarray]:
    return {_decode_key(k, length): np.asarray(v, dtype=float) for k, v in data.items()}


def _jsonable(value: Any) -> Any:
    """Metadata with numpy scalars and arrays turned into plain JSON types."""
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


# ========== Encoding ==========

def regime_to_dict(regime: Regime) -> Dict[str, Any]:
    """JSON form of a regime, tagged with its kind and the format version."""
    cat = regime.catalog
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": regime.kind,
        "catalog": cat.to_dict(),
        "costs": regime.costs.to_dict(cat),
        "intercept": regime.intercept,
        "metadata": _jsonable(regime.metadata),
    }
    if isinstance(regime, FittedRegime):
        doc["coefficients"] = {
            "alpha_bar": np.asarray(regime.alpha_bar, dtype=float).tolist(),
            "alpha": _encode_family(regime.alpha),
            "beta_bar": _encode_family(regime.beta_bar),
            "beta": _encode_family(regime.beta),
            "gamma_bar": _encode_family(regime.gamma_bar),
            "gamma": _encode_family(regime.gamma),
            "delta": _encode_family(regime.delta),
        }
    elif isinstance(regime, BaselineRegime):
        doc["coefficients"] = {
            "alpha": np.asarray(regime.alpha, dtype=float).tolist(),
            "gamma": np.asarray(regime.gamma, dtype=float).tolist(),
        }
        doc["thresholds"] = list(regime.thresholds)
        doc["assessed"] = [regime.i1, regime.i2]
        doc["penalty"] = list(regime.penalty) if regime.penalty is not None else None
        doc["support"] = {str(stage): list(s.indices) for stage, s in regime.support.items()}
    else:
        raise ConfigurationError(f"cannot serialize {type(regime).__name__}")
    return doc


def regime_from_dict(data: Mapping[str, Any]) -> Regime:
    """
    Rebuild a regime from its JSON form.

    Raises:
        DataError: Unsupported format version or missing coefficients
        ConfigurationError: Unknown fields or kind
    """
    check_keys(data, {"format_version", "kind", "catalog", "costs", "intercept", "metadata",
                      "coefficients", "thresholds", "assessed", "penalty", "support"}, "regime")
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"regime format version {version!r} is not supported (expected {FORMAT_VERSION})")
    kind = data.get("kind")
    if kind not in REGIME_KINDS:
        raise ConfigurationError(f"regime kind must be one of {REGIME_KINDS}, got {kind!r}")

    try:
        catalog = AssessmentCatalog.from_dict(data["catalog"])
        costs = CostSpec.from_dict(data["costs"], catalog)
        coef = data["coefficients"]
        common = dict(catalog=catalog, costs=costs, intercept=bool(data.get("intercept", True)),
                      metadata=dict(data.get("metadata", {})))
        if kind == "bql":
            regime = FittedRegime(
                alpha_bar=np.asarray(coef["alpha_bar"], dtype=float),
                alpha=_decode_family(coef["alpha"], 3),
                beta_bar=_decode_family(coef["beta_bar"], 2),
                beta=_decode_family(coef["beta"], 3),
                gamma_bar=_decode_family(coef["gamma_bar"], 1),
                gamma=_decode_family(coef["gamma"], 1),
                delta=_decode_family(coef["delta"], 1),
                **common,
            )
            problems = regime.problems()
            if problems:
                raise DataError("regime file is incomplete: " + "; ".join(problems))
            return regime
        penalty = data.get("penalty")
        i1, i2 = data["assessed"]
        return BaselineRegime(
            kind=kind,
            alpha=np.asarray(coef["alpha"], dtype=float),
            gamma=np.asarray(coef["gamma"], dtype=float),
            thresholds=tuple(float(t) for t in data["thresholds"]),
            i1=int(i1), i2=int(i2),
            penalty=tuple(float(p) for p in penalty) if penalty is not None else None,
            support={int(k): FeatureIndexSet(tuple(v)) for k, v in data.get("support", {}).items()},
            **common,
        )
    except KeyError as e:
        raise DataError(f"regime file: missing field {e}") from e


# ========== Files ==========

def write_json(doc: Mapping[str, Any], path: Union[str, Path]) -> None:
    """Write a JSON document with sorted keys."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(doc), f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path: Union[str, Path], what: str = "document") -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise ConfigurationError(f"cannot read {what} {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{what} {path} is not valid JSON: {e}") from e


def save_regime(regime: Regime, path: Union[str, Path]) -> None:
    write_json(regime_to_dict(regime), path)
    logger.info("saved %s regime to %s", regime.kind, path)


def load_regime(path: Union[str, Path]) -> Regime:
    return regime_from_dict(read_json(path, "regime"))
