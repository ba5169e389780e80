"""
Experiment Configuration

JSON experiment documents and the logging setup shared by the command-line
entry points.

Example config (configs/model1_lambda.json):
    {
      "model": 1,
      "methods": ["bql", "dense", "sparse"],
      "n_train": 500,
      "replications": 200,
      "grid": [0, 0.5, 1, 2, 4],
      "seed": 20240101,
      "output_dir": "results/model1"
    }
"""

from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from .bql import BqlConfig
from .core import check_keys
from .errors import ConfigurationError
from .evaluation.oracle import DiscreteInstance, read_instance
from .nuisance import LearnerSpec
from .synth.presets import GRID_KINDS, ModelPreset, model_preset

logger = logging.getLogger(__name__)

METHODS = ("bql", "dense", "sparse")
LOG_ENV = "BQL_LOG"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: Optional[str] = None) -> int:
    """
    Configure the root handler from ``level`` or the BQL_LOG variable.

    Unknown names fall back to WARNING with a warning.
    """
    name = (level or os.environ.get(LOG_ENV) or "WARNING").strip().upper()
    unknown = name not in LOG_LEVELS
    numeric = logging.WARNING if unknown else getattr(logging, name)
    logging.basicConfig(level=numeric, format=LOG_FORMAT, force=True)
    if unknown:
        logger.warning("unknown log level %r in %s; using WARNING", name, LOG_ENV)
    return numeric


@dataclass(frozen=True)
class LearnerSet:
    """Learner specification per nuisance function."""

    f2: LearnerSpec = LearnerSpec()
    g2: LearnerSpec = LearnerSpec()
    f1: LearnerSpec = LearnerSpec()
    g1: LearnerSpec = LearnerSpec()

    def to_dict(self) -> Dict[str, Any]:
        return {k: getattr(self, k).to_dict() for k in ("f2", "g2", "f1", "g1")}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "LearnerSet":
        check_keys(data, {"f2", "g2", "f1", "g1"}, "learners")
        return cls(**{k: LearnerSpec.from_dict(v) for k, v in data.items()})


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One replicated simulation study.

    Attributes:
        model: Preset id 1-7 (ignored when ``spec_path`` is set)
        spec_path: JSON model document (the ``ModelPreset.to_dict`` form)
        instance_path: Discrete instance JSON; when set, data are sampled
            from the instance and every fit is scored by its exact regret
            over a grid of training sizes
        methods: Methods fitted on every training draw
        n_train: Training size (the grid value when grid_kind is "n")
        n_test: Simulated test subjects per evaluation
        replications: Training draws per grid point
        grid: Grid values; None uses the model's default grid
        grid_kind: "lambda", "c2t1", "c1t1" or "n"; None uses the model's
        K: Cross-fitting folds
        learners: Nuisance learners
        intercept: Intercept column in contrast designs
        sparse_penalty: Fixed lasso penalty; None selects it by CV
        seed: Base seed of every random stream
        output_dir: Directory of results.csv and companions
        save_interval: Result rows buffered between flushes
    """

    model: Optional[int] = 1
    spec_path: Optional[str] = None
    instance_path: Optional[str] = None
    methods: Tuple[str, ...] = METHODS
    n_train: Optional[int] = None
    n_test: int = 5000
    replications: int = 200
    grid: Optional[Tuple[float, ...]] = None
    grid_kind: Optional[str] = None
    K: int = 2
    learners: LearnerSet = field(default_factory=LearnerSet)
    intercept: bool = True
    sparse_penalty: Optional[float] = None
    seed: int = 0
    output_dir: str = "results"
    save_interval: int = 50

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.grid is not None:
            object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        problems = []
        if self.model is None and self.spec_path is None:
            problems.append("either model or spec_path is required")
        if not self.methods or any(m not in METHODS for m in self.methods):
            problems.append(f"methods must be a nonempty list drawn from {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            problems.append("methods must not repeat")
        if self.replications < 1:
            problems.append("replications must be at least 1")
        if self.grid is not None and len(self.grid) == 0:
            problems.append("grid must be nonempty")
        if self.grid_kind is not None and self.grid_kind not in GRID_KINDS:
            problems.append(f"grid_kind must be one of {GRID_KINDS}")
        if self.instance_path is not None:
            if self.grid_kind not in (None, "n"):
                problems.append("a discrete instance study runs over n; grid_kind must be \"n\"")
            if self.grid is None or any(g < 1 or g != int(g) for g in self.grid):
                problems.append("a discrete instance study needs a grid of positive integer sample sizes")
        if self.n_test < 1:
            problems.append("n_test must be positive")
        if self.n_train is not None and self.n_train < 1:
            problems.append("n_train must be positive")
        if self.K < 2:
            problems.append("K must be at least 2")
        if self.sparse_penalty is not None and self.sparse_penalty < 0:
            problems.append("sparse_penalty must be nonnegative")
        if self.save_interval < 1:
            problems.append("save_interval must be positive")
        if problems:
            raise ConfigurationError("invalid experiment config: " + "; ".join(problems))

    # ========== Derived Settings ==========

    def preset(self) -> ModelPreset:
        """The simulation model, from the preset table or ``spec_path``."""
        if self.spec_path is not None:
            from .serialization import read_json
            return ModelPreset.from_dict(read_json(self.spec_path, "model document"))
        return model_preset(self.model)

    def instance(self) -> DiscreteInstance:
        if self.instance_path is None:
            raise ConfigurationError("config has no instance_path")
        return read_instance(self.instance_path)

    def resolved_grid(self, preset: ModelPreset) -> Tuple[str, Tuple[float, ...]]:
        kind = self.grid_kind or preset.grid_kind
        grid = self.grid if self.grid is not None else (preset.grid if kind == preset.grid_kind else None)
        if grid is None:
            raise ConfigurationError(f"grid_kind {kind!r} differs from the model's; give a grid")
        return kind, grid

    def bql_config(self, seed: int) -> BqlConfig:
        lr = self.learners
        return BqlConfig(K=self.K, f2=lr.f2, g2=lr.g2, f1=lr.f1, g1=lr.g1,
                         intercept=self.intercept, seed=seed)

    def with_overrides(self, seed: Optional[int] = None, output_dir: Optional[str] = None) -> "ExperimentConfig":
        """Copy with CLI overrides applied."""
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if output_dir is not None:
            changes["output_dir"] = str(output_dir)
        return replace(self, **changes)

    # ========== JSON ==========

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["methods"] = list(self.methods)
        out["grid"] = list(self.grid) if self.grid is not None else None
        out["learners"] = self.learners.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        check_keys(data, set(cls.__dataclass_fields__), "experiment config")
        kwargs = dict(data)
        if "learners" in kwargs:
            kwargs["learners"] = LearnerSet.from_dict(kwargs["learners"])
        if kwargs.get("grid") is not None:
            kwargs["grid"] = tuple(kwargs["grid"])
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise ConfigurationError(f"experiment config: {e}") from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read an experiment config.

    Raises:
        ConfigurationError: Unreadable file, unknown fields or invalid values
    """
    from .serialization import read_json
    cfg = ExperimentConfig.from_dict(read_json(path, "experiment config"))
    logger.debug("loaded experiment config %s", path)
    return cfg
