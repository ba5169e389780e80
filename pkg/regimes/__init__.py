"""
Cost-Aware Treatment Regimes Package

This package learns two-stage dynamic treatment regimes that decide which
covariates to assess and which treatment to assign, trading outcome utility
against assessment and treatment costs (Balanced Q-learning), together with
a trial simulator, comparator regimes, exact oracles for small discrete
problems and plug-in inference.
"""

__version__ = "0.1.0"
__author__ = "Lab Team"

from .baselines import BaselineRegime, fit_dense, fit_sparse
from .bql import BalancedQLearner, BqlConfig, fit_bql
from .config import ExperimentConfig, load_config
from .core import (AssessmentCatalog, CostSpec, Dataset, FeatureIndexSet, FittedRegime,
                   Trajectory, read_dataset_csv, write_dataset_csv)
from .deploy import decide_batch, deploy
from .errors import (ConfigurationError, DataError, NumericError, RegimeError)
from .experiment import run_experiment
from .infer import confidence_intervals, plugin_covariance
from .nuisance import LearnerSpec
from .serialization import load_regime, save_regime

__all__ = [
    'AssessmentCatalog',
    'BalancedQLearner',
    'BaselineRegime',
    'BqlConfig',
    'ConfigurationError',
    'CostSpec',
    'DataError',
    'Dataset',
    'ExperimentConfig',
    'FeatureIndexSet',
    'FittedRegime',
    'LearnerSpec',
    'NumericError',
    'RegimeError',
    'Trajectory',
    'confidence_intervals',
    'decide_batch',
    'deploy',
    'fit_bql',
    'fit_dense',
    'fit_sparse',
    'load_config',
    'load_regime',
    'plugin_covariance',
    'read_dataset_csv',
    'run_experiment',
    'save_regime',
    'write_dataset_csv',
]
