import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from regimes.bql import BqlConfig
from regimes.core import AssessmentCatalog, CostSpec, Dataset, FeatureIndexSet
from regimes.evaluation import read_instance
from regimes.nuisance import LearnerSpec
from regimes.synth import generate, model_preset

settings.register_profile("fast", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=300, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "fast"))


RIDGE = LearnerSpec(kind="ridge")


@pytest.fixture
def ridge_config():
    return BqlConfig.with_learner(RIDGE, K=2, seed=11)


@pytest.fixture
def small_catalog():
    # stage 1: s1_1 free, {2} or {} to assess; stage 2: s2_1 free, {2} or {} to assess
    return AssessmentCatalog(
        d1=2, d2=2,
        l1=FeatureIndexSet.of(1), l2=FeatureIndexSet.of(1),
        cand1=(FeatureIndexSet(), FeatureIndexSet.of(2)),
        cand2=(FeatureIndexSet(), FeatureIndexSet.of(2)),
    )


@pytest.fixture
def small_costs(small_catalog):
    cat = small_catalog
    return CostSpec({cat.cand1[0]: 0.0, cat.cand1[1]: 0.1},
                    {cat.cand2[0]: 0.0, cat.cand2[1]: 0.2},
                    (0.0, 0.05), (0.0, 0.05), 1.0)


@pytest.fixture(scope="session")
def model1():
    return model_preset(1)


@pytest.fixture(scope="session")
def model1_data(model1):
    return generate(model1.spec, 400, 2024)


def random_dataset(n=200, d1=2, d2=2, seed=0):
    """Dataset with both arms present at both stages."""
    rng = np.random.default_rng(seed)
    S1 = rng.normal(size=(n, d1))
    S2 = rng.normal(size=(n, d2))
    A1 = np.arange(n) % 2
    A2 = (np.arange(n) // 2) % 2
    Y = S1[:, 0] + A1 * S1[:, -1] + A2 * S2[:, 0] + rng.normal(size=n)
    return Dataset.from_arrays(S1, A1, S2, A2, Y)


@pytest.fixture
def make_dataset():
    return random_dataset


CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def tiny_instance():
    return read_instance(CONFIGS / "tiny_instance.json")
