"""Shared fixtures.

The heavy end-to-end artifacts (corpus, split, backend, look-up table, run
report) are session-scoped so the acceptance tests and the pipeline tests
pay for them once.  Everything is seeded; reruns see identical objects.
"""

import numpy as np
import pytest

from atcs.dataset import split_corpus
from atcs.energy import default_model
from atcs.features import FeatureSelection
from atcs.pipeline import (REDUCED_FEATURE_NAMES, ScaleConfig,
                           baseline_accuracies, build_lut,
                           naive_ratio_from_lut, simulate, train_backend,
                           train_localization)
from atcs.synth import generate_corpus

MASTER_SEED = 11
SPLIT_SEED = 5
BACKEND_SEED = 3
SEARCH_SEED = 5
SIM_SEED = 7


@pytest.fixture(scope="session")
def corpus():
    return generate_corpus(master=MASTER_SEED, activities=range(1, 20),
                           subjects=range(1, 5), segments_per=6)


@pytest.fixture(scope="session")
def split(corpus):
    return split_corpus(corpus, ratio=0.7, seed=SPLIT_SEED)


@pytest.fixture(scope="session")
def backend(split):
    return train_backend(split.train, seed=BACKEND_SEED, n_trees=100)


@pytest.fixture(scope="session")
def baseline(backend, split):
    return baseline_accuracies(backend, split.test)


@pytest.fixture(scope="session")
def coarse_model(split):
    return train_localization(
        split.train, seed=BACKEND_SEED,
        selection=FeatureSelection.from_names(REDUCED_FEATURE_NAMES))


@pytest.fixture(scope="session")
def lut_and_results(split, backend, baseline):
    return build_lut(split.train, backend, baseline, seed=SEARCH_SEED,
                     scale=ScaleConfig.desk())


@pytest.fixture(scope="session")
def run_report(split, backend, lut_and_results, coarse_model):
    lut, _ = lut_and_results
    return simulate(
        split.test, backend, default_model(), seed=SIM_SEED, lut=lut,
        coarse=coarse_model,
        node_features=FeatureSelection.from_names(REDUCED_FEATURE_NAMES),
        modes=("baseline", "naive", "adaptive"),
        naive_cr=naive_ratio_from_lut(lut))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260823)
