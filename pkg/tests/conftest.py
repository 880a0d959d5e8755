"""Shared fixtures and the opt-in switch for full-size experiment runs."""

import numpy as np
import pytest

from core.model import InfluenceModel, ModelSpec
from core.param_store import ParamStore
from core.sequences import EventSequence
from utils.random_streams import derive_rng


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run full-size training experiments")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def small_spec():
    """Two types, tiny networks: quick to evaluate on the scalar tape."""
    return ModelSpec(num_types=2, embedding_dim=2, psi_hidden=(3,), phi_hidden=(3, 2))


@pytest.fixture
def small_store(small_spec):
    return ParamStore.initialize(small_spec.layout(), derive_rng(7))


@pytest.fixture
def small_model(small_spec, small_store):
    return InfluenceModel.from_store(small_store, small_spec)


@pytest.fixture
def two_type_sequence():
    return EventSequence([0.4, 1.1, 1.3, 2.7, 3.05], [0, 1, 0, 0, 1], horizon=4.0, num_types=2)


@pytest.fixture
def constant_store(small_spec):
    """
    Parameters whose intensity is the constant link(alpha): psi output is
    zero, so no event contributes.
    """
    store = ParamStore.initialize(small_spec.layout(), derive_rng(3))
    n_psi = len(small_spec.layout().layer_sizes('psi'))
    store.slice(f'psi.w{n_psi - 1}')[:] = 0.0
    store.slice(f'psi.b{n_psi - 1}')[:] = 0.0
    return store


def make_rng(seed=0):
    return np.random.default_rng(seed)
