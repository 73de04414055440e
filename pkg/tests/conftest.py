"""Shared fixtures: one seeded reference system with exact data, reused by
most of the suite."""
import numpy as np
import pytest

from jetsim.datamatrix import DataMatrixView, ShiftSpec
from jetsim.oracle import make_random_system, random_multisine, simulate_exact
from jetsim.signals import TimeGrid, truncate_jet

SEED = 42
DT = 1e-3
DURATION = 10.0
L = 2
M = 10
T = 0.5


@pytest.fixture(scope="session")
def model():
    return make_random_system(2, 1, 1, seed=SEED)


@pytest.fixture(scope="session")
def data_input():
    return random_multisine(1, 6, seed=7)


@pytest.fixture(scope="session")
def data_grid():
    return TimeGrid(0.0, DT, int(round(DURATION / DT)) + 1)


@pytest.fixture(scope="session")
def oracle_run(model, data_input, data_grid):
    return simulate_exact(model, data_input, [0.3, -0.2], data_grid, jet_order=4)


@pytest.fixture(scope="session")
def shift_spec():
    return ShiftSpec(M, T)


@pytest.fixture(scope="session")
def full_view(oracle_run, shift_spec):
    return DataMatrixView.full(truncate_jet(oracle_run.jet, L), shift_spec)


@pytest.fixture(scope="session")
def reduced_view(oracle_run, shift_spec):
    return DataMatrixView.reduced(truncate_jet(oracle_run.jet, L), shift_spec)


@pytest.fixture(scope="session")
def target_input():
    return random_multisine(1, 4, seed=11)


@pytest.fixture(scope="session")
def target_truth(model, target_input):
    """Independent reference trajectory on [0, 2.1] at the data rate."""
    grid = TimeGrid(0.0, DT, 2101)
    return simulate_exact(model, target_input, [0.5, -0.1], grid, jet_order=L + 1)


@pytest.fixture(scope="session")
def target_layers(target_input):
    return target_input.sample_layers(TimeGrid(0.0, DT, 2101), L + 1)


@pytest.fixture(scope="session")
def target_y_init(target_truth):
    return np.vstack([target_truth.jet.y_layer(i).eval_at(0.0) for i in range(L + 1)])
