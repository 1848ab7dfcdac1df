import numpy as np
import pytest

from pinnbench.domain import (DomainSpec, GridSpec, NoiseSpec, add_field_noise,
                              solve_fdm)
from pinnbench.loss import SamplingPlan, TrainingData
from pinnbench.network import NetworkConfig, init_params


@pytest.fixture(scope="session")
def default_spec():
    return DomainSpec()


@pytest.fixture(scope="session")
def default_grid():
    return GridSpec()


@pytest.fixture(scope="session")
def clean_solution(default_spec, default_grid):
    return solve_fdm(default_spec, default_grid)


@pytest.fixture(scope="session")
def small_grid():
    # coarsest grid that still passes the cell-Peclet gate (dx = 0.04, Pe = 2)
    return GridSpec(nx=26, ny=26, nt=50)


@pytest.fixture(scope="session")
def small_clean(default_spec, small_grid):
    return solve_fdm(default_spec, small_grid)


@pytest.fixture(scope="session")
def small_training_data(default_spec, small_clean):
    noisy = add_field_noise(small_clean, NoiseSpec(seed=5))
    return TrainingData(small_clean, noisy)


@pytest.fixture()
def small_plan():
    return SamplingPlan(n_collocation=20, n_bc_per_edge=8, n_ic_symbolic=16,
                        data_batch=64, ic_batch=64, seed=11)


@pytest.fixture()
def tiny_params():
    return init_params(NetworkConfig(hidden_layers=2, hidden_width=8), seed=7)


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
