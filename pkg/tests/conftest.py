import time

import numpy as np
import pytest

from discgrad import rigid_body_modified
from discgrad.experiments import (
    ExperimentConfig,
    conservation_study,
    efficiency_study,
    order_study,
    phase_trajectory_export,
    stepsize_criterion_study,
)

from oracles import X0


@pytest.fixture(scope="session")
def rigid():
    return rigid_body_modified(2.0, 1.0, 2.0 / 3.0, 1.0)


@pytest.fixture
def x0():
    return X0.copy()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


# Studies are expensive; each runs once per session and is shared by the
# module tests and the acceptance suite.


@pytest.fixture(scope="session")
def conservation_run():
    return _timed(conservation_study, ExperimentConfig())


@pytest.fixture(scope="session")
def order_run():
    return _timed(order_study, ExperimentConfig())


@pytest.fixture(scope="session")
def efficiency_run():
    return _timed(efficiency_study, ExperimentConfig())


@pytest.fixture(scope="session")
def stepcrit_run():
    return _timed(stepsize_criterion_study, ExperimentConfig(R_values=(1.0, 0.1, 0.01, 0.0)))


@pytest.fixture(scope="session")
def phase_run():
    return _timed(phase_trajectory_export, ExperimentConfig())
