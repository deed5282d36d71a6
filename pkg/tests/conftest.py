import numpy as np
import pytest
from hypothesis import settings

from regdata.datagen import build_data_matrices, make_exploration_input, simulate
from regdata.fixtures import desk_fixture
from regdata.oracle import LqrWeights, kleinman_pi

settings.register_profile("regdata", max_examples=40, deadline=None)
settings.load_profile("regdata")

DESK_T = 20.0
DESK_H = 1e-3
DESK_STRIDE = 100
DESK_BAND = (0.2, 2.0)
DESK_AMP = 0.5

_ACCEPTANCE = []


def desk_exploration(problem, algorithm, seed=0):
    pl = problem.plant
    return make_exploration_input(pl.m, pl.q, pl.n, problem.im.n_z, seed=seed,
                                  amplitude=DESK_AMP, band=DESK_BAND, algorithm=algorithm)


def desk_data(problem, mode, h=DESK_H, T=DESK_T, algorithm=None, v0=None):
    """Trajectory and data matrices for the desk fixture; sample spacing fixed at 0.1."""
    algorithm = algorithm or {"learning": "improved_or", "control": "first_or"}[mode]
    ex = desk_exploration(problem, algorithm)
    traj = simulate(problem.plant, problem.exo, problem.im, mode=mode, exploration=ex, T=T, h=h, v0=v0)
    stride = int(round(DESK_STRIDE * DESK_H / h))
    return traj, build_data_matrices(traj, stride)


@pytest.fixture(scope="session")
def desk():
    return desk_fixture()


@pytest.fixture(scope="session")
def desk_weights(desk):
    return LqrWeights.identity(desk.aug.N, desk.plant.m)


@pytest.fixture(scope="session")
def desk_oracle(desk, desk_weights):
    return kleinman_pi(desk.aug.Y, desk.aug.J, desk_weights)


@pytest.fixture(scope="session")
def learning_data(desk):
    return desk_data(desk, "learning")


@pytest.fixture(scope="session")
def control_data(desk):
    return desk_data(desk, "control")


@pytest.fixture
def acceptance_log():
    def record(number, ok, detail):
        _ACCEPTANCE.append((number, ok, detail))

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
