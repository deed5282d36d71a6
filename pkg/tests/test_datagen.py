import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import DESK_H, desk_data
from regdata.datagen import (
    ExplorationInput,
    Trajectory,
    build_data_matrices,
    check_rank_condition,
    integral_identity_residual,
    make_exploration_input,
    required_unknowns,
    signal_scale,
    simulate,
)
from regdata.errors import BlowUpError, DimensionError, RankDeficientError
from regdata.fixtures import rotation
from regdata.numerics import vecv
from regdata.sysmodel import Exosystem, Plant


def scalar_plant(a=-1.0):
    return Plant(A=[[a]], B=[[1.0]], C=[[1.0]], D=[[0.0]], E=[[0.0]], F=[[0.0]])


def manual_traj(t, x, u, v=None, z=None):
    T = t.size
    x = np.asarray(x, dtype=float).reshape(T, -1)
    u = np.asarray(u, dtype=float).reshape(T, -1)
    v = np.zeros((T, 1)) if v is None else np.asarray(v, dtype=float).reshape(T, -1)
    z = np.zeros((T, 0)) if z is None else z
    return Trajectory(t=t, x=x, z=z, v=v, u=u, y=x, e=x, mode="none")


def random_sym(rng, n):
    A = rng.standard_normal((n, n))
    return A + A.T


# simulation


def test_simulate_constant():
    pl = Plant(A=np.zeros((2, 2)), B=np.zeros((2, 1)), C=np.eye(2)[:1], D=[[0.0]], E=np.zeros((2, 1)), F=[[0.0]])
    exo = Exosystem(S=[[0.0]], v0=[3.0])
    traj = simulate(pl, exo, mode="none", T=1.0, h=0.01, x0=[1.0, -2.0])
    assert np.array_equal(traj.x, np.tile([1.0, -2.0], (traj.t.size, 1)))
    assert np.array_equal(traj.v, np.full((traj.t.size, 1), 3.0))


def test_simulate_rotation_closed_form():
    pl = Plant(A=[[0.0]], B=[[0.0]], C=[[1.0]], D=[[0.0]], E=[[0.0, 0.0]], F=[[0.0, 0.0]])
    exo = Exosystem(S=rotation(1.0), v0=[1.0, 0.0])
    traj = simulate(pl, exo, mode="none", T=10.0, h=1e-3)
    exact = np.column_stack([np.cos(traj.t), -np.sin(traj.t)])
    assert np.max(np.abs(traj.v - exact)) <= 1e-8


def test_simulate_scalar_forced_closed_form():
    ex = ExplorationInput([[1.0]], [[1.0]], [[0.0]])
    traj = simulate(scalar_plant(), Exosystem(S=[[0.0]], v0=[0.0]), mode="none", exploration=ex, T=10.0, h=1e-3)
    t = traj.t
    exact = 0.5 * (np.sin(t) - np.cos(t) + np.exp(-t))
    assert np.max(np.abs(traj.x[:, 0] - exact)) <= 1e-8
    assert np.allclose(traj.u[:, 0], np.sin(t))


def test_simulate_feedback_gain():
    # x' = x + u with u = -3x gives x = exp(-2t)
    traj = simulate(scalar_plant(1.0), Exosystem(S=[[0.0]], v0=[0.0]), mode="none", gain=[[-3.0]],
                    T=2.0, h=1e-3, x0=[1.0])
    assert np.max(np.abs(traj.x[:, 0] - np.exp(-2 * traj.t))) <= 1e-9


def test_simulate_compensator_modes(desk):
    ex = make_exploration_input(1, 2, 2, 2, seed=3, amplitude=0.5, band=(0.2, 3.0))
    for mode in ("control", "learning"):
        traj = simulate(desk.plant, desk.exo, desk.im, mode=mode, exploration=ex, T=5.0, h=1e-3)
        drive = traj.e if mode == "control" else traj.y
        # z' = G1 z + G2 drive, checked by central differences in the interior
        dz = (traj.z[2:] - traj.z[:-2]) / (2 * traj.h)
        rhs = traj.z[1:-1] @ desk.im.G1.T + drive[1:-1] @ desk.im.G2.T
        assert np.max(np.abs(dz - rhs)) < 1e-5


def test_simulate_blow_up():
    with pytest.raises(BlowUpError):
        simulate(scalar_plant(5.0), Exosystem(S=[[0.0]], v0=[0.0]), mode="none", T=20.0, h=1e-2,
                 x0=[1.0], state_cap=1e6)


def test_simulate_bad_inputs(desk):
    with pytest.raises(ValueError):
        simulate(desk.plant, desk.exo, desk.im, mode="control", T=0.0)
    with pytest.raises(DimensionError):
        simulate(desk.plant, desk.exo, desk.im, mode="control", x0=[1.0])
    with pytest.raises(DimensionError):
        simulate(desk.plant, desk.exo, None, mode="learning")


def test_trajectory_csv(tmp_path, desk):
    traj = simulate(desk.plant, desk.exo, desk.im, mode="control", T=0.01, h=1e-3)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "t,x1,x2,z1,z2,v1,v2,u1,e1"
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(back[:, 1:3], traj.x)


# data matrices


def test_data_matrices_constant_signal():
    t = np.linspace(0.0, 1.0, 101)
    c = np.array([2.0, -1.0])
    traj = manual_traj(t, np.tile(c, (101, 1)), np.zeros(101))
    dm = build_data_matrices(traj, 100)
    assert dm.s == 1
    assert np.array_equal(dm.delta_xi, np.zeros((1, 3)))
    assert np.allclose(dm.I_xixi[0], vecv(c))


def test_data_matrices_linear_integrand():
    h = 1e-2
    t = np.arange(101) * h
    traj = manual_traj(t, t, np.ones(101))
    dm = build_data_matrices(traj, 100)
    assert abs(dm.Gamma_x_u[0, 0] - 0.5) <= h**2


def test_data_matrices_too_short():
    t = np.arange(51) * 1e-3
    with pytest.raises(RankDeficientError):
        build_data_matrices(manual_traj(t, t, t), 100)
    with pytest.raises(ValueError):
        build_data_matrices(manual_traj(t, t, t), 1)


def test_data_matrices_shapes(learning_data):
    _, dm = learning_data
    N = dm.N
    assert dm.s == 200
    assert dm.delta_xi.shape == (200, N * (N + 1) // 2)
    assert dm.Gamma_xi_u.shape == (200, N * dm.m)
    assert dm.Gamma_xi_v.shape == (200, N * dm.q)
    assert dm.Gamma_x_v.shape == (200, dm.n * dm.q)
    assert dm.which_compensator == "learning"


def test_interval_additivity(learning_data):
    traj, dm = learning_data
    coarse = build_data_matrices(traj, 200)
    for name in ("I_xixi", "Gamma_xi_u", "Gamma_xi_v", "Gamma_x_v", "delta_xi"):
        fine = getattr(dm, name)
        paired = fine[0::2] + fine[1::2]
        assert np.allclose(paired, getattr(coarse, name), rtol=1e-12, atol=1e-13)


def test_delta_telescoping(learning_data):
    traj, dm = learning_data
    q = vecv(traj.xi)
    end = dm.s * 100
    assert np.allclose(dm.delta_xi.sum(axis=0), q[end] - q[0], rtol=1e-12, atol=1e-12)


def truncated(traj, steps):
    sl = slice(0, steps + 1)
    return Trajectory(t=traj.t[sl], x=traj.x[sl], z=traj.z[sl], v=traj.v[sl], u=traj.u[sl],
                      y=traj.y[sl], e=traj.e[sl], mode=traj.mode)


def test_rank_monotone_in_intervals(learning_data):
    traj, _ = learning_data
    ranks = []
    for intervals in (2, 5, 10, 15, 18, 25, 60, 200):
        dm = build_data_matrices(truncated(traj, intervals * 100), 100)
        ranks.append(check_rank_condition(dm, "improved_or").rank)
    assert ranks == sorted(ranks)
    assert ranks[-1] == 18


def identity_check(problem, traj, dm, Ebar, rng, count=10):
    Y, J = problem.aug.Y, problem.aug.J
    out = []
    for _ in range(count):
        P = random_sym(rng, dm.N)
        res = np.max(np.abs(integral_identity_residual(dm, P, Y, J, Ebar)))
        tol = 10 * traj.h**2 * dm.s * signal_scale(traj, P, Y, J, Ebar)
        out.append((res, tol))
    return out


def test_identity_learning_compensator(desk, learning_data, rng):
    traj, dm = learning_data
    for res, tol in identity_check(desk, traj, dm, desk.aug.E0, rng):
        assert res <= tol


def test_identity_control_compensator(desk, control_data, rng):
    traj, dm = control_data
    for res, tol in identity_check(desk, traj, dm, desk.aug.EG, rng):
        assert res <= tol


def test_identity_wrong_matrices_fail(desk, learning_data, rng):
    traj, dm = learning_data
    P = random_sym(rng, dm.N)
    res = np.max(np.abs(integral_identity_residual(dm, P, desk.aug.Y, desk.aug.J, desk.aug.EG)))
    assert res > 1e3 * 10 * traj.h**2 * dm.s


def test_identity_second_order(desk):
    P = random_sym(np.random.default_rng(7), 4)
    res = []
    for h in (DESK_H, DESK_H / 2):
        _, dm = desk_data(desk, "learning", h=h)
        res.append(np.max(np.abs(integral_identity_residual(dm, P, desk.aug.Y, desk.aug.J, desk.aug.E0))))
    assert 3.0 <= res[0] / res[1] <= 5.0


# rank conditions and exploration


def test_required_counts_tables():
    assert required_unknowns(10, 8, 20, 50, "improved_or") == 2510
    assert required_unknowns(10, 8, 20, 50, "first_or") == 3510
    assert required_unknowns(10, 8, 20, 50, "improved_or_D0") == 1830 + 80 + 200
    assert required_unknowns(3, 2, 1, 0, "pi_lqr") == 6 + 6


def test_rank_short_trajectory_fails(learning_data):
    traj, _ = learning_data
    dm = build_data_matrices(truncated(traj, 1000), 100)
    assert dm.s < 18
    for which in ("first_or", "improved_or", "improved_or_D0"):
        rep = check_rank_condition(dm, which)
        assert not rep.ok and rep.rank <= dm.s
        assert "required" in rep.describe()


def test_rank_desk_conditions(learning_data, control_data):
    rep = check_rank_condition(learning_data[1], "improved_or")
    assert rep.ok and (rep.rank, rep.required) == (18, 18)
    rep = check_rank_condition(control_data[1], "first_or")
    assert rep.ok and (rep.rank, rep.required) == (22, 22)


def test_exploration_deterministic():
    a = make_exploration_input(2, 2, 2, 2, seed=11)
    b = make_exploration_input(2, 2, 2, 2, seed=11)
    assert np.array_equal(a.frequencies, b.frequencies) and np.array_equal(a.phases, b.phases)
    c = make_exploration_input(2, 2, 2, 2, seed=12)
    assert not np.array_equal(a.frequencies, c.frequencies)


@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_exploration_shape_and_band(m, seed):
    ex = make_exploration_input(m, 2, 2, 2, seed=seed, band=(0.5, 4.0), algorithm="first_or")
    n_sin = int(np.ceil(1.2 * required_unknowns(2, m, 2, 2, "first_or") / m))
    assert ex.frequencies.shape == (m, n_sin)
    assert np.all((ex.frequencies >= 0.5) & (ex.frequencies <= 4.0))
    assert np.all((ex.phases >= 0) & (ex.phases < 2 * np.pi))
    for row in ex.frequencies:
        assert np.unique(row).size == row.size
    if m > 1:
        assert not np.intersect1d(ex.frequencies[0], ex.frequencies[1]).size


def test_exploration_rejects_bad_band():
    with pytest.raises(ValueError):
        make_exploration_input(1, 1, 1, 1, seed=0, band=(2.0, 1.0))
    with pytest.raises(DimensionError):
        ExplorationInput([[1.0, 1.0]], [[1.0, 1.0]], [[0.0, 0.0]])
