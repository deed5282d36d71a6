import numpy as np
import pytest
import scipy.linalg as sla

from regdata.errors import ConvergenceError, IterationCapError, NotHurwitzError, RegDataError
from regdata.fixtures import desk_fixture, integrator_fixture
from regdata.learner import evaluate_controller
from regdata.numerics import is_hurwitz, min_eig_sym, spectral_abscissa
from regdata.oracle import (
    LqrWeights,
    ViSettings,
    kleinman_pi,
    model_based_vi,
    settle_horizon,
    solve_lyapunov,
    solve_regulator_equations,
)
from test_sysmodel import random_passing_problem

SQRT2M1 = np.sqrt(2.0) - 1.0


def scalar_weights():
    return LqrWeights([[1.0]], [[1.0]])


def test_weights_validation():
    with pytest.raises(RegDataError):
        LqrWeights(-np.eye(2), np.eye(1))
    with pytest.raises(RegDataError):
        LqrWeights(np.eye(2), np.zeros((1, 1)))
    with pytest.raises(RegDataError):
        LqrWeights([[1.0, 1.0], [0.0, 1.0]], np.eye(1))


def test_weights_observability(desk):
    assert LqrWeights.identity(4, 1).observable_with(desk.aug.Y)
    assert not LqrWeights(np.zeros((4, 4)), np.eye(1)).observable_with(desk.aug.Y)


def test_lyapunov_examples():
    assert np.allclose(solve_lyapunov([[-1.0]], [[2.0]]), [[1.0]])
    assert np.allclose(solve_lyapunov(-np.eye(2), np.eye(2)), 0.5 * np.eye(2))


def test_lyapunov_random(rng):
    for _ in range(100):
        n = int(rng.integers(1, 6))
        A = rng.standard_normal((n, n))
        A -= (spectral_abscissa(A) + rng.uniform(0.1, 1.0)) * np.eye(n)
        G = rng.standard_normal((n, n))
        Qc = G @ G.T
        P = solve_lyapunov(A, Qc)
        assert np.linalg.norm(A.T @ P + P @ A + Qc) <= 1e-9 * max(1.0, np.linalg.norm(Qc))
        assert np.allclose(P, sla.solve_continuous_lyapunov(A.T, -Qc), atol=1e-8 * max(1.0, np.abs(P).max()))


def test_lyapunov_rejects_unstable():
    with pytest.raises(NotHurwitzError):
        solve_lyapunov([[1.0]], [[1.0]])


def test_kleinman_scalar():
    sol = kleinman_pi([[-1.0]], [[1.0]], scalar_weights(), K0=[[0.0]])
    assert abs(sol.P_star[0, 0] - SQRT2M1) < 1e-10
    assert abs(sol.K_star[0, 0] + SQRT2M1) < 1e-10


def test_kleinman_zero_cost():
    sol = kleinman_pi(-np.eye(2), np.eye(2)[:, :1], LqrWeights(np.zeros((2, 2)), [[1.0]]), K0=np.zeros((1, 2)))
    assert np.allclose(sol.P_star, 0.0) and np.allclose(sol.K_star, 0.0)


def test_kleinman_desk(desk, desk_oracle, desk_weights):
    aug = desk.aug
    assert desk_oracle.residual <= 1e-9
    P_are = sla.solve_continuous_are(aug.Y, aug.J, desk_weights.Q, desk_weights.R)
    assert np.allclose(desk_oracle.P_star, P_are, rtol=1e-9, atol=1e-9)
    assert min_eig_sym(desk_oracle.P_star) > 0
    assert is_hurwitz(aug.Y + aug.J @ desk_oracle.K_star)


def test_kleinman_rejects_bad_gain(desk, desk_weights):
    with pytest.raises(NotHurwitzError):
        kleinman_pi(desk.aug.Y, desk.aug.J, desk_weights, K0=np.zeros((1, 4)))


def check_kleinman_trace(sol, Y, J):
    Ps = sol.trace.P
    for P_k, P_next in zip(Ps, Ps[1:]):
        assert min_eig_sym(P_k - P_next) >= -1e-9
    for P_k, K_k in zip(Ps, sol.trace.K):
        assert min_eig_sym(P_k - sol.P_star) >= -1e-9
        assert is_hurwitz(Y + J @ K_k)


def test_kleinman_monotone_and_stabilizing(desk, desk_oracle):
    check_kleinman_trace(desk_oracle, desk.aug.Y, desk.aug.J)


def test_kleinman_random_systems(rng):
    for _ in range(10):
        prob = random_passing_problem(rng)
        aug = prob.aug
        w = LqrWeights.identity(aug.N, prob.plant.m)
        sol = kleinman_pi(aug.Y, aug.J, w)
        assert sol.residual <= 1e-8 * max(1.0, np.linalg.norm(sol.P_star)) ** 2
        check_kleinman_trace(sol, aug.Y, aug.J)


def test_vi_scalar():
    sol = model_based_vi([[-1.0]], [[1.0]], scalar_weights(), P0=[[1.0]], settings=ViSettings(c=1.0))
    assert abs(sol.P_star[0, 0] - SQRT2M1) < 1e-5


def test_vi_fixed_point(desk, desk_oracle, desk_weights):
    sol = model_based_vi(desk.aug.Y, desk.aug.J, desk_weights, P0=desk_oracle.P_star)
    assert sol.iterations == 0
    assert sol.update_norm < 1e-12 * 10


def test_vi_matches_kleinman(desk, desk_oracle, desk_weights):
    settings = ViSettings()
    sol = model_based_vi(desk.aug.Y, desk.aug.J, desk_weights, settings=settings, P_ref=desk_oracle.P_star)
    rel = np.linalg.norm(sol.P_star - desk_oracle.P_star) / np.linalg.norm(desk_oracle.P_star)
    assert rel <= 10 * settings.eps_conv
    assert len(sol.trace) == sol.iterations + 1
    assert sol.trace.err[-1] == pytest.approx(rel)


def test_vi_matches_kleinman_random(rng):
    done = 0
    while done < 5:
        prob = random_passing_problem(rng)
        aug = prob.aug
        w = LqrWeights.identity(aug.N, prob.plant.m)
        pi = kleinman_pi(aug.Y, aug.J, w)
        # diminishing steps need about exp(t/c) iterations to cover time t; keep slow loops out
        if spectral_abscissa(aug.Y + aug.J @ pi.K_star) > -0.2:
            continue
        done += 1
        settings = ViSettings(reset_cap=200)
        vi = model_based_vi(aug.Y, aug.J, w, settings=settings)
        rel = np.linalg.norm(vi.P_star - pi.P_star) / np.linalg.norm(pi.P_star)
        assert rel <= 10 * settings.eps_conv


def test_vi_resets_when_schedule_too_aggressive(desk, desk_weights):
    with pytest.raises(ConvergenceError):
        model_based_vi(desk.aug.Y, desk.aug.J, desk_weights, settings=ViSettings(c=1e3, reset_cap=2))


def test_vi_iteration_cap(desk, desk_weights):
    with pytest.raises(IterationCapError):
        model_based_vi(desk.aug.Y, desk.aug.J, desk_weights, settings=ViSettings(max_iter=10))


def test_vi_schedule():
    s = ViSettings(c=2.0)
    assert [s.eps(k) for k in range(3)] == [2.0, 1.0, 2.0 / 3.0]


def test_regulator_integrator():
    prob = integrator_fixture()
    K = np.array([[-2.0, -1.0]])
    reg = solve_regulator_equations(prob.plant, prob.im, K, prob.exo.S)
    assert np.allclose(reg.X, [[1.0]])
    assert np.allclose(reg.Z, [[-K[0, 0] / K[0, 1]]])
    assert np.allclose(reg.U, [[0.0]])
    assert max(reg.residuals) <= 1e-8


def test_regulator_zero_exogenous(desk_oracle):
    prob = desk_fixture(E_scale=0.0, F_scale=0.0)
    reg = solve_regulator_equations(prob.plant, prob.im, desk_oracle.K_star, prob.exo.S)
    assert np.allclose(reg.X, 0) and np.allclose(reg.Z, 0) and np.allclose(reg.U, 0)


def test_regulator_desk(desk, desk_oracle):
    reg = solve_regulator_equations(desk.plant, desk.im, desk_oracle.K_star, desk.exo.S)
    assert max(reg.residuals) <= 1e-8


def test_regulator_random(rng):
    for _ in range(10):
        prob = random_passing_problem(rng)
        w = LqrWeights.identity(prob.aug.N, prob.plant.m)
        sol = kleinman_pi(prob.aug.Y, prob.aug.J, w)
        reg = solve_regulator_equations(prob.plant, prob.im, sol.K_star, prob.exo.S)
        assert max(reg.residuals) <= 1e-8 * max(1.0, np.abs(reg.X).max(), np.abs(reg.Z).max())


def test_regulator_requires_hurwitz(desk):
    with pytest.raises(NotHurwitzError):
        solve_regulator_equations(desk.plant, desk.im, np.zeros((1, 4)), desk.exo.S)


def test_closed_loop_regulation_random_initial(desk, desk_oracle, rng):
    Acl = desk.aug.Y + desk.aug.J @ desk_oracle.K_star
    T = settle_horizon(Acl)
    for _ in range(3):
        ev = evaluate_controller(desk.plant, desk.exo, desk.im, desk_oracle.K_star, T=T, h=1e-2,
                                 x0=rng.standard_normal(2), z0=rng.standard_normal(2), settle_tol=1e-6)
        assert ev.settled
