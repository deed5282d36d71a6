"""Data-driven learners for LQR and output regulation.

All four learners work offline on one :class:`DataMatrices` set:

* ``pi_lqr``       policy iteration from a stabilizing gain
* ``vi_lqr``       value iteration, no stabilizing gain needed
* ``vi_or_first``  value iteration on the augmented state with the error-driven compensator
* ``vi_or_improved`` identifies ``J`` and ``E`` once from output-driven compensator
  data, then iterates on a fixed operator for ``H_k``
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .datagen import (
    RANK_RTOL,
    DataMatrices,
    ExplorationInput,
    RankReport,
    build_data_matrices,
    check_rank_condition,
    simulate,
    write_csv,
)
from .errors import (
    ConvergenceError,
    DimensionError,
    IterationCapError,
    RankDeficientError,
    RegDataError,
    SingularMatrixError,
)
from .numerics import (
    LeastSquares,
    duplication_matrix,
    min_eig_sym,
    sym_dim,
    unvec,
    unvecs,
    vecs,
)
from .oracle import LqrWeights, ViSettings, ViTrace, settle_horizon, value_iteration
from .sysmodel import Exosystem, InternalModel, Plant, build_augmented

log = logging.getLogger(__name__)


def count_unknowns(n: int, m: int, p: int, q: int, n_z: int, algorithm: str) -> int:
    """Unknowns per regression step for each algorithm variant."""
    if min(n, m, p, q, n_z) < 1:
        raise ValueError("dimensions must be positive")
    N = n + n_z
    base = N * (N + 1) // 2
    if algorithm == "first_or":
        return base + (m + q) * N
    if algorithm == "improved_k0":
        return base + N * m + n * q
    if algorithm == "improved_k0_D0":
        return base + n * (m + q)
    if algorithm == "improved_kge1":
        return base
    raise ValueError(f"unknown algorithm {algorithm!r}")


@dataclass
class LearnReport:
    algorithm: str
    iterations: int = 0
    resets: int = 0
    trace: ViTrace | None = None
    final_gain: np.ndarray | None = None
    rank: RankReport | None = None
    timing: float = 0.0
    diagnostics: dict = field(default_factory=dict)
    blind: bool = False

    def rows(self):
        tr = self.trace
        with_err = bool(tr.err) and not self.blind
        header = ["k", "q", "eps_k", "conv_stat"] + (["err_P"] if with_err else [])
        data = []
        for i in range(len(tr)):
            row = [tr.k[i], tr.q[i], tr.eps[i], tr.conv[i]]
            if with_err:
                row.append(tr.err[i])
            data.append(row)
        return header, np.array(data, dtype=float).reshape(len(data), len(header))

    def to_csv(self, path) -> None:
        header, data = self.rows()
        write_csv(path, header, data)

    def summary(self) -> str:
        lines = [
            f"algorithm: {self.algorithm}",
            f"iterations: {self.iterations}",
            f"resets: {self.resets}",
        ]
        if self.trace is not None and len(self.trace):
            lines.append(f"final convergence statistic: {self.trace.conv[-1]:.6e}")
        if self.rank is not None:
            lines.append(f"rank: {self.rank.describe()}")
        for key, val in self.diagnostics.items():
            if self.blind and key.startswith("oracle_"):
                continue
            lines.append(f"{key}: {val}")
        lines.append(f"timing_s: {self.timing:.3f}")
        return "\n".join(lines) + "\n"


@dataclass
class LearnResult:
    P: np.ndarray
    K: np.ndarray
    report: LearnReport
    J_hat: np.ndarray | None = None
    E_hat: np.ndarray | None = None
    EG_hat: np.ndarray | None = None
    H0: np.ndarray | None = None
    operator: np.ndarray | None = None


def _require_rank(dm: DataMatrices, which: str, tol: float) -> RankReport:
    rep = check_rank_condition(dm, which, tol=tol)
    if not rep.ok:
        deficient = [k for k, (r, c) in rep.block_ranks.items() if r < c]
        raise RankDeficientError(
            f"rank condition failed: {rep.describe()}; deficient blocks: {deficient or 'joint'}",
            rank=rep.rank,
            required=rep.required,
            blocks=rep.block_ranks,
        )
    return rep


def _weights_check(weights: LqrWeights, N: int, m: int):
    if weights.Q.shape != (N, N) or weights.R.shape != (m, m):
        raise DimensionError(
            f"weights have Q {weights.Q.shape}, R {weights.R.shape}; expected {(N, N)}, {(m, m)}"
        )


def pi_lqr(
    dm: DataMatrices,
    weights: LqrWeights,
    K0,
    tol: float = 1e-8,
    max_iter: int = 50,
    rank_tol: float = RANK_RTOL,
    P_ref=None,
    divergence_cap: float = 1e9,
) -> LearnResult:
    """Data-driven policy iteration on the recorded state ``xi`` and input ``u``."""
    t0 = time.perf_counter()
    N, m = dm.N, dm.m
    _weights_check(weights, N, m)
    rep = _require_rank(dm, "pi_lqr", rank_tol)
    R, Q = weights.R, weights.Q
    K = np.atleast_2d(np.asarray(K0, dtype=float))
    ns = sym_dim(N)
    eye = np.eye(N)
    trace = ViTrace()
    P_prev = None
    ref_norm = np.linalg.norm(P_ref) if P_ref is not None else None
    for k in range(max_iter):
        Psi = np.hstack(
            [dm.delta_xi, -2 * dm.Gamma_xi_xi @ np.kron(eye, K.T @ R) + 2 * dm.Gamma_xi_u @ np.kron(eye, R)]
        )
        Phi = -dm.Gamma_xi_xi @ (Q + K.T @ R @ K).reshape(-1, order="F")
        sol = LeastSquares(Psi, tol=rank_tol).solve(Phi)
        P = unvecs(sol[:ns])
        K = unvec(sol[ns:], m, N)
        if not np.isfinite(P).all() or np.linalg.norm(P) > divergence_cap:
            raise ConvergenceError("policy iteration diverged; K0 is probably not stabilizing")
        step = np.inf if P_prev is None else float(np.linalg.norm(P - P_prev))
        trace.k.append(k)
        trace.q.append(0)
        trace.eps.append(float("nan"))
        trace.conv.append(step)
        if P_ref is not None:
            trace.err.append(float(np.linalg.norm(P - P_ref) / ref_norm))
        if step <= tol:
            break
        P_prev = P
    else:
        raise IterationCapError(f"policy iteration did not converge in {max_iter} steps")
    report = LearnReport("pi-lqr", iterations=k + 1, trace=trace, final_gain=K, rank=rep)
    report.timing = time.perf_counter() - t0
    return LearnResult(P=P, K=K, report=report)


def _regression_operator(Theta, rhs, rank_tol):
    """Least-squares map ``vecs(P) -> unknowns`` for ``Theta x = rhs vecs(P)``."""
    return LeastSquares(Theta, tol=rank_tol).solve(rhs)


def vi_lqr(
    dm: DataMatrices,
    weights: LqrWeights,
    P0=None,
    settings: ViSettings | None = None,
    rank_tol: float = RANK_RTOL,
    P_ref=None,
) -> LearnResult:
    """Data-driven value iteration; ``H_k`` and ``K_k`` are regressed at every step."""
    t0 = time.perf_counter()
    settings = settings or ViSettings()
    N, m = dm.N, dm.m
    _weights_check(weights, N, m)
    rep = _require_rank(dm, "vi_lqr", rank_tol)
    R, Q = weights.R, weights.Q
    ns = sym_dim(N)
    Theta = np.hstack([dm.I_xixi, -2 * dm.Gamma_xi_u @ np.kron(np.eye(N), R)])
    op = _regression_operator(Theta, dm.delta_xi, rank_tol)

    def increment(P, k):
        sol = op @ vecs(P)
        H = unvecs(sol[:ns])
        K = unvec(sol[ns:], m, N)
        return H - K.T @ R @ K + Q

    P0 = np.eye(N) if P0 is None else P0
    P, trace, q, k = value_iteration(P0, increment, settings, P_ref=P_ref, label="vi-lqr")
    K = unvec((op @ vecs(P))[ns:], m, N)
    report = LearnReport("vi-lqr", iterations=k, resets=q, trace=trace, final_gain=K, rank=rep)
    report.timing = time.perf_counter() - t0
    return LearnResult(P=P, K=K, report=report)


def vi_or_first(
    dm: DataMatrices,
    weights: LqrWeights,
    P0=None,
    settings: ViSettings | None = None,
    rank_tol: float = RANK_RTOL,
    P_ref=None,
) -> LearnResult:
    """Value iteration on error-driven compensator data.

    Unknowns per step are ``vecs(H_k)``, ``vec(K_k)`` and
    ``vec([E; G2 F]' P_k)``. When ``v`` is identically zero the exogenous
    block carries no information and is dropped.
    """
    t0 = time.perf_counter()
    settings = settings or ViSettings()
    if dm.which_compensator != "control":
        log.warning("first algorithm expects error-driven compensator data, got %r", dm.which_compensator)
    N, m, q = dm.N, dm.m, dm.q
    _weights_check(weights, N, m)
    R, Q = weights.R, weights.Q
    ns = sym_dim(N)
    blocks = [dm.I_xixi, -2 * dm.Gamma_xi_u @ np.kron(np.eye(N), R)]
    v_active = bool(np.any(dm.Gamma_xi_v != 0.0))
    if v_active:
        rep = _require_rank(dm, "first_or", rank_tol)
        blocks.append(2 * dm.Gamma_xi_v)
    else:
        log.warning("exogenous signal is identically zero; dropping the [E; G2 F] block")
        rep = _require_rank(dm, "vi_lqr", rank_tol)
    op = _regression_operator(np.hstack(blocks), dm.delta_xi, rank_tol)
    nk = m * N

    def solve(P):
        sol = op @ vecs(P)
        return unvecs(sol[:ns]), unvec(sol[ns:ns + nk], m, N), sol[ns + nk:]

    P0 = np.eye(N) if P0 is None else np.asarray(P0, dtype=float)
    # J and [E; G2 F] read off the P0 solve, where P0 is well conditioned
    _, K_first, theta_E0 = solve(P0)
    J_hat = -np.linalg.solve(P0, K_first.T @ R)
    EG_hat = np.linalg.solve(P0, unvec(theta_E0, q, N).T) if v_active else np.zeros((N, q))
    gap = []

    def increment(P, k):
        H, K, _ = solve(P)
        gap.append(float(np.linalg.norm(K + weights.R_inv @ J_hat.T @ P)))
        return H - K.T @ R @ K + Q

    P, trace, resets, k = value_iteration(P0, increment, settings, P_ref=P_ref, label="first")
    _, K, _ = solve(P)
    report = LearnReport("first", iterations=k, resets=resets, trace=trace, final_gain=K, rank=rep)
    report.diagnostics["gain_identity_gap_max"] = f"{max(gap):.6e}"
    report.diagnostics["gain_identity_gap_final"] = f"{gap[-1]:.6e}"
    report.timing = time.perf_counter() - t0
    return LearnResult(P=P, K=K, report=report, J_hat=J_hat, EG_hat=EG_hat)


def _check_block_diag(P0, n: int, tol: float = 1e-12):
    off = np.linalg.norm(P0[:n, n:]) + np.linalg.norm(P0[n:, :n])
    if off > tol * max(1.0, np.linalg.norm(P0)):
        raise RegDataError("P0 must be block diagonal with blocks of size n and n_z")
    P01, P02 = P0[:n, :n], P0[n:, n:]
    if min_eig_sym(P01) <= 0.0 or (P02.size and min_eig_sym(P02) <= 0.0):
        raise SingularMatrixError("P0 blocks must be positive definite")
    return P01, P02


def identify_improved(dm: DataMatrices, P0, d_zero: bool = False, rank_tol: float = RANK_RTOL):
    """Solve the first improved-algorithm regression for ``H_0``, ``J`` and ``E``.

    Returns ``(H0, J_hat, E_hat, rank_report)``. With ``d_zero`` the input
    columns shrink to ``Gamma_x_u`` and the lower block of ``J_hat`` is zero.
    """
    n, nz, m, q, N = dm.n, dm.n_z, dm.m, dm.q, dm.N
    P0 = np.asarray(P0, dtype=float)
    P01, _ = _check_block_diag(P0, n)
    which = "improved_or_D0" if d_zero else "improved_or"
    rep = _require_rank(dm, which, rank_tol)
    Gu = dm.Gamma_x_u if d_zero else dm.Gamma_xi_u
    Theta = np.hstack([dm.I_xixi, 2 * Gu, 2 * dm.Gamma_x_v])
    sol = LeastSquares(Theta, tol=rank_tol).solve(dm.delta_xi @ vecs(P0))
    ns = sym_dim(N)
    nu = Gu.shape[1]
    H0 = unvecs(sol[:ns])
    if d_zero:
        theta_B = unvec(sol[ns:ns + nu], m, n)
        J_hat = np.vstack([np.linalg.solve(P01, theta_B.T), np.zeros((nz, m))])
    else:
        theta_J = unvec(sol[ns:ns + nu], m, N)
        J_hat = np.linalg.solve(P0, theta_J.T)
    theta_E = unvec(sol[ns + nu:], q, n)
    E_hat = np.linalg.solve(P01, theta_E.T)
    return H0, J_hat, E_hat, rep


def improved_operator_parts(dm: DataMatrices, J_hat, E_hat):
    """``(Psi', Phi')`` with ``Psi' vecs(H_k) = Phi' vecs(P_k)`` for ``k >= 1``."""
    N, nz, q = dm.N, dm.n_z, dm.q
    M = duplication_matrix(N)
    E0_hat = np.vstack([E_hat, np.zeros((nz, q))])
    eye = np.eye(N)
    Phi = (
        dm.delta_xi
        - 2 * dm.Gamma_xi_u @ np.kron(eye, J_hat.T) @ M
        - 2 * dm.Gamma_xi_v @ np.kron(eye, E0_hat.T) @ M
    )
    return dm.I_xixi, Phi


def vi_or_improved(
    dm: DataMatrices,
    weights: LqrWeights,
    P0=None,
    settings: ViSettings | None = None,
    d_zero: bool = False,
    rank_tol: float = RANK_RTOL,
    P_ref=None,
) -> LearnResult:
    """Improved value iteration on output-driven compensator data.

    After the identification step the map ``vecs(P_k) -> vecs(H_k)`` is a
    fixed matrix, computed once and reused at every iteration.
    """
    t0 = time.perf_counter()
    settings = settings or ViSettings()
    if dm.which_compensator != "learning":
        log.warning("improved algorithm expects output-driven compensator data, got %r", dm.which_compensator)
    N, m = dm.N, dm.m
    _weights_check(weights, N, m)
    R_inv, Q = weights.R_inv, weights.Q
    P0 = np.eye(N) if P0 is None else np.asarray(P0, dtype=float)
    H0, J_hat, E_hat, rep = identify_improved(dm, P0, d_zero=d_zero, rank_tol=rank_tol)
    Psi, Phi = improved_operator_parts(dm, J_hat, E_hat)
    op = LeastSquares(Psi, tol=rank_tol).solve(Phi)
    JRJ = J_hat @ R_inv @ J_hat.T

    def increment(P, k):
        H = H0 if k == 0 else unvecs(op @ vecs(P))
        return H - P @ JRJ @ P + Q

    P, trace, q, k = value_iteration(P0, increment, settings, P_ref=P_ref, label="improved")
    K = -R_inv @ J_hat.T @ P
    report = LearnReport("improved", iterations=k, resets=q, trace=trace, final_gain=K, rank=rep)
    report.timing = time.perf_counter() - t0
    return LearnResult(P=P, K=K, report=report, J_hat=J_hat, E_hat=E_hat, H0=H0, operator=op)


@dataclass
class EvalResult:
    t: np.ndarray
    e: np.ndarray
    settled: bool
    final_e_norm: float
    e0_norm: float
    horizon: float
    threshold: float

    @property
    def e_norm(self) -> np.ndarray:
        return np.linalg.norm(self.e, axis=1)


def evaluate_controller(
    plant: Plant,
    exo: Exosystem,
    im: InternalModel,
    K,
    T: float | None = None,
    h: float = 1e-2,
    x0=None,
    z0=None,
    v0=None,
    settle_tol: float = 1e-4,
    tail: float = 0.05,
    state_cap: float = 1e9,
) -> EvalResult:
    """Closed loop ``u = Kx x + Kz z`` with the error-driven compensator.

    Settled means ``|e(t)| <= settle_tol (1 + |e(0)|)`` over the last
    ``tail`` fraction of the horizon. The default horizon is 40 over the
    slowest closed-loop decay rate.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (plant.m, plant.n + im.n_z):
        raise DimensionError(f"gain has shape {K.shape}, expected {(plant.m, plant.n + im.n_z)}")
    if T is None:
        aug = build_augmented(plant, im)
        T = settle_horizon(aug.Y + aug.J @ K)
    traj = simulate(plant, exo, im, mode="control", gain=K, T=T, h=h, x0=x0, z0=z0, v0=v0, state_cap=state_cap)
    norms = np.linalg.norm(traj.e, axis=1)
    e0 = float(norms[0])
    threshold = settle_tol * (1.0 + e0)
    start = int((1.0 - tail) * (norms.size - 1))
    settled = bool(np.all(norms[start:] <= threshold))
    return EvalResult(
        t=traj.t, e=traj.e, settled=settled, final_e_norm=float(norms[-1]),
        e0_norm=e0, horizon=float(T), threshold=threshold,
    )


def collect(plant, exo, im, mode, exploration: ExplorationInput, T, h, stride, x0=None, z0=None, v0=None,
            state_cap=1e9, gain=None):
    """Simulate under the exploration input and build the data matrices."""
    traj = simulate(plant, exo, im, mode=mode, exploration=exploration, gain=gain, T=T, h=h,
                    x0=x0, z0=z0, v0=v0, state_cap=state_cap)
    return traj, build_data_matrices(traj, stride)
