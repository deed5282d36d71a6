"""Model-based ground truth: Lyapunov solves, Kleinman iteration, value
iteration and the regulator equations.

Everything here has access to the true ``(Y, J)`` and is used to check the
data-driven learners.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    ConvergenceError,
    DimensionError,
    IterationCapError,
    NotHurwitzError,
    RegDataError,
)
from .numerics import (
    duplication_matrix,
    eigenvalues,
    is_hurwitz,
    min_eig_sym,
    solve_linear,
    spectral_abscissa,
    sym,
    unvecs,
    vec,
)
from .sysmodel import AugmentedSystem, InternalModel, Plant, build_augmented, hautus_detectable

log = logging.getLogger(__name__)

PSD_TOL = 1e-10


@dataclass
class LqrWeights:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if np.linalg.norm(self.Q - self.Q.T) > 1e-12 * max(1.0, np.linalg.norm(self.Q)):
            raise DimensionError("Q must be symmetric")
        if np.linalg.norm(self.R - self.R.T) > 1e-12 * max(1.0, np.linalg.norm(self.R)):
            raise DimensionError("R must be symmetric")
        if min_eig_sym(self.Q) < -PSD_TOL:
            raise RegDataError("Q must be positive semidefinite")
        if min_eig_sym(self.R) <= 0.0:
            raise RegDataError("R must be positive definite")
        self.R_inv = np.linalg.inv(self.R)

    @classmethod
    def identity(cls, N: int, m: int) -> "LqrWeights":
        return cls(np.eye(N), np.eye(m))

    def observable_with(self, Y) -> bool:
        """Advisory Hautus check of ``(Y, sqrt(Q))``."""
        w, V = np.linalg.eigh(sym(self.Q))
        sqrtQ = V @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ V.T
        return hautus_detectable(Y, sqrtQ)


@dataclass
class ViSettings:
    """Step sizes ``c/(k+1)``, bounded sets ``{P >= 0 : |P|_F <= b0 2^q}``."""

    c: float = 10.0
    b0: float | None = None
    eps_conv: float = 1e-6
    max_iter: int = 1_000_000
    reset_cap: int = 30

    def eps(self, k: int) -> float:
        return self.c / (k + 1)


@dataclass
class ViTrace:
    k: list = field(default_factory=list)
    q: list = field(default_factory=list)
    eps: list = field(default_factory=list)
    conv: list = field(default_factory=list)
    err: list = field(default_factory=list)

    def __len__(self):
        return len(self.k)


@dataclass
class RiccatiSolution:
    P_star: np.ndarray
    K_star: np.ndarray
    residual: float
    iterations: int = 0
    resets: int = 0
    trace: object = None
    update_norm: float = float("nan")


def riccati_residual(Y, J, weights: LqrWeights, P) -> float:
    R = Y.T @ P + P @ Y + weights.Q - P @ J @ weights.R_inv @ J.T @ P
    return float(np.linalg.norm(R))


def solve_lyapunov(Ac, Qc) -> np.ndarray:
    """Symmetric ``P`` with ``Ac' P + P Ac + Qc = 0``.

    Dense Kronecker solve restricted to the upper triangle; intended for
    dimensions up to about 100.
    """
    Ac = np.atleast_2d(np.asarray(Ac, dtype=float))
    Qc = np.atleast_2d(np.asarray(Qc, dtype=float))
    n = Ac.shape[0]
    if Ac.shape != (n, n) or Qc.shape != (n, n):
        raise DimensionError("solve_lyapunov: shapes do not match")
    if not is_hurwitz(Ac):
        raise NotHurwitzError(
            f"Lyapunov matrix is not Hurwitz (spectral abscissa {spectral_abscissa(Ac):.3e})"
        )
    eye = np.eye(n)
    L = (np.kron(eye, Ac.T) + np.kron(Ac.T, eye)) @ duplication_matrix(n)
    iu, ju = np.triu_indices(n)
    rows = ju * n + iu
    s = solve_linear(L[rows], -vec(sym(Qc))[rows])
    return unvecs(s)


def closed_loop(Y, J, K) -> np.ndarray:
    return Y + J @ K


def value_iteration(
    P0,
    increment: Callable[[np.ndarray, int], np.ndarray],
    settings: ViSettings,
    P_ref=None,
    label: str = "vi",
    early_stop: Callable[[np.ndarray, int], bool] | None = None,
):
    """Diminishing-step value iteration with bounded-set resets.

    ``increment(P_k, k)`` returns the Riccati map evaluated at ``P_k``. The
    loop stops when ``|P~_{k+1} - P_k|_F / eps_k < eps_conv`` and returns
    ``P_k`` together with the trace and reset count. ``early_stop(P_k, k)``,
    if given, ends the loop as soon as it returns True.
    """
    P0 = sym(P0)
    if min_eig_sym(P0) <= 0.0:
        raise RegDataError("P0 must be positive definite")
    b0 = settings.b0 if settings.b0 is not None else 10.0 * np.linalg.norm(P0)
    trace = ViTrace()
    P = P0.copy()
    q = 0
    ref_norm = np.linalg.norm(P_ref) if P_ref is not None else None
    for k in range(settings.max_iter):
        eps = settings.eps(k)
        G = increment(P, k)
        P_next = sym(P + eps * G)
        stat = float(np.linalg.norm(P_next - P)) / eps
        trace.k.append(k)
        trace.q.append(q)
        trace.eps.append(eps)
        trace.conv.append(stat)
        if P_ref is not None:
            trace.err.append(float(np.linalg.norm(P - P_ref)) / max(ref_norm, 1e-300))
        bound = b0 * 2.0**q
        norm_next = np.linalg.norm(P_next)
        outside = norm_next > bound or min_eig_sym(P_next) < -PSD_TOL * max(1.0, norm_next)
        if outside:
            P = P0.copy()
            q += 1
            if q > settings.reset_cap:
                raise ConvergenceError(
                    f"{label}: bounded-set index exceeded cap {settings.reset_cap} at k={k}; "
                    "step-size schedule is too aggressive"
                )
        elif stat < settings.eps_conv or (early_stop is not None and early_stop(P, k)):
            log.debug("%s stopped at k=%d with %d resets", label, k, q)
            return P, trace, q, k
        else:
            P = P_next
    raise IterationCapError(f"{label}: no convergence after {settings.max_iter} iterations")


def model_based_vi(
    Y, J, weights: LqrWeights, P0=None, settings: ViSettings | None = None, P_ref=None, early_stop=None
) -> RiccatiSolution:
    settings = settings or ViSettings()
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    J = np.atleast_2d(np.asarray(J, dtype=float))
    N = Y.shape[0]
    P0 = np.eye(N) if P0 is None else np.asarray(P0, dtype=float)
    JRJ = J @ weights.R_inv @ J.T
    Q = weights.Q

    def increment(P, k):
        return Y.T @ P + P @ Y - P @ JRJ @ P + Q

    P, trace, q, k = value_iteration(
        P0, increment, settings, P_ref=P_ref, label="model-based VI", early_stop=early_stop
    )
    K = -weights.R_inv @ J.T @ P
    return RiccatiSolution(
        P_star=P,
        K_star=K,
        residual=riccati_residual(Y, J, weights, P),
        iterations=k,
        resets=q,
        trace=trace,
        update_norm=trace.conv[-1] * trace.eps[-1],
    )


@dataclass
class KleinmanTrace:
    P: list = field(default_factory=list)
    K: list = field(default_factory=list)
    abscissa: list = field(default_factory=list)


def kleinman_pi(
    Y, J, weights: LqrWeights, K0=None, tol: float = 1e-10, max_iter: int = 100
) -> RiccatiSolution:
    """Kleinman policy iteration.

    Without ``K0`` a stabilizing gain is bootstrapped from model-based value
    iteration, which needs none. The bootstrap stops at the first iterate
    whose gain stabilizes ``(Y, J)``.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    J = np.atleast_2d(np.asarray(J, dtype=float))
    if K0 is None:
        JR = weights.R_inv @ J.T

        def stabilizing(P, k):
            return k % 10 == 0 and is_hurwitz(Y - J @ JR @ P)

        boot = model_based_vi(
            Y, J, weights, settings=ViSettings(eps_conv=1e-3, reset_cap=200), early_stop=stabilizing
        )
        K0 = boot.K_star
    K = np.atleast_2d(np.asarray(K0, dtype=float))
    if not is_hurwitz(closed_loop(Y, J, K)):
        raise NotHurwitzError("initial gain K0 does not stabilize (Y, J)")
    trace = KleinmanTrace()
    P_prev = None
    for k in range(max_iter):
        Ak = closed_loop(Y, J, K)
        trace.K.append(K)
        trace.abscissa.append(spectral_abscissa(Ak))
        P = solve_lyapunov(Ak, weights.Q + K.T @ weights.R @ K)
        trace.P.append(P)
        K = -weights.R_inv @ J.T @ P
        if P_prev is not None and np.linalg.norm(P - P_prev) <= tol * max(1.0, np.linalg.norm(P)):
            return RiccatiSolution(
                P_star=P,
                K_star=K,
                residual=riccati_residual(Y, J, weights, P),
                iterations=k + 1,
                trace=trace,
                update_norm=float(np.linalg.norm(P - P_prev)),
            )
        P_prev = P
    raise IterationCapError(f"Kleinman iteration did not converge in {max_iter} steps")


def lqr_oracle(aug: AugmentedSystem, weights: LqrWeights, K0=None) -> RiccatiSolution:
    return kleinman_pi(aug.Y, aug.J, weights, K0=K0)


@dataclass
class RegulatorSolution:
    X: np.ndarray
    Z: np.ndarray
    U: np.ndarray
    residuals: tuple


def solve_regulator_equations(plant: Plant, im: InternalModel, K, S) -> RegulatorSolution:
    """Solve ``XS = AX + BU + E``, ``ZS = G1 Z + G2 (CX + DU + F)`` with ``U = Kx X + Kz Z``.

    The output equation ``0 = CX + DU + F`` is not imposed; its residual is
    reported as the third entry of ``residuals``.
    """
    aug = build_augmented(plant, im)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    N, q = aug.N, S.shape[0]
    if K.shape != (plant.m, N):
        raise DimensionError(f"gain has shape {K.shape}, expected {(plant.m, N)}")
    Acl = closed_loop(aug.Y, aug.J, K)
    if not is_hurwitz(Acl):
        raise NotHurwitzError("Y + JK is not Hurwitz; regulator equations may be singular")
    L = np.kron(S.T, np.eye(N)) - np.kron(np.eye(q), Acl)
    Xi = solve_linear(L, vec(aug.EG)).reshape((N, q), order="F")
    n = plant.n
    X, Z = Xi[:n], Xi[n:]
    Kx, Kz = K[:, :n], K[:, n:]
    U = Kx @ X + Kz @ Z
    r1 = np.linalg.norm(X @ S - plant.A @ X - plant.B @ U - plant.E)
    r2 = np.linalg.norm(Z @ S - im.G1 @ Z - im.G2 @ (plant.C @ X + plant.D @ U + plant.F))
    r3 = np.linalg.norm(plant.C @ X + plant.D @ U + plant.F)
    return RegulatorSolution(X=X, Z=Z, U=U, residuals=(float(r1), float(r2), float(r3)))


def settle_horizon(Acl, factor: float = 40.0) -> float:
    """``factor / |slowest mode|`` for a Hurwitz closed loop."""
    a = spectral_abscissa(Acl)
    if a >= 0:
        raise NotHurwitzError("closed loop is not Hurwitz; no settle horizon")
    return factor / abs(a)


def closed_loop_spectrum(Y, J, K) -> np.ndarray:
    return eigenvalues(closed_loop(Y, J, K))
