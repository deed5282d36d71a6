"""Plant, exosystem, internal model and augmented system.

The plant is

    x' = A x + B u + E v,   y = C x + D u,   e = C x + D u + F v

driven by the exosystem ``v' = S v``. A minimum p-copy internal model
``(G1, G2)`` is built from the minimal polynomial of ``S`` and stacked with
the plant into the augmented pair ``(Y, J)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, RegDataError
from .numerics import block_diag, eigenvalues, numerical_rank

HAUTUS_RTOL = 1e-9
RHP_MARGIN = 1e-9


def _mat(x, name: str) -> np.ndarray:
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if a.ndim != 2:
        raise DimensionError(f"{name} must be a matrix")
    if not np.all(np.isfinite(a)):
        raise DimensionError(f"{name} has non-finite entries")
    return a


@dataclass
class Plant:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        for name in "ABCDEF":
            setattr(self, name, _mat(getattr(self, name), name))
        n, m, p, q = self.n, self.m, self.p, self.q
        expected = {
            "A": (n, n), "B": (n, m), "C": (p, n),
            "D": (p, m), "E": (n, q), "F": (p, q),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(
                    f"plant matrix {name} has shape {getattr(self, name).shape}, expected {shape}"
                )

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def q(self) -> int:
        return self.E.shape[1]


@dataclass
class Exosystem:
    S: np.ndarray
    v0: np.ndarray

    def __post_init__(self):
        self.S = _mat(self.S, "S")
        self.v0 = np.asarray(self.v0, dtype=float).reshape(-1)
        if self.S.shape[0] != self.S.shape[1]:
            raise DimensionError("S must be square")
        if self.v0.size != self.S.shape[0]:
            raise DimensionError(f"v0 has length {self.v0.size}, S is {self.S.shape}")

    @property
    def q(self) -> int:
        return self.S.shape[0]


@dataclass
class InternalModel:
    G1: np.ndarray
    G2: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray
    copies: int
    minpoly: np.ndarray

    @property
    def d(self) -> int:
        return self.beta.shape[0]

    @property
    def n_z(self) -> int:
        return self.G1.shape[0]


@dataclass
class AugmentedSystem:
    Y: np.ndarray
    J: np.ndarray
    EG: np.ndarray
    E0: np.ndarray
    n: int
    n_z: int

    @property
    def N(self) -> int:
        return self.n + self.n_z


def char_poly(M) -> np.ndarray:
    """Monic characteristic polynomial, ascending coefficients (Faddeev-LeVerrier)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[0]
    coeffs = np.zeros(n + 1)
    coeffs[n] = 1.0
    Mk = np.zeros_like(M)
    eye = np.eye(n)
    for k in range(1, n + 1):
        Mk = M @ Mk + coeffs[n - k + 1] * eye
        coeffs[n - k] = -np.trace(M @ Mk) / k
    return coeffs


def poly_at_matrix(coeffs, M) -> np.ndarray:
    """Evaluate ``sum c_i M^i`` by Horner's rule."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    out = np.zeros_like(M)
    eye = np.eye(M.shape[0])
    for c in reversed(list(coeffs)):
        out = out @ M + c * eye
    return out


def is_derogatory(S, rtol: float = 1e-8) -> bool:
    """True when the minimal polynomial of ``S`` has lower degree than its characteristic one.

    Tested through linear independence of ``I, S, ..., S^(q-1)``.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    q = S.shape[0]
    powers = [np.eye(q)]
    for _ in range(q - 1):
        powers.append(powers[-1] @ S)
    K = np.column_stack([P.reshape(-1) / max(np.linalg.norm(P), 1e-300) for P in powers])
    return numerical_rank(K, tol=rtol) < q


def minimal_polynomial(S, override=None) -> np.ndarray:
    """Monic minimal polynomial of ``S`` with ascending coefficients.

    Without an override the characteristic polynomial is returned, which is
    the minimal one for non-derogatory ``S``. An override is accepted only if
    it annihilates ``S`` numerically.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise DimensionError("S must be square")
    if override is None:
        return char_poly(S)
    c = np.asarray(override, dtype=float).reshape(-1)
    if c.size < 2 or c[-1] == 0.0:
        raise RegDataError("minimal polynomial override must have degree >= 1")
    c = c / c[-1]
    deg = c.size - 1
    scale = max(1.0, np.linalg.norm(S)) ** deg
    resid = np.linalg.norm(poly_at_matrix(c, S))
    if resid > 1e-8 * scale:
        raise RegDataError(
            f"override polynomial does not annihilate S: |p(S)|_F = {resid:.3e}"
        )
    return c


def companion(coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    d = c.size - 1
    beta = np.zeros((d, d))
    beta[:-1, 1:] = np.eye(d - 1)
    beta[-1, :] = -c[:-1]
    return beta


def controllability_matrix(A, B) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def build_internal_model(minpoly, p: int) -> InternalModel:
    c = np.asarray(minpoly, dtype=float).reshape(-1)
    if c.size < 2:
        raise RegDataError("internal model needs a polynomial of degree >= 1")
    if p < 1:
        raise DimensionError("internal model needs p >= 1 copies")
    c = c / c[-1]
    d = c.size - 1
    beta = companion(c)
    sigma = np.zeros((d, 1))
    sigma[-1, 0] = 1.0
    if numerical_rank(controllability_matrix(beta, sigma)) != d:
        raise RegDataError("(beta, sigma) is not controllable")
    G1 = block_diag(*[beta] * p)
    G2 = block_diag(*[sigma] * p)
    return InternalModel(G1=G1, G2=G2, beta=beta, sigma=sigma, copies=p, minpoly=c)


def build_augmented(plant: Plant, im: InternalModel) -> AugmentedSystem:
    if im.copies != plant.p:
        raise DimensionError(f"internal model has {im.copies} copies, plant has p={plant.p}")
    n, nz, q = plant.n, im.n_z, plant.q
    Y = np.block([[plant.A, np.zeros((n, nz))], [im.G2 @ plant.C, im.G1]])
    J = np.vstack([plant.B, im.G2 @ plant.D])
    EG = np.vstack([plant.E, im.G2 @ plant.F])
    E0 = np.vstack([plant.E, np.zeros((nz, q))])
    return AugmentedSystem(Y=Y, J=J, EG=EG, E0=E0, n=n, n_z=nz)


def complex_rank(M, tol: float = HAUTUS_RTOL) -> int:
    """Rank of a complex matrix through its real embedding ``[[Re, -Im], [Im, Re]]``."""
    M = np.asarray(M, dtype=complex)
    Mr, Mi = M.real, M.imag
    big = np.block([[Mr, -Mi], [Mi, Mr]])
    return numerical_rank(big, tol=tol) // 2


def hautus_stabilizable(A, B, tol: float = HAUTUS_RTOL) -> bool:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    n = A.shape[0]
    for lam in eigenvalues(A):
        if lam.real < -RHP_MARGIN:
            continue
        if complex_rank(np.hstack([A - lam * np.eye(n), B]), tol) < n:
            return False
    return True


def hautus_detectable(A, C, tol: float = HAUTUS_RTOL) -> bool:
    return hautus_stabilizable(np.atleast_2d(A).T, np.atleast_2d(C).T, tol)


@dataclass
class AssumptionReport:
    a1: bool
    a2: bool
    a3: bool
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.a1 and self.a2 and self.a3


def check_assumptions(plant: Plant, exo: Exosystem, tol: float = HAUTUS_RTOL) -> AssumptionReport:
    n, p = plant.n, plant.p
    a1 = hautus_stabilizable(plant.A, plant.B, tol)
    s_eigs = eigenvalues(exo.S)
    a2 = bool(np.all(s_eigs.real >= -RHP_MARGIN))
    pencil_ranks = []
    for lam in s_eigs:
        pencil = np.block(
            [[plant.A - lam * np.eye(n), plant.B], [plant.C.astype(complex), plant.D.astype(complex)]]
        )
        pencil_ranks.append(complex_rank(pencil, tol))
    a3 = all(r == n + p for r in pencil_ranks)
    details = {
        "eig_A": eigenvalues(plant.A),
        "eig_S": s_eigs,
        "pencil_ranks": pencil_ranks,
        "pencil_required": n + p,
    }
    return AssumptionReport(a1=a1, a2=a2, a3=a3, details=details)
