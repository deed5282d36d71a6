"""Dense linear algebra kernel and the vectorization calculus.

Conventions
-----------
* ``vec`` stacks columns (Fortran order).
* ``vecv(b)`` lists the quadratic monomials ``b_i b_j`` for ``i <= j`` in
  row-major upper-triangle order.
* ``vecs(P)`` lists the same upper triangle of a symmetric ``P`` with the
  off-diagonal entries doubled, so that ``vecs(P) @ vecv(b) == b' P b``.

Because of the doubling, the duplication matrix returned by
:func:`duplication_matrix` has entries ``1/2`` for off-diagonal positions.
Do not mix it with the textbook (factor one) half-vectorization.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla

from .errors import (
    ConvergenceError,
    DimensionError,
    NotSymmetricError,
    RankDeficientError,
    SingularMatrixError,
)

EPS = np.finfo(float).eps


def sym_dim(n: int) -> int:
    return n * (n + 1) // 2


def dim_from_sym(length: int) -> int:
    n = int(round((np.sqrt(8 * length + 1) - 1) / 2))
    if sym_dim(n) != length:
        raise DimensionError(f"length {length} is not a triangular number")
    return n


def _triu(n: int):
    return np.triu_indices(n)


def vecv(b, n: int | None = None) -> np.ndarray:
    """Quadratic monomials of ``b``; works row-wise on a stack of vectors."""
    b = np.asarray(b, dtype=float)
    if n is None:
        n = b.shape[-1]
    if b.ndim == 0 or b.shape[-1] != n:
        raise DimensionError(f"expected vectors of length {n}, got shape {b.shape}")
    i, j = _triu(n)
    return b[..., i] * b[..., j]


def symmetry_gap(P: np.ndarray) -> float:
    return float(np.linalg.norm(P - P.T))


def vecs(P, tol: float | None = None) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DimensionError(f"vecs needs a square matrix, got {P.shape}")
    scale = np.linalg.norm(P)
    limit = 1e-10 * scale if tol is None else tol
    if symmetry_gap(P) > limit:
        raise NotSymmetricError(
            f"matrix not symmetric: |P - P'|_F = {symmetry_gap(P):.3e} > {limit:.3e}"
        )
    n = P.shape[0]
    i, j = _triu(n)
    out = P[i, j].copy()
    out[i != j] *= 2.0
    return out


def unvecs(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    n = dim_from_sym(s.size)
    i, j = _triu(n)
    vals = np.where(i == j, s, s / 2.0)
    P = np.zeros((n, n))
    P[i, j] = vals
    P[j, i] = vals
    return P


def vec(X) -> np.ndarray:
    return np.asarray(X, dtype=float).reshape(-1, order="F")


def unvec(x, rows: int, cols: int) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape((rows, cols), order="F")


def kron(A, B) -> np.ndarray:
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def duplication_matrix(n: int) -> np.ndarray:
    """``M`` with ``M @ vecs(H) == vec(H)`` for every symmetric ``H``."""
    if n < 1:
        raise DimensionError("duplication matrix needs n >= 1")
    M = np.zeros((n * n, sym_dim(n)))
    for k, (i, j) in enumerate(zip(*_triu(n))):
        if i == j:
            M[j * n + i, k] = 1.0
        else:
            M[j * n + i, k] = 0.5
            M[i * n + j, k] = 0.5
    return M


def block_diag(*blocks) -> np.ndarray:
    return sla.block_diag(*[np.atleast_2d(b) for b in blocks])


def _pivoted_qr(A):
    Q, R, piv = sla.qr(A, mode="economic", pivoting=True)
    return Q, R, piv


def _default_rtol(shape) -> float:
    return max(shape) * EPS


def numerical_rank(A, tol: float | None = None) -> int:
    """Rank from column-pivoted QR.

    ``tol`` is relative to the leading pivot: a diagonal entry of ``R`` counts
    when ``|R_ii| > tol * |R_11|``. The default is ``max(rows, cols) * eps``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0
    if tol is not None and tol < 0:
        raise ValueError("tol must be non-negative")
    rtol = _default_rtol(A.shape) if tol is None else tol
    _, R, _ = _pivoted_qr(A)
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0.0:
        return 0
    return int(np.sum(d > rtol * d[0]))


class LeastSquares:
    """Factor a tall matrix once and solve for many right-hand sides.

    Columns are scaled to unit 2-norm before a column-pivoted QR; solutions
    are mapped back to the original scaling.
    """

    def __init__(self, A, tol: float | None = None, scale_columns: bool = True):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        self.shape = A.shape
        norms = np.linalg.norm(A, axis=0)
        if scale_columns:
            norms = np.where(norms > 0, norms, 1.0)
        else:
            norms = np.ones(A.shape[1])
        self.col_scale = norms
        As = A / norms
        rtol = _default_rtol(A.shape) if tol is None else tol
        self.Q, self.R, self.piv = _pivoted_qr(As)
        d = np.abs(np.diag(self.R))
        self.rank = int(np.sum(d > rtol * d[0])) if d.size and d[0] > 0 else 0
        if self.rank < A.shape[1]:
            raise RankDeficientError(
                f"least-squares matrix is rank deficient: rank {self.rank} < {A.shape[1]} columns",
                rank=self.rank,
                required=A.shape[1],
            )
        self._A = A

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        z = sla.solve_triangular(self.R, self.Q.T @ b)
        x = np.empty_like(z)
        x[self.piv] = z
        if x.ndim == 1:
            return x / self.col_scale
        return x / self.col_scale[:, None]

    def residual(self, x, b) -> float:
        return float(np.linalg.norm(self._A @ x - b))


def lstsq(A, b, tol: float | None = None):
    """Least-squares solution of ``A x = b``; returns ``(x, residual_norm)``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise DimensionError(f"lstsq: A has {A.shape[0]} rows, b has {b.shape[0]}")
    ls = LeastSquares(A, tol=tol)
    x = ls.solve(b)
    return x, ls.residual(x, b)


def eigenvalues(A) -> np.ndarray:
    """All eigenvalues as a complex array (Hessenberg reduction + Francis QR)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"eigenvalues need a square matrix, got {A.shape}")
    if A.size == 0:
        return np.zeros(0, dtype=complex)
    try:
        return np.linalg.eigvals(A).astype(complex)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"eigenvalue iteration did not converge: {exc}") from exc


def spectral_abscissa(A) -> float:
    ev = eigenvalues(A)
    return float(np.max(ev.real)) if ev.size else -np.inf


def is_hurwitz(A) -> bool:
    return spectral_abscissa(A) < 0.0


def solve_linear(A, b) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"solve_linear needs a square matrix, got {A.shape}")
    with warnings.catch_warnings():
        # singularity is reported below with our own error
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=True)
    d = np.abs(np.diag(lu))
    if d.size and (d.min() <= A.shape[0] * EPS * max(d.max(), 1e-300)):
        raise SingularMatrixError(f"matrix is singular to working precision (min pivot {d.min():.3e})")
    return sla.lu_solve((lu, piv), np.asarray(b, dtype=float))


def sym(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    return 0.5 * (P + P.T)


def min_eig_sym(P) -> float:
    return float(np.linalg.eigvalsh(sym(P))[0])
