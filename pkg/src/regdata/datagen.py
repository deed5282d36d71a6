"""Trajectory simulation and the integral data matrices used by the learners.

A trajectory is produced by fixed-step RK4 on the joint state
``(x, z, v)``. Over each sample interval ``[t_i, t_{i+1}]`` the regression
rows are

* ``delta_a``  : ``vecv(a(t_{i+1})) - vecv(a(t_i))``
* ``I_aa``     : integral of ``vecv(a)``
* ``Gamma_ab`` : integral of ``kron(a, b)``

with integrals taken by the trapezoid rule on the integration grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BlowUpError, DimensionError, RankDeficientError
from .numerics import numerical_rank, sym_dim, vec, vecs, vecv
from .sysmodel import Exosystem, InternalModel, Plant

log = logging.getLogger(__name__)

MODES = ("control", "learning", "none")
RANK_RTOL = 1e-10


@dataclass
class ExplorationInput:
    amplitudes: np.ndarray
    frequencies: np.ndarray
    phases: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.amplitudes = np.atleast_2d(np.asarray(self.amplitudes, dtype=float))
        self.frequencies = np.atleast_2d(np.asarray(self.frequencies, dtype=float))
        self.phases = np.atleast_2d(np.asarray(self.phases, dtype=float))
        if not (self.amplitudes.shape == self.frequencies.shape == self.phases.shape):
            raise DimensionError("exploration amplitude/frequency/phase banks differ in shape")
        for row in self.frequencies:
            if np.unique(row).size != row.size:
                raise DimensionError("exploration frequencies must be distinct per channel")

    @property
    def m(self) -> int:
        return self.frequencies.shape[0]

    def __call__(self, t) -> np.ndarray:
        """Input values; ``t`` scalar gives shape (m,), array gives (len(t), m)."""
        t = np.asarray(t, dtype=float)
        arg = t[..., None, None] * self.frequencies + self.phases
        return np.sum(self.amplitudes * np.sin(arg), axis=-1)


def required_unknowns(n: int, m: int, q: int, n_z: int, algorithm: str) -> int:
    N = n + n_z
    base = sym_dim(N)
    counts = {
        "pi_lqr": base + m * N,
        "vi_lqr": base + m * N,
        "first_or": base + N * (m + q),
        "improved_or": base + N * m + n * q,
        "improved_or_D0": base + n * m + n * q,
    }
    if algorithm not in counts:
        raise ValueError(f"unknown rank condition {algorithm!r}")
    return counts[algorithm]


def make_exploration_input(
    m: int,
    q: int,
    n: int,
    n_z: int,
    seed: int,
    amplitude: float = 1.0,
    band=(0.5, 5.0),
    algorithm: str = "first_or",
) -> ExplorationInput:
    """Sum-of-sinusoids input with seeded frequencies and phases.

    Each channel gets ``ceil(1.2 * required / m)`` sinusoids of equal
    amplitude ``amplitude``.
    """
    lo, hi = float(band[0]), float(band[1])
    if not 0 < lo < hi:
        raise ValueError("band must satisfy 0 < w_lo < w_hi")
    required = required_unknowns(n, m, q, n_z, algorithm)
    n_sin = math.ceil(1.2 * required / m)
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(lo, hi, size=(m, n_sin))
    while any(np.unique(row).size != row.size for row in freqs):
        freqs = rng.uniform(lo, hi, size=(m, n_sin))
    phases = rng.uniform(0.0, 2 * np.pi, size=(m, n_sin))
    amps = np.full((m, n_sin), float(amplitude))
    return ExplorationInput(amps, freqs, phases, seed=seed)


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    v: np.ndarray
    u: np.ndarray
    y: np.ndarray
    e: np.ndarray
    mode: str

    @property
    def h(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def xi(self) -> np.ndarray:
        return np.hstack([self.x, self.z])

    def to_csv(self, path) -> None:
        n, nz, q, m, p = (a.shape[1] for a in (self.x, self.z, self.v, self.u, self.e))
        header = ["t"]
        for name, k in (("x", n), ("z", nz), ("v", q), ("u", m), ("e", p)):
            header += [f"{name}{i + 1}" for i in range(k)]
        data = np.column_stack([self.t, self.x, self.z, self.v, self.u, self.e])
        write_csv(path, header, data)


def write_csv(path, header, data) -> None:
    """17 significant digits, ``.`` decimal, LF endings."""
    data = np.atleast_2d(data)
    with open(Path(path), "w", newline="\n", encoding="utf-8") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")


def rk4_step(f, t, w, h):
    k1 = f(t, w)
    k2 = f(t + h / 2, w + h / 2 * k1)
    k3 = f(t + h / 2, w + h / 2 * k2)
    k4 = f(t + h, w + h * k3)
    return w + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _joint_matrices(plant: Plant, exo: Exosystem, im: InternalModel | None, mode: str, gain):
    """``w' = M w + Nu u_ext`` for the joint state ``w = (x, z, v)`` with ``u = gain xi + u_ext``."""
    n, m, p, q = plant.n, plant.m, plant.p, plant.q
    nz = 0 if mode == "none" else im.n_z
    N = n + nz
    K = np.zeros((m, N)) if gain is None else np.atleast_2d(np.asarray(gain, dtype=float))
    if K.shape != (m, N):
        raise DimensionError(f"feedback gain has shape {K.shape}, expected {(m, N)}")
    # u = Kw w + u_ext with Kw acting on (x, z, v)
    Kw = np.hstack([K, np.zeros((m, q))])
    W = N + q
    M = np.zeros((W, W))
    Nu = np.zeros((W, m))
    M[:n, :n] = plant.A
    M[:n, N:] = plant.E
    M[:n] += plant.B @ Kw
    Nu[:n] = plant.B
    if mode != "none":
        G1, G2 = im.G1, im.G2
        M[n:N, n:N] += G1
        M[n:N, :n] += G2 @ plant.C
        M[n:N] += G2 @ plant.D @ Kw
        Nu[n:N] = G2 @ plant.D
        if mode == "control":
            M[n:N, N:] += G2 @ plant.F
    M[N:, N:] = exo.S
    return M, Nu, Kw


def _rk4_propagator(M, Nu, h):
    """Exact one-step map of RK4 on ``w' = M w + Nu u(t)``.

    RK4 is linear in ``(w, u(t), u(t+h/2), u(t+h))`` so the step is
    ``w+ = Phi w + G0 u(t) + Gh u(t+h/2) + G1 u(t+h)``; the matrices are read
    off by running one RK4 step on unit vectors.
    """
    W, m = Nu.shape

    def step(w, u0, uh, u1):
        k1 = M @ w + Nu @ u0
        k2 = M @ (w + h / 2 * k1) + Nu @ uh
        k3 = M @ (w + h / 2 * k2) + Nu @ uh
        k4 = M @ (w + h * k3) + Nu @ u1
        return w + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    zw, zu = np.zeros(W), np.zeros(m)
    Phi = np.column_stack([step(e, zu, zu, zu) for e in np.eye(W)])
    if m == 0:
        return Phi, np.zeros((W, 0)), np.zeros((W, 0)), np.zeros((W, 0))
    G0 = np.column_stack([step(zw, e, zu, zu) for e in np.eye(m)])
    Gh = np.column_stack([step(zw, zu, e, zu) for e in np.eye(m)])
    G1 = np.column_stack([step(zw, zu, zu, e) for e in np.eye(m)])
    return Phi, G0, Gh, G1


def simulate(
    plant: Plant,
    exo: Exosystem,
    im: InternalModel | None = None,
    mode: str = "learning",
    exploration: ExplorationInput | None = None,
    gain=None,
    T: float = 20.0,
    h: float = 1e-3,
    x0=None,
    z0=None,
    v0=None,
    state_cap: float = 1e9,
) -> Trajectory:
    """Fixed-step RK4 simulation of plant, compensator and exosystem.

    ``mode="control"`` drives ``z`` by the tracking error ``e``,
    ``"learning"`` drives it by the output ``y`` and ``"none"`` omits it.
    The input is ``u = gain @ xi + exploration(t)`` where either term may be
    absent.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode != "none" and im is None:
        raise DimensionError(f"mode {mode!r} needs an internal model")
    if h <= 0 or T < h:
        raise ValueError("need h > 0 and T >= h")
    if exo.q != plant.q:
        raise DimensionError(f"exosystem has q={exo.q}, plant E has {plant.q} columns")
    n, m, q = plant.n, plant.m, plant.q
    nz = 0 if mode == "none" else im.n_z
    N = n + nz
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    z0 = np.zeros(nz) if z0 is None else np.asarray(z0, dtype=float).reshape(-1)
    v0 = exo.v0 if v0 is None else np.asarray(v0, dtype=float).reshape(-1)
    if x0.size != n or z0.size != nz or v0.size != q:
        raise DimensionError("initial condition dimensions do not match the model")

    M, Nu, Kw = _joint_matrices(plant, exo, im, mode, gain)
    steps = int(round(T / h))
    t = h * np.arange(steps + 1)
    if exploration is not None:
        if exploration.m != m:
            raise DimensionError("exploration input has the wrong number of channels")
        u_grid = exploration(t)
        u_half = exploration(t[:-1] + h / 2)
    else:
        u_grid = np.zeros((steps + 1, m))
        u_half = np.zeros((steps, m))

    Phi, G0, Gh, G1 = _rk4_propagator(M, Nu, h)
    # forcing term per step, precomputed in one shot
    forcing = u_grid[:-1] @ G0.T + u_half @ Gh.T + u_grid[1:] @ G1.T
    w = np.empty((steps + 1, M.shape[0]))
    w[0] = np.concatenate([x0, z0, v0])
    PhiT = Phi.T
    check_every = max(1, steps // 200)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            w[k + 1] = w[k] @ PhiT + forcing[k]
            if k % check_every == 0 and not np.all(np.abs(w[k + 1]) <= state_cap):
                raise BlowUpError(
                    f"state norm exceeded {state_cap:g} at t={t[k + 1]:.4g}; "
                    "shorten the learning window T or use a stabilizing gain"
                )
    if not np.all(np.abs(w) <= state_cap):
        raise BlowUpError(
            f"state norm exceeded {state_cap:g}; shorten the learning window T or use a stabilizing gain"
        )

    x, z, v = w[:, :n], w[:, n:N], w[:, N:]
    u = w @ Kw.T + u_grid
    y = x @ plant.C.T + u @ plant.D.T
    e = y + v @ plant.F.T
    return Trajectory(t=t, x=x, z=z, v=v, u=u, y=y, e=e, mode=mode)


@dataclass
class DataMatrices:
    delta_xi: np.ndarray
    I_xixi: np.ndarray
    Gamma_xi_xi: np.ndarray
    Gamma_xi_u: np.ndarray
    Gamma_xi_v: np.ndarray
    Gamma_x_u: np.ndarray
    Gamma_x_v: np.ndarray
    n: int
    n_z: int
    m: int
    q: int
    which_compensator: str
    boundaries: np.ndarray = field(repr=False, default=None)
    h: float = 0.0

    @property
    def s(self) -> int:
        return self.delta_xi.shape[0]

    @property
    def N(self) -> int:
        return self.n + self.n_z


def _kron_rows(a, b):
    return np.einsum("ti,tj->tij", a, b).reshape(a.shape[0], -1)


def _interval_integrals(f, idx, h):
    """Trapezoid integral of each column of ``f`` over ``[idx_i, idx_{i+1}]``."""
    panels = 0.5 * h * (f[:-1] + f[1:])
    sums = np.add.reduceat(panels, idx[:-1], axis=0)
    return sums


def build_data_matrices(traj: Trajectory, sample_stride: int = 100) -> DataMatrices:
    if sample_stride < 2:
        raise ValueError("sample_stride must be at least 2 integration steps")
    steps = traj.t.size - 1
    s = steps // sample_stride
    if s < 1:
        raise RankDeficientError(
            f"trajectory has {steps} steps, fewer than one sample interval of {sample_stride}",
            rank=0,
            required=1,
        )
    idx = sample_stride * np.arange(s + 1)
    h = traj.h
    xi, x, u, v = traj.xi, traj.x, traj.u, traj.v
    n, nz, m, q = x.shape[1], traj.z.shape[1], u.shape[1], v.shape[1]
    qv = vecv(xi)
    # the last partial interval is dropped; reduceat needs the truncated grid
    end = idx[-1] + 1

    def integ(f):
        return _interval_integrals(f[:end], idx, h)

    return DataMatrices(
        delta_xi=qv[idx[1:]] - qv[idx[:-1]],
        I_xixi=integ(qv),
        Gamma_xi_xi=integ(_kron_rows(xi, xi)),
        Gamma_xi_u=integ(_kron_rows(xi, u)),
        Gamma_xi_v=integ(_kron_rows(xi, v)),
        Gamma_x_u=integ(_kron_rows(x, u)),
        Gamma_x_v=integ(_kron_rows(x, v)),
        n=n,
        n_z=nz,
        m=m,
        q=q,
        which_compensator=traj.mode,
        boundaries=traj.t[idx],
        h=h,
    )


@dataclass
class RankReport:
    ok: bool
    rank: int
    required: int
    which: str
    block_ranks: dict = field(default_factory=dict)

    def describe(self) -> str:
        blocks = ", ".join(f"{k}: {r}/{c}" for k, (r, c) in self.block_ranks.items())
        return f"{self.which}: rank {self.rank} / required {self.required} ({blocks})"


def rank_blocks(dm: DataMatrices, which: str) -> dict:
    table = {
        "pi_lqr": [("I_xixi", dm.I_xixi), ("Gamma_xi_u", dm.Gamma_xi_u)],
        "vi_lqr": [("I_xixi", dm.I_xixi), ("Gamma_xi_u", dm.Gamma_xi_u)],
        "first_or": [("I_xixi", dm.I_xixi), ("Gamma_xi_u", dm.Gamma_xi_u), ("Gamma_xi_v", dm.Gamma_xi_v)],
        "improved_or": [("I_xixi", dm.I_xixi), ("Gamma_xi_u", dm.Gamma_xi_u), ("Gamma_x_v", dm.Gamma_x_v)],
        "improved_or_D0": [("I_xixi", dm.I_xixi), ("Gamma_x_u", dm.Gamma_x_u), ("Gamma_x_v", dm.Gamma_x_v)],
    }
    if which not in table:
        raise ValueError(f"unknown rank condition {which!r}")
    return dict(table[which])


def _normalized(A):
    norms = np.linalg.norm(A, axis=0)
    return A / np.where(norms > 0, norms, 1.0)


def check_rank_condition(dm: DataMatrices, which: str, tol: float = RANK_RTOL) -> RankReport:
    """Rank of the stacked data matrix named by ``which`` against its required count.

    Columns are normalized before the pivoted-QR rank so the tolerance is
    independent of signal scale.
    """
    blocks = rank_blocks(dm, which)
    required = required_unknowns(dm.n, dm.m, dm.q, dm.n_z, which)
    stacked = np.hstack(list(blocks.values()))
    rank = numerical_rank(_normalized(stacked), tol=tol)
    block_ranks = {k: (numerical_rank(_normalized(b), tol=tol), b.shape[1]) for k, b in blocks.items()}
    return RankReport(ok=rank >= required, rank=rank, required=required, which=which, block_ranks=block_ranks)


def integral_identity_residual(dm: DataMatrices, P, Y, J, Ebar) -> np.ndarray:
    """Row residual of ``delta vecs(P) = I vecs(Y'P+PY) + 2 Gamma_xi_u vec(J'P) + 2 Gamma_xi_v vec(Ebar'P)``.

    Holds up to quadrature error for any symmetric ``P`` when ``Ebar`` is the
    matrix multiplying ``v`` in the recorded ``xi`` dynamics.
    """
    lhs = dm.delta_xi @ vecs(P)
    rhs = (
        dm.I_xixi @ vecs(Y.T @ P + P @ Y)
        + 2 * dm.Gamma_xi_u @ vec(J.T @ P)
        + 2 * dm.Gamma_xi_v @ vec(Ebar.T @ P)
    )
    return lhs - rhs


def signal_scale(traj: Trajectory, P, Y, J, Ebar, w_max: float = 0.0) -> float:
    """Scale for the quadrature tolerance of :func:`integral_identity_residual`."""
    w = np.hstack([traj.xi, traj.u, traj.v])
    peak = float(np.max(np.sum(w * w, axis=1)))
    gain = 1.0 + np.linalg.norm(Y) + np.linalg.norm(J) + np.linalg.norm(Ebar) + w_max
    return float(np.linalg.norm(P) * peak * gain**2)
