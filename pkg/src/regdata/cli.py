"""Command line experiment runner.

Exit codes: 0 ok, 1 precondition failed, 2 config parse error,
3 simulation blow-up, 4 iteration cap.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ALGORITHMS, ExperimentConfig, load_config, save_config
from .datagen import make_exploration_input, write_csv
from .errors import ConfigError, RegDataError
from .fixtures import make_problem
from .learner import collect, count_unknowns, evaluate_controller, pi_lqr, vi_lqr, vi_or_first, vi_or_improved
from .numerics import eigenvalues, is_hurwitz
from .oracle import LqrWeights, ViSettings, kleinman_pi, solve_regulator_equations
from .sysmodel import check_assumptions, is_derogatory

log = logging.getLogger("regdata")


def _fmt_complex(z) -> str:
    return f"{z.real:+.6g}{z.imag:+.6g}j"


def _write_matrix(path, M) -> None:
    write_csv(path, None, np.atleast_2d(M))


def _read_matrix(path) -> np.ndarray:
    try:
        return np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read matrix from {path}: {exc}") from exc


def _out_dir(cfg: ExperimentConfig, override) -> Path:
    out = Path(override or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _weights(cfg: ExperimentConfig, N: int, m: int, plant_level: bool = False) -> LqrWeights:
    Q = cfg.Q_plant if plant_level else cfg.Q
    Q = np.eye(N) if Q is None else np.asarray(Q, dtype=float)
    R = np.eye(m) if cfg.R is None else np.asarray(cfg.R, dtype=float)
    if Q.shape != (N, N) or R.shape != (m, m):
        name = "Q_plant" if plant_level else "Q"
        raise ConfigError(f"{name}/R have shapes {Q.shape}/{R.shape}, expected {(N, N)}/{(m, m)}")
    return LqrWeights(Q, R)


def _resolve(cfg: ExperimentConfig, problem) -> None:
    """Materialize defaults that depend on problem dimensions."""
    n, m, N = problem.plant.n, problem.plant.m, problem.aug.N
    if cfg.Q is None:
        cfg.Q = np.eye(N).tolist()
    if cfg.R is None:
        cfg.R = np.eye(m).tolist()
    if cfg.Q_plant is None:
        cfg.Q_plant = np.eye(n).tolist()


def _vi_settings(cfg: ExperimentConfig) -> ViSettings:
    lc = cfg.learning
    return ViSettings(c=lc.c, b0=lc.b0, eps_conv=lc.eps_conv, max_iter=int(lc.max_iter), reset_cap=lc.reset_cap)


def cmd_check(cfg: ExperimentConfig) -> int:
    plant, exo = cfg.build_plant(), cfg.build_exosystem()
    problem = make_problem(plant, exo, cfg.minpoly_override)
    rep = check_assumptions(plant, exo)
    print(f"A1 (A, B) stabilizable:            {'pass' if rep.a1 else 'FAIL'}")
    print(f"A2 no eigenvalue of S in open LHP: {'pass' if rep.a2 else 'FAIL'}")
    print(f"A3 transmission rank condition:    {'pass' if rep.a3 else 'FAIL'}"
          f"  (ranks {rep.details['pencil_ranks']}, required {rep.details['pencil_required']})")
    print("eig(S): " + ", ".join(_fmt_complex(z) for z in rep.details["eig_S"]))
    print("minimal polynomial (ascending): " + ", ".join(f"{c:.10g}" for c in problem.im.minpoly))
    if cfg.minpoly_override is None and is_derogatory(exo.S):
        print("warning: S is derogatory; the characteristic polynomial is not minimal "
              "(supply minpoly_override)")
    print(f"n_z = {problem.im.n_z}")
    Q = _weights(cfg, problem.aug.N, plant.m)
    if not Q.observable_with(problem.aug.Y):
        print("advisory: (Y, sqrt(Q)) is not detectable")
    return 0 if rep.ok else 1


def cmd_oracle(cfg: ExperimentConfig, out=None) -> int:
    plant, exo = cfg.build_plant(), cfg.build_exosystem()
    rep = check_assumptions(plant, exo)
    if not rep.ok:
        print(f"assumptions failed: A1={rep.a1} A2={rep.a2} A3={rep.a3}", file=sys.stderr)
        return 1
    problem = make_problem(plant, exo, cfg.minpoly_override)
    _resolve(cfg, problem)
    weights = _weights(cfg, problem.aug.N, plant.m)
    sol = kleinman_pi(problem.aug.Y, problem.aug.J, weights)
    reg = solve_regulator_equations(plant, problem.im, sol.K_star, exo.S)
    out_dir = _out_dir(cfg, out)
    _write_matrix(out_dir / "P_star.csv", sol.P_star)
    _write_matrix(out_dir / "K_star.csv", sol.K_star)
    _write_matrix(out_dir / "X.csv", reg.X)
    _write_matrix(out_dir / "Z.csv", reg.Z)
    _write_matrix(out_dir / "U.csv", reg.U)
    write_csv(out_dir / "residuals.csv", ["riccati", "regulator_x", "regulator_z", "regulator_output"],
              [[sol.residual, *reg.residuals]])
    spectrum = eigenvalues(problem.aug.Y + problem.aug.J @ sol.K_star)
    write_csv(out_dir / "spectrum.csv", ["re", "im"], np.column_stack([spectrum.real, spectrum.imag]))
    save_config(cfg, out_dir / "config.resolved.json")
    print("closed-loop spectrum: " + ", ".join(_fmt_complex(z) for z in spectrum))
    print(f"Riccati residual {sol.residual:.3e}; regulator residuals "
          + ", ".join(f"{r:.3e}" for r in reg.residuals))
    return 0


def cmd_learn(cfg: ExperimentConfig, algorithm=None, out=None, seed=None, blind=False) -> int:
    if algorithm is not None:
        cfg.learning.algorithm = algorithm
    if seed is not None:
        cfg.simulation.seed = seed
    if blind:
        cfg.blind = True
    algorithm = cfg.learning.algorithm
    plant, exo = cfg.build_plant(), cfg.build_exosystem()
    problem = make_problem(plant, exo, cfg.minpoly_override)
    _resolve(cfg, problem)
    sim, lc = cfg.simulation, cfg.learning
    n, m, q = plant.n, plant.m, plant.q
    lqr = algorithm in ("pi-lqr", "vi-lqr")
    nz = 0 if lqr else problem.im.n_z
    N = n + nz
    rank_name = {"pi-lqr": "pi_lqr", "vi-lqr": "vi_lqr", "first": "first_or",
                 "improved": "improved_or_D0" if lc.d_zero else "improved_or"}[algorithm]
    mode = {"pi-lqr": "none", "vi-lqr": "none", "first": "control", "improved": "learning"}[algorithm]
    exploration = make_exploration_input(m, q, n, nz, sim.seed, sim.amplitude, sim.band, algorithm=rank_name)
    v0 = np.zeros(q) if lqr else None
    traj, dm = collect(plant, exo, problem.im, mode, exploration, sim.T, sim.h, sim.sample_stride,
                       x0=sim.x0, z0=sim.z0, v0=v0, state_cap=sim.state_cap)
    log.info("collected %d sample intervals in mode %s", dm.s, mode)

    weights = _weights(cfg, N, m, plant_level=lqr)
    P_ref = None
    if not cfg.blind:
        Y, J = (plant.A, plant.B) if lqr else (problem.aug.Y, problem.aug.J)
        P_ref = kleinman_pi(Y, J, weights).P_star
    settings = _vi_settings(cfg)
    P0 = None if lc.P0 is None else np.asarray(lc.P0, dtype=float)
    if algorithm == "pi-lqr":
        K0 = np.zeros((m, n)) if lc.K0 is None else np.asarray(lc.K0, dtype=float)
        res = pi_lqr(dm, weights, K0, tol=lc.pi_tol, rank_tol=lc.rank_tol, P_ref=P_ref)
    elif algorithm == "vi-lqr":
        res = vi_lqr(dm, weights, P0, settings, rank_tol=lc.rank_tol, P_ref=P_ref)
    elif algorithm == "first":
        res = vi_or_first(dm, weights, P0, settings, rank_tol=lc.rank_tol, P_ref=P_ref)
    else:
        res = vi_or_improved(dm, weights, P0, settings, d_zero=lc.d_zero, rank_tol=lc.rank_tol, P_ref=P_ref)

    report = res.report
    report.blind = cfg.blind
    if not cfg.blind:
        report.diagnostics["oracle_rel_P_error"] = f"{np.linalg.norm(res.P - P_ref) / np.linalg.norm(P_ref):.6e}"
        Y, J = (plant.A, plant.B) if lqr else (problem.aug.Y, problem.aug.J)
        report.diagnostics["oracle_closed_loop_hurwitz"] = str(is_hurwitz(Y + J @ res.K))
    if not lqr:
        report.diagnostics["data_note"] = (
            "v measured and active during learning; compensator driven by "
            + ("e (error)" if mode == "control" else "y (output)")
        )

    out_dir = _out_dir(cfg, out)
    report.to_csv(out_dir / "report.csv")
    _write_matrix(out_dir / "K.csv", res.K)
    _write_matrix(out_dir / "P.csv", res.P)
    if res.J_hat is not None:
        _write_matrix(out_dir / "J_hat.csv", res.J_hat)
    if res.E_hat is not None:
        _write_matrix(out_dir / "E_hat.csv", res.E_hat)
    if res.EG_hat is not None:
        _write_matrix(out_dir / "EG_hat.csv", res.EG_hat)
    traj.to_csv(out_dir / "trajectory.csv")
    (out_dir / "summary.txt").write_text(report.summary(), encoding="utf-8")
    save_config(cfg, out_dir / "config.resolved.json")
    print(report.summary(), end="")
    return 0


def cmd_evaluate(cfg: ExperimentConfig, gain_path, out=None) -> int:
    plant, exo = cfg.build_plant(), cfg.build_exosystem()
    problem = make_problem(plant, exo, cfg.minpoly_override)
    K = _read_matrix(gain_path)
    N = problem.aug.N
    if K.shape != (plant.m, N):
        raise ConfigError(f"gain file has shape {K.shape}, expected {(plant.m, N)}")
    ev = cfg.evaluation
    T = ev.T
    if T is None and not is_hurwitz(problem.aug.Y + problem.aug.J @ K):
        T = ev.fallback_T
        print(f"gain does not stabilize (Y, J); using horizon T={T:g}")
    sim = cfg.simulation
    result = evaluate_controller(plant, exo, problem.im, K, T=T, h=ev.h, x0=sim.x0, z0=sim.z0,
                                 settle_tol=ev.settle_tol, state_cap=sim.state_cap)
    out_dir = _out_dir(cfg, out)
    p = plant.p
    write_csv(out_dir / "closed_loop.csv", ["t"] + [f"e{i + 1}" for i in range(p)] + ["e_norm"],
              np.column_stack([result.t, result.e, result.e_norm]))
    verdict = (f"settled: {result.settled}\nhorizon: {result.horizon:.6g}\n"
               f"final_e_norm: {result.final_e_norm:.6e}\nthreshold: {result.threshold:.6e}\n")
    (out_dir / "evaluate.txt").write_text(verdict, encoding="utf-8")
    print(verdict, end="")
    return 0 if result.settled else 1


def report_tables(n: int, m: int, p: int, q: int, d_zero: bool = False, n_z: int | None = None) -> str:
    nz = p * q if n_z is None else n_z
    first = count_unknowns(n, m, p, q, nz, "first_or")
    lines = [
        f"dimensions: n={n} m={m} p={p} q={q} n_z={nz}",
        "unknowns per regression step",
        f"  first algorithm      {first}",
        f"  improved algorithm   {count_unknowns(n, m, p, q, nz, 'improved_kge1')}",
        "rank required of the collected data",
        f"  first algorithm      {first}",
        f"  improved algorithm   {count_unknowns(n, m, p, q, nz, 'improved_k0')}",
    ]
    if d_zero:
        lines.append(f"  improved, D = 0      {count_unknowns(n, m, p, q, nz, 'improved_k0_D0')}")
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regdata", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--out", help="output directory (overrides config)")
        return p

    with_config(sub.add_parser("check", help="verify solvability assumptions"))
    with_config(sub.add_parser("oracle", help="model-based Riccati and regulator solution"))
    learn = with_config(sub.add_parser("learn", help="collect data and run a learner"))
    learn.add_argument("--algorithm", choices=ALGORITHMS)
    learn.add_argument("--seed", type=int)
    learn.add_argument("--blind", action="store_true", help="omit all oracle comparisons")
    evaluate = with_config(sub.add_parser("evaluate", help="closed-loop regulation test of a gain"))
    evaluate.add_argument("--gain", required=True, help="CSV file with the m x (n+n_z) gain")
    tables = sub.add_parser("report-tables", help="unknown and rank counts of both algorithms")
    for name in ("n", "m", "p", "q"):
        tables.add_argument(name, type=int)
    tables.add_argument("--d-zero", action="store_true", help="also print the D = 0 rank count")
    tables.add_argument("--nz", type=int, help="internal model dimension (default p*q)")
    return parser


def _setup_logging():
    level = os.environ.get("REGDATA_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "report-tables":
            if min(args.n, args.m, args.p, args.q, args.nz or 1) < 1:
                raise ConfigError("dimensions must be positive")
            print(report_tables(args.n, args.m, args.p, args.q, args.d_zero, args.nz), end="")
            return 0
        cfg = load_config(args.config)
        if args.command == "check":
            return cmd_check(cfg)
        if args.command == "oracle":
            return cmd_oracle(cfg, args.out)
        if args.command == "learn":
            return cmd_learn(cfg, args.algorithm, args.out, args.seed, args.blind)
        return cmd_evaluate(cfg, args.gain, args.out)
    except RegDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if getattr(exc, "required", None) is not None:
            print(f"rank {exc.rank} / required {exc.required}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
