"""Run all four learners on the desk fixture and compare against the model-based solution.

Usage: python3 scripts/run_desk_experiment.py [--seed N] [--out DIR]
"""

import argparse
from pathlib import Path

import numpy as np

from regdata.datagen import make_exploration_input, write_csv
from regdata.fixtures import desk_fixture
from regdata.learner import collect, evaluate_controller, pi_lqr, vi_lqr, vi_or_first, vi_or_improved
from regdata.numerics import is_hurwitz
from regdata.oracle import LqrWeights, kleinman_pi

T, H, STRIDE, AMP, BAND = 20.0, 1e-3, 100, 0.5, (0.2, 2.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="out/desk_experiment")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    prob = desk_fixture()
    pl, im, aug = prob.plant, prob.im, prob.aug
    w_aug = LqrWeights.identity(aug.N, pl.m)
    w_plant = LqrWeights.identity(pl.n, pl.m)
    ref_aug = kleinman_pi(aug.Y, aug.J, w_aug).P_star
    ref_plant = kleinman_pi(pl.A, pl.B, w_plant, K0=[[-1.0, -1.5]]).P_star

    def data(mode, rank_name, nz):
        ex = make_exploration_input(pl.m, pl.q, pl.n, nz, args.seed, AMP, BAND, algorithm=rank_name)
        v0 = np.zeros(pl.q) if mode == "none" else None
        return collect(pl, prob.exo, im, mode, ex, T, H, STRIDE, v0=v0)[1]

    dm_none = data("none", "vi_lqr", 0)
    runs = {
        "pi-lqr": (pi_lqr(dm_none, w_plant, K0=[[-1.0, -1.5]], P_ref=ref_plant), ref_plant, (pl.A, pl.B)),
        "vi-lqr": (vi_lqr(dm_none, w_plant, P_ref=ref_plant), ref_plant, (pl.A, pl.B)),
        "first": (vi_or_first(data("control", "first_or", im.n_z), w_aug, P_ref=ref_aug), ref_aug, (aug.Y, aug.J)),
        "improved": (vi_or_improved(data("learning", "improved_or", im.n_z), w_aug, P_ref=ref_aug),
                     ref_aug, (aug.Y, aug.J)),
    }
    rows = []
    print(f"{'algorithm':<10} {'iters':>6} {'resets':>6} {'rel err P':>10} {'Hurwitz':>8} {'settled':>8} {'time s':>7}")
    for i, (name, (res, ref, (Y, J))) in enumerate(runs.items()):
        rel = np.linalg.norm(res.P - ref) / np.linalg.norm(ref)
        stable = is_hurwitz(Y + J @ res.K)
        settled = evaluate_controller(pl, prob.exo, im, res.K).settled if name in ("first", "improved") else None
        rep = res.report
        print(f"{name:<10} {rep.iterations:>6} {rep.resets:>6} {rel:>10.2e} {str(stable):>8} "
              f"{str(settled):>8} {rep.timing:>7.3f}")
        rows.append([i, rep.iterations, rep.resets, rel, float(stable), rep.timing])
        rep.to_csv(out / f"{name}_trace.csv")
    write_csv(out / "summary.csv", ["algorithm_index", "iterations", "resets", "rel_err_P", "hurwitz", "time_s"], rows)


if __name__ == "__main__":
    main()
