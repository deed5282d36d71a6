"""Identification and learning error of the improved learner across exploration seeds.

Usage: python3 scripts/seed_sweep.py [--seeds 20] [--h 1e-3]
"""

import argparse

import numpy as np

from regdata.datagen import make_exploration_input
from regdata.fixtures import desk_fixture
from regdata.learner import collect, vi_or_first, vi_or_improved
from regdata.oracle import LqrWeights, kleinman_pi


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--h", type=float, default=1e-3)
    ap.add_argument("--amplitude", type=float, default=0.5)
    ap.add_argument("--band", type=float, nargs=2, default=(0.2, 2.0))
    args = ap.parse_args()
    stride = int(round(0.1 / args.h))

    prob = desk_fixture()
    pl, aug = prob.plant, prob.aug
    w = LqrWeights.identity(aug.N, pl.m)
    P_star = kleinman_pi(aug.Y, aug.J, w).P_star
    print(f"{'seed':>4} {'ident err':>10} {'improved P':>11} {'first P':>10}")
    worst = []
    for seed in range(args.seeds):
        results = []
        for mode, rank_name, learner in (("learning", "improved_or", vi_or_improved),
                                         ("control", "first_or", vi_or_first)):
            ex = make_exploration_input(pl.m, pl.q, pl.n, prob.im.n_z, seed, args.amplitude, args.band,
                                        algorithm=rank_name)
            _, dm = collect(pl, prob.exo, prob.im, mode, ex, 20.0, args.h, stride)
            results.append(learner(dm, w))
        imp, first = results
        ident = max(np.abs(imp.J_hat - aug.J).max(), np.abs(imp.E_hat - pl.E).max())
        e_imp = np.linalg.norm(imp.P - P_star) / np.linalg.norm(P_star)
        e_first = np.linalg.norm(first.P - P_star) / np.linalg.norm(P_star)
        worst.append(ident)
        print(f"{seed:>4} {ident:>10.2e} {e_imp:>11.2e} {e_first:>10.2e}")
    print(f"worst identification error {max(worst):.2e}, median {np.median(worst):.2e}")


if __name__ == "__main__":
    main()
