"""Second-order behaviour of the identification step: error versus integration step h.

Usage: python3 scripts/step_refinement.py
"""

import numpy as np

from regdata.datagen import make_exploration_input
from regdata.fixtures import desk_fixture
from regdata.learner import collect, identify_improved


def main():
    prob = desk_fixture()
    pl, aug = prob.plant, prob.aug
    ex = make_exploration_input(pl.m, pl.q, pl.n, prob.im.n_z, 0, 0.5, (0.2, 2.0), algorithm="improved_or")
    prev = None
    print(f"{'h':>9} {'ident err':>10} {'ratio':>6}")
    for h in (4e-3, 2e-3, 1e-3, 5e-4, 2.5e-4):
        _, dm = collect(pl, prob.exo, prob.im, "learning", ex, 20.0, h, int(round(0.1 / h)))
        _, J_hat, E_hat, _ = identify_improved(dm, np.eye(aug.N))
        err = max(np.abs(J_hat - aug.J).max(), np.abs(E_hat - pl.E).max())
        ratio = "" if prev is None else f"{prev / err:.3f}"
        print(f"{h:>9.2e} {err:>10.2e} {ratio:>6}")
        prev = err


if __name__ == "__main__":
    main()
