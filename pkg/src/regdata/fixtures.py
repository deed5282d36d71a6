"""Small reference problems used by the tests, scripts and example configs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sysmodel import (
    AugmentedSystem,
    Exosystem,
    InternalModel,
    Plant,
    build_augmented,
    build_internal_model,
    minimal_polynomial,
)


@dataclass
class Problem:
    plant: Plant
    exo: Exosystem
    im: InternalModel
    aug: AugmentedSystem


def make_problem(plant: Plant, exo: Exosystem, minpoly_override=None) -> Problem:
    mp = minimal_polynomial(exo.S, minpoly_override)
    im = build_internal_model(mp, plant.p)
    return Problem(plant, exo, im, build_augmented(plant, im))


def rotation(omega: float = 1.0) -> np.ndarray:
    return np.array([[0.0, omega], [-omega, 0.0]])


def desk_fixture(D: float = 0.2, E_scale: float = 0.5, F_scale: float = 1.0, v0=(1.0, 0.0)) -> Problem:
    """Double integrator tracking a unit-frequency sinusoid.

    n=2, m=1, p=1, q=2, S a rotation at 1 rad/s, so n_z=2.
    """
    plant = Plant(
        A=[[0.0, 1.0], [0.0, 0.0]],
        B=[[0.0], [1.0]],
        C=[[1.0, 0.0]],
        D=[[D]],
        E=[[0.0, 0.0], [E_scale, 0.0]],
        F=[[-F_scale, 0.0]],
    )
    exo = Exosystem(S=rotation(1.0), v0=np.asarray(v0, dtype=float))
    return make_problem(plant, exo)


def integrator_fixture() -> Problem:
    """``x' = u``, ``e = x - v`` with a constant exosystem."""
    plant = Plant(A=[[0.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]], E=[[0.0]], F=[[-1.0]])
    exo = Exosystem(S=[[0.0]], v0=[1.0])
    return make_problem(plant, exo)
