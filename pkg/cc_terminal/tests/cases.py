"""Small problems shared by the test modules."""

import numpy as np

from cc_terminal.mpc import PlantSpec
from cc_terminal.polytope import HPolytope, build_template
from cc_terminal.regulator import ScalarPlant, StageCost, scalar_oracles
from cc_terminal.terminal import design_terminal

SCALAR_A = 1.1
SCALAR_BETA = 0.95
SCALAR_X = 10.0


def scalar_plant():
    """x+ = 1.1 x + u, |x| <= 10, |u| <= 1."""
    return PlantSpec([[SCALAR_A]], [[1.0]], HPolytope.symmetric_box([SCALAR_X]),
                     HPolytope.symmetric_box([1.0]))


def scalar_cost():
    return StageCost([[1.0]], [[1.0]])


def scalar_oracle():
    return scalar_oracles(ScalarPlant(SCALAR_A, 1.0), SCALAR_BETA)


def scalar_design(beta=SCALAR_BETA, **kwargs):
    plant = scalar_plant()
    template = build_template([[1.0], [-1.0]], [1.0, 1.0])
    return design_terminal(template, plant.A, plant.B, plant.X, plant.U, scalar_cost(), beta,
                           **kwargs)


def scalar_problem_data(**overrides):
    """Problem-file dictionary of the scalar plant with an interval template."""
    data = {
        "A": [[SCALAR_A]],
        "B": [[1.0]],
        "X": {"F": [[1.0], [-1.0]], "y": [SCALAR_X, SCALAR_X]},
        "U": {"F": [[1.0], [-1.0]], "y": [1.0, 1.0]},
        "Q": [[1.0]],
        "R": [[1.0]],
        "template": {"F": [[1.0], [-1.0]]},
        "beta": SCALAR_BETA,
        "N": 3,
        "experiment": {"M": 20},
    }
    data.update(overrides)
    return data


def t_beta_radius():
    """Right end of T(beta) for the scalar plant with the interval template."""
    oracle = scalar_oracle()
    return (1.0 + (1.0 - SCALAR_BETA) * oracle.b) / (SCALAR_A - SCALAR_BETA)


def box(radius, n=1):
    return HPolytope.symmetric_box(np.full(n, radius))
