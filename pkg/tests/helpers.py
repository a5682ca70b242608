"""Shared instance builders for the inequality tests."""

import numpy as np

from varsobolev.gridlab import ScalarField, build_grid, bump_field
from varsobolev.varexp import constant_exponent, make_exponent

# anisotropic (center, semi-axes) pairs; radial pairs sit on the AM-GM
# equality case and leave no room for discretization error
PAIRS = [
    (([0.05, -0.1], [0.75, 0.45]), ([-0.1, 0.05], [0.45, 0.8])),
    (([0.0, 0.1], [0.8, 0.5]), ([0.1, -0.05], [0.55, 0.8])),
    (([-0.1, 0.0], [0.6, 0.8]), ([0.05, 0.1], [0.8, 0.5])),
    (([0.1, 0.1], [0.5, 0.75]), ([-0.05, -0.1], [0.75, 0.6])),
    (([0.0, -0.05], [0.8, 0.6]), ([0.0, 0.05], [0.5, 0.8])),
]


def square(res=64):
    return build_grid(2, [-1.0, -1.0], [2.0, 2.0], [res, res])


def sine_exponent(grid, amp=0.2, base=1.5):
    X, Y = grid.coordinates()
    return make_exponent(ScalarField(grid, base + amp * np.sin(2 * X + 0.5) * np.cos(1.5 * Y)), 2)


def const_exponent(grid, q=1.5):
    return constant_exponent(grid, q, 2)


def bump(grid, center, radii, power=1.0):
    return bump_field(grid, center, radii, power)[0]


def pair(grid, i):
    (cf, rf), (cg, rg) = PAIRS[i]
    return bump(grid, cf, rf), bump(grid, cg, rg)


def family(grid):
    return [bump(grid, c, r) for pr in PAIRS for c, r in pr]


def half(res=(40, 80)):
    return build_grid(2, [0.0, -1.0], [1.0, 2.0], list(res), half_space_axis=0)
