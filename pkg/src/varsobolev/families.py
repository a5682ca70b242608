"""Test-function families and exponent fields built from declarative specs."""

from __future__ import annotations

from typing import List, Sequence

import numpy as np

from .gridlab import Grid, ScalarField, bump_field, bump_profile
from .varexp import ExponentField, make_exponent


def exponent_values(grid: Grid, desc) -> np.ndarray:
    """Nodal values of the exponent described by ``desc`` (an ExponentSpec)."""
    X = grid.coordinates()
    kind = desc.kind
    if kind == "constant":
        return np.full(grid.shape, float(desc.base))
    if kind == "linear":
        v = np.full(grid.shape, float(desc.base))
        for gi, x in zip(desc.gradient, X):
            v = v + gi * x
        return v
    if kind == "bump":
        r2 = np.zeros(grid.shape)
        for c, x in zip(desc.center, X):
            r2 += (x - c) ** 2
        # profile peaks at e^-1; rescale so the perturbation peaks at amplitude
        return desc.base + desc.amplitude * np.e * bump_profile(r2 / desc.radius**2, 1.0)
    if kind == "sine":
        arg = np.full(grid.shape, float(desc.phase))
        for w, x in zip(desc.frequency, X):
            arg = arg + w * x
        return desc.base + desc.amplitude * np.sin(arg)
    raise ValueError(f"unknown exponent kind {kind!r}")


def build_exponent(grid: Grid, desc, n: int) -> ExponentField:
    return make_exponent(ScalarField(grid, exponent_values(grid, desc)), n)


def _fit_radii(grid: Grid, center: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Shrink radii so the ellipsoid stays inside the box (boundary face excepted)."""
    lo = np.asarray(grid.origin, float)
    hi = lo + np.asarray(grid.extent, float)
    room = np.minimum(center - lo, hi - center)
    if grid.half_space_axis is not None:
        a = grid.half_space_axis
        room[a] = hi[a] - center[a]
    return np.minimum(radii, 0.98 * room)


def draw_bumps(grid: Grid, desc, rng: np.random.Generator) -> List[tuple]:
    """(center, radii, power) triples; explicit lists in ``desc`` win over draws."""
    n = grid.dim
    out = []
    box_mid = np.asarray(grid.origin, float) + 0.5 * np.asarray(grid.extent, float)
    for i in range(desc.count):
        if desc.centers is not None:
            c = np.asarray(desc.centers[i % len(desc.centers)], float)
        else:
            c = box_mid + rng.uniform(-desc.center_spread, desc.center_spread, n)
            if grid.half_space_axis is not None:
                a = grid.half_space_axis
                c[a] = rng.uniform(0.0, desc.center_spread)
        if desc.radii is not None:
            r = np.broadcast_to(np.asarray(desc.radii[i % len(desc.radii)], float), (n,)).copy()
        else:
            base = rng.uniform(*desc.radius_range)
            r = base * rng.uniform(*desc.anisotropy, n)
        if desc.powers is not None:
            pw = float(desc.powers[i % len(desc.powers)])
        else:
            pw = float(rng.uniform(*desc.power_range))
        out.append((c, _fit_radii(grid, c, r), pw))
    return out


def bump_family(grid: Grid, desc, seed: int) -> List[ScalarField]:
    rng = np.random.default_rng(seed)
    return [bump_field(grid, c, r, pw)[0] for c, r, pw in draw_bumps(grid, desc, rng)]


def seeds(seed: int, count: int) -> Sequence[int]:
    """Independent child seeds for the separately drawn families."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(count)]
