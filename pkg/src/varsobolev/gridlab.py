"""Regular-grid discretization of R^n and of the half-space x_axis >= 0.

Nodes are cell centers, so ``integrate`` is the midpoint rule.  Fields are
immutable numpy arrays shaped like the grid (row-major node order).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist

from .errors import (
    GridTooCoarse,
    IncompatibleGrids,
    InvalidArgument,
    NotAHalfSpace,
    SupportEscape,
    UnsupportedDimension,
)

SUPPORTED_DIMS = (1, 2, 3)
# relative threshold deciding which nodes belong to the support
SUPPORT_THRESHOLD = 1e-14


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Grid:
    dim: int
    origin: tuple
    extent: tuple
    resolution: tuple
    half_space_axis: Optional[int] = None

    @property
    def shape(self) -> tuple:
        return tuple(self.resolution)

    @property
    def spacing(self) -> np.ndarray:
        return np.asarray(self.extent, float) / np.asarray(self.resolution, float)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def size(self) -> int:
        return int(np.prod(self.resolution))

    def axis_nodes(self, axis: int) -> np.ndarray:
        h = self.extent[axis] / self.resolution[axis]
        return self.origin[axis] + (np.arange(self.resolution[axis]) + 0.5) * h

    def coordinates(self) -> list:
        """Per-axis coordinate arrays broadcast to the grid shape."""
        return np.meshgrid(*[self.axis_nodes(a) for a in range(self.dim)], indexing="ij")

    def points(self) -> np.ndarray:
        """All node coordinates as an (N, dim) array in row-major order."""
        return np.stack([c.ravel() for c in self.coordinates()], axis=1)

    def radius_squared(self, center: Sequence[float]) -> np.ndarray:
        r2 = np.zeros(self.shape)
        for c, x in zip(center, self.coordinates()):
            r2 += (x - c) ** 2
        return r2

    def contains_ball(self, center: Sequence[float], radius: float) -> bool:
        lo = np.asarray(self.origin, float)
        hi = lo + np.asarray(self.extent, float)
        c = np.asarray(center, float)
        eps = 1e-12 * max(self.extent)
        return bool(np.all(c - radius >= lo - eps) and np.all(c + radius <= hi + eps))

    def scaled(self, k: float) -> "Grid":
        """The grid dilated by ``k`` about the origin: same resolution, spacing times k."""
        return Grid(
            self.dim,
            tuple(k * o for o in self.origin),
            tuple(k * e for e in self.extent),
            self.resolution,
            self.half_space_axis,
        )


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != self.grid.size:
            raise InvalidArgument(f"field has {v.size} values for {self.grid.size} nodes")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("field values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable) -> "ScalarField":
        return cls(grid, fn(*grid.coordinates()))

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values)

    def __mul__(self, c: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * c)

    __rmul__ = __mul__

    def __truediv__(self, c: float) -> "ScalarField":
        return ScalarField(self.grid, self.values / c)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape + (self.grid.dim,):
            raise InvalidArgument(f"vector field shape {v.shape} does not match grid")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("field values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    def magnitude(self) -> ScalarField:
        return ScalarField(self.grid, np.sqrt(np.sum(self.values**2, axis=-1)))


@dataclass(frozen=True, eq=False)
class SupportInfo:
    diameter: float
    indicator: ScalarField
    radius_R: float

    @property
    def node_count(self) -> int:
        return int(self.indicator.values.sum())


def build_grid(
    dim: int,
    origin: Sequence[float],
    extent: Sequence[float],
    resolution: Sequence[int],
    half_space_axis: Optional[int] = None,
) -> Grid:
    if dim not in SUPPORTED_DIMS:
        raise UnsupportedDimension(f"dim={dim} not in {SUPPORTED_DIMS}")
    if not (len(origin) == len(extent) == len(resolution) == dim):
        raise InvalidArgument("origin, extent and resolution must have length dim")
    if any(not np.isfinite(e) or e <= 0 for e in extent):
        raise InvalidArgument(f"extents must be positive, got {list(extent)}")
    if any(int(r) != r or r <= 0 for r in resolution):
        raise InvalidArgument(f"resolutions must be positive integers, got {list(resolution)}")
    if half_space_axis is not None:
        if not 0 <= half_space_axis < dim:
            raise InvalidArgument(f"half_space_axis {half_space_axis} out of range")
        # the boundary face x_axis = 0 must be the lower face of the box
        if abs(origin[half_space_axis]) > 1e-12 * extent[half_space_axis]:
            raise NotAHalfSpace("half-space grids need origin 0 along the boundary axis")
    return Grid(
        int(dim),
        tuple(float(o) for o in origin),
        tuple(float(e) for e in extent),
        tuple(int(r) for r in resolution),
        half_space_axis,
    )


def check_same_grid(*fields) -> Grid:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise IncompatibleGrids("fields live on different grids")
    return g


def integrate(field: ScalarField) -> float:
    return float(np.sum(field.values) * field.grid.cell_volume)


def gradient_fd(field: ScalarField) -> VectorField:
    """Second-order finite differences: central inside, one-sided at the box faces."""
    grid = field.grid
    if min(grid.resolution) < 3:
        raise GridTooCoarse(f"gradient_fd needs >= 3 nodes per axis, got {grid.resolution}")
    h = grid.spacing
    if grid.dim == 1:
        parts = [np.gradient(field.values, h[0], edge_order=2)]
    else:
        parts = np.gradient(field.values, *h, edge_order=2)
    return VectorField(grid, np.stack(parts, axis=-1))


def support_info(field: ScalarField, radius_R: Optional[float] = None) -> SupportInfo:
    """Support of ``field`` under the relative threshold ``SUPPORT_THRESHOLD``.

    ``radius_R`` defaults to the largest node norm inside the support.
    """
    a = np.abs(field.values)
    peak = a.max()
    mask = a > SUPPORT_THRESHOLD * peak if peak > 0 else np.zeros_like(a, bool)
    pts = field.grid.points()[mask.ravel()]
    diameter = _diameter(pts)
    if radius_R is None:
        radius_R = float(np.sqrt((pts**2).sum(axis=1)).max()) if len(pts) else 0.0
    return SupportInfo(diameter, ScalarField(field.grid, mask.astype(float)), float(radius_R))


def _diameter(pts: np.ndarray) -> float:
    if len(pts) < 2:
        return 0.0
    if pts.shape[1] >= 2 and len(pts) > 64:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except Exception:  # degenerate (collinear) supports
            pass
    return float(pdist(pts).max())


def bump_profile(r2_scaled: np.ndarray, power: float) -> np.ndarray:
    """exp(-power / (1 - s)) for s = |x - c|^2 / radius^2 < 1, zero elsewhere."""
    out = np.zeros_like(r2_scaled)
    inside = r2_scaled < 1.0
    with np.errstate(over="ignore", divide="ignore"):
        out[inside] = np.exp(-power / (1.0 - r2_scaled[inside]))
    return out


def bump_field(grid: Grid, center: Sequence[float], radius, power: float = 1.0):
    """Smooth compactly supported bump and its support record.

    ``radius`` is a scalar or one semi-axis per dimension (ellipsoidal bump).
    Returns ``(field, SupportInfo)``.
    """
    radii = np.broadcast_to(np.asarray(radius, dtype=float), (grid.dim,))
    if np.any(radii <= 0):
        raise InvalidArgument("bump radius must be positive")
    if len(center) != grid.dim:
        raise InvalidArgument("center must have length dim")
    c = np.asarray(center, dtype=float)
    lo = np.asarray(grid.origin, float)
    hi = lo + np.asarray(grid.extent, float)
    eps = 1e-12 * max(grid.extent)
    below = c - radii < lo - eps
    if grid.half_space_axis is not None:
        # the boundary face is part of the domain, crossing it is allowed
        below[grid.half_space_axis] = False
    if np.any(below) or np.any(c + radii > hi + eps):
        raise SupportEscape(f"bump at {list(center)} with radii {radii.tolist()} leaves the grid box")
    r2 = np.zeros(grid.shape)
    for ci, ri, x in zip(c, radii, grid.coordinates()):
        r2 += ((x - ci) / ri) ** 2
    f = ScalarField(grid, bump_profile(r2, power))
    info = support_info(f, radius_R=float(np.linalg.norm(c)) + float(radii.max()))
    return f, info


# Lagrange weights extrapolating nodes at h/2, 3h/2, 5h/2 to the face at 0.
_FACE_WEIGHTS = np.array([15.0 / 8.0, -5.0 / 4.0, 3.0 / 8.0])


def boundary_grid(grid: Grid) -> Grid:
    if grid.half_space_axis is None:
        raise NotAHalfSpace("grid has no half_space_axis")
    ax = grid.half_space_axis
    keep = [i for i in range(grid.dim) if i != ax]
    if not keep:
        raise UnsupportedDimension("the boundary of a 1-D half-line is a point")
    return Grid(
        len(keep),
        tuple(grid.origin[i] for i in keep),
        tuple(grid.extent[i] for i in keep),
        tuple(grid.resolution[i] for i in keep),
        None,
    )


def boundary_restrict(field: ScalarField) -> ScalarField:
    """Trace on the face x_axis = 0 by quadratic extrapolation of the first three layers."""
    grid = field.grid
    bgrid = boundary_grid(grid)
    ax = grid.half_space_axis
    if grid.resolution[ax] < 3:
        raise GridTooCoarse("boundary_restrict needs >= 3 layers along the boundary axis")
    layers = np.take(field.values, [0, 1, 2], axis=ax)
    trace = np.tensordot(_FACE_WEIGHTS, np.moveaxis(layers, ax, 0), axes=(0, 0))
    return ScalarField(bgrid, trace)


def coarsen(field: ScalarField) -> ScalarField:
    """Average 2^n blocks of cells onto the grid with doubled spacing."""
    grid = field.grid
    if any(r % 2 for r in grid.resolution):
        raise InvalidArgument("coarsen needs even resolution on every axis")
    cgrid = Grid(grid.dim, grid.origin, grid.extent, tuple(r // 2 for r in grid.resolution), grid.half_space_axis)
    v = field.values
    shape = []
    for r in grid.resolution:
        shape += [r // 2, 2]
    v = v.reshape(shape).mean(axis=tuple(range(1, 2 * grid.dim, 2)))
    return ScalarField(cgrid, v)
