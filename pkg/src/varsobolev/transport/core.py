"""Discrete quadratic-cost optimal transport between F dx and G dx."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from ..errors import (
    EmptyMeasure,
    InvalidArgument,
    NoConvergence,
    NonnegativityViolation,
    NotAHalfSpace,
    ProblemTooLarge,
)
from ..gridlab import Grid, ScalarField
from ..varexp import ExponentField, sobolev_exponents
from .simplex import ITERATION_LIMIT, OPTIMAL, network_simplex

DEFAULT_SIZE_CAP = 4_000_000
WEIGHT_TOL = 1e-12
MARGINAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure on finitely many distinct points.

    ``mass`` is the total mass before normalization; ``node_index`` and
    ``grid`` record where the atoms came from when built from a field.
    """

    points: np.ndarray
    weights: np.ndarray
    mass: float = 1.0
    grid: Optional[Grid] = None
    node_index: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] == 1 and np.ndim(self.points) == 1:
            pts = pts.T
        w = np.asarray(self.weights, dtype=float).ravel()
        if len(w) != len(pts):
            raise InvalidArgument("points and weights differ in length")
        if len(w) == 0:
            raise EmptyMeasure("measure has no atoms")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidArgument("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise InvalidArgument(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_atoms(cls, points, weights=None) -> "DiscreteMeasure":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=float)
        total = w.sum()
        return cls(pts, w / total, float(total))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    source: DiscreteMeasure
    target: DiscreteMeasure
    coupling: np.ndarray
    dual_source: np.ndarray
    dual_target: np.ndarray
    total_cost: float
    method: str = "exact"
    epsilon: float = 0.0
    dual_gap: float = 0.0
    iterations: int = 0

    def marginal_error(self) -> float:
        r = np.abs(self.coupling.sum(axis=1) - self.source.weights).max()
        c = np.abs(self.coupling.sum(axis=0) - self.target.weights).max()
        return float(max(r, c))


@dataclass(frozen=True, eq=False)
class BrenierApprox:
    points: np.ndarray
    map_T: np.ndarray
    potential_phi: np.ndarray
    source_mask: np.ndarray
    grid: Optional[Grid] = None
    node_index: Optional[np.ndarray] = None

    def vector_field(self):
        """The map as a grid VectorField, zero off the source support."""
        from ..gridlab import VectorField

        if self.grid is None:
            raise InvalidArgument("plan source was not built from a grid")
        out = np.zeros((self.grid.size, self.grid.dim))
        idx = self.node_index[self.source_mask]
        out[idx] = self.map_T[self.source_mask]
        return VectorField(self.grid, out.reshape(self.grid.shape + (self.grid.dim,)))


def cost_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """c(x, y) = |x - y|^2 / 2."""
    d = x[:, None, :] - y[None, :, :]
    return 0.5 * np.einsum("ijk,ijk->ij", d, d)


def density_from_function(f: ScalarField, p: ExponentField, half_space: bool = False) -> DiscreteMeasure:
    """Atoms at grid nodes with weights proportional to f^{p*} times cell volume."""
    if f.grid != p.grid:
        raise InvalidArgument("f and p live on different grids")
    grid = f.grid
    if np.any(f.values < 0):
        raise NonnegativityViolation("densities need f >= 0")
    p_star, _ = sobolev_exponents(p)
    dens = np.zeros(grid.shape)
    pos = f.values > 0
    dens[pos] = f.values[pos] ** p_star.values[pos]
    w = dens.ravel() * grid.cell_volume
    pts = grid.points()
    keep = w > 0
    if half_space:
        if grid.half_space_axis is None:
            raise NotAHalfSpace("half_space requested on a grid without half_space_axis")
        keep &= pts[:, grid.half_space_axis] >= 0
    if not keep.any():
        raise EmptyMeasure("f vanishes on every node")
    mass = float(w[keep].sum())
    idx = np.flatnonzero(keep)
    return DiscreteMeasure(pts[keep], w[keep] / mass, mass, grid, idx)


def solve_ot(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    method: str = "exact",
    epsilon: float = 1e-2,
    size_cap: int = DEFAULT_SIZE_CAP,
    max_iter: int = 100_000,
    tol: float = MARGINAL_TOL,
) -> TransportPlan:
    """Optimal coupling for c(x, y) = |x - y|^2 / 2.

    ``method`` is ``"exact"`` (network simplex) or ``"entropic"``
    (log-domain Sinkhorn with regularization ``epsilon``).
    """
    C = cost_matrix(mu.points, nu.points)
    if method == "exact":
        if C.size > size_cap:
            raise ProblemTooLarge(f"{C.shape[0]}x{C.shape[1]} exceeds the exact-solver cap {size_cap}")
        return _solve_exact(mu, nu, C)
    if method == "entropic":
        return _solve_sinkhorn(mu, nu, C, epsilon, max_iter, tol)
    raise InvalidArgument(f"unknown OT method {method!r}")


def _solve_exact(mu, nu, C) -> TransportPlan:
    m, n = C.shape
    a = mu.weights
    b = nu.weights * (a.sum() / nu.weights.sum())
    scale = max(float(C.max()), 1.0)
    tail, head, flow, pi, status, pivots = network_simplex(a, b, C, 200 * (m + n) * max(m, n), 1e-13 * scale)
    if status == ITERATION_LIMIT:
        raise NoConvergence(f"network simplex hit the pivot limit after {pivots} pivots")
    if status != OPTIMAL:
        raise NoConvergence(f"network simplex stopped with status {status}")
    root = m + n
    art = (head == root) | (tail == root)
    if np.any(flow[art] > 1e-10):
        raise NoConvergence("artificial arcs carry flow: marginals are inconsistent")
    coupling = np.zeros((m, n))
    real = ~art
    coupling[tail[real], head[real] - m] = np.maximum(flow[real], 0.0)
    # tree potentials may carry big-M offsets across components; two
    # c-transforms give tight Kantorovich potentials without losing optimality
    v = (C - (-pi[:m])[:, None]).min(axis=0)
    u = (C - v[None, :]).min(axis=1)
    primal = float(np.sum(coupling * C))
    dual = float(a @ u + nu.weights @ v)
    return TransportPlan(mu, nu, coupling, u, v, primal, "exact", 0.0, abs(primal - dual), int(pivots))


def _solve_sinkhorn(mu, nu, C, eps, max_iter, tol) -> TransportPlan:
    if eps <= 0:
        raise InvalidArgument("entropic regularization must be positive")
    loga = np.log(mu.weights)
    logb = np.log(nu.weights)
    u = np.zeros(len(loga))
    v = np.zeros(len(logb))
    K = -C / eps
    err = math.inf
    for it in range(1, max_iter + 1):
        u = eps * (loga - logsumexp(K + v[None, :] / eps, axis=1))
        v = eps * (logb - logsumexp(K + u[:, None] / eps, axis=0))
        if it % 10 == 0 or it == max_iter:
            P = np.exp(K + (u[:, None] + v[None, :]) / eps)
            err = np.abs(P.sum(axis=1) - mu.weights).max()
            if err < tol:
                break
    else:
        raise NoConvergence(f"Sinkhorn marginal error {err:.3e} after {max_iter} iterations")
    primal = float(np.sum(P * C))
    dual = float(mu.weights @ u + nu.weights @ v)
    return TransportPlan(mu, nu, P, u, v, primal, "entropic", float(eps), abs(primal - dual), it)


def barycentric_map(plan: TransportPlan) -> BrenierApprox:
    row = plan.coupling.sum(axis=1)
    mask = row > 0
    T = np.zeros_like(plan.source.points)
    T[mask] = (plan.coupling[mask] @ plan.target.points) / row[mask, None]
    x = plan.source.points
    phi = 0.5 * np.sum(x**2, axis=1) - plan.dual_source
    return BrenierApprox(x, T, phi, mask, plan.source.grid, plan.source.node_index)


def transport_identity_residual(plan: TransportPlan, psi: Callable[[np.ndarray], np.ndarray]) -> dict:
    """Residuals of  sum_i mu_i psi(T x_i) = sum_j nu_j psi(y_j).

    ``psi`` maps an (N, d) array of points to N values.  Returns the
    map-level residual (barycentric T) and the plan-level residual (psi
    averaged over each coupling row), the latter zero by construction.
    """
    mu, nu = plan.source, plan.target
    target = float(nu.weights @ psi(nu.points))
    bary = barycentric_map(plan)
    m = bary.source_mask
    map_side = float(mu.weights[m] @ psi(bary.map_T[m]))
    plan_side = float(np.sum(plan.coupling @ psi(nu.points)))
    return {"map": abs(map_side - target), "plan": abs(plan_side - target)}


def monotonicity_min(points: np.ndarray, T: np.ndarray, max_pairs: int = 200_000, seed: int = 0) -> float:
    """min over pairs of (T(x) - T(x')).(x - x'), all pairs or a seeded sample."""
    N = len(points)
    if N < 2:
        return 0.0
    if N * (N - 1) // 2 <= max_pairs:
        i, j = np.triu_indices(N, 1)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, N, max_pairs)
        j = rng.integers(0, N, max_pairs)
        keep = i != j
        i, j = i[keep], j[keep]
    return float(np.min(np.sum((T[i] - T[j]) * (points[i] - points[j]), axis=1)))


def support_monotonicity_violation(plan: TransportPlan, tol: float = 0.0) -> float:
    """Largest violation of the two-point cyclical monotonicity of supp(pi)."""
    i, j = np.nonzero(plan.coupling > tol)
    x = plan.source.points[i]
    y = plan.target.points[j]
    own = np.sum((x - y) ** 2, axis=1)
    swap = np.sum((x[:, None] - y[None]) ** 2, axis=2)
    # |x_i - y_j|^2 + |x_i' - y_j'|^2 - |x_i - y_j'|^2 - |x_i' - y_j|^2
    excess = own[:, None] + own[None, :] - swap - swap.T
    return float(max(excess.max(), 0.0))


def cdf_inversion_map(x: np.ndarray, wx: np.ndarray, y: np.ndarray, wy: np.ndarray) -> np.ndarray:
    """1-D monotone map G_cdf^{-1} o F_cdf for cell-centered atoms.

    Each atom spreads its mass uniformly over its cell (cells are bounded by
    midpoints between atoms), so both CDFs are piecewise linear.  Returns the
    image of every source atom, evaluated at the mass midpoint of its cell.
    Zero-mass target cells are skipped by the generalized inverse.
    """
    ox = np.argsort(x)
    oy = np.argsort(y)
    wxs = wx[ox]
    ys, wys = y[oy], wy[oy]
    edges_y = _cell_edges(ys)
    cum_y = np.concatenate([[0.0], np.cumsum(wys)])
    pos = np.flatnonzero(wys > 0)
    knots_u = np.empty(2 * len(pos))
    knots_y = np.empty(2 * len(pos))
    knots_u[0::2], knots_u[1::2] = cum_y[pos], cum_y[pos + 1]
    knots_y[0::2], knots_y[1::2] = edges_y[pos], edges_y[pos + 1]
    mid_mass = np.cumsum(wxs) - 0.5 * wxs
    res = np.empty(len(x))
    res[ox] = np.interp(mid_mass, knots_u, knots_y)
    return res


def _cell_edges(s: np.ndarray) -> np.ndarray:
    if len(s) == 1:
        return np.array([s[0] - 0.5, s[0] + 0.5])
    mids = 0.5 * (s[1:] + s[:-1])
    return np.concatenate([[s[0] - (mids[0] - s[0])], mids, [s[-1] + (s[-1] - mids[-1])]])


@dataclass
class PlanDiagnostics:
    monotonicity_min: float
    support_violation: float
    duality_gap: float
    marginal_error: float
    ma_residual: Optional[float] = None
    map_deviation: Optional[float] = None
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {
            "monotonicity_min": self.monotonicity_min,
            "support_violation": self.support_violation,
            "duality_gap": self.duality_gap,
            "marginal_error": self.marginal_error,
        }
        if self.ma_residual is not None:
            d["ma_residual"] = self.ma_residual
            d["map_deviation"] = self.map_deviation
        d.update(self.extras)
        return d


def plan_diagnostics(plan: TransportPlan, max_pairs: int = 200_000) -> PlanDiagnostics:
    """Monotonicity, duality gap and, in 1-D, the Monge-Ampere residual.

    The 1-D residual |F(x) - G(T x) T'(x)| is evaluated at interior source
    atoms for the CDF-inversion map T built from the plan's marginals, with
    F, G the cell densities, G(T x) linearly interpolated and T' by central
    differences.  ``map_deviation`` is the largest distance between that map
    and the plan's barycentric map.
    """
    bary = barycentric_map(plan)
    m = bary.source_mask
    diag = PlanDiagnostics(
        monotonicity_min=monotonicity_min(bary.points[m], bary.map_T[m], max_pairs),
        support_violation=support_monotonicity_violation(plan) if np.count_nonzero(plan.coupling) <= 4000 else math.nan,
        duality_gap=plan.dual_gap,
        marginal_error=plan.marginal_error(),
    )
    if plan.source.dim == 1:
        x = plan.source.points[:, 0]
        y = plan.target.points[:, 0]
        ox, oy = np.argsort(x), np.argsort(y)
        xs, ys = x[ox], y[oy]
        wx = plan.source.weights[ox]
        Fd = wx / np.diff(_cell_edges(xs))
        Gd = plan.target.weights[oy] / np.diff(_cell_edges(ys))
        T = cdf_inversion_map(x, plan.source.weights, y, plan.target.weights)[ox]
        # interior of the source support: the atom and both neighbours carry mass
        inner = np.zeros(len(xs), bool)
        inner[1:-1] = (wx[1:-1] > 0) & (wx[:-2] > 0) & (wx[2:] > 0)
        idx = np.flatnonzero(inner)
        if len(idx):
            dT = (T[idx + 1] - T[idx - 1]) / (xs[idx + 1] - xs[idx - 1])
            G_at_T = np.interp(T[idx], ys, Gd, left=0.0, right=0.0)
            diag.ma_residual = float(np.max(np.abs(Fd[idx] - G_at_T * dT)))
        else:
            diag.ma_residual = 0.0
        mo = m[ox]
        diag.map_deviation = float(np.max(np.abs(bary.map_T[ox, 0][mo] - T[mo])))
    return diag


def export_plan(plan: TransportPlan, csv_path, json_path=None, residuals: Optional[dict] = None) -> None:
    """Sparse triplet CSV (i, j, weight) plus a JSON sidecar."""
    i, j = np.nonzero(plan.coupling)
    lines = ["i,j,weight"] + [f"{a},{b},{float(plan.coupling[a, b])!r}" for a, b in zip(i, j)]
    Path(csv_path).write_text("\n".join(lines) + "\n")
    if json_path is None:
        json_path = Path(csv_path).with_suffix(".json")
    side = {
        "method": plan.method,
        "epsilon": plan.epsilon,
        "total_cost": plan.total_cost,
        "dual_gap": plan.dual_gap,
        "dual_source": plan.dual_source.tolist(),
        "dual_target": plan.dual_target.tolist(),
        "shape": list(plan.coupling.shape),
        "residuals": residuals or {},
    }
    Path(json_path).write_text(json.dumps(side, indent=2))


def read_plan_triplets(csv_path, shape) -> np.ndarray:
    out = np.zeros(shape)
    for line in Path(csv_path).read_text().splitlines()[1:]:
        if line:
            a, b, w = line.split(",")
            out[int(a), int(b)] = float(w)
    return out
