"""Variable-exponent Lebesgue machinery.

Luxemburg norms are computed by bisection on log(lambda) inside the bracket
given by the modular-norm sandwich

    min(rho^(1/p-), rho^(1/p+)) <= ||f||_p <= max(rho^(1/p-), rho^(1/p+)),

with the modular evaluated in log space so that no power over- or underflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import logsumexp

from .errors import (
    ConjugateUnbounded,
    ExponentBelowOne,
    ExponentReachesDimension,
    IncompatibleGrids,
    InvalidArgument,
    InvalidIntegrabilityExponent,
    NonnegativityViolation,
    NormOverflow,
)
from .gridlab import ScalarField, VectorField, gradient_fd, integrate
from .reports import InequalityReport, digest, make_report

REL_TOL = 1e-12
MAX_ITER = 200
HOLDER_CONSTANT = 2.0


@dataclass(frozen=True, eq=False)
class ExponentField:
    field: ScalarField
    p_minus: float
    p_plus: float
    ambient_dim: int
    kind: str = "base"

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @property
    def grid(self):
        return self.field.grid

    @property
    def is_constant(self) -> bool:
        return self.p_minus == self.p_plus

    @classmethod
    def derived(cls, values, like: "ExponentField", kind: str) -> "ExponentField":
        f = ScalarField(like.grid, values)
        return cls(f, float(f.values.min()), float(f.values.max()), like.ambient_dim, kind)


@dataclass(frozen=True)
class ExponentStats:
    p_minus: float
    p_plus: float
    conj_plus: float
    conj_minus: float
    grad_p_norm_s: float
    s: float


@dataclass(frozen=True)
class NormResult:
    value: float
    modular_at_value: float
    iterations: int
    bracket: tuple


def make_exponent(field: ScalarField, ambient_dim: int) -> ExponentField:
    p_minus = float(field.values.min())
    p_plus = float(field.values.max())
    if p_minus < 1.0:
        raise ExponentBelowOne(f"p_minus = {p_minus} < 1")
    if p_plus >= ambient_dim:
        raise ExponentReachesDimension(f"p_plus = {p_plus} >= n = {ambient_dim}")
    return ExponentField(field, p_minus, p_plus, int(ambient_dim))


def constant_exponent(grid, value: float, ambient_dim: int) -> ExponentField:
    return make_exponent(ScalarField(grid, np.full(grid.shape, float(value))), ambient_dim)


def _abs_values(f) -> np.ndarray:
    if isinstance(f, VectorField):
        return np.sqrt(np.sum(f.values**2, axis=-1))
    return np.abs(f.values)


def _check_grids(f, p: ExponentField):
    if f.grid != p.grid:
        raise IncompatibleGrids("function and exponent live on different grids")


def modular(f: Union[ScalarField, VectorField], p: ExponentField) -> float:
    _check_grids(f, p)
    a = _abs_values(f)
    return float(np.sum(a**p.values) * f.grid.cell_volume)


def _exp_or_inf(t: float) -> float:
    return math.exp(t) if t < 709.0 else math.inf


def luxemburg_array(values, exponents, cell_volume: float, p_lo=None, p_hi=None) -> NormResult:
    """Luxemburg norm of nodal data under the weighted counting measure.

    ``p_lo``/``p_hi`` bound the exponent; they default to the extrema of
    ``exponents`` and only set the initial bracket.
    """
    a = np.abs(np.asarray(values, dtype=float)).ravel()
    q = np.broadcast_to(np.asarray(exponents, dtype=float), np.shape(values)).ravel()
    mask = a > 0
    if not mask.any():
        return NormResult(0.0, 0.0, 0, (0.0, 0.0))
    a, q = a[mask], q[mask]
    p_lo = float(q.min()) if p_lo is None else float(p_lo)
    p_hi = float(q.max()) if p_hi is None else float(p_hi)
    loga = np.log(a)
    logvol = math.log(cell_volume)

    def log_rho(t):
        # log of the modular of f / exp(t)
        return logvol + logsumexp(q * (loga - t))

    log_rho0 = log_rho(0.0)
    if not math.isfinite(log_rho0):
        raise NormOverflow("modular is not finite")
    lo, hi = sorted((log_rho0 / p_hi, log_rho0 / p_lo))
    # guard the sandwich bracket against rounding, then expand if needed
    lo -= 1e-13 * max(1.0, abs(lo))
    hi += 1e-13 * max(1.0, abs(hi))
    step = 1e-9
    for _ in range(80):
        if log_rho(lo) >= 0.0 and log_rho(hi) <= 0.0:
            break
        if log_rho(lo) < 0.0:
            lo -= step
        if log_rho(hi) > 0.0:
            hi += step
        step *= 2.0
    else:
        raise NormOverflow("could not bracket the Luxemburg norm")
    bracket = (_exp_or_inf(lo), _exp_or_inf(hi))
    it = 0
    while hi - lo > REL_TOL and it < MAX_ITER:
        mid = 0.5 * (lo + hi)
        if log_rho(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        it += 1
    t = 0.5 * (lo + hi)
    value = math.exp(t)
    if not math.isfinite(value) or value <= 0:
        raise NormOverflow(f"norm evaluates to {value}")
    return NormResult(value, math.exp(log_rho(t)), it, bracket)


def luxemburg_norm(f: Union[ScalarField, VectorField], p: ExponentField) -> NormResult:
    _check_grids(f, p)
    return luxemburg_array(_abs_values(f), p.values, f.grid.cell_volume, p.p_minus, p.p_plus)


def norm(f, p: ExponentField) -> float:
    return luxemburg_norm(f, p).value


def conjugate_exponent(p: ExponentField) -> ExponentField:
    if p.p_minus <= 1.0:
        raise ConjugateUnbounded("p_minus = 1: the conjugate exponent is unbounded")
    v = p.values
    return ExponentField.derived(v / (v - 1.0), p, "conjugate")


def sobolev_exponents(p: ExponentField):
    """Return ``(p_star, p_lower_star)``: n p/(n-p) and (n-1) p/(n-p)."""
    n = p.ambient_dim
    v = p.values
    if np.any(v >= n):
        raise ExponentReachesDimension(f"p_plus >= n = {n}")
    p_star = n * v / (n - v)
    p_lower = (1.0 - 1.0 / n) * p_star
    return (
        ExponentField.derived(p_star, p, "sobolev"),
        ExponentField.derived(p_lower, p, "trace"),
    )


def exponent_stats(p: ExponentField, s: float) -> ExponentStats:
    if s <= p.ambient_dim:
        raise InvalidIntegrabilityExponent(f"s = {s} must exceed n = {p.ambient_dim}")
    conj_plus = math.inf if p.p_minus == 1.0 else p.p_minus / (p.p_minus - 1.0)
    conj_minus = p.p_plus / (p.p_plus - 1.0) if p.p_plus > 1.0 else math.inf
    return ExponentStats(p.p_minus, p.p_plus, conj_plus, conj_minus, grad_norm_s(p, s), float(s))


def grad_norm_s(p: ExponentField, s: float) -> float:
    """(integral of |grad p|^s)^(1/s) with finite-difference gradients."""
    g = gradient_fd(p.field).magnitude()
    return integrate(g.with_values(g.values**s)) ** (1.0 / s)


def holder_verify(f: ScalarField, g: ScalarField, p: ExponentField, tolerance: float = 1e-10) -> InequalityReport:
    _check_grids(f, p)
    _check_grids(g, p)
    q = conjugate_exponent(p)
    lhs = integrate(f.with_values(np.abs(f.values * g.values)))
    nf = luxemburg_norm(f, p).value
    ng = luxemburg_norm(g, q).value
    rhs = HOLDER_CONSTANT * nf * ng
    tol = tolerance + 4 * REL_TOL * rhs
    return make_report(
        "holder",
        lhs,
        rhs,
        tol,
        constants={"norm_f_p": nf, "norm_g_conj": ng, "holder_constant": HOLDER_CONSTANT},
        provenance={
            "lhs": "integral |f g|",
            "rhs": "2 ||f||_p ||g||_p'",
            "holder_constant": "fixed factor 2 of the variable-exponent Hoelder inequality",
        },
        inputs_digest=digest(f, g, p.field),
    )


def log_weight(f: ScalarField, p: ExponentField) -> ScalarField:
    """Nodal values of f |log f| |grad p|, with 0 log 0 = 0."""
    _check_grids(f, p)
    v = f.values
    if np.any(v < 0):
        raise NonnegativityViolation("log_weight_norm needs f >= 0")
    flog = np.zeros_like(v)
    pos = v > 0
    flog[pos] = v[pos] * np.abs(np.log(v[pos]))
    gp = gradient_fd(p.field).magnitude().values
    return f.with_values(flog * gp)


def log_weight_norm(f: ScalarField, p: ExponentField) -> NormResult:
    return luxemburg_norm(log_weight(f, p), p)


def normalize(f: ScalarField, p_star: ExponentField) -> ScalarField:
    """f / ||f||_{p*}."""
    n = luxemburg_norm(f, p_star).value
    if n == 0:
        raise InvalidArgument("cannot normalize the zero function")
    return f / n
