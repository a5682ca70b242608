"""Numerical checks of the transport proof of the variable-exponent
Sobolev-Poincare and trace inequalities.

Every check works on normalized data (``||f||_{p*} = 1``) and reports the
constants it used together with a short description of where each one comes
from.  The supremum-defined quantities alpha and beta are replaced by maxima
over finite test families, which are lower bounds, so each check verifies a
statement at least as strong as the original one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import minimize_scalar

from .errors import (
    ConstantChainFailure,
    EmptyFamily,
    InvalidArgument,
    InvalidIntegrabilityExponent,
    NormalizationViolation,
    NotAHalfSpace,
    UnboundedH,
)
from .gridlab import (
    ScalarField,
    VectorField,
    boundary_restrict,
    coarsen,
    gradient_fd,
    integrate,
    support_info,
)
from .reports import InequalityReport, Sandwich, ScalingReport, digest, make_report
from .transport import barycentric_map, density_from_function, solve_ot
from .varexp import (
    REL_TOL,
    ExponentField,
    conjugate_exponent,
    grad_norm_s,
    log_weight,
    luxemburg_array,
    luxemburg_norm,
    make_exponent,
    normalize,
    sobolev_exponents,
)

NORMALIZATION_TOL = 1e-8
SCALING_REL_TOL = 1e-6
H_GRID_POINTS = 8001
H_T_RANGE = (1e-20, 1e20)
MAX_K_ROUNDS = 60
E = math.e

Family = Union[Sequence[ScalarField], Callable]


@dataclass(frozen=True)
class ModulusEstimate:
    value: float
    family_size: int
    which: str
    ratios: tuple
    best: int

    @property
    def best_ratio(self) -> float:
        return self.ratios[self.best]


# ----------------------------------------------------------------- helpers


def _pos_power(v: np.ndarray, q) -> np.ndarray:
    """v^q with 0^q = 0 for nonnegative v."""
    out = np.zeros_like(v)
    pos = v > 0
    out[pos] = v[pos] ** (q[pos] if np.ndim(q) else q)
    return out


def _conj_range(p: ExponentField) -> tuple:
    """((p')_-, (p')_+) = ((p_+)', (p_-)')."""
    conjugate_exponent(p)  # raises for p_- = 1
    return p.p_plus / (p.p_plus - 1.0), p.p_minus / (p.p_minus - 1.0)


def _modular_max(x: float, lo: float, hi: float) -> float:
    """max{x^(1/lo), x^(1/hi)}, the norm bound from a modular value x."""
    return max(x ** (1.0 / lo), x ** (1.0 / hi))


def _check_s(p: ExponentField, s: float):
    if s <= p.ambient_dim:
        raise InvalidIntegrabilityExponent(f"s = {s} must exceed n = {p.ambient_dim}")


def outward_normal(grid) -> np.ndarray:
    """e = -(unit vector of the boundary axis)."""
    if grid.half_space_axis is None:
        raise NotAHalfSpace("grid has no half_space_axis")
    e = np.zeros(grid.dim)
    e[grid.half_space_axis] = -1.0
    return e


def dilate(field: ScalarField, k: float) -> ScalarField:
    """x -> field(x / k) on the grid scaled by k (node values unchanged)."""
    return ScalarField(field.grid.scaled(k), field.values)


def dilate_exponent(p: ExponentField, k: float) -> ExponentField:
    return ExponentField(dilate(p.field, k), p.p_minus, p.p_plus, p.ambient_dim, p.kind)


def window_exponent(p: ExponentField, k: float) -> ExponentField:
    """p_k(y) = p(y/k) sampled on p's own grid by linear interpolation.

    The bounds p_-, p_+ stay those of p (they are the bounds of p_k on all
    of space), so eta and the alpha/beta prefactors are unchanged.
    """
    if k == 1.0:
        return p
    grid = p.grid
    axes = [grid.axis_nodes(a) for a in range(grid.dim)]
    interp = RegularGridInterpolator(axes, p.values, method="linear", bounds_error=False, fill_value=None)
    vals = interp(grid.points() / k).reshape(grid.shape)
    vals = np.clip(vals, p.p_minus, p.p_plus)
    return ExponentField(ScalarField(grid, vals), p.p_minus, p.p_plus, p.ambient_dim, p.kind)


def _family_on(family: Family, grid) -> list:
    members = list(family(grid)) if callable(family) else list(family)
    if not members:
        raise EmptyFamily("test family is empty")
    return members


# ----------------------------------------------------------------- eta, alpha, beta


def eta_weight(points, p: ExponentField, shift=None) -> np.ndarray:
    """max{|x - shift|^{(p')_+}, |x - shift|^{(p')_-}} per point."""
    lo, hi = _conj_range(p)
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if p.ambient_dim == 1 else x[None, :]
    if shift is not None:
        x = x - np.asarray(shift, dtype=float)
    r = np.sqrt(np.sum(x**2, axis=1))
    return np.maximum(r**hi, r**lo)


def eta_moment(g: ScalarField, p: ExponentField, shift=None) -> float:
    """Integral of eta(y - shift) g^{p*}(y)."""
    p_star, _ = sobolev_exponents(p)
    G = _pos_power(np.abs(g.values), p_star.values)
    w = eta_weight(g.grid.points(), p, shift).reshape(g.grid.shape)
    return float(np.sum(w * G) * g.grid.cell_volume)


def _moment_factor(M: float, p: ExponentField) -> float:
    lo, hi = _conj_range(p)
    return _modular_max(M, lo, hi)


def _ratio(g: ScalarField, p: ExponentField, which: str) -> tuple:
    """(ratio, integral of g^{p_*}, eta-moment, moment factor W)."""
    n = p.ambient_dim
    _, p_low = sobolev_exponents(p)
    I = integrate(g.with_values(_pos_power(g.values, p_low.values)))
    shift = outward_normal(g.grid) if which == "beta" else None
    M = eta_moment(g, p, shift)
    W = _moment_factor(M, p)
    if which == "alpha":
        pref = (n - p.p_plus) / (2.0 * (n - 1))
    else:
        pref = float(n)
    return pref * I / W, I, M, W


def alpha_beta_estimate(g_family: Sequence[ScalarField], p: ExponentField, which: str = "alpha") -> ModulusEstimate:
    """Family maximum of the alpha (or beta) ratio; a lower bound for the supremum."""
    if which not in ("alpha", "beta"):
        raise InvalidArgument(f"which must be 'alpha' or 'beta', got {which!r}")
    g_family = list(g_family)
    if not g_family:
        raise EmptyFamily("alpha/beta estimate needs at least one g")
    p_star, _ = sobolev_exponents(p)
    ratios = []
    for g in g_family:
        if g.grid != p.grid:
            raise InvalidArgument("family member lives on a different grid")
        if which == "beta" and g.grid.half_space_axis is None:
            raise NotAHalfSpace("beta needs half-space grids")
        if np.any(g.values < 0):
            raise InvalidArgument("family members must be nonnegative")
        nrm = luxemburg_norm(g, p_star).value
        if abs(nrm - 1.0) > NORMALIZATION_TOL:
            raise NormalizationViolation(f"family member has ||g||_p* = {nrm!r}, expected 1")
        ratios.append(_ratio(g, p, which)[0])
    best = int(np.argmax(ratios))
    return ModulusEstimate(float(ratios[best]), len(ratios), which, tuple(float(r) for r in ratios), best)


def normalized_family(family: Sequence[ScalarField], p: ExponentField) -> list:
    p_star, _ = sobolev_exponents(p)
    return [normalize(g, p_star) for g in family]


# ----------------------------------------------------------------- key estimate


def grad_F_power(f: ScalarField, p: ExponentField) -> VectorField:
    """Gradient of F^{1-1/n} = f^{p_*} from the closed-form expansion.

    Uses finite-difference gradients of f and p; vanishes where f = 0.
    """
    n = p.ambient_dim
    v = f.values
    pv = p.values
    _, p_low = sobolev_exponents(p)
    q = p_low.values
    gf = gradient_fd(f).values
    gp = gradient_fd(p.field).values
    coef_p = np.zeros_like(v)
    coef_f = np.zeros_like(v)
    pos = v > 0
    fq = v[pos] ** q[pos]
    coef_p[pos] = (n - 1) * n * fq * np.log(v[pos]) / (n - pv[pos]) ** 2
    coef_f[pos] = q[pos] * v[pos] ** (q[pos] - 1.0)
    return VectorField(f.grid, coef_p[..., None] * gp + coef_f[..., None] * gf)


def _transport_map(f: ScalarField, g: ScalarField, p: ExponentField, half_space=False, method="exact", epsilon=1e-2):
    mu = density_from_function(f, p, half_space)
    nu = density_from_function(g, p, half_space)
    plan = solve_ot(mu, nu, method=method, epsilon=epsilon)
    bary = barycentric_map(plan)
    return plan, bary.vector_field(), bary


def _midpoint(f: ScalarField, g: ScalarField, p: ExponentField, method: str, epsilon: float) -> dict:
    """Both sides of  int g^{p_*} <= -(1/n) int grad(F^{1-1/n}) . T."""
    n = p.ambient_dim
    _, p_low = sobolev_exponents(p)
    lhs = integrate(g.with_values(_pos_power(g.values, p_low.values)))
    plan, T, _ = _transport_map(f, g, p, method=method, epsilon=epsilon)
    dF = grad_F_power(f, p)
    dot = np.sum(dF.values * T.values, axis=-1)
    rhs = -integrate(f.with_values(dot)) / n
    return {"lhs": lhs, "rhs": rhs, "plan": plan, "T": T}


def _coarse_triplet(f, g, p):
    fc, gc = coarsen(f), coarsen(g)
    pc = make_exponent(coarsen(p.field), p.ambient_dim)
    ps, _ = sobolev_exponents(pc)
    return normalize(fc, ps), normalize(gc, ps), pc


def key_estimate_verify(
    f: ScalarField,
    g: ScalarField,
    p: ExponentField,
    method: str = "exact",
    epsilon: float = 1e-2,
    refine: bool = True,
) -> InequalityReport:
    """Transport key estimate for one (f, g) pair.

    Subchecks: the end-to-end estimate with the single-g alpha ratio, the
    midpoint inequality with the discrete transport map, the Hoelder split
    of the midpoint right-hand side, and the eta-moment bound of the
    remaining p'-norm.
    """
    n = p.ambient_dim
    if f.grid != p.grid or g.grid != p.grid:
        raise InvalidArgument("f, g and p must share a grid")
    conjugate_exponent(p)
    p_star, p_low = sobolev_exponents(p)
    q_conj = conjugate_exponent(p)
    f = normalize(f, p_star)
    g = normalize(g, p_star)
    pp = p.p_plus

    mid = _midpoint(f, g, p, method, epsilon)
    plan, T = mid["plan"], mid["T"]
    ratio, I_g, M_eta, W = _ratio(g, p, "alpha")
    L = luxemburg_norm(log_weight(f, p), p).value
    grad_f = luxemburg_norm(gradient_fd(f), p).value

    # p'-norm of f^{p_*-1}|T| and its eta-moment bound
    Tmag = np.sqrt(np.sum(T.values**2, axis=-1))
    weight = _pos_power(f.values, p_low.values - 1.0) * Tmag
    nT = luxemburg_array(weight, q_conj.values, f.grid.cell_volume, q_conj.p_minus, q_conj.p_plus).value
    chain = (n - 1) / (n - pp) * (2.0 * L / (n - pp) + 2.0 * pp / n * grad_f)
    holder_rhs = chain * nT

    root_tol = 8 * REL_TOL * max(1.0, abs(mid["rhs"]), holder_rhs)
    gap = plan.dual_gap
    refine_err = 0.0
    if refine:
        fc, gc, pc = _coarse_triplet(f, g, p)
        cm = _midpoint(fc, gc, pc, method, epsilon)
        refine_err = abs((mid["rhs"] - mid["lhs"]) - (cm["rhs"] - cm["lhs"]))
    if method == "entropic":
        # entropic plans are biased; charge the regularization scale
        gap += epsilon
    tol_mid = root_tol + refine_err + gap

    dig = digest(f, g, p.field)
    sub_mid = make_report(
        "key-estimate/midpoint",
        mid["lhs"],
        mid["rhs"],
        tol_mid,
        constants={"refinement_error": refine_err, "ot_gap": gap, "root_tolerance": root_tol},
        provenance={
            "lhs": "integral g^{p_*}",
            "rhs": "-(1/n) integral grad(F^{1-1/n}) . T, T barycentric map of the " + plan.method + " plan",
        },
        inputs_digest=dig,
    )
    sub_holder = make_report(
        "key-estimate/holder-split",
        mid["rhs"],
        holder_rhs,
        root_tol,
        constants={
            "chain_factor": chain,
            "norm_fpstar_T": nT,
            "log_term": L,
            "grad_f_norm": grad_f,
        },
        provenance={
            "rhs": "(n-1)/(n-p+) [2 L/(n-p+) + 2 (p+/n) ||grad f||_p] ||f^{p_*-1}|T|||_p'",
            "log_term": "L = ||f |log f| |grad p| ||_p",
        },
        inputs_digest=dig,
    )
    lo, hi = _conj_range(p)
    # masses of F and G differ from 1 by the root tolerance
    sub_eta = make_report(
        "key-estimate/eta-moment",
        nT,
        W,
        root_tol + 1e-9 * W,
        constants={"eta_moment": M_eta, "conj_minus": lo, "conj_plus": hi},
        provenance={"rhs": "max{M^(1/(p')_-), M^(1/(p')_+)}, M = integral eta G"},
        inputs_digest=dig,
    )
    final_rhs = L / (n - pp) + pp / n * grad_f
    return make_report(
        "key-estimate",
        ratio,
        final_rhs,
        root_tol + refine_err,
        constants={
            "alpha_single": ratio,
            "log_term": L,
            "grad_f_norm": grad_f,
            "integral_g_plow": I_g,
            "eta_moment": M_eta,
            "moment_factor": W,
            "p_plus": pp,
            "p_minus": p.p_minus,
        },
        provenance={
            "lhs": "alpha ratio of the single g (lower bound of the supremum)",
            "rhs": "L/(n-p+) + (p+/n) ||grad f||_p",
        },
        subchecks=[sub_mid, sub_holder, sub_eta],
        inputs_digest=dig,
    )


# ----------------------------------------------------------------- log lemma


def c_r_minus(r_minus: float) -> float:
    """(r/(e(r-1)))^r, the bound of f^{r-1}|log f|^r on (0, 1]."""
    return (r_minus / (E * (r_minus - 1.0))) ** r_minus


def c2_constant(n: int, s: float) -> float:
    return 2.0 * s * (n - 1) / (E * (s - n))


def _log_setup(f: ScalarField, p: ExponentField, s: float) -> dict:
    """Quantities shared by the log lemma and the two constant chains."""
    n = p.ambient_dim
    pm, pp = p.p_minus, p.p_plus
    r_minus = s * pm / (s - pm)
    C_r = c_r_minus(r_minus)
    info = support_info(f)
    q_conj = conjugate_exponent(p)
    ind_norm = luxemburg_norm(info.indicator, q_conj).value
    G = grad_norm_s(p, s)
    return {
        "n": n,
        "r_minus": r_minus,
        "C_r": C_r,
        "C_ns_bound": (s / E) ** (s / (s - 1.0)),
        "diam": info.diameter,
        "indicator_norm": ind_norm,
        "grad_p_s": G,
        "M": max(G**pm, G**pp),
        "q_minus": s / (s - pm),
        "q_plus": s / (s - pp),
        "C2": c2_constant(n, s),
        "K": s * (n - pm) / (E * pm * (s - n)),
    }


def c1_constant(kappa_t: float, q_minus: float, q_plus: float) -> float:
    """2 max{x^(1/q_-), x^(1/q_+)} with x = C diam ||1||_p' ||grad f||_p."""
    return 2.0 * max(kappa_t ** (1.0 / q_minus), kappa_t ** (1.0 / q_plus))


def log_lemma_verify(f: ScalarField, p: ExponentField, s: float) -> InequalityReport:
    _check_s(p, s)
    conjugate_exponent(p)
    p_star, _ = sobolev_exponents(p)
    f = normalize(f, p_star)
    d = _log_setup(f, p, s)
    grad_f = luxemburg_norm(gradient_fd(f), p).value
    kappa_t = d["C_r"] * d["diam"] * d["indicator_norm"] * grad_f
    C1 = c1_constant(kappa_t, d["q_minus"], d["q_plus"])
    C2, M = d["C2"], d["M"]

    v = f.values
    lw = log_weight(f, p).values
    integrand = _pos_power(lw, p.values)
    low = v <= 1.0
    cv = f.grid.cell_volume
    I_low = float(np.sum(integrand[low]) * cv)
    I_high = float(np.sum(integrand[~low]) * cv)
    lhs = float(np.sum(integrand) * cv)

    # modular of (f|log f|)^r on {f <= 1}, r = s p / (s - p)
    r = s * p.values / (s - p.values)
    flog = np.zeros_like(v)
    pos = v > 0
    flog[pos] = v[pos] * np.abs(np.log(v[pos]))
    rho_low = float(np.sum(_pos_power(flog, r)[low]) * cv)
    tol = 8 * REL_TOL * max(1.0, (C1 + C2) * M)
    dig = digest(f, p.field)
    subs = [
        make_report(
            "log-lemma/f<=1-modular",
            rho_low,
            4.0 * kappa_t,
            tol,
            constants={"C_r": d["C_r"]},
            provenance={"rhs": "C(r_-) 4 diam(supp f) ||1_supp||_p' ||grad f||_p"},
            inputs_digest=dig,
        ),
        make_report(
            "log-lemma/f<=1",
            I_low,
            C1 * M,
            tol,
            constants={"C1": C1},
            provenance={"rhs": "C1 max{||grad p||_s^p-, ||grad p||_s^p+}"},
            inputs_digest=dig,
        ),
        make_report(
            "log-lemma/f>1",
            I_high,
            C2 * M,
            tol,
            constants={"C2": C2, "K": d["K"]},
            provenance={"rhs": "C2 max{||grad p||_s^p-, ||grad p||_s^p+}", "K": "s(n-p-)/(e p- (s-n))"},
            inputs_digest=dig,
        ),
    ]
    return make_report(
        "log-lemma",
        lhs,
        (C1 + C2) * M,
        tol,
        constants={
            "C1": C1,
            "C2": C2,
            "C_r": d["C_r"],
            "C_ns_bound": d["C_ns_bound"],
            "r_minus": d["r_minus"],
            "diam": d["diam"],
            "indicator_norm": d["indicator_norm"],
            "grad_f_norm": grad_f,
            "grad_p_s": d["grad_p_s"],
            "M": M,
            "split_low": I_low,
            "split_high": I_high,
        },
        provenance={
            "lhs": "integral f^p |log f|^p |grad p|^p",
            "C1": "2 max over (s/(s-p))_+- of (C diam ||1_supp||_p' ||grad f||_p)^(1/.)",
            "C2": "2 s (n-1) / (e (s-n))",
            "C_r": "(r_-/(e(r_- - 1)))^r_-, used as C(n,s)",
            "C_ns_bound": "(s/e)^(s/(s-1)), p_- free bound of C_r",
            "M": "max{||grad p||_s^p-, ||grad p||_s^p+}",
        },
        subchecks=subs,
        inputs_digest=dig,
    )


# ----------------------------------------------------------------- scaling


def _grad_p_power_norm(p: ExponentField, r: float) -> float:
    gp = gradient_fd(p.field).magnitude().values
    return luxemburg_array(_pos_power(gp, p.values), r, p.grid.cell_volume).value


def _sandwich(name, lower, measured, upper, tol) -> Sandwich:
    ok = lower * (1 - tol) - tol <= measured <= upper * (1 + tol) + tol
    return Sandwich(name=name, lower=lower, measured=measured, upper=upper, passed=bool(ok))


def scaling_verify(f: ScalarField, p: ExponentField, k: float, r: float, s: Optional[float] = None) -> ScalingReport:
    """Dilation sandwiches for f_k(x) = f(x/k), p_k(x) = p(x/k).

    The dilated grid has the same resolution with spacing times k, so the
    nodes correspond one to one under x -> kx.
    """
    if k < 1:
        raise InvalidArgument(f"k = {k} must be >= 1")
    if r < 1:
        raise InvalidArgument(f"r = {r} must be >= 1")
    n = p.ambient_dim
    s = r if s is None else s
    pm, pp = p.p_minus, p.p_plus
    p_star, _ = sobolev_exponents(p)
    fk, pk = dilate(f, k), dilate_exponent(p, k)
    pk_star, _ = sobolev_exponents(pk)

    a0 = luxemburg_norm(f, p_star).value
    ak = luxemburg_norm(fk, pk_star).value
    b0 = luxemburg_norm(gradient_fd(f), p).value
    bk = luxemburg_norm(gradient_fd(fk), pk).value
    c0 = _grad_p_power_norm(p, r)
    ck = _grad_p_power_norm(pk, r)
    tol = SCALING_REL_TOL + 8 * REL_TOL

    ps_minus, ps_plus = n * pm / (n - pm), n * pp / (n - pp)
    sandwiches = [
        _sandwich("norm_f_pstar", k ** (n / ps_plus) * a0, ak, k ** (n / ps_minus) * a0, tol),
        _sandwich("norm_grad_f", k ** (n / pp - 1) * b0, bk, k ** (n / pm - 1) * b0, tol),
        _sandwich("norm_grad_p_pow", k ** (-pp + n / r) * c0, ck, k ** (-pm + n / r) * c0, tol),
    ]
    cs0 = _grad_p_power_norm(p, s) if s != r else c0
    csk = _grad_p_power_norm(pk, s) if s != r else ck
    coarse = [
        _sandwich("norm_f_pstar_coarse", 0.0, ak, k ** (n - 1) * a0, tol),
        _sandwich("norm_grad_f_coarse", 0.0, bk, k ** (n - 1) * b0, tol),
        _sandwich("norm_grad_p_pow_coarse", 0.0, csk, k ** (-1 + n / s) * cs0, tol),
    ]
    return ScalingReport(
        k=float(k), r=float(r), tolerance=tol, sandwiches=sandwiches, coarse=coarse, inputs_digest=digest(f, p.field)
    )


# ----------------------------------------------------------------- h bound


def _h_values(logt, C1, C2, B, a, q):
    # (C1 t^a + C2 t - B) t^-q evaluated term by term to avoid overflow
    with np.errstate(over="ignore", under="ignore"):
        out = -B * np.exp(-q * logt)
        if C2:
            out = out + C2 * np.exp((1.0 - q) * logt)
        if C1:
            out = out + C1 * np.exp((a - q) * logt)
    return out


def h_bound(C1: float, C2: float, B: float, alpha_exp: float, q: float, n_grid: int = H_GRID_POINTS) -> float:
    """sup over t > 0 of h(t) = (C1 t^a + C2 t - B) t^{-q}.

    Log-spaced grid search over [1e-20, 1e20] followed by golden-section
    refinement on the bracket around the best grid point.
    """
    if not B > 0:
        raise UnboundedH(f"B = {B} must be positive")
    if q <= 1:
        raise InvalidArgument(f"q = {q} must exceed 1")
    if C2 < 0 or C1 < 0:
        raise InvalidArgument("C1 and C2 must be nonnegative")
    if C1 > 0 and not 0 < alpha_exp < q:
        raise InvalidArgument(f"need 0 < alpha < q, got alpha = {alpha_exp}, q = {q}")
    u = np.linspace(math.log(H_T_RANGE[0]), math.log(H_T_RANGE[1]), n_grid)
    h = _h_values(u, C1, C2, B, alpha_exp, q)
    i = int(np.nanargmax(h))
    best = float(h[i])
    if 0 < i < len(u) - 1:
        res = minimize_scalar(
            lambda x: -float(_h_values(np.array([x]), C1, C2, B, alpha_exp, q)[0]),
            bracket=(u[i - 1], u[i], u[i + 1]),
            method="golden",
            tol=1e-12,
        )
        best = max(best, -float(res.fun))
    return best


# ----------------------------------------------------------------- Sobolev chain


def _ball_indicator_bound(R: float, n: int, lo: float, hi: float) -> float:
    """Norm bound of 1_{B_R} in L^{p'}: max{|B_R|^(1/lo), |B_R|^(1/hi)}."""
    vol = math.pi ** (n / 2) / math.gamma(n / 2 + 1) * R**n
    return _modular_max(vol, lo, hi)


def _delta(tau: float, p: ExponentField, C2: float) -> float:
    # largest delta with max_e (C2 delta)^e <= tau over e in {1/p-, 1/p+}
    return min(tau**p.p_plus, tau**p.p_minus) / C2


def _rescale_power(n, s, pm) -> float:
    return (1.0 - n / s) * pm


def _choose_k(M: float, delta: float, n: int, s: float, pm: float) -> tuple:
    """(k from the M/delta rule, k actually large enough)."""
    k_rule = max(1.0, M / delta)
    if M <= delta:
        return k_rule, 1.0
    need = (M / delta) ** (1.0 / _rescale_power(n, s, pm))
    return k_rule, max(k_rule, need)


def _modulus_for(family: Family, p: ExponentField, which: str, k: float) -> tuple:
    """Modulus estimate for p_k over the family on the original window."""
    pw = window_exponent(p, k)
    members = normalized_family(_family_on(family, p.grid), pw)
    return alpha_beta_estimate(members, pw, which), members, pw


def _close_chain(p, s, family, which, tau_of, label):
    """Find k >= 1 with max{G_k^p-, G_k^p+} <= delta_k, re-estimating the modulus for p_k.

    Returns (k_rule, k, est_k, delta_k, M_k, p_k, members_k, window exponent).
    """
    n = p.ambient_dim
    C2 = c2_constant(n, s)
    G = grad_norm_s(p, s)
    M = max(G**p.p_minus, G**p.p_plus)
    est, members, pw = _modulus_for(family, p, which, 1.0)
    delta = _delta(tau_of(est), p, C2)
    k_rule, k = _choose_k(M, delta, n, s, p.p_minus)
    diag = {"delta": delta, "M": M, "k_rule": k_rule, f"{label}_est": est.value}
    for _ in range(MAX_K_ROUNDS):
        pk = dilate_exponent(p, k) if k != 1.0 else p
        if k != 1.0:
            est, members, pw = _modulus_for(family, p, which, k)
        delta_k = _delta(tau_of(est), pk, C2)
        # G_k = k^(n/s - 1) G exactly; measured on the dilated grid
        Gk = grad_norm_s(pk, s)
        Mk = max(Gk**p.p_minus, Gk**p.p_plus)
        if Mk <= delta_k * (1 + 1e-12):
            return k_rule, k, est, delta_k, Mk, pk, members, pw
        step = (Mk / delta_k) ** (1.0 / _rescale_power(n, s, p.p_minus))
        k *= max(step, 1.0 + 1e-6)
        diag.update({"k": k, "delta_k": delta_k, "M_k": Mk, f"{label}_k": est.value})
        if not math.isfinite(k):
            break
    raise ConstantChainFailure(f"no rescaling k makes the {label} chain close", diag)


def sobolev_verify(f: ScalarField, p: ExponentField, s: float, family: Family, R: Optional[float] = None) -> InequalityReport:
    """End-to-end Sobolev-Poincare check with a fully traced constant chain.

    ``family`` is the list of test functions g (or a callable grid -> list)
    used to estimate alpha; it is dilated together with p when rescaling.
    """
    _check_s(p, s)
    n = p.ambient_dim
    pm, pp = p.p_minus, p.p_plus
    lo, hi = _conj_range(p)
    p_star, _ = sobolev_exponents(p)
    fh = normalize(f, p_star)
    info = support_info(fh)
    R = info.radius_R if R is None else float(R)

    def tau_of(est):
        return (n - pp) * est.value / 2.0

    k_rule, k, est_k, delta_k, Mk, pk, _, _ = _close_chain(p, s, family, "alpha", tau_of, "alpha")
    alpha_k = est_k.value
    C2 = c2_constant(n, s)
    G = grad_norm_s(p, s)
    M = max(G**pm, G**pp)
    t = luxemburg_norm(gradient_fd(fh), p).value

    # normalized f_k and its chain quantities
    pk_star, _ = sobolev_exponents(pk)
    fk = dilate(fh, k)
    fkh = normalize(fk, pk_star)
    tk = luxemburg_norm(gradient_fd(fkh), pk).value
    dk = _log_setup(fkh, pk, s)
    qm, qp = dk["q_minus"], dk["q_plus"]
    C1k = c1_constant(dk["C_r"] * dk["diam"] * dk["indicator_norm"] * tk, qm, qp)
    Lk = luxemburg_norm(log_weight(fkh, pk), pk).value

    # radius-only form of the C1 factor, so the constant depends on R, not f
    kappa_R = dk["C_r"] * 2 * k * R * _ball_indicator_bound(k * R, n, lo, hi)
    c_pow = n / pm - 1 - n / (n * pp / (n - pp))
    C1R = c1_constant(kappa_R * k**c_pow * t, qm, qp)
    rho_bound = (C1R + C2) * Mk
    e_star = 1.0 / pp if rho_bound <= 1.0 else 1.0 / pm
    gamma = pm * e_star if G < 1.0 else pp * e_star

    exps = (1.0 / qm, 1.0 / qp)
    k_decay = k ** (-_rescale_power(n, s, pm) * e_star)
    C_R = (
        2.0
        / (alpha_k * (n - pp))
        * 2.0**e_star
        * k_decay
        * max((kappa_R * k**c_pow) ** (e * e_star) for e in exps)
    )
    C0 = 2.0 * pp / (n * alpha_k) * k**c_pow
    t_factor = max(t**e for e in exps) ** e_star
    first = 0.0 if M == 0.0 else C_R * G**gamma * t_factor
    rhs = first + C0 * t
    tol = 8 * REL_TOL * max(1.0, rhs)
    dig = digest(fh, p.field)

    # chain links, each on the rescaled problem
    sub_conk = make_report(
        "sobolev/rescaled-estimate",
        alpha_k / 2.0,
        (C1k * Mk) ** e_star / (n - pp) + pp / n * tk,
        tol,
        constants={"C1_k": C1k, "t_k": tk, "M_k": Mk},
        provenance={"rhs": "(C1_k M_k)^e/(n-p+) + (p+/n) ||grad f_k||/||f_k|| on the rescaled problem"},
        inputs_digest=dig,
    )
    sub_key = make_report(
        "sobolev/key-estimate-rescaled",
        alpha_k,
        Lk / (n - pp) + pp / n * tk,
        tol,
        constants={"log_term_k": Lk},
        provenance={"rhs": "L_k/(n-p+) + (p+/n) t_k with the family alpha estimate for p_k"},
        inputs_digest=dig,
    )
    sub_log = make_report(
        "sobolev/log-bound-rescaled",
        Lk,
        _modular_max((C1k + C2) * Mk, pp, pm),
        tol,
        provenance={"rhs": "max_e ((C1_k + C2) M_k)^e, e in {1/p-, 1/p+}"},
        inputs_digest=dig,
    )
    # small-gradient form with 1/p+ on both terms: alpha - (C2 delta)^(1/p+)/(n-p+) <= (C1 M)^(1/p+) + (p+/n)||grad f||
    sub_small = make_report(
        "sobolev/small-gradient-variant",
        alpha_k - (C2 * delta_k) ** (1.0 / pp) / (n - pp),
        (C1k * Mk) ** (1.0 / pp) + pp / n * tk,
        tol,
        provenance={"form": "small-gradient display with 1/p+ exponents as printed"},
        inputs_digest=dig,
    )
    constants = {
        "alpha_est": alpha_k,
        "alpha_family_size": est_k.family_size,
        "delta": delta_k,
        "k_rule": k_rule,
        "k": k,
        "C1_k": C1k,
        "C2": C2,
        "C_r": dk["C_r"],
        "C_R": C_R if M > 0 else 0.0,
        "C0": C0,
        "gamma": gamma,
        "log_exponent": e_star,
        "grad_p_s": G,
        "M": M,
        "M_k": Mk,
        "grad_f_norm": t,
        "R": R,
        "log_term": luxemburg_norm(log_weight(fh, p), p).value,
    }
    return make_report(
        "sobolev",
        1.0,
        rhs,
        tol,
        constants=constants,
        provenance={
            "lhs": "||f||_p* after normalization",
            "rhs": "C_R ||grad p||_s^gamma max{t^(1/q+), t^(1/q-)}^e + C0 t, t = ||grad f||_p",
            "alpha_est": "family maximum of the alpha ratio for p_k",
            "delta": "min(tau^p+, tau^p-)/C2, tau = (n-p+) alpha/2",
            "k_rule": "max{1, M/delta}",
            "k": "smallest k found with M_k <= delta_k",
            "C_R": "2/(alpha (n-p+)) 2^e k^(-(1-n/s) p- e) max_q (kappa_R k^c)^(e/q)",
            "C0": "2 p+/(n alpha) k^(n/p- - 1 - n/p*+)",
            "kappa_R": "C_r 2kR max{|B_kR|^(1/(p')-), |B_kR|^(1/(p')+)}",
        },
        subchecks=[sub_conk, sub_key, sub_log, sub_small],
        inputs_digest=dig,
    )


# ----------------------------------------------------------------- trace chain


def _boundary_data(f: ScalarField, p: ExponentField) -> tuple:
    """Trace values of f and of p_* on the boundary face, p clipped to [p-, p+]."""
    n = p.ambient_dim
    fb = boundary_restrict(f)
    pb = np.clip(boundary_restrict(p.field).values, p.p_minus, p.p_plus)
    return fb, (n - 1) * pb / (n - pb)


def boundary_norm(f: ScalarField, p: ExponentField) -> float:
    fb, qb = _boundary_data(f, p)
    return luxemburg_array(np.abs(fb.values), qb, fb.grid.cell_volume).value


def boundary_modular(f: ScalarField, p: ExponentField) -> float:
    fb, qb = _boundary_data(f, p)
    return float(np.sum(_pos_power(np.abs(fb.values), qb)) * fb.grid.cell_volume)


def _trace_pair_checks(f, g, p, method, epsilon, K_T, L, t) -> list:
    """Sign check and trace key estimate for normalized f, g on the half-space."""
    n = p.ambient_dim
    pp = p.p_plus
    e = outward_normal(p.grid)
    plan, T, bary = _transport_map(f, g, p, half_space=True, method=method, epsilon=epsilon)
    Te = bary.map_T[bary.source_mask] @ e
    sign_tol = 1e-12
    _, p_low = sobolev_exponents(p)
    I_g = integrate(g.with_values(_pos_power(g.values, p_low.values)))
    M_t = eta_moment(g, p, e)
    W = _moment_factor(M_t, p)
    lhs = boundary_modular(f, p)
    rhs = K_T * W * (L / (n - pp) + pp / n * t) - n * I_g

    # midpoint form: int g^{p_*} <= -(1/n) int grad(F^{1-1/n}).(T - e) - (1/n) int_bdry F^{1-1/n}
    dF = grad_F_power(f, p)
    mask = np.zeros(f.grid.shape, bool).ravel()
    mask[bary.node_index[bary.source_mask]] = True
    shifted = T.values - np.where(mask.reshape(f.grid.shape)[..., None], e, 0.0)
    mid_rhs = -integrate(f.with_values(np.sum(dF.values * shifted, axis=-1))) / n - lhs / n
    gap = plan.dual_gap + (epsilon if method == "entropic" else 0.0)
    tol = 8 * REL_TOL * max(1.0, abs(rhs)) + gap
    return [
        make_report(
            "trace/boundary-sign",
            float(Te.max()) if len(Te) else 0.0,
            0.0,
            sign_tol,
            constants={"mapped_nodes": float(len(Te))},
            provenance={"lhs": "max over mapped nodes of T(x).e"},
        ),
        make_report(
            "trace/midpoint",
            I_g,
            mid_rhs,
            tol,
            constants={"ot_gap": gap},
            provenance={"rhs": "-(1/n) int grad(F^{1-1/n}).(T-e) - (1/n) int_bdry f^{p_*}, sign term dropped"},
        ),
        make_report(
            "trace/key-estimate",
            lhs,
            rhs,
            tol,
            constants={"moment_factor_shifted": W, "integral_g_plow": I_g, "K_T": K_T},
            provenance={"rhs": "K_T W~(g) [L/(n-p+) + (p+/n) ||grad f||_p] - n int g^{p_*}"},
        ),
    ]


def trace_verify(
    f: ScalarField,
    p: ExponentField,
    s: float,
    family: Family,
    companion: Optional[ScalarField] = None,
    R: Optional[float] = None,
    method: str = "exact",
    epsilon: float = 1e-2,
) -> InequalityReport:
    """Trace inequality ||f||_{p_*, boundary} <= C ||grad f||_p on the half-space."""
    grid = p.grid
    if grid.half_space_axis is None or f.grid.half_space_axis is None:
        raise NotAHalfSpace("trace_verify needs a half-space grid")
    _check_s(p, s)
    n = p.ambient_dim
    pm, pp = p.p_minus, p.p_plus
    lo, hi = _conj_range(p)
    if pp >= n:
        raise InvalidArgument("trace chain needs p+ < n")
    K_T = 2.0 * n * (n - 1) / (n - pp)
    p_star, p_low = sobolev_exponents(p)
    fh = normalize(f, p_star)
    info = support_info(fh)
    R = info.radius_R if R is None else float(R)
    C2log = c2_constant(n, s)

    def tau_of(est):
        return (n - pp) * est.value / (2.0 * K_T)

    k_rule, k, est_k, delta_k, Mk, pk, members, pw = _close_chain(p, s, family, "beta", tau_of, "beta")
    beta_k = est_k.value
    W_best = _ratio(members[est_k.best], pw, "beta")[3]
    B = W_best * beta_k / 2.0

    # branches of the C1 term of the log lemma, radius-only form
    kappa_R = c_r_minus(s * pm / (s - pm)) * 2 * k * R * _ball_indicator_bound(k * R, n, lo, hi)
    qm, qp = s / (s - pm), s / (s - pp)
    C2h = K_T * W_best * pp / n
    ps_lo_m = (n - 1) * pm / (n - pm)
    ps_lo_p = (n - 1) * pp / (n - pp)
    H = {}
    branches = []
    for e in (1.0 / pm, 1.0 / pp):
        for e2 in (1.0 / qm, 1.0 / qp):
            c_b = K_T * W_best / (n - pp) * (2.0 * Mk) ** e * kappa_R ** (e * e2)
            branches.append((c_b, e * e2))
    for label, q in (("minus", ps_lo_m), ("plus", ps_lo_p)):
        H[label] = max(h_bound(c_b if Mk > 0 else 0.0, C2h, B, a, q) for c_b, a in branches)
    if H["minus"] <= 0 or H["plus"] <= 0:
        C_k = 0.0
    else:
        C_k = max(H["minus"] ** (1.0 / ps_lo_m), H["plus"] ** (1.0 / ps_lo_p))
    scale = k ** (n / pm - 1 - (n - 1) / ps_lo_p)
    C = C_k * scale

    lhs = boundary_norm(f, p)
    grad_f = luxemburg_norm(gradient_fd(f), p).value
    rhs = C * grad_f
    tol = 8 * REL_TOL * max(1.0, rhs)
    dig = digest(f, p.field)

    # the normalized inequality before the h(t) step, on the rescaled problem
    pk_star, _ = sobolev_exponents(pk)
    fkh = normalize(dilate(fh, k), pk_star)
    tk = luxemburg_norm(gradient_fd(fkh), pk).value
    rho_k = boundary_modular(fkh, pk)
    casi_rhs = (max(c_b * tk**a for c_b, a in branches) if Mk > 0 else 0.0) + C2h * tk - B
    subs = [
        make_report(
            "trace/normalized-estimate",
            rho_k,
            casi_rhs,
            8 * REL_TOL * max(1.0, abs(casi_rhs)),
            constants={"B": B, "t_k": tk},
            provenance={"rhs": "max_b c_b t^a_b + C2h t - B on the rescaled problem"},
            inputs_digest=dig,
        ),
        make_report(
            "trace/h-bound",
            rho_k,
            max(H["minus"] * tk**ps_lo_m, H["plus"] * tk**ps_lo_p),
            8 * REL_TOL * max(1.0, rho_k),
            provenance={"rhs": "sup h times t^q for the matching q"},
            inputs_digest=dig,
        ),
    ]
    if companion is not None:
        gh = normalize(companion, p_star)
        L = luxemburg_norm(log_weight(fh, p), p).value
        t = luxemburg_norm(gradient_fd(fh), p).value
        subs += _trace_pair_checks(fh, gh, p, method, epsilon, K_T, L, t)
    return make_report(
        "trace",
        lhs,
        rhs,
        tol,
        constants={
            "beta_est": beta_k,
            "beta_family_size": est_k.family_size,
            "delta": delta_k,
            "k_rule": k_rule,
            "k": k,
            "B": B,
            "K_T": K_T,
            "C2h": C2h,
            "C2": C2log,
            "H_minus": H["minus"],
            "H_plus": H["plus"],
            "C_k": C_k,
            "C": C,
            "M_k": Mk,
            "grad_p_s": grad_norm_s(p, s),
            "grad_f_norm": grad_f,
            "R": R,
        },
        provenance={
            "lhs": "||f||_{p_*} on the boundary face",
            "rhs": "C ||grad f||_p on the half-space",
            "B": "W~(g*) beta/2 for the best family member g*",
            "K_T": "2 n (n-1)/(n-p+)",
            "H": "max over the four C1 branches of sup_t h(t), q = (p_*)_- and (p_*)_+",
            "C": "max{H_-^(1/(p_*)_-), H_+^(1/(p_*)_+)} k^(n/p- - 1 - (n-1)/(p_*)_+)",
            "delta": "min(tau^p+, tau^p-)/C2, tau = (n-p+) beta/(2 K_T)",
        },
        subchecks=subs,
        inputs_digest=dig,
    )
