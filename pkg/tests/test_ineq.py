import math

import numpy as np
import pytest
from helpers import bump, const_exponent, family, half, pair, sine_exponent, square

from varsobolev.errors import (
    EmptyFamily,
    InvalidArgument,
    InvalidIntegrabilityExponent,
    NormalizationViolation,
    NotAHalfSpace,
    UnboundedH,
)
from varsobolev.gridlab import ScalarField, build_grid
from varsobolev.ineq import (
    alpha_beta_estimate,
    c2_constant,
    c_r_minus,
    eta_weight,
    h_bound,
    key_estimate_verify,
    log_lemma_verify,
    normalized_family,
    scaling_verify,
    sobolev_verify,
    trace_verify,
)
from varsobolev.reports import make_report
from varsobolev.varexp import constant_exponent, make_exponent, normalize, sobolev_exponents

# ------------------------------------------------------------------ h bound


def test_h_bound_quarter():
    # h(t) = (t - 1)/t^2 peaks at t = 2 with value 1/4
    assert abs(h_bound(0.0, 1.0, 1.0, 0.5, 2.0) - 0.25) < 1e-8


def test_h_bound_nonpositive_without_growth():
    assert h_bound(0.0, 0.0, 1.0, 0.5, 2.0) <= 0.0


def test_h_bound_rejects_nonpositive_b():
    for B in (0.0, -1.0):
        with pytest.raises(UnboundedH):
            h_bound(1.0, 1.0, B, 0.5, 2.0)


def _dense_h(C1, C2, B, a, q):
    t = np.exp(np.linspace(math.log(1e-8), math.log(1e8), 2_000_001))
    return np.max((C1 * t**a + C2 * t - B) * t**-q)


@pytest.mark.parametrize("C1, C2, B, a, q", [(2.0, 0.5, 3.0, 0.7, 1.6), (0.3, 4.0, 0.2, 0.4, 2.5), (5.0, 0.0, 1.0, 0.9, 1.2)])
def test_h_bound_dense_oracle(C1, C2, B, a, q):
    got = h_bound(C1, C2, B, a, q)
    oracle = _dense_h(C1, C2, B, a, q)
    assert got >= oracle - 1e-12 * abs(oracle)
    assert abs(got - oracle) <= 1e-8 * abs(oracle)


def test_h_bound_stable_under_grid_doubling():
    a = h_bound(2.0, 0.5, 3.0, 0.7, 1.6)
    b = h_bound(2.0, 0.5, 3.0, 0.7, 1.6, n_grid=16001)
    assert abs(a - b) <= 1e-8 * abs(a)


# ------------------------------------------------------------------ constants


def test_c2_value():
    assert abs(c2_constant(2, 4.0) - 4 / math.e) < 1e-12


def test_c_r_minus_bounded_by_p_minus_free_value():
    for s in (2.5, 4.0, 9.0):
        cap = (s / math.e) ** (s / (s - 1))
        assert c_r_minus(s / (s - 1)) == pytest.approx(cap, rel=1e-13)
        rs = [s * pm / (s - pm) for pm in np.linspace(1.01, 2.0, 20) if pm < s]
        vals = [c_r_minus(r) for r in rs]
        assert all(v <= cap * (1 + 1e-13) for v in vals)
        assert all(np.diff(vals) < 0)


def test_eta_weight_examples():
    g = build_grid(1, [0], [1], [4])
    # conjugate range [2, 4] comes from p in [4/3, 2]
    p = make_exponent(ScalarField(g, np.array([4 / 3, 1.5, 1.8, 2.0])), 3)
    pts = np.array([[1.0, 0, 0], [0, 2.0, 0], [0.3, 0.4, 0]])
    np.testing.assert_allclose(eta_weight(pts, p), [1.0, 16.0, 0.25], rtol=1e-12)


# ------------------------------------------------------------------ alpha


def _alpha_oracle(g_vals, grid, q, n=2):
    # constant exponent: eta = |x|^{q'}, ratio = (n-q)/(2(n-1)) int g^{q_*} / (int eta g^{q*})^{1/q'}
    qs, ql, qc = n * q / (n - q), (n - 1) * q / (n - q), q / (q - 1)
    v = g_vals / (np.sum(g_vals**qs) * grid.cell_volume) ** (1 / qs)
    r = np.sqrt(sum(x**2 for x in grid.coordinates()))
    I = np.sum(v**ql) * grid.cell_volume
    M = np.sum(r**qc * v**qs) * grid.cell_volume
    return (n - q) / (2 * (n - 1)) * I / M ** (1 / qc)


def test_alpha_estimate_constant_p_oracle():
    fine, coarse = square(512), square(128)
    pc = const_exponent(coarse, 1.5)
    est = alpha_beta_estimate(normalized_family(family(coarse), pc), pc)
    oracle = max(_alpha_oracle(g.values, fine, 1.5) for g in family(fine))
    assert abs(est.value - oracle) / oracle < 1e-3
    assert est.value == max(est.ratios) > 0


def test_alpha_monotone_under_inclusion():
    grid = square(48)
    p = sine_exponent(grid)
    fam = normalized_family(family(grid), p)
    small = alpha_beta_estimate(fam[:3], p).value
    assert small <= alpha_beta_estimate(fam, p).value


def test_alpha_errors():
    grid = square(32)
    p = const_exponent(grid)
    with pytest.raises(EmptyFamily):
        alpha_beta_estimate([], p)
    with pytest.raises(NormalizationViolation):
        alpha_beta_estimate([bump(grid, [0, 0], 0.5) * 3.0], p)
    ps, _ = sobolev_exponents(p)
    with pytest.raises(NotAHalfSpace):
        alpha_beta_estimate([normalize(bump(grid, [0, 0], 0.5), ps)], p, "beta")


# ------------------------------------------------------------------ key estimate


def test_key_estimate_constant_p():
    grid = square(64)
    f, g = pair(grid, 0)
    r = key_estimate_verify(f, g, const_exponent(grid))
    assert r.passed
    assert r.constants["log_term"] == 0.0
    mid = next(s for s in r.subchecks if s.name.endswith("midpoint"))
    assert mid.margin > 0


@pytest.mark.parametrize("i", range(5))
def test_key_estimate_variable_p(i):
    grid = square(64)
    f, g = pair(grid, i)
    r = key_estimate_verify(f, g, sine_exponent(grid))
    assert r.passed, [(s.name, s.margin, s.tolerance) for s in r.subchecks]
    assert all(s.margin > 0 for s in r.subchecks)


def test_key_estimate_self_pair():
    grid = square(48)
    f, _ = pair(grid, 1)
    # T is the identity, so integration by parts makes both sides equal
    r = key_estimate_verify(f, f, sine_exponent(grid))
    mid = r.subchecks[0]
    assert mid.passed
    assert abs(mid.margin) < 1e-3 * mid.lhs


def test_tolerance_monotone():
    # raising the tolerance never turns a pass into a fail
    for margin in (-1.0, -1e-3, 0.0, 2.0):
        flags = [make_report("x", 1.0, 1.0 + margin, tol).passed for tol in (0, 1e-4, 1e-2, 10)]
        assert flags == sorted(flags)


# ------------------------------------------------------------------ log lemma


def test_log_lemma_constant_p():
    grid = square(48)
    r = log_lemma_verify(bump(grid, [0, 0], [0.7, 0.5]), const_exponent(grid), 4.0)
    assert r.lhs == 0.0 and r.passed


def test_log_lemma_linear_sweep():
    grid = square(64)
    X, _ = grid.coordinates()
    f = bump(grid, [0.1, 0], [0.7, 0.5])
    margins = []
    for slope in (0.05, 0.1, 0.2):
        p = make_exponent(ScalarField(grid, 1.5 + slope * X), 2)
        r = log_lemma_verify(f, p, 4.0)
        assert r.passed and all(s.passed for s in r.subchecks)
        assert r.constants["split_low"] + r.constants["split_high"] == pytest.approx(r.lhs, rel=1e-14)
        margins.append(r.margin)
    assert margins[0] > 0
    assert r.constants["C2"] == pytest.approx(4 / math.e, rel=1e-14)


def test_log_lemma_needs_s_above_n():
    grid = square(16)
    with pytest.raises(InvalidIntegrabilityExponent):
        log_lemma_verify(bump(grid, [0, 0], 0.5), const_exponent(grid), 2.0)


# ------------------------------------------------------------------ scaling


def test_scaling_identity():
    grid = square(48)
    rep = scaling_verify(bump(grid, [0, 0], [0.6, 0.4]), sine_exponent(grid), 1.0, 4.0)
    assert rep.passed
    for sw in rep.sandwiches:
        assert sw.lower == pytest.approx(sw.measured, rel=1e-15)
        assert sw.upper == pytest.approx(sw.measured, rel=1e-15)


def test_scaling_constant_exponent_collapses():
    grid = square(48)
    f = bump(grid, [0, 0], [0.6, 0.4])
    rep = scaling_verify(f, const_exponent(grid), 4.0, 4.0)
    s0 = rep.sandwiches[0]
    assert s0.lower == pytest.approx(s0.upper, rel=1e-15)
    assert s0.measured == pytest.approx(s0.lower, rel=1e-9)


@pytest.mark.parametrize("k", [2.0, 4.0, 8.0])
def test_scaling_variable_exponent(k):
    grid = square(48)
    rep = scaling_verify(bump(grid, [0.1, 0], [0.6, 0.4]), sine_exponent(grid), k, 4.0)
    assert rep.passed


def test_scaling_rejects_small_k():
    grid = square(16)
    with pytest.raises(InvalidArgument):
        scaling_verify(bump(grid, [0, 0], 0.5), const_exponent(grid), 0.5, 4.0)


# ------------------------------------------------------------------ Sobolev


def test_sobolev_constant_p():
    grid = square(64)
    f, _ = pair(grid, 0)
    r = sobolev_verify(f, const_exponent(grid), 4.0, family(grid))
    assert r.passed
    assert r.constants["grad_p_s"] == 0.0 and r.constants["C_R"] == 0.0
    assert r.constants["k"] == 1.0


def test_sobolev_small_gradient_needs_no_rescaling():
    grid = square(64)
    f, _ = pair(grid, 2)
    r = sobolev_verify(f, sine_exponent(grid, amp=0.02), 4.0, family(grid))
    assert r.passed
    assert r.constants["M"] <= r.constants["delta"]
    assert r.constants["k"] == r.constants["k_rule"] == 1.0


@pytest.mark.parametrize("i", range(5))
def test_sobolev_variable_p(i):
    grid = square(64)
    f, _ = pair(grid, i)
    r = sobolev_verify(f, sine_exponent(grid), 4.0, family(grid))
    assert r.passed
    assert all(s.margin > 0 for s in r.subchecks)
    assert r.constants["k"] >= r.constants["k_rule"] >= 1.0


# ------------------------------------------------------------------ trace


def _half_family(grid):
    return [bump(grid, [0.0, c], [0.6, 0.45]) for c in (-0.3, 0.0, 0.3)] + [bump(grid, [0.1, 0.0], [0.5, 0.7])]


def _half_exponent(grid, amp=0.2):
    X, Y = grid.coordinates()
    return make_exponent(ScalarField(grid, 1.5 + amp * np.sin(2 * X + 0.5) * np.cos(1.5 * Y)), 2)


def test_trace_boundary_centered_bump():
    grid = half()
    fam = _half_family(grid)
    f = bump(grid, [0.0, 0.1], [0.5, 0.7])
    r = trace_verify(f, _half_exponent(grid), 4.0, fam, companion=fam[1])
    assert r.passed, [(s.name, s.margin) for s in r.subchecks]
    sign = next(s for s in r.subchecks if s.name.endswith("boundary-sign"))
    assert sign.lhs <= 0.0


def test_trace_constant_p():
    grid = half()
    fam = _half_family(grid)
    r = trace_verify(bump(grid, [0.0, 0.0], [0.6, 0.6]), constant_exponent(grid, 1.5, 2), 4.0, fam)
    assert r.passed


def test_trace_zero_on_face():
    grid = half()
    f = bump(grid, [0.5, 0.0], [0.4, 0.4])
    r = trace_verify(f, _half_exponent(grid), 4.0, _half_family(grid))
    assert r.lhs == pytest.approx(0.0, abs=1e-300)
    assert r.passed


def test_trace_needs_half_space():
    grid = square(32)
    with pytest.raises(NotAHalfSpace):
        trace_verify(bump(grid, [0, 0], 0.5), const_exponent(grid), 4.0, family(grid))
