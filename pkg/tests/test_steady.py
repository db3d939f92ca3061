import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stemflow import params, steady
from stemflow.errors import NoNonzeroSteadyState


def bisect_companion(b, rho_d, iters=200):
    """Plain-bisection oracle for the companion rate, independent of scipy."""
    target = b * math.exp(-b / rho_d)
    f = lambda z: z * math.exp(-z / rho_d) - target
    if b == rho_d:
        return b
    if b > rho_d:
        lo, hi = 0.0, rho_d
    else:
        lo, hi = rho_d, max(4.0 * rho_d, 8.0 * b)
        while f(hi) > 0:
            hi *= 2.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if (f(mid) > 0) == (f(lo) > 0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_companion_rate_fixed_point():
    assert steady.companion_rate(0.1884, 0.1884) == 0.1884


def test_companion_rate_reference_value():
    # pinned from the plain-bisection oracle at the nominal parameters
    oracle = bisect_companion(0.42, 0.1884)
    val = steady.companion_rate(0.42, 0.1884)
    assert val == pytest.approx(oracle, abs=1e-12)
    assert val == pytest.approx(0.063210227, abs=1e-8)
    F = lambda z: z * math.exp(-z / 0.1884)
    assert abs(F(val) - F(0.42)) < 1e-12


@settings(max_examples=100)
@given(st.floats(min_value=0.01, max_value=3.0),
       st.floats(min_value=0.02, max_value=1.0))
def test_companion_rate_defining_identity(b, rho_d):
    bs = steady.companion_rate(b, rho_d)
    F = lambda z: z * math.exp(-z / rho_d)
    assert abs(F(bs) - F(b)) < 1e-12
    # opposite side of the maximum at rho_d
    if b > rho_d:
        assert bs <= rho_d
    elif b < rho_d:
        assert bs >= rho_d


@settings(max_examples=100)
@given(st.floats(min_value=0.01, max_value=3.0),
       st.floats(min_value=0.02, max_value=1.0))
def test_companion_rate_involution(b, rho_d):
    bs = steady.companion_rate(b, rho_d)
    back = steady.companion_rate(bs, rho_d)
    assert back == pytest.approx(b, rel=1e-10, abs=1e-12)


def test_existence_midpoint_variant(p_default):
    # alpha(0) = kappa e^{-gamma/2} f_alpha(0) ~ 0.2898 > b* ~ 0.0632
    assert p_default.alpha_mid(0.0) == pytest.approx(0.2898, abs=5e-5)
    assert steady.exists_nonzero_approx4(p_default)
    # boundary case alpha(0) == b* is excluded (strict inequality)
    rho_crit = 0.3508  # alpha(0) == b* near this advection rate at b = 0.42
    p_border = params.with_rates(p_default, rho_d=rho_crit)
    bs = steady.companion_rate(p_border.b, p_border.rho_d)
    assert not (p_border.alpha_mid(0.0) > bs) or steady.exists_nonzero_approx4(p_border)
    # enormous growth rate makes b* tiny: existence for any positive alpha(0)
    assert steady.exists_nonzero_approx4(params.with_rates(p_default, b=50.0))


def test_existence_condition_constant_profile_reduces_to_companion(p_default):
    # alpha(y, 0) == b makes H(0) = 1, so existence iff b > rho_d
    for b, rho_d in ((0.4, 0.3), (0.3, 0.4)):
        margin = steady.existence_margin_approx3(
            lambda x: b, lambda x: b * np.asarray(x, dtype=float), b, rho_d)
        assert (margin > 0) == (b > rho_d)
    # generic constant profile: existence iff alpha > b*
    rng = np.random.default_rng(7)
    for _ in range(25):
        alpha0 = float(rng.uniform(0.01, 1.0))
        b = float(rng.uniform(0.05, 1.2))
        rho_d = float(rng.uniform(0.05, 0.8))
        margin = steady.existence_margin_approx3(
            lambda x: alpha0, lambda x: alpha0 * np.asarray(x, dtype=float), b, rho_d)
        bs = steady.companion_rate(b, rho_d)
        if abs(alpha0 - bs) > 1e-9:
            assert (margin > 0) == (alpha0 > bs)


def test_existence_x_dependent_vs_dense_quadrature_oracle(p_default):
    # direct trapezoid oracle on a million-point grid
    xs = np.linspace(0.0, 1.0, 1_000_001)
    alpha = p_default.alpha_g1(xs, 0.0)
    inner = np.concatenate([[0.0], np.cumsum((alpha[1:] + alpha[:-1]) / 2 * np.diff(xs))])
    integrand = np.exp(((inner[-1] - inner) - p_default.b * (1.0 - xs)) / p_default.rho_d)
    h0 = np.trapezoid(integrand, xs)
    oracle_exists = h0 > p_default.rho_d / p_default.b
    assert steady.exists_nonzero_approx3(p_default) == oracle_exists
    margin = steady.existence_margin_approx3(
        lambda x: p_default.alpha_g1(x, 0.0),
        lambda x: p_default.alpha_g1_antiderivative(x, 0.0),
        p_default.b, p_default.rho_d)
    assert margin == pytest.approx(h0 - p_default.rho_d / p_default.b, abs=1e-8)


def test_solve_steady_midpoint_relations(p_default):
    st4 = steady.solve_steady(p_default, steady.APPROX4)
    bs = st4.b_star
    assert p_default.alpha_mid(st4.a_tilde) == pytest.approx(bs, abs=1e-12)
    # population balance and boundary identities
    assert st4.a_tilde * p_default.omega0(st4.omega_bar) == pytest.approx(
        bs * st4.omega_bar, rel=1e-10)
    assert st4.omega0 == pytest.approx(bs * st4.omega_bar / p_default.rho_d, rel=1e-10)
    for key, value in steady.steady_residuals(st4).items():
        assert value < 1e-10, key
    # profile is the stated exponential
    xs = np.linspace(0, 1, 17)
    expected = st4.omega0 * np.exp((p_default.b - bs) * xs / p_default.rho_d)
    assert np.allclose(st4.profile(xs), expected, rtol=1e-12)


def test_solve_steady_x_dependent_relations(p_default):
    st3 = steady.solve_steady(p_default, steady.APPROX3)
    for key, value in steady.steady_residuals(st3).items():
        assert value < 1e-8, key
    assert st3.omega0 == pytest.approx(
        p_default.omega0(st3.omega_bar) * st3.a_tilde / p_default.rho_d, rel=1e-10)


def test_population_balance_closed_form():
    # constant activation: Omega = A alpha_const / return_rate in closed form
    omega_const = 0.37
    out = steady.solve_population_balance(2.0, 0.1, lambda om: omega_const)
    assert out == pytest.approx(2.0 * omega_const / 0.1, rel=1e-12)


def test_constant_growth_rate_case(p_default):
    # b = rho_d forces alpha(A~) = b and a flat profile
    p = params.with_rates(p_default, b=p_default.rho_d)
    st4 = steady.solve_steady(p, steady.APPROX4)
    assert st4.b_star == pytest.approx(p.b, rel=1e-12)
    xs = np.linspace(0, 1, 9)
    assert np.allclose(st4.profile(xs), st4.omega0, rtol=1e-12)
    assert st4.omega_bar == pytest.approx(st4.omega0, rel=1e-12)


def test_no_steady_state_raises(p_default):
    p = params.with_rates(p_default, rho_d=0.6)  # b* above alpha(0)
    assert not steady.exists_nonzero_approx4(p)
    with pytest.raises(NoNonzeroSteadyState):
        steady.solve_steady(p, steady.APPROX4)


def test_unique_bracket_by_monotone_sampling(p_default):
    st4 = steady.solve_steady(p_default, steady.APPROX4)
    grid = np.linspace(0.0, 4.0 * st4.a_tilde, 200)
    gap = p_default.alpha_mid(grid) - st4.b_star
    signs = np.sign(gap)
    # exactly one sign change on the sampled bracket
    assert int(np.sum(signs[:-1] != signs[1:])) == 1


def test_profile_cell_averages_match_quadrature(p_default):
    st4 = steady.solve_steady(p_default, steady.APPROX4)
    edges = np.linspace(0.0, 1.0, 33)
    avg = st4.profile_cell_averages(edges)
    from scipy.integrate import quad
    for i in (0, 13, 31):
        ref, _ = quad(lambda t: float(st4.profile(t)), edges[i], edges[i + 1])
        assert avg[i] == pytest.approx(ref / (edges[i + 1] - edges[i]), rel=1e-12)
