"""Steady states of the cycle-averaged single-field systems.

Variant 3 keeps the maturity-dependent return rate alpha_g1(x, A); variant 4
freezes it at the midpoint maturity.  In both cases a nonzero steady state
(A~, Omega~(x)) exists iff the return flux at zero population beats the
companion growth rate b*, where b* is paired with b through

    F(z) = z exp(-z / rho_d),   F(b*) = F(b),

the two values sitting on opposite sides of the maximum at z = rho_d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import NoNonzeroSteadyState, ParameterError, QuadratureError
from .params import DEFAULT_MIDPOINT, RescaledParameters

APPROX3 = 3
APPROX4 = 4

_QUAD_OPTS = dict(epsabs=0.0, epsrel=1e-12, limit=200)
_BRACKET_CAP = 1e12


def companion_rate(b: float, rho_d: float) -> float:
    """b* such that F(b*) = F(b) with F(z) = z exp(-z/rho_d), b* != b unless b = rho_d."""
    if b <= 0.0 or rho_d <= 0.0:
        raise ParameterError("b and rho_d must be positive")
    if b == rho_d:
        return b
    target = b * math.exp(-b / rho_d)

    def gap(z):
        return z * math.exp(-z / rho_d) - target

    if b > rho_d:
        # companion lies below the maximum
        lo = 0.9 * target  # F(lo) < lo*1 <= 0.9*target < target
        return brentq(gap, lo, rho_d, xtol=1e-300, rtol=1e-15)
    hi = 2.0 * rho_d
    while gap(hi) > 0.0:
        hi *= 2.0
        if hi > 1e9:
            raise ParameterError(f"failed to bracket companion rate for b={b}, rho_d={rho_d}")
    return brentq(gap, rho_d, hi, xtol=1e-300, rtol=1e-15)


# Backwards-friendly alias matching the operation name used elsewhere.
b_star = companion_rate


def _growth_exponent(params: RescaledParameters, a_bar, x):
    """u(x) = (b x - integral of alpha_g1 up to x) / rho_d for variant 3."""
    x = np.asarray(x, dtype=float)
    return (params.b * x - params.alpha_g1_antiderivative(x, a_bar)) / params.rho_d


def existence_margin_approx3(alpha0, alpha0_antiderivative, b: float, rho_d: float):
    """H(0) - rho_d/b for an arbitrary zero-population rate profile alpha0(x).

    H(A) = int_0^1 exp( int_x^1 (alpha(y,A) - b)/rho_d dy ) dx; the profile is
    supplied together with its antiderivative I(x) = int_0^x alpha0.
    """
    i_full = float(alpha0_antiderivative(1.0))

    def integrand(x):
        return math.exp(((i_full - float(alpha0_antiderivative(x)))
                         - b * (1.0 - x)) / rho_d)

    value, err = quad(integrand, 0.0, 1.0, **_QUAD_OPTS)
    if not math.isfinite(value) or err > 1e-8 * max(1.0, abs(value)):
        raise QuadratureError(f"existence integral did not converge (err={err})")
    return value - rho_d / b


def _h_of_a(params: RescaledParameters, a_bar: float) -> float:
    u1 = float(_growth_exponent(params, a_bar, 1.0))

    def integrand(x):
        # int_x^1 (alpha - b)/rho_d dy == u(x) - u(1)
        return math.exp(float(_growth_exponent(params, a_bar, x)) - u1)

    value, err = quad(integrand, 0.0, 1.0, **_QUAD_OPTS)
    if not math.isfinite(value) or err > 1e-8 * max(1.0, abs(value)):
        raise QuadratureError(f"H integral did not converge (err={err})")
    return value


def exists_nonzero_approx3(params: RescaledParameters) -> bool:
    """Nonzero steady state of the x-dependent reduced system exists?"""
    return _h_of_a(params, 0.0) > params.rho_d / params.b


def exists_nonzero_approx4(params: RescaledParameters,
                           midpoint: float = DEFAULT_MIDPOINT) -> bool:
    """Nonzero steady state of the midpoint-frozen system exists?"""
    return params.alpha_mid(0.0, midpoint) > companion_rate(params.b, params.rho_d)


def _grow_bracket(fn, start: float = 1.0):
    """Geometric upper-bracket growth for a decreasing fn with fn(0) > 0."""
    hi = start
    while fn(hi) > 0.0:
        hi *= 2.0
        if hi > _BRACKET_CAP:
            raise NoNonzeroSteadyState(
                "transfer rate never drops below the growth threshold "
                f"(bracket exceeded {_BRACKET_CAP:g})")
    return hi


def solve_population_balance(a_tilde: float, return_flux: float, omega_fn) -> float:
    """Solve a_tilde * omega(Omega) = return_flux * Omega for Omega > 0.

    omega_fn must be positive and nonincreasing; return_flux > 0.
    """
    if a_tilde <= 0.0 or return_flux <= 0.0:
        raise ParameterError("population balance needs positive rates")

    def gap(om):
        return a_tilde * omega_fn(om) - return_flux * om

    hi = _grow_bracket(gap)
    return brentq(gap, 0.0, hi, xtol=1e-300, rtol=1e-15)


@dataclass(frozen=True)
class SteadyState:
    """Nonzero steady state of a reduced system (populations in model units)."""

    variant: int
    a_tilde: float
    omega_bar: float
    omega0: float              # boundary density of the proliferating field
    b_star: float
    exists: bool
    params: RescaledParameters
    midpoint: float = DEFAULT_MIDPOINT

    def profile(self, x):
        """Steady proliferating-cell density at maturity x (vectorized)."""
        x = np.asarray(x, dtype=float)
        if self.variant == APPROX4:
            s = (self.params.b - self.b_star) / self.params.rho_d
            return self.omega0 * np.exp(s * x)
        return self.omega0 * np.exp(_growth_exponent(self.params, self.a_tilde, x))

    def profile_cell_averages(self, edges: np.ndarray) -> np.ndarray:
        """Exact cell averages of the profile over consecutive edge intervals."""
        edges = np.asarray(edges, dtype=float)
        widths = np.diff(edges)
        if self.variant == APPROX4:
            s = (self.params.b - self.b_star) / self.params.rho_d
            if abs(s) < 1e-300:
                return np.full(widths.size, self.omega0)
            anti = self.omega0 * np.exp(s * edges) / s
            return np.diff(anti) / widths
        vals = np.empty(widths.size)
        for i in range(widths.size):
            vals[i], _ = quad(lambda t: float(self.profile(t)),
                              edges[i], edges[i + 1], epsabs=0.0, epsrel=1e-12)
        return vals / widths

    def alpha_at_steady(self) -> float:
        if self.variant == APPROX4:
            return self.params.alpha_mid(self.a_tilde, self.midpoint)
        raise ParameterError("alpha at steady state is x-dependent for variant 3")


def solve_steady(params: RescaledParameters, variant: int = APPROX4,
                 midpoint: float = DEFAULT_MIDPOINT) -> SteadyState:
    """Compute the nonzero steady state, or raise NoNonzeroSteadyState."""
    bstar = companion_rate(params.b, params.rho_d)
    if variant == APPROX4:
        if params.alpha_mid(0.0, midpoint) <= bstar:
            raise NoNonzeroSteadyState(
                f"alpha(0) = {params.alpha_mid(0.0, midpoint):.6g} <= "
                f"b* = {bstar:.6g}: zero is the only steady state")
        # alpha_mid is strictly decreasing: unique root of alpha_mid(A) = b*.
        gap = lambda a: params.alpha_mid(a, midpoint) - bstar
        hi = _grow_bracket(gap)
        a_tilde = brentq(gap, 0.0, hi, xtol=1e-300, rtol=1e-15)
        omega_bar = solve_population_balance(a_tilde, bstar, params.omega0)
        s = (params.b - bstar) / params.rho_d
        omega0 = omega_bar * (s / math.expm1(s) if s != 0.0 else 1.0)
        return SteadyState(variant=APPROX4, a_tilde=a_tilde, omega_bar=omega_bar,
                           omega0=omega0, b_star=bstar, exists=True, params=params,
                           midpoint=midpoint)
    if variant == APPROX3:
        target = params.rho_d / params.b
        if _h_of_a(params, 0.0) <= target:
            raise NoNonzeroSteadyState(
                "integral existence condition fails: zero is the only steady state")
        gap = lambda a: _h_of_a(params, a) - target
        hi = _grow_bracket(gap)
        a_tilde = brentq(gap, 0.0, hi, xtol=1e-300, rtol=1e-14)
        profile_mass, _ = quad(
            lambda x: math.exp(float(_growth_exponent(params, a_tilde, x))),
            0.0, 1.0, **_QUAD_OPTS)
        # boundary relation Omega(0) = omega(Omega_bar) A~ / rho_d combined with
        # Omega_bar = Omega(0) * profile_mass
        gap_om = lambda om: om - a_tilde * params.omega0(om) * profile_mass / params.rho_d
        hi_om = _grow_bracket(lambda om: -gap_om(om))
        omega_bar = brentq(gap_om, 0.0, hi_om, xtol=1e-300, rtol=1e-15)
        omega0 = params.omega0(omega_bar) * a_tilde / params.rho_d
        return SteadyState(variant=APPROX3, a_tilde=a_tilde, omega_bar=omega_bar,
                           omega0=omega0, b_star=bstar, exists=True, params=params)
    raise ParameterError(f"steady states are defined for variants 3 and 4, got {variant}")


def steady_residuals(state: SteadyState) -> dict[str, float]:
    """Continuum residuals of the defining steady relations (should be ~0)."""
    p = state.params
    xs = np.linspace(0.0, 1.0, 513)
    prof = state.profile(xs)
    if state.variant == APPROX4:
        alpha_val = p.alpha_mid(state.a_tilde, state.midpoint)
        alpha_arr = np.full_like(xs, alpha_val)
        return_flux = alpha_val * state.omega_bar
        # profile slope was built from b*, the equation uses alpha(A~)
        dprof = (p.b - state.b_star) / p.rho_d * prof
    else:
        alpha_arr = p.alpha_g1(xs, state.a_tilde)
        return_flux, _ = quad(
            lambda t: float(p.alpha_g1(t, state.a_tilde) * state.profile(t)),
            0.0, 1.0, **_QUAD_OPTS)
        dprof = (p.b - alpha_arr) / p.rho_d * prof
    transport = np.max(np.abs(p.rho_d * dprof - (p.b - alpha_arr) * prof)) / max(np.max(prof), 1e-300)
    reservoir = abs(-p.omega0(state.omega_bar) * state.a_tilde + return_flux) \
        / max(abs(return_flux), 1e-300)
    boundary = abs(state.omega0 - p.omega0(state.omega_bar) * state.a_tilde / p.rho_d) \
        / max(state.omega0, 1e-300)
    mass, _ = quad(lambda t: float(state.profile(t)), 0.0, 1.0, **_QUAD_OPTS)
    normalization = abs(mass - state.omega_bar) / max(state.omega_bar, 1e-300)
    return {"transport": float(transport), "reservoir": float(reservoir),
            "boundary": float(boundary), "mass": float(normalization)}
