"""Frozen-rate eigenvalue problem, characteristic equation and functional
diagnostics for the reduced transport systems.

With the populations frozen, the proliferating field and its reservoir form
a linear system whose unique real eigenvalue is the crossing of

    G(lam) = rho_d (lam/omega + 1)   (increasing)
    L(lam) = int_0^1 alpha(x) exp( (1/rho_d) int_0^x (b - alpha - lam) ) dx
                                      (decreasing)

The adjoint pair (phi, Psi) closes the duality pairing
<(phi, Psi), (Omega, A)> = int phi Omega + Psi A, which evolves as
exp(lam t) under the frozen linear flow.  Around the nonzero steady state
of the midpoint-frozen system, the eigenvalues of the linearization are
the complex roots of a transcendental characteristic function f(lam) = 1,
located here by damped Newton iteration from a grid of starting points.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from numpy.polynomial import Chebyshev
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import BracketError, ParameterError, PoleProximityError, QuadratureError
from .params import RescaledParameters
from .steady import SteadyState, companion_rate
from .traces import FieldTrace

_QUAD_OPTS = dict(epsabs=0.0, epsrel=1e-12, limit=200)
_SERIES_RADIUS = 1e-6     # |lam| below which removable factors use series
_POLE_TOL = 1e-14
_LAMBDA_GUARD = 1e3       # bracket expansion limit, per day


def _chebyshev_fit(fn, max_degree: int = 2048) -> Chebyshev:
    deg = 64
    while True:
        c = Chebyshev.interpolate(lambda t: np.asarray(fn(t), dtype=float),
                                  deg, domain=[0.0, 1.0])
        scale = np.max(np.abs(c.coef)) or 1.0
        if np.max(np.abs(c.coef[-4:])) < 1e-13 * scale or deg >= max_degree:
            return c
        deg *= 2


@dataclass(frozen=True)
class FrozenRates:
    """Rates of the frozen (linear) system: alpha(x) profile and scalars."""

    alpha: Callable[[np.ndarray], np.ndarray]
    omega: float
    b: float
    rho_d: float
    alpha_antiderivative: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.omega <= 0.0 or self.rho_d <= 0.0:
            raise ParameterError("omega and rho_d must be positive")

    @cached_property
    def antiderivative(self) -> Callable:
        """x -> int_0^x alpha(s) ds (closed form if supplied, Chebyshev else)."""
        if self.alpha_antiderivative is not None:
            return self.alpha_antiderivative
        fit = _chebyshev_fit(self.alpha)
        return fit.integ(1, lbnd=0.0)

    def growth_exponent(self, x, lam=0.0):
        """(1/rho_d) int_0^x (b - alpha(s) - lam) ds, vectorized in x."""
        x = np.asarray(x, dtype=float)
        return ((self.b - lam) * x - np.asarray(self.antiderivative(x))) / self.rho_d


def constant_rates(alpha0: float, omega: float, b: float, rho_d: float) -> FrozenRates:
    if alpha0 <= 0.0:
        raise ParameterError("constant alpha must be positive")
    return FrozenRates(alpha=lambda x: np.full_like(np.asarray(x, dtype=float), alpha0),
                       omega=omega, b=b, rho_d=rho_d,
                       alpha_antiderivative=lambda x: alpha0 * np.asarray(x, dtype=float))


def zero_state_rates(params: RescaledParameters, variant: int = 3,
                     midpoint: float = 0.5) -> FrozenRates:
    """Frozen rates of the reduced system linearized at zero population."""
    fa0 = params.f_alpha(0.0)
    omega = params.omega0(0.0)
    if variant == 4:
        return constant_rates(params.alpha_mid(0.0, midpoint), omega,
                              params.b, params.rho_d)
    if variant != 3:
        raise ParameterError(f"frozen zero-state rates exist for variants 3 and 4, got {variant}")
    kappa, gamma = params.kappa, params.gamma
    return FrozenRates(
        alpha=lambda x: kappa * fa0 * np.exp(-gamma * np.asarray(x, dtype=float)),
        omega=omega, b=params.b, rho_d=params.rho_d,
        alpha_antiderivative=lambda x: kappa * fa0 *
            (1.0 - np.exp(-gamma * np.asarray(x, dtype=float))) / gamma)


# ---------------------------------------------------------------------------
# Real eigenvalue and eigenfunctions

# Composite Gauss-Legendre table used for sign checks during bracketing.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_PANELS = 64
_panel_edges = np.linspace(0.0, 1.0, _PANELS + 1)
_X_FAST = (0.5 * (_GL_NODES[None, :] + 1.0) * np.diff(_panel_edges)[:, None]
           + _panel_edges[:-1, None]).ravel()
_W_FAST = (0.5 * np.diff(_panel_edges)[:, None] * _GL_WEIGHTS[None, :]).ravel()


def _gap_sign(rates: FrozenRates, lam: float, log_alpha_w, base_exponent) -> float:
    """Sign of G(lam) - L(lam), robust against overflow of L."""
    g = rates.rho_d * (lam / rates.omega + 1.0)
    exponents = log_alpha_w + base_exponent - lam * _X_FAST / rates.rho_d
    m = float(np.max(exponents))
    if m > 500.0:  # L astronomically large
        return -1.0
    l_val = float(np.sum(np.exp(exponents))) if m > -700.0 else 0.0
    return math.copysign(1.0, g - l_val) if g != l_val else 0.0


def _l_integral(rates: FrozenRates, lam: float) -> float:
    val, err = quad(lambda x: float(rates.alpha(x)) *
                    math.exp(float(rates.growth_exponent(x, lam))),
                    0.0, 1.0, **_QUAD_OPTS)
    if not math.isfinite(val):
        raise QuadratureError(f"return-flux integral diverged at lam={lam}")
    return val


@dataclass(frozen=True)
class EigenSolution:
    """Real eigenvalue with direct (Omega, A) and adjoint (phi, Psi) parts.

    Omega is normalized to unit mass; phi is normalized by phi(0) = 1.
    """

    eigenvalue: float
    rates: FrozenRates
    omega_mass_norm: float          # int_0^1 exp(growth_exponent) dx
    j_full: float                   # int_0^1 alpha * E dx at the eigenvalue
    _j_fn: Callable

    def omega_fn(self, x):
        return np.exp(self.rates.growth_exponent(x, self.eigenvalue)) / self.omega_mass_norm

    @property
    def a_value(self) -> float:
        return self.rates.rho_d / (self.rates.omega * self.omega_mass_norm)

    @property
    def psi(self) -> float:
        return self.rates.omega / (self.eigenvalue + self.rates.omega)

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        e_inv = np.exp(-self.rates.growth_exponent(x, self.eigenvalue))
        return e_inv * (1.0 - np.asarray(self._j_fn(x)) / self.j_full)

    def phi_cell_averages(self, edges: np.ndarray) -> np.ndarray:
        edges = np.asarray(edges, dtype=float)
        half = 0.5 * np.diff(edges)
        mids = edges[:-1] + half
        nodes = mids[:, None] + half[:, None] * _GL4_NODES[None, :]
        vals = self.phi(nodes.ravel()).reshape(nodes.shape)
        return vals @ _GL4_WEIGHTS / 2.0

    def pairing(self, omega_field, a_scalar, x_centers=None, x_widths=None):
        """<(phi, Psi), (field, A)> with the field given as cell averages."""
        phi_bar = self.phi(x_centers)
        return float(np.sum(phi_bar * omega_field * x_widths) + self.phi(0.0) * a_scalar)

    def residuals(self, n_sample: int = 33) -> dict[str, float]:
        """Pointwise/integral residuals of the defining relations."""
        lam, rates = self.eigenvalue, self.rates
        xs = 0.5 * (1.0 - np.cos(np.pi * np.arange(n_sample) / (n_sample - 1)))  # cheb pts
        h = 1e-4
        inner = xs[(xs > 2 * h) & (xs < 1.0 - 2 * h)]
        alpha_inner = np.asarray(rates.alpha(inner))

        def fd_deriv(fn):
            return (-fn(inner + 2 * h) + 8 * fn(inner + h)
                    - 8 * fn(inner - h) + fn(inner - 2 * h)) / (12 * h)

        omega_vals = self.omega_fn(inner)
        direct = rates.rho_d * fd_deriv(self.omega_fn) \
            - (rates.b - lam - alpha_inner) * omega_vals
        phi_vals = self.phi(inner)
        adjoint = -rates.rho_d * fd_deriv(self.phi) \
            - (rates.b - lam - alpha_inner) * phi_vals - alpha_inner * self.psi
        flux, _ = quad(lambda x: float(rates.alpha(x)) * float(self.omega_fn(x)),
                       0.0, 1.0, **_QUAD_OPTS)
        mass, _ = quad(lambda x: float(self.omega_fn(x)), 0.0, 1.0, **_QUAD_OPTS)
        scale_omega = float(np.max(np.abs(omega_vals)))
        scale_phi = float(np.max(np.abs(phi_vals))) or 1.0
        return {
            "direct_ode": float(np.max(np.abs(direct))) / scale_omega,
            "adjoint_ode": float(np.max(np.abs(adjoint))) / scale_phi,
            "reservoir": abs(flux - (lam + rates.omega) * self.a_value)
                / max(abs(flux), 1e-300),
            "boundary": abs(float(self.omega_fn(0.0)) - rates.omega * self.a_value
                            / rates.rho_d) / max(float(self.omega_fn(0.0)), 1e-300),
            "mass": abs(mass - 1.0),
            "psi_relation": abs((lam + rates.omega) * self.psi - rates.omega),
            "phi_at_one": abs(float(self.phi(1.0))),
        }


_GL4_NODES, _GL4_WEIGHTS = np.polynomial.legendre.leggauss(4)


def real_eigenvalue(rates: FrozenRates) -> EigenSolution:
    """Unique real eigenvalue of the frozen system, by bracketed bisection."""
    log_alpha_w = np.log(np.maximum(np.asarray(rates.alpha(_X_FAST), dtype=float), 0.0)
                         * _W_FAST + 1e-300)
    base_exponent = np.asarray(rates.growth_exponent(_X_FAST, 0.0))

    def sign_at(lam):
        return _gap_sign(rates, lam, log_alpha_w, base_exponent)

    lo, hi = -1.0, 1.0
    while sign_at(lo) > 0.0:
        lo *= 2.0
        if lo < -_LAMBDA_GUARD:
            raise BracketError(f"no eigenvalue bracket above {-_LAMBDA_GUARD}/day")
    while sign_at(hi) < 0.0:
        hi *= 2.0
        if hi > _LAMBDA_GUARD:
            raise BracketError(f"no eigenvalue bracket below {_LAMBDA_GUARD}/day")
    for _ in range(80):  # bisection on the overflow-safe sign
        mid = 0.5 * (lo + hi)
        if sign_at(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-9 * max(1.0, abs(lo)):
            break
    # polish against the adaptive quadrature to the contracted tolerance
    gap = lambda lam: rates.rho_d * (lam / rates.omega + 1.0) - _l_integral(rates, lam)
    glo, ghi = gap(lo), gap(hi)
    width = max(hi - lo, 1e-12)
    while glo > 0.0 or ghi < 0.0:
        lo -= width
        hi += width
        width *= 4.0
        glo, ghi = gap(lo), gap(hi)
        if width > 1e6:
            raise BracketError("quadrature-based eigenvalue polish lost its bracket")
    lam = brentq(gap, lo, hi, xtol=1e-14, rtol=1e-15) if glo != 0.0 else lo

    mass_norm, _ = quad(lambda x: math.exp(float(rates.growth_exponent(x, lam))),
                        0.0, 1.0, **_QUAD_OPTS)
    g_fit = _chebyshev_fit(lambda x: np.asarray(rates.alpha(x))
                           * np.exp(rates.growth_exponent(x, lam)))
    j_fn = g_fit.integ(1, lbnd=0.0)
    return EigenSolution(eigenvalue=lam, rates=rates, omega_mass_norm=mass_norm,
                         j_full=float(j_fn(1.0)), _j_fn=j_fn)


# ---------------------------------------------------------------------------
# Zero-state stability

class ZeroStateVerdict(enum.Enum):
    ATTRACTIVE = "attractive"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"


def stability_integral(rates: FrozenRates) -> float:
    """int_0^1 alpha(x) exp((1/rho_d) int_0^x (b - alpha)) dx."""
    return _l_integral(rates, 0.0)


def zero_state_condition(params: RescaledParameters, variant: int = 3,
                         marginal_tol: float = 1e-10) -> ZeroStateVerdict:
    """Classify the zero steady state by the return-flux integral test."""
    rates = zero_state_rates(params, variant=variant)
    value = stability_integral(rates)
    if abs(value - params.rho_d) < marginal_tol:
        return ZeroStateVerdict.MARGINAL
    return ZeroStateVerdict.UNSTABLE if value > params.rho_d else ZeroStateVerdict.ATTRACTIVE


# ---------------------------------------------------------------------------
# Characteristic function of the linearization at the nonzero steady state

def _cexp(z: complex) -> complex:
    # saturate instead of raising; damped Newton rejects the resulting step
    if z.real > 700.0:
        return complex(math.inf, 0.0)
    return cmath.exp(z)


def _f_characteristic(lam: complex, b: float, rho_d: float, bstar: float,
                      omega0: float, a_tilde: float, alpha_prime: float,
                      omega_prime: float) -> complex:
    """f(lam); raises PoleProximityError near the two rational poles."""
    d1 = b - bstar - lam
    d2 = lam - alpha_prime * omega0 * rho_d / bstar + omega0 * rho_d / a_tilde
    if abs(d1) < _POLE_TOL:
        raise PoleProximityError(f"lam={lam} within {_POLE_TOL} of pole at b - b*")
    if abs(d2) < _POLE_TOL:
        raise PoleProximityError(f"lam={lam} within {_POLE_TOL} of the reservoir pole")
    decay = _cexp(-lam / rho_d)
    coupling = (bstar - omega_prime * a_tilde) / d2
    term1 = rho_d / d1 * ((b / bstar) * decay - 1.0) \
        * (omega_prime * a_tilde / rho_d + (omega0 / a_tilde) * coupling)
    if abs(lam) < _SERIES_RADIUS:
        z = lam / rho_d
        ratio = (b / rho_d - 1.0) - (b / rho_d) * z * (0.5 - z * (1.0 / 6.0 - z / 24.0))
    else:
        ratio = (b * (1.0 - decay) - lam) / lam
    term2 = (alpha_prime * omega0 * rho_d / bstar) * (ratio / d1) * coupling
    return term1 - term2


def _char_coeffs(steady: SteadyState, params: RescaledParameters | None):
    p = params if params is not None else steady.params
    if steady.variant != 4:
        raise ParameterError("the characteristic function is defined for the "
                             "midpoint-frozen variant (4)")
    return (float(p.b), float(p.rho_d), float(steady.b_star), float(steady.omega0),
            float(steady.a_tilde),
            float(p.alpha_mid_prime(steady.a_tilde, steady.midpoint)),
            float(p.omega0_prime(steady.omega_bar)))


def characteristic_f(lam: complex, steady: SteadyState,
                     params: RescaledParameters | None = None) -> complex:
    """Characteristic function of the linearized steady-state dynamics."""
    return _f_characteristic(complex(lam), *_char_coeffs(steady, params))


@dataclass(frozen=True)
class CharacteristicRoot:
    lam: complex
    residual: float
    multiplicity_hint: int = 1


def _newton_root(coeffs, start: complex, max_iter: int = 80) -> complex | None:
    lam = complex(start)
    try:
        g = _f_characteristic(lam, *coeffs) - 1.0
    except PoleProximityError:
        return None
    for _ in range(max_iter):
        h = 1e-7 * max(1.0, abs(lam))
        try:
            gp = (_f_characteristic(lam + h, *coeffs)
                  - _f_characteristic(lam - h, *coeffs)) / (2.0 * h)
        except PoleProximityError:
            return None
        if gp == 0.0:
            return None
        step = g / gp
        lam_new, g_new = lam, g
        for _ in range(40):  # damping
            lam_try = lam - step
            try:
                g_try = _f_characteristic(lam_try, *coeffs) - 1.0
            except PoleProximityError:
                step *= 0.5
                continue
            if abs(g_try) < abs(g) or abs(step) < 1e-15 * max(1.0, abs(lam)):
                lam_new, g_new = lam_try, g_try
                break
            step *= 0.5
        else:
            return None
        converged = (abs(lam_new - lam) < 1e-13 * max(1.0, abs(lam_new))
                     and abs(g_new) < 1e-10)
        lam, g = lam_new, g_new
        if converged or abs(g) < 1e-14:
            return lam
        if not (abs(lam.real) < 50.0 * _LAMBDA_GUARD and abs(lam.imag) < 50.0 * _LAMBDA_GUARD):
            return None
    return lam if abs(g) < 1e-12 else None


def rightmost_roots(steady: SteadyState, params: RescaledParameters | None = None,
                    re_range: tuple[float, float] = (-5.0, 5.0),
                    im_range: tuple[float, float] = (0.0, 40.0),
                    starts: tuple[int, int] = (21, 21),
                    residual_tol: float = 1e-10,
                    dedupe_tol: float = 1e-6) -> list[CharacteristicRoot]:
    """Roots of f(lam) = 1 from damped Newton over a grid of starts.

    Only the closed upper half plane is reported; complex roots come in
    conjugate pairs.  An empty list means no start converged (it does not
    prove the box is root-free).
    """
    coeffs = _char_coeffs(steady, params)
    rho_d = coeffs[1]
    # quadratic spacing resolves the low-frequency branches; the ladder tracks
    # the ~2 pi rho_d spacing the delay structure imposes on the root chain
    u = np.linspace(0.0, 1.0, starts[1])
    im_starts = im_range[0] + (im_range[1] - im_range[0]) * u * u
    ladder = np.arange(0.5, 40.0) * math.pi * rho_d
    ladder = ladder[(ladder > im_range[0]) & (ladder < im_range[1])]
    im_starts = np.unique(np.concatenate([im_starts, ladder]))
    roots: list[complex] = []
    for re0 in np.linspace(*re_range, starts[0]):
        for im0 in im_starts:
            lam = _newton_root(coeffs, complex(re0, im0))
            if lam is None:
                continue
            if lam.imag < 0.0:
                lam = lam.conjugate()
            if abs(lam.imag) < 1e-9:
                lam = complex(lam.real, 0.0)
            if any(abs(lam - r) < dedupe_tol for r in roots):
                continue
            try:
                residual = abs(_f_characteristic(lam, *coeffs) - 1.0)
            except PoleProximityError:
                continue
            if residual < residual_tol:
                roots.append(lam)
    out = []
    for lam in sorted(roots, key=lambda z: -z.real):
        residual = abs(_f_characteristic(lam, *coeffs) - 1.0)
        h = 1e-6 * max(1.0, abs(lam))
        gp = abs(_f_characteristic(lam + h, *coeffs)
                 - _f_characteristic(lam - h, *coeffs)) / (2.0 * h)
        out.append(CharacteristicRoot(lam=lam, residual=residual,
                                      multiplicity_hint=1 if gp > 1e-6 else 2))
    return out


def characteristic_normalization(lam: complex, steady: SteadyState,
                                 params: RescaledParameters | None = None,
                                 n_panels: int = 4096) -> complex:
    """Independent check value: mass of the reconstructed eigen-perturbation.

    Solves the linearized transport problem explicitly at lam, then integrates
    the perturbation profile numerically; at true roots of f(lam) = 1 the
    result equals 1.  Uses the trapezoid rule on a dense grid, sharing no code
    path with the closed-form characteristic function.
    """
    p = params if params is not None else steady.params
    b, rho_d, bstar = p.b, p.rho_d, steady.b_star
    omega0, a_tilde = steady.omega0, steady.a_tilde
    alpha_prime = p.alpha_mid_prime(steady.a_tilde, steady.midpoint)
    omega_prime = p.omega0_prime(steady.omega_bar)
    d2 = lam - alpha_prime * omega0 * rho_d / bstar + omega0 * rho_d / a_tilde
    delta_a = (bstar - omega_prime * a_tilde) / d2
    delta_omega0 = omega_prime * a_tilde / rho_d + (omega0 / a_tilde) * delta_a
    xs = np.linspace(0.0, 1.0, n_panels + 1)
    mu = (b - bstar - lam) / rho_d
    if abs(lam) < 1e-8:  # (exp(lam x / rho_d) - 1)/lam by series
        grow = xs / rho_d * (1.0 + lam * xs / (2.0 * rho_d))
    else:
        grow = (np.exp(lam * xs / rho_d) - 1.0) / lam
    profile = np.exp(mu * xs) * (delta_omega0 - alpha_prime * omega0 * delta_a * grow)
    return complex(np.trapezoid(profile, xs))


# ---------------------------------------------------------------------------
# Entropy-style functional along simulations

@dataclass(frozen=True)
class LyapunovDiagnostic:
    t_days: np.ndarray
    v: np.ndarray
    max_forward_increment: float
    eigenvalue: float


def lyapunov_trace(fields: FieldTrace, rates: FrozenRates,
                   eigen: EigenSolution | None = None) -> LyapunovDiagnostic:
    """v(t) = int phi Omega dx + phi(0) A along a recorded simulation."""
    if eigen is None:
        eigen = real_eigenvalue(rates)
    edges = np.concatenate([fields.x_centers - 0.5 * fields.x_widths,
                            fields.x_centers[-1:] + 0.5 * fields.x_widths[-1:]])
    phi_bar = eigen.phi_cell_averages(edges)
    phi0 = float(eigen.phi(0.0))
    v = fields.omega_field @ (phi_bar * fields.x_widths) + phi0 * fields.a_star
    incr = np.diff(v)
    max_incr = float(np.max(incr)) if incr.size else 0.0
    return LyapunovDiagnostic(t_days=fields.t_days, v=v,
                              max_forward_increment=max_incr,
                              eigenvalue=eigen.eigenvalue)
