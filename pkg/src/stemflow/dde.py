"""Delay form of the midpoint-frozen reduced system, and growth-rate fitting.

Integrating the proliferating field along characteristics reduces variant 4
to scalar delay equations for (Omega_bar, A*, C), where
C(t) = int_{t-tau}^{t} alpha(A*(u)) du and tau = 1/rho_d is the maturation
transit time:

    dOmega_bar/dt = w(t) - w(t - tau) exp(b/rho_d - C(t)) + (b - alpha) Omega_bar
    dA*/dt        = -w(t) + alpha(A*) Omega_bar
    dC/dt         = alpha(A*(t)) - alpha(A*(t - tau))

with w(u) = omega(Omega_bar(u)) A*(u) the boundary influx.  The delayed
factor is the influx that entered one transit ago, so both of its factors
are evaluated at the delayed time; the survival/growth factor
exp(b/rho_d - C) accounts for what happened to that cohort in transit.

Integration is the method of steps: fixed step h = tau/N so the delay is an
integer number of steps, classical 4th-order Runge-Kutta stages, cubic
interpolation for the half-step delayed values.

Two bookkeeping choices keep the scalar system pinned to the transport
problem it came from.  C is not carried as an independent integrator;
the one-sided cumulative G(t) = int alpha is integrated (no delayed term)
and C(t) = G(t) - G(t - tau), so dC/dt = alpha(t) - alpha(t - tau) holds
identically while integrator drift cancels in the difference.  More
importantly, Omega_bar is slaved at every step end to its
characteristic-solution value

    Omega_bar(t) = int_{t-tau}^{t} w(u) exp(b (t-u) - (G(t) - G(u))) du,

evaluated by composite Simpson on the stored history grid.  Treating
Omega_bar as a free initial-value state instead adds a spurious
transverse mode growing at exactly b - b* (an Omega_bar offset with the
history held fixed feeds back positively through the growth term), which
amplifies roundoff/initialization defects even where the transport
dynamics are stable.  The stage predictor inside each step still uses the
scalar rate equation, so the snapped trajectory satisfies it to O(h^4).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ParameterError
from .params import DEFAULT_MIDPOINT, RescaledParameters

_MID_CENTERED = np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0
_MID_ONESIDED = np.array([5.0, 15.0, -5.0, 1.0]) / 16.0


@dataclass(frozen=True)
class DelayTrace:
    """Solution samples on the integration grid; history columns included."""

    t_days: np.ndarray
    omega_bar: np.ndarray
    a_star: np.ndarray
    c_integral: np.ndarray
    valid_from: float           # first delay window is initial-data transient
    delay_days: float
    # per-step quadrature data for consistency checks
    alpha_nodes: np.ndarray     # alpha(A*) at grid times including prehistory
    alpha_mid: np.ndarray       # alpha(A*) at interval midpoints incl. prehistory
    w_nodes: np.ndarray         # boundary influx at grid times incl. prehistory
    steps_per_delay: int

    def history_c_residual(self) -> float:
        """Max |C(t) - Simpson quadrature of the stored alpha history|."""
        n = self.steps_per_delay
        h = self.delay_days / n
        per_step = (h / 6.0) * (self.alpha_nodes[:-1] + 4.0 * self.alpha_mid
                                + self.alpha_nodes[1:])
        cum = np.concatenate([[0.0], np.cumsum(per_step)])
        window = cum[n:] - cum[:-n]     # integral over each trailing delay window
        return float(np.max(np.abs(window - self.c_integral)))


@dataclass(frozen=True)
class InitialHistory:
    """A* and Omega_bar on the initial window [t0 - tau, t0]."""

    a_star: Callable | float = 1.0
    omega_bar: Callable | float = 0.0

    def sample(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a = self.a_star(times) if callable(self.a_star) \
            else np.full(times.size, float(self.a_star))
        o = self.omega_bar(times) if callable(self.omega_bar) \
            else np.full(times.size, float(self.omega_bar))
        return np.asarray(a, dtype=float), np.asarray(o, dtype=float)


def _interp_mid(values: np.ndarray, m: int) -> float:
    """Cubic value at grid position m + 1/2."""
    if m >= 1:
        return float(_MID_CENTERED @ values[m - 1:m + 3])
    return float(_MID_ONESIDED @ values[:4])


def integrate_dde(params: RescaledParameters, days: float,
                  history: InitialHistory | None = None,
                  steps_per_delay: int = 64,
                  t0: float = 0.0,
                  frozen_f: tuple[float, float] | None = None,
                  midpoint: float = DEFAULT_MIDPOINT) -> DelayTrace:
    """Integrate the delay system over [t0, t0 + days]."""
    tau = 1.0 / params.rho_d
    if days <= tau:
        raise ParameterError(f"horizon must exceed one delay ({tau:.3f} days)")
    if steps_per_delay < 4:
        raise ParameterError("need at least 4 steps per delay window "
                             "(step size above tau/4 rejected)")
    n = int(steps_per_delay)
    if n % 2:
        n += 1  # window quadrature is composite Simpson on the grid nodes
    h = tau / n
    if history is None:
        history = InitialHistory()

    if frozen_f is None:
        alpha_of = lambda a: float(params.alpha_mid(a, midpoint))
        omega_of = lambda om: float(params.omega0(om))
    else:
        fa, fo = frozen_f
        alpha_const = params.kappa * math.exp(-params.gamma * midpoint) * fa
        alpha_of = lambda a: alpha_const
        omega_of = lambda om: params.a_min * fo

    n_steps = math.ceil(days / h)
    size = n + n_steps + 1
    a_h = np.zeros(size)        # A* at grid times
    o_h = np.zeros(size)        # Omega_bar at grid times
    alpha_h = np.zeros(size)
    w_h = np.zeros(size)        # boundary influx omega(Omega_bar) A*
    g_h = np.zeros(size)        # cumulative integral of alpha since t0 - tau
    alpha_mid = np.zeros(n + n_steps)
    da_h = np.zeros(size)       # dA*/dt, for Hermite midpoints

    pre_times = t0 + (np.arange(n + 1) - n) * h
    a_pre, o_pre = history.sample(pre_times)
    a_h[:n + 1] = a_pre
    o_h[:n + 1] = o_pre
    alpha_h[:n + 1] = [alpha_of(a) for a in a_pre]
    w_h[:n + 1] = [omega_of(o) * a for o, a in zip(o_pre, a_pre)]

    mid_times = t0 + (np.arange(n) + 0.5 - n) * h
    a_mid0, _ = history.sample(mid_times)
    alpha_mid[:n] = [alpha_of(a) for a in a_mid0]
    g_h[1:n + 1] = np.cumsum((h / 6.0) * (alpha_h[:n] + 4.0 * alpha_mid[:n]
                                          + alpha_h[1:n + 1]))

    b_over_rho = params.b / params.rho_d
    simpson_w = np.ones(n + 1)
    simpson_w[1:-1:2] = 4.0
    simpson_w[2:-1:2] = 2.0
    simpson_w *= h / 3.0
    back_span = np.arange(n, -1.0, -1.0) * h   # t - u over the trailing window

    def slaved_omega_bar(kg_top: int, g_top: float) -> float:
        """Window integral of the surviving influx, Simpson on grid nodes."""
        sl = slice(kg_top - n, kg_top + 1)
        integrand = w_h[sl] * np.exp(params.b * back_span - (g_top - g_h[sl]))
        return float(simpson_w @ integrand)

    def rhs(y, w_delay, alpha_delay, g_delay):
        omega_bar, a_star, g_now = y
        al = alpha_of(a_star)
        w_now = omega_of(omega_bar) * a_star
        c_window = g_now - g_delay
        d_ob = w_now - w_delay * math.exp(b_over_rho - c_window) \
            + (params.b - al) * omega_bar
        d_as = -w_now + al * omega_bar
        return np.array([d_ob, d_as, al])

    # snap the starting Omega_bar onto the history-consistent value
    ob0 = float(o_h[n])
    for _ in range(3):
        w_h[n] = omega_of(ob0) * a_h[n]
        ob0 = slaved_omega_bar(n, float(g_h[n]))
    o_h[n] = ob0
    w_h[n] = omega_of(ob0) * a_h[n]

    y = np.array([o_h[n], a_h[n], g_h[n]])
    trace_t = np.empty(n_steps + 1)
    trace = np.empty((n_steps + 1, 3))
    trace_t[0] = t0
    trace[0] = [y[0], y[1], g_h[n] - g_h[0]]
    da_h[:n + 1] = [-w + alpha_of(a) * o
                    for w, a, o in zip(w_h[:n + 1], a_h[:n + 1], o_h[:n + 1])]

    for k in range(n_steps):
        kg = n + k
        m = kg - n
        w_mid = _interp_mid(w_h, m)
        al_mid = _interp_mid(alpha_h, m)
        g_mid = _interp_mid(g_h, m)
        k1 = rhs(y, w_h[m], alpha_h[m], g_h[m])
        k2 = rhs(y + 0.5 * h * k1, w_mid, al_mid, g_mid)
        k3 = rhs(y + 0.5 * h * k2, w_mid, al_mid, g_mid)
        k4 = rhs(y + h * k3, w_h[m + 1], alpha_h[m + 1], g_h[m + 1])
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        a_h[kg + 1] = y[1]
        alpha_h[kg + 1] = alpha_of(y[1])
        g_h[kg + 1] = y[2]
        # replace the stage-predicted Omega_bar by its slaved window value
        ob = float(y[0])
        for _ in range(2):
            w_h[kg + 1] = omega_of(ob) * y[1]
            ob = slaved_omega_bar(kg + 1, float(y[2]))
        y[0] = ob
        o_h[kg + 1] = ob
        w_h[kg + 1] = omega_of(ob) * y[1]
        da_h[kg + 1] = -w_h[kg + 1] + alpha_h[kg + 1] * ob
        # Hermite midpoint of A* feeds the stored quadrature nodes
        a_half = 0.5 * (a_h[kg] + a_h[kg + 1]) + 0.125 * h * (da_h[kg] - da_h[kg + 1])
        alpha_mid[n + k] = alpha_of(a_half)
        trace_t[k + 1] = t0 + (k + 1) * h
        trace[k + 1] = [y[0], y[1], y[2] - g_h[m + 1]]

    return DelayTrace(t_days=trace_t, omega_bar=trace[:, 0], a_star=trace[:, 1],
                      c_integral=trace[:, 2], valid_from=t0 + tau, delay_days=tau,
                      alpha_nodes=alpha_h, alpha_mid=alpha_mid, w_nodes=w_h,
                      steps_per_delay=n)


@dataclass(frozen=True)
class GrowthFit:
    rate: float                # per day
    frequency: float           # angular, per day
    oscillatory: bool


def linearized_growth_fit(t_days: np.ndarray, values: np.ndarray,
                          reference: float,
                          window: tuple[float, float] | None = None) -> GrowthFit:
    """Fit exp(rate t) cos(frequency t) behavior of values - reference.

    The rate comes from a least-squares line through the log of the peak
    envelope, the frequency from the mean spacing of zero crossings.  A
    deviation without enough sign changes is reported as non-oscillatory
    (frequency 0) with the rate fitted on log |deviation|.
    """
    t = np.asarray(t_days, dtype=float)
    s = np.asarray(values, dtype=float) - reference
    if window is not None:
        keep = (t >= window[0]) & (t <= window[1])
        t, s = t[keep], s[keep]
    if t.size < 8:
        raise ParameterError("too few samples to fit growth")

    sign_change = np.where(np.sign(s[:-1]) * np.sign(s[1:]) < 0)[0]
    if sign_change.size < 4:
        mags = np.abs(s)
        good = mags > 1e-300
        coef = np.polyfit(t[good], np.log(mags[good]), 1)
        return GrowthFit(rate=float(coef[0]), frequency=0.0, oscillatory=False)

    crossing_t = t[sign_change] - s[sign_change] * (t[sign_change + 1] - t[sign_change]) \
        / (s[sign_change + 1] - s[sign_change])
    idx = np.arange(crossing_t.size)
    half_period = np.polyfit(idx, crossing_t, 1)[0]
    frequency = math.pi / half_period

    peak_t, peak_v = [], []
    for i0, i1 in zip(sign_change[:-1], sign_change[1:]):
        seg = slice(i0 + 1, i1 + 1)
        j = np.argmax(np.abs(s[seg])) + i0 + 1
        peak_t.append(t[j])
        peak_v.append(abs(s[j]))
    peak_t, peak_v = np.array(peak_t), np.array(peak_v)
    good = peak_v > 1e-300
    rate = float(np.polyfit(peak_t[good], np.log(peak_v[good]), 1)[0])
    return GrowthFit(rate=rate, frequency=float(frequency), oscillatory=True)
