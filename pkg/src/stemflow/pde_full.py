"""Explicit upwind solver for the full transport model (variant 0).

State variables, all densities in maturity x (and cycle position c for the
proliferating field that entered from intermediate maturities):

    A(x, t)        quiescent cells advecting toward x = 0 at speed rho_r
    A*(t)          fully immature quiescent pool
    Omega(x, c, t) proliferating cells from A, advancing in x (rho_d) and c (1)
    Omega*(x, t)   proliferating cells from A*, advancing in x at rho_d

Cells double when crossing c = c1 (Omega) or the maturities
x = rho_d (k c2 + c1) reached when the implied cycle phase x/rho_d hits c1
modulo c2 (Omega*).  The doubling is realized conservatively as flux
multiplication across the matching grid interface, which therefore must sit
on a cell boundary; grids are built from segment breakpoints so that the
interfaces and the transfer-permissive (G1) phase bands align exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .errors import GridError, NumericalFailure, ParameterError
from .params import RescaledParameters
from .traces import PopulationTrace

_NEGATIVITY_TOL = -1e-12


@dataclass(frozen=True)
class AxisGrid:
    """1-d finite-volume axis; values are cell averages."""

    edges: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise GridError("axis edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)

    @cached_property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @cached_property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def n(self) -> int:
        return self.edges.size - 1


def segmented_axis(breakpoints, target_cells: int) -> AxisGrid:
    """Uniform-by-segment axis whose edges include every breakpoint."""
    pts = np.unique(np.asarray(breakpoints, dtype=float))
    total = pts[-1] - pts[0]
    edges = [np.array([pts[0]])]
    for left, right in zip(pts[:-1], pts[1:]):
        m = max(1, round((right - left) / total * target_cells))
        edges.append(np.linspace(left, right, m + 1)[1:])
    return AxisGrid(np.concatenate(edges))


def division_maturities(rho_d: float, c1_days: float, c2_days: float,
                        upper: float = 1.0) -> np.ndarray:
    """Maturities where the implied cycle phase crosses c1 (division points)."""
    out = []
    k = 0
    while True:
        x = rho_d * (k * c2_days + c1_days)
        if x >= upper:
            return np.array(out)
        out.append(x)
        k += 1


def phase_breakpoints(rho_d: float, c1_days: float, c2_days: float,
                      upper: float = 1.0) -> np.ndarray:
    """All maturities where the implied-phase G1 indicator switches."""
    pts = list(division_maturities(rho_d, c1_days, c2_days, upper))
    k = 1
    while rho_d * k * c2_days < upper:
        pts.append(rho_d * k * c2_days)
        k += 1
    return np.unique(np.array(pts))


def maturity_grid(params: RescaledParameters, target_cells: int,
                  with_phase_structure: bool = True) -> tuple[AxisGrid, np.ndarray, np.ndarray]:
    """(axis, division edge indices, G1 cell mask) on [0, 1]."""
    if with_phase_structure:
        inner = phase_breakpoints(params.rho_d, params.c1_days, params.c2_days)
        axis = segmented_axis(np.concatenate([[0.0, 1.0], inner]), target_cells)
    else:
        axis = AxisGrid(np.linspace(0.0, 1.0, target_cells + 1))
    div_x = division_maturities(params.rho_d, params.c1_days, params.c2_days)
    div_idx = np.searchsorted(axis.edges, div_x)
    if with_phase_structure and div_x.size:
        if np.max(np.abs(axis.edges[div_idx] - div_x)) > 1e-12:
            raise GridError("division maturities failed to land on cell edges")
    phase = np.mod(axis.centers / params.rho_d, params.c2_days)
    g1_cells = (phase >= params.c1_days) & (phase < params.c2_days)
    return axis, div_idx, g1_cells


@dataclass(frozen=True)
class GridSpec:
    """Grids and time step for the explicit upwind schemes.

    `c` is None for the cycle-averaged variants.  Doubling interfaces are
    edge indices; flux through them is multiplied by two when `doubling`.
    """

    x: AxisGrid
    c: AxisGrid | None
    dt: float
    division_edges: np.ndarray        # x-edge indices (Omega*)
    g1_cells: np.ndarray              # per x-cell membership of the G1 band
    c_division_edge: int | None = None  # c-edge index at c1 (Omega)
    doubling: bool = True
    cfl_r: float = 0.0
    cfl_d: float = 0.0

    def __post_init__(self):
        if self.dt <= 0:
            raise GridError("dt must be positive")
        if self.cfl_r > 1.0 + 1e-12 or self.cfl_d > 1.0 + 1e-12:
            raise GridError(
                f"CFL violation: cfl_r={self.cfl_r:.3f}, cfl_d={self.cfl_d:.3f}")


def full_grid(params: RescaledParameters, nx: int = 256, nc: int = 49,
              dt: float | None = None, safety: float = 0.9,
              doubling: bool = True) -> GridSpec:
    x_axis, div_idx, g1_cells = maturity_grid(params, nx)
    c_axis = segmented_axis([0.0, params.c1_days, params.c2_days], nc)
    c_div = int(np.searchsorted(c_axis.edges, params.c1_days))
    dx_min = float(np.min(x_axis.widths))
    dc_min = float(np.min(c_axis.widths))
    # explicit sinks cannot exceed the largest transition characteristic
    rate_cap = max(params.f_alpha(0.0), params.f_omega(0.0))
    if dt is None:
        dt = safety / max(params.rho_r / dx_min + rate_cap,
                          params.rho_d / dx_min + 1.0 / dc_min + rate_cap)
    cfl_r = params.rho_r * dt / dx_min
    cfl_d = max(params.rho_d * dt / dx_min, dt / dc_min)
    if params.rho_d * dt / dx_min + dt / dc_min > 1.0 + 1e-12:
        raise GridError("combined x/c Courant number exceeds 1 for the 2-d field")
    return GridSpec(x=x_axis, c=c_axis, dt=dt, division_edges=div_idx,
                    g1_cells=g1_cells, c_division_edge=c_div, doubling=doubling,
                    cfl_r=cfl_r, cfl_d=cfl_d)


@dataclass
class FullState:
    """Cell-averaged fields of the full model at one instant."""

    a: np.ndarray            # (nx,)
    a_star: float
    omega: np.ndarray        # (nx, nc)
    omega_star: np.ndarray   # (nx,)
    t: float = 0.0

    def copy(self) -> "FullState":
        return FullState(self.a.copy(), self.a_star, self.omega.copy(),
                         self.omega_star.copy(), self.t)


def initial_reservoir_state(grid: GridSpec, a_star: float = 1.0) -> FullState:
    nx, nc = grid.x.n, grid.c.n
    return FullState(a=np.zeros(nx), a_star=a_star,
                     omega=np.zeros((nx, nc)), omega_star=np.zeros(nx))


def totals(state: FullState, grid: GridSpec) -> tuple[float, float]:
    """(quiescent total, proliferating total) by the grid's midpoint sums."""
    wx = grid.x.widths
    a_bar = float(np.sum(state.a * wx) + state.a_star)
    omega_bar = float(np.sum(state.omega * (wx[:, None] * grid.c.widths[None, :]))
                      + np.sum(state.omega_star * wx))
    return a_bar, omega_bar


def step_full(state: FullState, params: RescaledParameters, grid: GridSpec,
              frozen_f: tuple[float, float] | None = None) -> FullState:
    """One explicit upwind step; all rates use populations at step start."""
    dt = grid.dt
    wx = grid.x.widths
    wc = grid.c.widths
    xc = grid.x.centers
    a_bar, omega_bar = totals(state, grid)
    if frozen_f is None:
        fa, fo = params.f_alpha(a_bar), params.f_omega(omega_bar)
    else:
        fa, fo = frozen_f
    alpha_x = np.exp(-params.gamma * xc) * fa
    omega_x = params.a_min * np.exp(params.gamma * xc) * fo
    omega_at_0 = params.a_min * fo

    a, omega, omega_star = state.a, state.omega, state.omega_star

    # G1 return flux available to A: cycle cells past c1 plus Omega* in G1 bands
    jc = grid.c_division_edge
    omega_g1_mass = omega[:, jc:] @ wc[jc:]
    source_a = alpha_x * (omega_g1_mass + grid.g1_cells * omega_star)

    # A: leftward advection, zero inflow at x = 1, outflow feeds A*
    inflow_a = params.rho_r * np.append(a[1:], 0.0)
    a_new = a + dt * ((inflow_a - params.rho_r * a) / wx - omega_x * a + source_a)
    a_star_new = state.a_star + dt * (params.rho_r * a[0] - omega_at_0 * state.a_star)

    # Omega: rightward in x (zero inflow), unit speed in c with wrap at c2,
    # doubling across c1, entry flux omega(x) A at c = 0
    fin_x = params.rho_d * np.vstack([np.zeros_like(omega[:1]), omega[:-1]])
    fin_c = np.empty_like(omega)
    fin_c[:, 1:] = omega[:, :-1]
    if grid.doubling:
        fin_c[:, jc] = 2.0 * omega[:, jc - 1]
    fin_c[:, 0] = omega[:, -1] + omega_x * a
    in_g1_phase = np.zeros(grid.c.n)
    in_g1_phase[jc:] = 1.0
    omega_new = omega + dt * ((fin_x - params.rho_d * omega) / wx[:, None]
                              + (fin_c - omega) / wc[None, :]
                              - alpha_x[:, None] * in_g1_phase[None, :] * omega)

    # Omega*: rightward in x with doubling interfaces, inflow flux omega(0) A*
    fin_s = params.rho_d * np.concatenate([[0.0], omega_star[:-1]])
    if grid.doubling and grid.division_edges.size:
        inner = grid.division_edges[grid.division_edges > 0]
        fin_s[inner] *= 2.0
    fin_s[0] = omega_at_0 * state.a_star
    omega_star_new = omega_star + dt * ((fin_s - params.rho_d * omega_star) / wx
                                        - alpha_x * grid.g1_cells * omega_star)

    low = min(a_new.min(initial=0.0), omega_new.min(initial=0.0),
              omega_star_new.min(initial=0.0), a_star_new)
    if low < _NEGATIVITY_TOL:
        raise NumericalFailure(
            f"negative density {low:.3e} at t={state.t + dt:.4f} days "
            "(time step too large for the active rates)")
    return FullState(a=a_new, a_star=a_star_new, omega=omega_new,
                     omega_star=omega_star_new, t=state.t + dt)


def simulate_full(params: RescaledParameters, days: float,
                  grid: GridSpec | None = None, nx: int = 256, nc: int = 49,
                  record_every: float = 0.25,
                  initial: FullState | None = None,
                  frozen_f: tuple[float, float] | None = None) -> PopulationTrace:
    """Run the full model and record compartment totals."""
    if days <= 0:
        raise ParameterError("simulation horizon must be positive")
    if grid is None:
        grid = full_grid(params, nx=nx, nc=nc)
    state = initial.copy() if initial is not None else initial_reservoir_state(grid)
    n_steps = math.ceil(days / grid.dt)
    stride = max(1, round(record_every / grid.dt))
    times, a_tot, o_tot = [], [], []
    for k in range(n_steps + 1):
        if k % stride == 0 or k == n_steps:
            a_bar, omega_bar = totals(state, grid)
            times.append(state.t)
            a_tot.append(a_bar)
            o_tot.append(omega_bar)
        if k < n_steps:
            state = step_full(state, params, grid, frozen_f=frozen_f)
    return PopulationTrace(t_days=np.array(times), a_total=np.array(a_tot),
                           omega_total=np.array(o_tot),
                           meta={"model": "approx0", "nx": grid.x.n, "nc": grid.c.n,
                                 "dt": grid.dt})


def without_doubling(grid: GridSpec) -> GridSpec:
    return replace(grid, doubling=False)
