"""Stability-region mapping, rightmost-root continuation and trace triage.

A parameter point (rho_d, b) is classified for the midpoint-frozen system:
if no nonzero steady state exists the zero state is the attractor
(StableZero); otherwise the sign of the rightmost characteristic root at
the nonzero steady state separates StableNonzero from UnstablePeriodic.
Along a column of fixed b the three regimes appear in the order
UnstablePeriodic / StableNonzero / StableZero as rho_d increases.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import spectral, steady
from .csvio import write_csv
from .errors import StemflowError
from .params import RescaledParameters, with_rates
from .traces import PopulationTrace

_MARGINAL_TOL = 1e-6      # per day, on the rightmost real part


class Regime(enum.Enum):
    UNSTABLE_PERIODIC = "unstable-periodic"
    STABLE_NONZERO = "stable-nonzero"
    STABLE_ZERO = "stable-zero"


class TraceRegime(enum.Enum):
    PERIODIC = "periodic"
    NONZERO_PLATEAU = "nonzero-plateau"
    EXTINCT = "extinct"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class StabilityVerdict:
    rho_d: float
    b: float
    regime: Regime | None
    nonzero_exists: bool
    rightmost_re: float = math.nan
    rightmost_im: float = math.nan
    marginal: bool = False
    error: str | None = None

    @property
    def indeterminate(self) -> bool:
        return self.regime is None


def classify_point(rho_d: float, b: float, params: RescaledParameters,
                   tol: float = _MARGINAL_TOL,
                   starts: tuple[int, int] = (15, 15)) -> StabilityVerdict:
    """Stability verdict at one (rho_d, b); solver failures become indeterminate."""
    p = with_rates(params, rho_d=rho_d, b=b)
    try:
        if not steady.exists_nonzero_approx4(p):
            return StabilityVerdict(rho_d=rho_d, b=b, regime=Regime.STABLE_ZERO,
                                    nonzero_exists=False)
        state = steady.solve_steady(p, steady.APPROX4)
        roots = spectral.rightmost_roots(state, starts=starts)
        if not roots:
            return StabilityVerdict(rho_d=rho_d, b=b, regime=None, nonzero_exists=True,
                                    error="no characteristic root converged")
        top = roots[0].lam
        if top.real > tol:
            regime = Regime.UNSTABLE_PERIODIC
            marginal = False
        else:
            # the measure-zero boundary is reported as the stable side
            regime = Regime.STABLE_NONZERO
            marginal = top.real >= -tol
        return StabilityVerdict(rho_d=rho_d, b=b, regime=regime, nonzero_exists=True,
                                rightmost_re=top.real, rightmost_im=top.imag,
                                marginal=marginal)
    except StemflowError as exc:
        return StabilityVerdict(rho_d=rho_d, b=b, regime=None, nonzero_exists=False,
                                error=str(exc))


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("STEMFLOW_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    if requested is not None:
        limit = min(limit, requested)
    return max(1, limit)


def _classify_cell(args):
    i, j, rho_d, b, params = args
    return i, j, classify_point(rho_d, b, params)


@dataclass
class RegionMap:
    rho_d_values: np.ndarray
    b_values: np.ndarray
    verdicts: list            # verdicts[i][j] at (b_values[i], rho_d_values[j])

    def regime_codes(self) -> np.ndarray:
        order = {Regime.UNSTABLE_PERIODIC: 0, Regime.STABLE_NONZERO: 1,
                 Regime.STABLE_ZERO: 2, None: -1}
        return np.array([[order[v.regime] for v in row] for row in self.verdicts])

    def rows(self):
        for row in self.verdicts:
            for v in row:
                yield v


def region_map(params: RescaledParameters,
               rho_d_range: tuple[float, float] = (0.04, 0.75),
               b_range: tuple[float, float] = (0.2, 1.5),
               shape: tuple[int, int] = (40, 40),
               workers: int | None = None) -> RegionMap:
    """Classify a full (rho_d, b) grid; cells are independent and parallel."""
    rho_vals = np.linspace(*rho_d_range, shape[0])
    b_vals = np.linspace(*b_range, shape[1])
    tasks = [(i, j, float(rho_vals[j]), float(b_vals[i]), params)
             for i in range(b_vals.size) for j in range(rho_vals.size)]
    grid = [[None] * rho_vals.size for _ in range(b_vals.size)]
    n_workers = worker_count(workers)
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for i, j, verdict in pool.map(_classify_cell, tasks, chunksize=16):
                grid[i][j] = verdict
    else:
        for task in tasks:
            i, j, verdict = _classify_cell(task)
            grid[i][j] = verdict
    return RegionMap(rho_d_values=rho_vals, b_values=b_vals, verdicts=grid)


@dataclass(frozen=True)
class Crossing:
    parameter_value: float
    root: complex


@dataclass
class RootTrajectory:
    parameter: str
    values: np.ndarray
    roots: np.ndarray             # complex rightmost root per value (nan if lost)
    crossings: list[Crossing]
    branch_switches: list[int]    # indices where the rightmost jumped branches
    lost_from: int | None = None  # first index where continuation failed


def _rightmost_at(params: RescaledParameters, parameter: str, value: float,
                  seeds=(), starts=(15, 15)):
    p = with_rates(params, rho_d=value if parameter == "rho_d" else None,
                   b=value if parameter == "b" else None)
    state = steady.solve_steady(p, steady.APPROX4)
    coeffs = spectral._char_coeffs(state, p)
    candidates = []
    for seed in seeds:
        lam = spectral._newton_root(coeffs, seed)
        if lam is None:
            continue
        if lam.imag < 0:
            lam = lam.conjugate()
        if abs(spectral._f_characteristic(lam, *coeffs) - 1.0) < 1e-10:
            candidates.append(lam)
    full = spectral.rightmost_roots(state, starts=starts)
    candidates.extend(r.lam for r in full[:8])
    if not candidates:
        return None, full
    top = max(candidates, key=lambda z: z.real)
    return top, full


def root_trajectory(params: RescaledParameters, parameter: str,
                    values, jump_threshold: float = 0.5,
                    crossing_tol: float = 1e-6) -> RootTrajectory:
    """Continue the rightmost root along a one-parameter sweep.

    Each step seeds Newton with the previous top roots and re-runs the grid
    search, so a branch overtaking the current rightmost is caught; such
    exchanges are flagged as branch switches.  Imaginary-axis crossings are
    then located by bisection on the real part.
    """
    if parameter not in ("rho_d", "b"):
        raise StemflowError(f"sweep parameter must be rho_d or b, got {parameter}")
    values = np.asarray(values, dtype=float)
    roots = np.full(values.size, complex(math.nan, math.nan), dtype=complex)
    switches: list[int] = []
    lost_from = None
    seeds: list[complex] = []
    prev = None
    for k, value in enumerate(values):
        try:
            top, full = _rightmost_at(params, parameter, float(value), seeds=seeds)
        except StemflowError:
            lost_from = k
            break
        if top is None:
            lost_from = k
            break
        roots[k] = top
        seeds = [r.lam for r in full[:8]] + [top]
        if prev is not None and abs(top - prev) > jump_threshold:
            switches.append(k)
        prev = top

    crossings = []
    good = ~np.isnan(roots.real)
    for k in range(1, values.size):
        if not (good[k - 1] and good[k]):
            continue
        re0, re1 = roots[k - 1].real, roots[k].real
        if re0 == 0.0 or re0 * re1 >= 0.0:
            continue
        lo, hi = float(values[k - 1]), float(values[k])
        seed_roots = [roots[k - 1], roots[k]]
        root_mid = roots[k]
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            top, _ = _rightmost_at(params, parameter, mid, seeds=seed_roots)
            if top is None:
                break
            root_mid = top
            seed_roots = [top] + seed_roots[:3]
            if abs(top.real) < crossing_tol:
                break
            if (top.real > 0) == (re0 > 0):
                lo = mid
            else:
                hi = mid
            mid = 0.5 * (lo + hi)
        crossings.append(Crossing(parameter_value=0.5 * (lo + hi), root=root_mid))
    return RootTrajectory(parameter=parameter, values=values, roots=roots,
                          crossings=crossings, branch_switches=switches,
                          lost_from=lost_from)


def write_region_csv(rmap: RegionMap, path) -> None:
    rows = list(rmap.rows())
    write_csv(path, {
        "rho_d": [v.rho_d for v in rows],
        "b": [v.b for v in rows],
        "regime": [v.regime.value if v.regime else "indeterminate" for v in rows],
        "rightmost_re": [v.rightmost_re for v in rows],
        "rightmost_im": [v.rightmost_im for v in rows],
        "nonzero_exists": [float(v.nonzero_exists) for v in rows],
    })


_REGIME_COLORS = {0: "#c0392b", 1: "#27ae60", 2: "#2980b9", -1: "#7f8c8d"}
_REGIME_LABELS = {0: "unstable periodic", 1: "stable nonzero", 2: "stable zero",
                  -1: "indeterminate"}


def write_region_svg(rmap: RegionMap, path, cell_px: int = 12) -> None:
    """Minimal flat-color SVG heatmap with axes; no plotting dependency."""
    codes = rmap.regime_codes()
    ny, nx = codes.shape
    mleft, mbottom, mtop, mright = 70, 50, 20, 170
    width = nx * cell_px + mleft + mright
    height = ny * cell_px + mtop + mbottom
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" font-family="monospace" font-size="12">']
    parts.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    for i in range(ny):           # b increases upward
        for j in range(nx):
            x = mleft + j * cell_px
            y = mtop + (ny - 1 - i) * cell_px
            parts.append(f'<rect x="{x}" y="{y}" width="{cell_px}" height="{cell_px}" '
                         f'fill="{_REGIME_COLORS[int(codes[i, j])]}"/>')
    x0, y0 = mleft, mtop + ny * cell_px
    x1, y1 = mleft + nx * cell_px, mtop
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    for frac in (0.0, 0.5, 1.0):
        rv = rmap.rho_d_values[0] + frac * (rmap.rho_d_values[-1] - rmap.rho_d_values[0])
        bv = rmap.b_values[0] + frac * (rmap.b_values[-1] - rmap.b_values[0])
        xt = x0 + frac * nx * cell_px
        yt = y0 - frac * ny * cell_px
        parts.append(f'<line x1="{xt}" y1="{y0}" x2="{xt}" y2="{y0 + 5}" stroke="black"/>')
        parts.append(f'<text x="{xt - 14}" y="{y0 + 20}">{rv:.2f}</text>')
        parts.append(f'<line x1="{x0 - 5}" y1="{yt}" x2="{x0}" y2="{yt}" stroke="black"/>')
        parts.append(f'<text x="{x0 - 52}" y="{yt + 4}">{bv:.2f}</text>')
    parts.append(f'<text x="{x0 + nx * cell_px // 2 - 30}" y="{y0 + 38}">rho_d (1/day)</text>')
    parts.append(f'<text x="12" y="{mtop - 6}">b (1/day)</text>')
    for k, code in enumerate(sorted(set(codes.ravel().tolist()))):
        ly = mtop + 20 * k
        parts.append(f'<rect x="{x1 + 16}" y="{ly}" width="14" height="14" '
                     f'fill="{_REGIME_COLORS[int(code)]}"/>')
        parts.append(f'<text x="{x1 + 36}" y="{ly + 12}">{_REGIME_LABELS[int(code)]}</text>')
    parts.append("</svg>")
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(parts) + "\n")
    except OSError as exc:
        raise StemflowError(f"cannot write SVG {path}: {exc}") from exc


def write_trajectory_csv(traj: RootTrajectory, path) -> None:
    write_csv(path, {
        traj.parameter: traj.values,
        "rightmost_re": traj.roots.real,
        "rightmost_im": traj.roots.imag,
    })


# ---------------------------------------------------------------------------
# Simulation-trace triage

_EXTINCT_FRACTION = 1e-3
_PERIODIC_MIN_AMPLITUDE = 0.10    # of the tail mean
_PERIODIC_MIN_CYCLES = 3
_PLATEAU_MAX_CV = 0.02
_TAIL_FRACTION = 0.4              # window for amplitude / CV / final level
_CYCLE_BURN_IN = 0.1              # cycles are counted after this fraction


def classify_trace(trace: PopulationTrace, min_days: float = 60.0) -> TraceRegime:
    """Label a recorded run as periodic, plateau, extinct or indeterminate.

    Tail-window analysis of the total stem population: extinction when the
    final level falls below 1e-3 of the all-time peak; periodic when the
    tail oscillates by more than 10% of its mean with at least 3 detected
    cycles; plateau when the tail coefficient of variation is below 2%.
    """
    t = trace.t_days
    if trace.span_days < min_days:
        raise StemflowError(
            f"trace spans {trace.span_days:.1f} days; need >= {min_days} to classify")
    total = trace.stem_total
    peak = float(np.max(total))
    final = float(np.mean(total[-max(2, total.size // 50):]))
    if peak <= 0.0 or final < _EXTINCT_FRACTION * peak:
        return TraceRegime.EXTINCT

    t0 = t[0]
    span = trace.span_days
    tail = total[t >= t0 + (1.0 - _TAIL_FRACTION) * span]
    tail_mean = float(np.mean(tail))
    amplitude = 0.5 * (float(np.max(tail)) - float(np.min(tail)))

    cycle_win = total[t >= t0 + _CYCLE_BURN_IN * span]
    centered = cycle_win - float(np.mean(cycle_win))
    down = int(np.sum((centered[:-1] > 0) & (centered[1:] <= 0)))

    if amplitude > _PERIODIC_MIN_AMPLITUDE * tail_mean and down >= _PERIODIC_MIN_CYCLES:
        return TraceRegime.PERIODIC
    if tail_mean > 0 and float(np.std(tail)) / tail_mean < _PLATEAU_MAX_CV:
        return TraceRegime.NONZERO_PLATEAU
    return TraceRegime.INDETERMINATE
