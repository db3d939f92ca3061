"""Command-line front end: simulation runs, analysis reports, figure data.

All outputs are CSV (plus one SVG for the stability map); plotting is left
to external tools.  Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from pathlib import Path

import numpy as np

from . import abm, dde, pde_full, pde_reduced, scan, spectral, steady
from .csvio import read_csv, write_csv
from .errors import ConfigError, StemflowError
from .params import (RawParameters, RescaledParameters, load_raw_parameters,
                     rescale, with_rates)
from .traces import PopulationTrace

_RAW_KEYS = {f.name for f in dataclasses.fields(RawParameters)
             if f.name not in ("f_alpha_knots", "f_omega_knots")}
_KNOT_KEYS = {f"{prefix}_{suffix}" for prefix in ("f_alpha", "f_omega")
              for suffix in ("0", "half", "full", "inf")}
_RESCALED_KEYS = {"b", "kappa", "rho_d", "rho_r"}


def load_configured_params(ns) -> tuple[RawParameters, RescaledParameters]:
    """Preset/file + --d + --set overrides -> (raw, rescaled) parameter pair."""
    raw = load_raw_parameters(ns.params_file if ns.params_file else ns.preset)
    raw_over: dict = {}
    rescaled_over: dict = {}
    if getattr(ns, "d", None) is not None:
        raw_over["d"] = ns.d
    for item in getattr(ns, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        key = key.strip()
        try:
            val = float(value)
        except ValueError as exc:
            raise ConfigError(f"--set {key}: bad numeric value {value!r}") from exc
        if key in _RESCALED_KEYS:
            rescaled_over[key] = val
        elif key in _RAW_KEYS:
            raw_over[key] = val
        elif key in _KNOT_KEYS:
            raw_over[key] = val
        else:
            raise ConfigError(f"unknown parameter key {key!r} in --set")
    knots_a = list(raw.f_alpha_knots)
    knots_o = list(raw.f_omega_knots)
    idx = {"0": 0, "half": 1, "full": 2, "inf": 3}
    plain = {}
    for key, val in raw_over.items():
        if key.startswith("f_alpha_"):
            knots_a[idx[key.removeprefix("f_alpha_")]] = val
        elif key.startswith("f_omega_"):
            knots_o[idx[key.removeprefix("f_omega_")]] = val
        else:
            plain[key] = val
    raw = dataclasses.replace(raw, f_alpha_knots=tuple(knots_a),
                              f_omega_knots=tuple(knots_o), **plain)
    params = rescale(raw, b=rescaled_over.get("b", 0.42),
                     kappa=rescaled_over.get("kappa", 0.54))
    params = with_rates(params, rho_d=rescaled_over.get("rho_d"))
    if "rho_r" in rescaled_over:
        params = dataclasses.replace(params, rho_r=rescaled_over["rho_r"])
    return raw, params


def emit_csv(data, path) -> None:
    """Write a trace or a plain column table as CSV."""
    if isinstance(data, PopulationTrace):
        write_csv(path, data.columns())
    elif isinstance(data, dde.DelayTrace):
        write_csv(path, {"t_days": data.t_days, "Omega_bar": data.omega_bar,
                         "A_star": data.a_star, "C": data.c_integral})
    elif isinstance(data, dict):
        write_csv(path, data)
    else:
        raise StemflowError(f"cannot serialize {type(data).__name__} to CSV")


def emit_overlay_csv(named_traces, path) -> None:
    """Several traces in one file, tagged by a `model` column."""
    model, t, a, o = [], [], [], []
    for name, trace in named_traces:
        model.extend([name] * trace.t_days.size)
        t.append(trace.t_days)
        a.append(trace.a_total)
        o.append(trace.omega_total)
    write_csv(path, {"model": model, "t_days": np.concatenate(t),
                     "A_total": np.concatenate(a), "Omega_total": np.concatenate(o)})


def _run_model(ns, raw, params, model: str, seed: int) -> PopulationTrace:
    days = ns.days
    if model == "abm":
        cfg = abm.AbmConfig(raw=raw, horizon_days=days, seed=seed,
                            imatinib_enabled=ns.imatinib,
                            record_cadence_hours=ns.cadence_hours)
        return abm.simulate(cfg)
    if model == "approx0":
        return pde_full.simulate_full(params, days=days, nx=ns.nx or 256,
                                      record_every=ns.record_every)
    variant = int(model.removeprefix("approx"))
    trace, _ = pde_reduced.simulate_reduced(params, variant, days=days,
                                            nx=ns.nx or 512,
                                            record_every=ns.record_every)
    return trace


def cmd_simulate(ns) -> int:
    raw, params = load_configured_params(ns)
    trace = _run_model(ns, raw, params, ns.model, ns.seed)
    out = Path(ns.out or f"{ns.model}_trace.csv")
    emit_csv(trace, out)
    regime = scan.classify_trace(trace) if trace.span_days >= 60 else None
    print(f"{ns.model}: {trace.t_days.size} samples over {trace.span_days:g} days "
          f"-> {out}" + (f"  [regime: {regime.value}]" if regime else ""))
    return 0


def cmd_steady(ns) -> int:
    _, params = load_configured_params(ns)
    variant = ns.variant
    exists = (steady.exists_nonzero_approx4(params) if variant == 4
              else steady.exists_nonzero_approx3(params))
    bstar = steady.companion_rate(params.b, params.rho_d)
    if not exists:
        print(f"variant={variant} exists=no b_star={bstar:.10g} "
              f"(zero is the only steady state)")
        if ns.out:
            write_csv(ns.out, {"variant": [float(variant)], "exists": [0.0],
                               "b_star": [bstar]})
        return 0
    state = steady.solve_steady(params, variant)
    print(f"variant={variant} exists=yes b_star={bstar:.10g}")
    print(f"A_tilde={state.a_tilde:.10g} Omega_bar={state.omega_bar:.10g} "
          f"Omega0={state.omega0:.10g}")
    residuals = steady.steady_residuals(state)
    print("residuals: " + " ".join(f"{k}={v:.2e}" for k, v in residuals.items()))
    if ns.out:
        write_csv(ns.out, {"variant": [float(variant)], "exists": [1.0],
                           "b_star": [bstar], "A_tilde": [state.a_tilde],
                           "Omega_bar": [state.omega_bar], "Omega0": [state.omega0]})
    return 0


def cmd_eigen(ns) -> int:
    _, params = load_configured_params(ns)
    rates = spectral.zero_state_rates(params, variant=ns.variant)
    eig = spectral.real_eigenvalue(rates)
    res = eig.residuals()
    print(f"lambda={eig.eigenvalue:.10g} per day (zero-state frozen rates, "
          f"variant {ns.variant})")
    print(f"A={eig.a_value:.10g} Omega(0)={float(eig.omega_fn(0.0)):.10g} "
          f"Psi={eig.psi:.10g} phi(1)={float(eig.phi(1.0)):.3e}")
    print("residuals: " + " ".join(f"{k}={v:.2e}" for k, v in res.items()))
    if ns.out:
        write_csv(ns.out, {"lambda": [eig.eigenvalue], "A": [eig.a_value],
                           "Psi": [eig.psi]})
    return 0


def cmd_char_roots(ns) -> int:
    _, params = load_configured_params(ns)
    state = steady.solve_steady(params, steady.APPROX4)
    roots = spectral.rightmost_roots(state)
    out = Path(ns.out or "char_roots.csv")
    write_csv(out, {"re": [r.lam.real for r in roots],
                    "im": [r.lam.imag for r in roots],
                    "residual": [r.residual for r in roots]})
    top = roots[0].lam if roots else None
    print(f"{len(roots)} roots -> {out}" +
          (f"; rightmost = {top.real:+.6f}{top.imag:+.6f}i" if top else ""))
    return 0


def cmd_zero_stability(ns) -> int:
    _, params = load_configured_params(ns)
    verdict = spectral.zero_state_condition(params)
    rates = spectral.zero_state_rates(params)
    value = spectral.stability_integral(rates)
    print(f"zero state: {verdict.value} (return integral {value:.10g} vs "
          f"rho_d {params.rho_d:.10g})")
    return 0


def cmd_dde(ns) -> int:
    _, params = load_configured_params(ns)
    trace = dde.integrate_dde(params, days=ns.days,
                              steps_per_delay=ns.steps_per_delay)
    out = Path(ns.out or "dde_trace.csv")
    emit_csv(trace, out)
    print(f"dde: {trace.t_days.size} samples, valid from t={trace.valid_from:.3f} "
          f"days -> {out}")
    return 0


def cmd_stability_map(ns) -> int:
    _, params = load_configured_params(ns)
    rmap = scan.region_map(params, rho_d_range=(ns.rho_d_min, ns.rho_d_max),
                           b_range=(ns.b_min, ns.b_max),
                           shape=(ns.grid, ns.grid), workers=ns.workers)
    out_csv = Path(ns.out or "stability_map.csv")
    scan.write_region_csv(rmap, out_csv)
    msg = f"stability map {ns.grid}x{ns.grid} -> {out_csv}"
    if ns.svg:
        scan.write_region_svg(rmap, ns.svg)
        msg += f", {ns.svg}"
    print(msg)
    return 0


def cmd_root_trajectory(ns) -> int:
    _, params = load_configured_params(ns)
    values = np.linspace(getattr(ns, "from"), ns.to, ns.steps)
    traj = scan.root_trajectory(params, ns.param, values)
    out = Path(ns.out or f"trajectory_{ns.param}.csv")
    scan.write_trajectory_csv(traj, out)
    for crossing in traj.crossings:
        print(f"crossing at {ns.param}={crossing.parameter_value:.6f} "
              f"root={crossing.root.real:+.2e}{crossing.root.imag:+.6f}i")
    if not traj.crossings:
        print("no imaginary-axis crossing in the sweep range")
    if traj.lost_from is not None:
        print(f"branch lost at index {traj.lost_from} "
              f"({ns.param}={values[traj.lost_from]:.6f})")
    print(f"trajectory -> {out}")
    return 0


def cmd_reproduce(ns) -> int:
    out_dir = Path(ns.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    raw0, params0 = load_configured_params(ns)
    fig = ns.figure
    fast = ns.fast
    if fig in (2, 3, 4, 5):
        model_for = {2: ["approx0"], 3: ["approx1"], 4: ["approx2"],
                     5: ["approx3", "approx4"]}
        days = 50.0 if fast else 100.0
        seeds = [0] if fast else [0, 1, 2]
        for d in (1.02, 1.05, 1.2):
            raw = dataclasses.replace(raw0, d=d)
            params = rescale(raw, b=params0.b, kappa=params0.kappa)
            named = []
            for seed in seeds:
                cfg = abm.AbmConfig(raw=raw, horizon_days=days, seed=seed)
                named.append((f"abm-seed{seed}", abm.simulate(cfg)))
            for model in model_for[fig]:
                if model == "approx0":
                    tr = pde_full.simulate_full(params, days=days,
                                                nx=128 if fast else 256)
                else:
                    tr, _ = pde_reduced.simulate_reduced(
                        params, int(model.removeprefix("approx")), days=days,
                        nx=256 if fast else 512)
                named.append((model, tr))
            path = out_dir / f"figure{fig}_d{str(d).replace('.', 'p')}.csv"
            emit_overlay_csv(named, path)
            print(f"wrote {path}")
        return 0
    if fig == 6:
        grid = 12 if fast else 40
        rmap = scan.region_map(params0, shape=(grid, grid), workers=ns.workers)
        scan.write_region_csv(rmap, out_dir / "figure6_region_map.csv")
        scan.write_region_svg(rmap, out_dir / "figure6_region_map.svg")
        print(f"wrote {out_dir}/figure6_region_map.csv and .svg")
        return 0
    if fig == 7:
        steps = 12 if fast else 40
        traj_a = scan.root_trajectory(params0, "rho_d",
                                      np.linspace(0.0422, 0.3505, steps))
        scan.write_trajectory_csv(traj_a, out_dir / "figure7a_rho_d_sweep.csv")
        traj_b = scan.root_trajectory(with_rates(params0, rho_d=0.1884), "b",
                                      np.linspace(0.2, 1.5, steps))
        scan.write_trajectory_csv(traj_b, out_dir / "figure7b_b_sweep.csv")
        print(f"wrote {out_dir}/figure7a_rho_d_sweep.csv and figure7b_b_sweep.csv")
        return 0
    raise ConfigError(f"no reproduction recipe for figure {fig}")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--preset", default="ph-minus",
                        help="shipped parameter preset name")
    parser.add_argument("--params-file", help="parameter file (overrides --preset)")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a parameter (raw or rescaled); repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stemflow",
        description="Simulation and stability analysis of a two-compartment "
                    "stem cell model (quiescent/proliferating, CML dynamics).")
    sub = parser.add_subparsers(dest="cmd")

    p = sub.add_parser("simulate", help="run one model and write its trace CSV")
    _add_common(p)
    p.add_argument("--model", required=True,
                   choices=["abm", "approx0", "approx1", "approx2", "approx3", "approx4"])
    p.add_argument("--d", type=float, help="raw differentiation factor override")
    p.add_argument("--days", type=float, default=100.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nx", type=int, help="maturity cells (transport models)")
    p.add_argument("--cadence-hours", type=int, default=24, dest="cadence_hours")
    p.add_argument("--record-every", type=float, default=0.25)
    p.add_argument("--imatinib", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("steady", help="nonzero steady state report")
    _add_common(p)
    p.add_argument("--variant", type=int, choices=[3, 4], default=4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_steady)

    p = sub.add_parser("eigen", help="real eigenvalue at the zero-state frozen rates")
    _add_common(p)
    p.add_argument("--variant", type=int, choices=[3, 4], default=3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("char-roots", help="characteristic roots at the steady state")
    _add_common(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_char_roots)

    p = sub.add_parser("zero-stability", help="zero steady state verdict")
    _add_common(p)
    p.set_defaults(func=cmd_zero_stability)

    p = sub.add_parser("dde", help="integrate the delay form of variant 4")
    _add_common(p)
    p.add_argument("--days", type=float, default=100.0)
    p.add_argument("--steps-per-delay", type=int, default=64)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dde)

    p = sub.add_parser("stability-map", help="regime map over (rho_d, b)")
    _add_common(p)
    p.add_argument("--rho-d-min", type=float, default=0.04)
    p.add_argument("--rho-d-max", type=float, default=0.75)
    p.add_argument("--b-min", type=float, default=0.2)
    p.add_argument("--b-max", type=float, default=1.5)
    p.add_argument("--grid", type=int, default=40)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_stability_map)

    p = sub.add_parser("root-trajectory", help="rightmost-root sweep")
    _add_common(p)
    p.add_argument("--param", required=True, choices=["rho_d", "b"])
    p.add_argument("--from", type=float, required=True)
    p.add_argument("--to", type=float, required=True)
    p.add_argument("--steps", type=int, default=40)
    p.add_argument("--out")
    p.set_defaults(func=cmd_root_trajectory)

    p = sub.add_parser("reproduce", help="regenerate the data behind one figure")
    _add_common(p)
    p.add_argument("--figure", type=int, required=True, choices=[2, 3, 4, 5, 6, 7])
    p.add_argument("--out-dir", default="reproduction")
    p.add_argument("--fast", action="store_true",
                   help="smaller grids/horizons for smoke testing")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_reproduce)
    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    if getattr(ns, "cmd", None) is None:
        parser.print_usage(file=sys.stderr)
        return 2
    try:
        return ns.func(ns)
    except ConfigError as exc:
        print(f"stemflow {ns.cmd}: {exc}", file=sys.stderr)
        return 2
    except StemflowError as exc:
        print(f"stemflow {ns.cmd}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
