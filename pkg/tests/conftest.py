import numpy as np
import pytest

from stemflow import abm, params, pde_full


@pytest.fixture(scope="session")
def raw_default():
    return params.load_preset("ph-minus")


@pytest.fixture(scope="session")
def p_default(raw_default):
    return params.rescale(raw_default)


@pytest.fixture(scope="session")
def fig2_runs():
    """ABM (3 seeds) and full-model traces for d in {1.02, 1.05, 1.2}, 100 days.

    Shared by the regime-reproduction criteria; keyed by d.
    """
    out = {}
    for d in (1.02, 1.05, 1.2):
        raw = params.RawParameters(d=d)
        p = params.rescale(raw)
        abm_traces = [abm.simulate(abm.AbmConfig(raw=raw, horizon_days=100.0, seed=s))
                      for s in (0, 1, 2)]
        pde_trace = pde_full.simulate_full(p, days=100.0, record_every=0.5)
        out[d] = {"raw": raw, "params": p, "abm": abm_traces, "approx0": pde_trace}
    return out


def interp_onto(t, trace):
    a = np.interp(t, trace.t_days, trace.a_total)
    o = np.interp(t, trace.t_days, trace.omega_total)
    return a, o
