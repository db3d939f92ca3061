import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stemflow import params
from stemflow.errors import ConfigError, IllConditionedSigmoidError, ParameterError


def test_rescaled_reference_values(p_default):
    assert round(p_default.gamma, 4) == 6.2146
    assert round(p_default.rho_d, 4) == 0.1884
    assert round(p_default.rho_r, 4) == 0.3681


@pytest.mark.parametrize("d,expected", [(1.02, 0.0765), (1.05, 0.1884), (1.2, 0.7041)])
def test_differentiation_rate_family(d, expected):
    p = params.rescale(params.RawParameters(d=d))
    assert round(p.rho_d, 4) == expected


def test_rescale_rejects_degenerate_factors():
    with pytest.raises(ParameterError):
        params.rescale(params.RawParameters(d=1.0))
    with pytest.raises(ParameterError):
        params.rescale(params.RawParameters(r=1.0))
    with pytest.raises(ParameterError):
        params.RawParameters(a_min=0.0)


def test_maturity_maps_onto_affinity_range(p_default):
    # x = 1 corresponds exactly to the affinity floor
    assert math.exp(-p_default.gamma) == pytest.approx(p_default.a_min, rel=1e-15)


def test_transition_characteristics_at_knots(p_default):
    assert p_default.f_alpha(0.0) == pytest.approx(12.0, rel=1e-12)
    assert p_default.f_alpha(0.5) == pytest.approx(24 * 0.45, rel=1e-10)
    assert p_default.f_alpha(1.0) == pytest.approx(1.2, rel=1e-10)
    assert p_default.f_alpha(1e9) == pytest.approx(0.0, abs=1e-9)
    assert p_default.f_omega(1.0) == pytest.approx(2.4, rel=1e-10)


def test_transfer_rate_endpoints(p_default):
    a_bar, o_bar = 0.3, 0.2
    assert p_default.alpha(0.0, a_bar) == pytest.approx(p_default.f_alpha(a_bar))
    # e^{gamma} = 1/a_min makes the activation rate at x=1 equal f_omega
    assert p_default.omega(1.0, o_bar) == pytest.approx(p_default.f_omega(o_bar), rel=1e-12)
    mid_factor = math.exp(-p_default.gamma / 2.0)
    assert mid_factor == pytest.approx(0.04472, abs=5e-6)
    assert p_default.alpha(0.5, a_bar) == pytest.approx(mid_factor * p_default.f_alpha(a_bar))


def test_maturity_domain_enforced(p_default):
    with pytest.raises(ParameterError):
        p_default.alpha(-0.1, 1.0)
    with pytest.raises(ParameterError):
        p_default.omega(1.2, 1.0)


knot_sets = st.tuples(
    st.floats(min_value=1e-3, max_value=10.0),
    st.floats(min_value=0.05, max_value=0.95),
    st.floats(min_value=0.05, max_value=0.95),
    st.floats(min_value=0.0, max_value=0.5),
).map(lambda t: (t[0] + t[3], t[0] * (0.05 + 0.9 * max(t[1], t[2])) + t[3],
                 t[0] * (0.04 * min(t[1], t[2])) + t[3], t[3]))


@given(knot_sets)
def test_sigmoid_reproduces_its_knots(knots):
    f0, fh, ff, finf = knots
    sig = params.sigmoid_coefficients(knots)
    assert sig.evaluate(0.0) == pytest.approx(f0, rel=1e-10)
    assert sig.evaluate(0.5) == pytest.approx(fh, rel=1e-10)
    assert sig.evaluate(1.0) == pytest.approx(ff, rel=1e-10)


def test_sigmoid_monotone_on_dense_grid(raw_default):
    for knots in (raw_default.f_alpha_knots, raw_default.f_omega_knots,
                  (0.5, 0.3, 0.1, 0.0)):
        sig = params.sigmoid_coefficients(knots)
        xs = np.linspace(0.0, 20.0, 10_000)
        vals = sig.evaluate(xs)
        assert np.all(np.diff(vals) <= 1e-15)
        assert np.all(vals >= 0.0)


def test_sigmoid_derivative_matches_finite_difference():
    sig = params.sigmoid_coefficients((0.5, 0.45, 0.05, 0.0))
    for y in (0.0, 0.3, 0.9, 2.0):
        h = 1e-6
        fd = (sig.evaluate(y + h) - sig.evaluate(y - h)) / (2 * h)
        assert sig.derivative(y) == pytest.approx(fd, rel=1e-7)


def test_degenerate_knots_rejected():
    with pytest.raises(IllConditionedSigmoidError):
        params.sigmoid_coefficients((0.3, 0.3, 0.3, 0.0))
    with pytest.raises(IllConditionedSigmoidError):
        params.sigmoid_coefficients((0.5, 0.3, 0.3, 0.0))


def test_all_presets_load_and_validate():
    for name in params.PRESET_NAMES:
        raw = params.load_preset(name)
        if name == "ph-minus":
            assert raw.r_inh == 0.0
        else:
            assert raw.r_inh == pytest.approx(0.05)
            assert raw.r_deg == pytest.approx(0.033)
        params.sigmoid_coefficients(raw.f_alpha_knots)
        params.sigmoid_coefficients(raw.f_omega_knots)


def test_parameter_file_round_trip(raw_default, tmp_path):
    text = params.format_parameters(raw_default)
    again = params.parse_parameters(text)
    assert again == raw_default
    path = tmp_path / "custom.params"
    path.write_text(text)
    assert params.load_raw_parameters(path) == raw_default


def test_parameter_file_strictness():
    with pytest.raises(ConfigError):
        params.parse_parameters("a_min = 0.002\nbogus_key = 1\n")
    with pytest.raises(ConfigError):
        params.parse_parameters("a_min = 0.002\n")  # missing keys
    with pytest.raises(ConfigError):
        params.load_raw_parameters("no-such-preset")


def test_rate_overrides(p_default):
    p = params.with_rates(p_default, rho_d=0.3, b=0.6)
    assert p.rho_d == 0.3 and p.b == 0.6
    assert p.sigmoid_alpha == p_default.sigmoid_alpha
