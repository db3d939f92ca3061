"""Model parameters for the two-compartment stem cell model.

The raw parameter set follows the hourly, cell-count formulation of the
agent-based model: stem cells carry an affinity a in [a_min, a_max] which
grows by a factor r per hour while quiescent (Alpha) and shrinks by a
factor d per hour while proliferating (Omega).  Transition rates between
the compartments are sigmoidal functions of the total compartment
populations, tabulated by four knot values f(0), f(N/2), f(N), f(inf).

`rescale` converts to the continuum form used by the PDE, delay and
spectral machinery: time in days, maturity x = -log(a)/gamma in [0, 1]
with gamma = -log(a_min), populations in units of the sigmoid scale
(so N_tilde becomes 1), advection speeds

    rho_r = 24 log(r) / gamma,      rho_d = 24 log(d) / gamma,

and transition rates multiplied by 24.  The cycle-averaged systems use
two additional constants: the mean proliferative growth rate b and the
fraction kappa of the cell cycle spent in the transfer-permissive phase.
Both are fixed model constants here (0.42/day and 0.54); they are not
derived from c1/c2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, IllConditionedSigmoidError, ParameterError

# Cycle-averaged proliferation constants (per day / dimensionless).
DEFAULT_B = 0.42
DEFAULT_KAPPA = 0.54

# Maturity abscissa used when the return rate is frozen to one x value.
DEFAULT_MIDPOINT = 0.5

_EXP_CLIP = 700.0  # keep exp() finite; beyond this the sigmoid is flat anyway


@dataclass(frozen=True)
class SigmoidCoefficients:
    """Coefficients of the four-knot transition sigmoid.

    evaluate() returns the raw (per-hour) rate; the PDE-side wrappers on
    RescaledParameters multiply by 24.
    """

    nu1: float
    nu2: float
    nu3: float
    nu4: float
    n_tilde: float = 1.0

    def evaluate(self, population):
        z = np.clip(self.nu3 * np.asarray(population, dtype=float) / self.n_tilde,
                    None, _EXP_CLIP)
        return 1.0 / (self.nu1 + self.nu2 * np.exp(z)) + self.nu4

    def derivative(self, population):
        """d(evaluate)/d(population); negative for decreasing knot sets."""
        z = np.clip(self.nu3 * np.asarray(population, dtype=float) / self.n_tilde,
                    None, _EXP_CLIP)
        q = self.nu2 * np.exp(z)
        s = self.nu1 + q
        return -(self.nu3 / self.n_tilde) * (q / s) / s


def sigmoid_coefficients(knots, n_tilde: float = 1.0) -> SigmoidCoefficients:
    """Fit the sigmoid through knot values (f(0), f(N/2), f(N), f(inf)).

    The first three knots must be strictly decreasing; a flat knot set
    makes the defining system singular and is rejected.
    """
    f0, fhalf, ffull, finf = (float(k) for k in knots)
    for name, value in (("f(0)", f0), ("f(N/2)", fhalf), ("f(N)", ffull), ("f(inf)", finf)):
        if value < 0.0:
            raise ParameterError(f"sigmoid knot {name} must be >= 0, got {value}")
    if not (f0 > fhalf > ffull > finf):
        raise IllConditionedSigmoidError(
            f"sigmoid knots must be strictly decreasing, got {knots}")
    h1 = 1.0 / (f0 - finf)
    h2 = 1.0 / (fhalf - finf)
    h3 = 1.0 / (ffull - finf)
    denom = h1 + h3 - 2.0 * h2
    if abs(denom) < 1e-12 * abs(h1):
        raise IllConditionedSigmoidError(
            f"sigmoid knots {knots} are ill-conditioned (h1 + h3 - 2 h2 ~ 0)")
    nu1 = (h1 * h3 - h2 * h2) / denom
    nu2 = h1 - nu1
    if nu2 <= 0.0 or h3 <= nu1:
        raise IllConditionedSigmoidError(
            f"sigmoid knots {knots} do not define a decreasing transition curve")
    nu3 = math.log((h3 - nu1) / nu2)
    return SigmoidCoefficients(nu1=nu1, nu2=nu2, nu3=nu3, nu4=finf, n_tilde=n_tilde)


@dataclass(frozen=True)
class RawParameters:
    """Hourly, cell-count parameters of the agent-based formulation."""

    a_min: float = 0.002
    a_max: float = 1.0
    d: float = 1.05           # hourly affinity decrease factor in Omega
    r: float = 1.1            # hourly affinity increase factor in Alpha
    c1_hours: float = 17.0    # S/G2/M duration
    c2_hours: float = 49.0    # full cell cycle
    lambda_p_days: float = 20.0
    lambda_m_days: float = 8.0
    tau_c_hours: float = 24.0
    f_alpha_knots: tuple[float, float, float, float] = (0.5, 0.45, 0.05, 0.0)
    f_omega_knots: tuple[float, float, float, float] = (0.5, 0.3, 0.1, 0.0)
    n_tilde_a: float = 1e5
    n_tilde_omega: float = 1e5
    r_inh: float = 0.0        # hourly probability Ph+ proliferative -> affected
    r_deg: float = 0.0        # hourly probability affected proliferative dies

    def __post_init__(self):
        if not (0.0 < self.a_min < self.a_max):
            raise ParameterError(f"need 0 < a_min < a_max, got {self.a_min}, {self.a_max}")
        if self.d < 1.0 or self.r < 1.0:
            raise ParameterError(f"need d >= 1 and r >= 1, got d={self.d}, r={self.r}")
        if not (0.0 < self.c1_hours < self.c2_hours):
            raise ParameterError(f"need 0 < c1 < c2, got {self.c1_hours}, {self.c2_hours}")
        for name in ("f_alpha_knots", "f_omega_knots"):
            knots = getattr(self, name)
            if len(knots) != 4:
                raise ParameterError(f"{name} must have 4 entries")
            if any(k < 0 for k in knots):
                raise ParameterError(f"{name} entries must be >= 0")
            if not all(a >= b for a, b in zip(knots, knots[1:])):
                raise ParameterError(f"{name} must be non-increasing, got {knots}")
        if self.n_tilde_a <= 0 or self.n_tilde_omega <= 0:
            raise ParameterError("population scales must be positive")
        for name in ("r_inh", "r_deg"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ParameterError(f"{name} must be a probability, got {p}")


@dataclass(frozen=True)
class RescaledParameters:
    """Per-day, maturity-coordinate parameters for the continuum systems."""

    gamma: float
    rho_r: float
    rho_d: float
    b: float
    kappa: float
    sigmoid_alpha: SigmoidCoefficients
    sigmoid_omega: SigmoidCoefficients
    c1_days: float
    c2_days: float
    a_min: float
    n_scale: float = 1e5      # cells per population unit

    def __post_init__(self):
        if self.gamma <= 0 or self.rho_r <= 0 or self.rho_d <= 0:
            raise ParameterError("gamma, rho_r, rho_d must be positive")
        if not (0.0 < self.kappa < 1.0):
            raise ParameterError(f"kappa must lie in (0, 1), got {self.kappa}")
        if self.b <= 0:
            raise ParameterError(f"b must be positive, got {self.b}")

    # Population-dependent transition characteristics, per day.

    def f_alpha(self, a_bar):
        return 24.0 * self.sigmoid_alpha.evaluate(a_bar)

    def f_omega(self, omega_bar):
        return 24.0 * self.sigmoid_omega.evaluate(omega_bar)

    def f_alpha_prime(self, a_bar):
        return 24.0 * self.sigmoid_alpha.derivative(a_bar)

    def f_omega_prime(self, omega_bar):
        return 24.0 * self.sigmoid_omega.derivative(omega_bar)

    # Maturity-dependent transfer rates, per day.

    def alpha(self, x, a_bar):
        """Omega -> Alpha transfer rate at maturity x."""
        x = _check_maturity(x)
        return np.exp(-self.gamma * x) * self.f_alpha(a_bar)

    def omega(self, x, omega_bar):
        """Alpha -> Omega transfer rate at maturity x."""
        x = _check_maturity(x)
        return self.a_min * np.exp(self.gamma * x) * self.f_omega(omega_bar)

    # Effective rates of the cycle-averaged (reduced) systems.

    def alpha_g1(self, x, a_bar):
        """Return rate weighted by the G1 fraction kappa (x-dependent form)."""
        return self.kappa * self.alpha(x, a_bar)

    def alpha_mid(self, a_bar, midpoint: float = DEFAULT_MIDPOINT):
        """x-independent return rate frozen at the midpoint maturity."""
        return self.kappa * math.exp(-self.gamma * midpoint) * self.f_alpha(a_bar)

    def alpha_mid_prime(self, a_bar, midpoint: float = DEFAULT_MIDPOINT):
        return self.kappa * math.exp(-self.gamma * midpoint) * self.f_alpha_prime(a_bar)

    def omega0(self, omega_bar):
        """Alpha -> Omega rate at full immaturity (x = 0)."""
        return self.a_min * self.f_omega(omega_bar)

    def omega0_prime(self, omega_bar):
        return self.a_min * self.f_omega_prime(omega_bar)

    def alpha_g1_antiderivative(self, x, a_bar):
        """Integral of alpha_g1(s, a_bar) over s in [0, x]; closed form."""
        x = np.asarray(x, dtype=float)
        return self.kappa * self.f_alpha(a_bar) * (1.0 - np.exp(-self.gamma * x)) / self.gamma


def _check_maturity(x):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ParameterError(f"maturity x must lie in [0, 1], got {x}")
    return arr


def rescale(raw: RawParameters, b: float = DEFAULT_B,
            kappa: float = DEFAULT_KAPPA) -> RescaledParameters:
    """Convert raw hourly parameters to the per-day PDE parameter set."""
    if raw.a_min <= 0.0:
        raise ParameterError("a_min must be positive")
    if raw.d <= 1.0 or raw.r <= 1.0:
        raise ParameterError(
            f"rescaling requires d > 1 and r > 1 (log must be positive), "
            f"got d={raw.d}, r={raw.r}")
    gamma = -math.log(raw.a_min)
    return RescaledParameters(
        gamma=gamma,
        rho_r=24.0 * math.log(raw.r) / gamma,
        rho_d=24.0 * math.log(raw.d) / gamma,
        b=b,
        kappa=kappa,
        sigmoid_alpha=sigmoid_coefficients(raw.f_alpha_knots, n_tilde=1.0),
        sigmoid_omega=sigmoid_coefficients(raw.f_omega_knots, n_tilde=1.0),
        c1_days=raw.c1_hours / 24.0,
        c2_days=raw.c2_hours / 24.0,
        a_min=raw.a_min,
        n_scale=raw.n_tilde_a,
    )


def with_rates(params: RescaledParameters, rho_d: float | None = None,
               b: float | None = None) -> RescaledParameters:
    """Copy of params with the advection/growth rates replaced."""
    kwargs = {}
    if rho_d is not None:
        kwargs["rho_d"] = float(rho_d)
    if b is not None:
        kwargs["b"] = float(b)
    return replace(params, **kwargs) if kwargs else params


# ---------------------------------------------------------------------------
# Flat key/value parameter files

_FILE_KEYS = {
    "a_min": ("a_min", float),
    "a_max": ("a_max", float),
    "d": ("d", float),
    "r": ("r", float),
    "c1_hours": ("c1_hours", float),
    "c2_hours": ("c2_hours", float),
    "lambda_p_days": ("lambda_p_days", float),
    "lambda_m_days": ("lambda_m_days", float),
    "tau_c_hours": ("tau_c_hours", float),
    "f_alpha_0": None, "f_alpha_half": None, "f_alpha_full": None, "f_alpha_inf": None,
    "f_omega_0": None, "f_omega_half": None, "f_omega_full": None, "f_omega_inf": None,
    "n_tilde_a": ("n_tilde_a", float),
    "n_tilde_omega": ("n_tilde_omega", float),
    "r_inh": ("r_inh", float),
    "r_deg": ("r_deg", float),
}

_OPTIONAL_FILE_KEYS = {"r_inh", "r_deg"}


def parse_parameters(text: str, source: str = "<string>") -> RawParameters:
    """Parse the flat `key = value` parameter file format (strict keys)."""
    values: dict[str, float] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in _FILE_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown parameter key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = float(value.strip())
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {value.strip()!r}") from exc
    missing = set(_FILE_KEYS) - _OPTIONAL_FILE_KEYS - set(values)
    if missing:
        raise ConfigError(f"{source}: missing parameter keys: {sorted(missing)}")
    kwargs = {}
    for key, value in values.items():
        spec = _FILE_KEYS[key]
        if spec is not None:
            kwargs[spec[0]] = value
    kwargs["f_alpha_knots"] = tuple(values[k] for k in
                                    ("f_alpha_0", "f_alpha_half", "f_alpha_full", "f_alpha_inf"))
    kwargs["f_omega_knots"] = tuple(values[k] for k in
                                    ("f_omega_0", "f_omega_half", "f_omega_full", "f_omega_inf"))
    kwargs.setdefault("r_inh", 0.0)
    kwargs.setdefault("r_deg", 0.0)
    return RawParameters(**kwargs)


def format_parameters(raw: RawParameters) -> str:
    """Serialize to the flat file format (round-trips through parse)."""
    lines = []
    for key in ("a_min", "a_max", "d", "r", "c1_hours", "c2_hours",
                "lambda_p_days", "lambda_m_days", "tau_c_hours"):
        lines.append(f"{key} = {getattr(raw, key)!r}")
    for prefix, knots in (("f_alpha", raw.f_alpha_knots), ("f_omega", raw.f_omega_knots)):
        for suffix, value in zip(("0", "half", "full", "inf"), knots):
            lines.append(f"{prefix}_{suffix} = {value!r}")
    for key in ("n_tilde_a", "n_tilde_omega", "r_inh", "r_deg"):
        lines.append(f"{key} = {getattr(raw, key)!r}")
    return "\n".join(lines) + "\n"


PRESET_NAMES = ("ph-minus", "ph-plus", "imatinib-affected")


def load_preset(name: str) -> RawParameters:
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")
    text = resources.files("stemflow").joinpath(f"presets/{name}.params").read_text()
    return parse_parameters(text, source=f"preset:{name}")


def load_raw_parameters(source: str | Path) -> RawParameters:
    """Load from a preset name or a parameter file path."""
    if isinstance(source, str) and source in PRESET_NAMES:
        return load_preset(source)
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"no preset or parameter file named {source!r}")
    return parse_parameters(path.read_text(), source=str(path))
