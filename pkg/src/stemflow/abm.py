"""Hourly stochastic agent model of the two-compartment stem cell system.

Stem cells are explicit agents; quiescent (Alpha) agents carry an affinity
in [a_min, a_max] that grows by a factor r per hour, proliferating (Omega)
agents lose affinity by a factor d per hour and advance an hourly cycle
counter, dividing when the counter wraps at c2.  Transfers between the
compartments are Bernoulli draws from the sigmoid transition
characteristics evaluated at the step-start totals; Omega agents may
transfer only during the transfer-permissive phase (counter in [c1, c2)).
An Omega agent whose affinity has reached a_min leaves the stem pool and
becomes an age-0 differentiated cell.

Differentiated cells have fully deterministic dynamics (doubling at every
age multiple of 24 h up to 480 h, death at 672 h), so they are kept as
per-age integer counters instead of agents; this is exact, not an
approximation.  Cells older than 480 h count as mature, younger ones as
proliferating precursors.

Under drug treatment, Ph+ proliferating agents become drug-affected with
hourly probability r_inh and affected proliferating agents die with
hourly probability r_deg; affected cells also switch to their own (much
lower) activation characteristic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParameterError, ResourceLimitError
from .params import RawParameters, load_preset
from .traces import STATUS_NAMES, PopulationTrace

PH_MINUS, PH_PLUS, IMATINIB = 0, 1, 2

DIFF_DEATH_AGE = 672        # hours
DIFF_LAST_DIVISION_AGE = 480
DIFF_DIVISION_PERIOD = 24
MATURE_AGE = 480


@dataclass
class AgentPopulation:
    """Flat agent arrays plus the per-age differentiated-cell counters."""

    alpha_affinity: np.ndarray
    alpha_status: np.ndarray
    omega_affinity: np.ndarray
    omega_counter: np.ndarray
    omega_status: np.ndarray
    diff_counts: np.ndarray          # (3, 672) int64
    t_hours: int = 0

    @classmethod
    def empty(cls) -> "AgentPopulation":
        return cls(alpha_affinity=np.empty(0), alpha_status=np.empty(0, dtype=np.int8),
                   omega_affinity=np.empty(0), omega_counter=np.empty(0, dtype=np.int16),
                   omega_status=np.empty(0, dtype=np.int8),
                   diff_counts=np.zeros((3, DIFF_DEATH_AGE), dtype=np.int64))

    def stem_count(self) -> int:
        return self.alpha_affinity.size + self.omega_affinity.size

    def status_totals(self):
        """(alpha, omega, precursor, mature) counts per status code."""
        out = np.zeros((3, 4), dtype=np.int64)
        for s in range(3):
            out[s, 0] = int(np.count_nonzero(self.alpha_status == s))
            out[s, 1] = int(np.count_nonzero(self.omega_status == s))
            out[s, 2] = int(self.diff_counts[s, :MATURE_AGE].sum())
            out[s, 3] = int(self.diff_counts[s, MATURE_AGE:].sum())
        return out


@dataclass(frozen=True)
class StepRates:
    """Per-hour update quantities; indexable by status code.

    The cycle counter wraps (with division) at `cycle_length`.  Transfers
    back to the quiescent side are open while counter < `g1_length`: the
    counter origin sits at the start of G1, entering cells join at the
    start of S/G2/M (counter = `entry_counter`) and divide when the counter
    wraps, i.e. one S/G2/M duration after entering -- the same phase layout
    the transport model's doubling interfaces encode.
    """

    f_alpha_of_total: object      # scaled Alpha total -> (3,) hourly values
    f_omega_of_total: object      # scaled Omega total -> (3,) hourly values
    a_min: float
    a_max: float
    r_factor: float
    d_factor: float
    g1_length: int                # transfers open while counter < this (c2 - c1)
    cycle_length: int             # counter wrap / division point (c2)
    entry_counter: int            # counter assigned to entering cells (c2 - c1)
    n_scale: float
    imatinib: bool = False
    r_inh: float = 0.0
    r_deg: float = 0.0


def step(population: AgentPopulation, rates: StepRates,
         rng: np.random.Generator) -> AgentPopulation:
    """Advance the population by one hour.

    Totals feeding the transition characteristics are taken at step start;
    agents created during the step (clones, transfers, fresh differentiated
    cells) are first updated at the next step.
    """
    pop = population
    a_total = pop.alpha_affinity.size / rates.n_scale
    o_total = pop.omega_affinity.size / rates.n_scale
    fa = np.asarray(rates.f_alpha_of_total(a_total), dtype=float)
    fo = np.asarray(rates.f_omega_of_total(o_total), dtype=float)

    om_aff = pop.omega_affinity
    om_cc = pop.omega_counter
    om_st = pop.omega_status
    if rates.imatinib and om_aff.size:
        death_draw = rng.random(om_aff.size)
        inh_draw = rng.random(om_aff.size)
        dies = (om_st == IMATINIB) & (death_draw < rates.r_deg)
        keep = ~dies
        om_aff, om_cc, om_st = om_aff[keep], om_cc[keep], om_st[keep].copy()
        becomes = (om_st == PH_PLUS) & (inh_draw[keep] < rates.r_inh)
        om_st[becomes] = IMATINIB

    # Alpha sweep: transfer first, otherwise regenerate affinity
    al_aff, al_st = pop.alpha_affinity, pop.alpha_status
    if al_aff.size:
        u = rng.random(al_aff.size)
        p_act = np.minimum(rates.a_min / al_aff * fo[al_st], 1.0)
        moves = u < p_act
        stay_aff = np.minimum(al_aff[~moves] * rates.r_factor, rates.a_max)
        stay_st = al_st[~moves]
        to_omega_aff = al_aff[moves]
        to_omega_st = al_st[moves]
    else:
        stay_aff = al_aff
        stay_st = al_st
        to_omega_aff = np.empty(0)
        to_omega_st = np.empty(0, dtype=np.int8)

    # Omega sweep: transfer (G1 only), then differentiation, then maturation
    if om_aff.size:
        u = rng.random(om_aff.size)
        in_g1 = om_cc < rates.g1_length
        p_ret = np.minimum(om_aff * fa[om_st], 1.0)
        returns = in_g1 & (u < p_ret)
        rest = ~returns
        differentiates = rest & (om_aff <= rates.a_min)
        survives = rest & ~differentiates
        to_alpha_aff = om_aff[returns]
        to_alpha_st = om_st[returns]
        diff_by_status = np.bincount(om_st[differentiates], minlength=3)
        srv_aff = np.maximum(om_aff[survives] / rates.d_factor, rates.a_min)
        srv_cc = om_cc[survives] + 1
        srv_st = om_st[survives]
        divides = srv_cc >= rates.cycle_length
        srv_cc[divides] = 0
        clone_aff = srv_aff[divides]
        clone_st = srv_st[divides]
    else:
        to_alpha_aff = np.empty(0)
        to_alpha_st = np.empty(0, dtype=np.int8)
        diff_by_status = np.zeros(3, dtype=np.int64)
        srv_aff = om_aff
        srv_cc = om_cc
        srv_st = om_st
        clone_aff = np.empty(0)
        clone_st = np.empty(0, dtype=np.int8)

    # Differentiated counters: age, double at division ages, then add entrants
    diff = np.zeros_like(pop.diff_counts)
    diff[:, 1:] = pop.diff_counts[:, :-1]
    division_ages = np.arange(DIFF_DIVISION_PERIOD, DIFF_LAST_DIVISION_AGE + 1,
                              DIFF_DIVISION_PERIOD)
    diff[:, division_ages] *= 2
    diff[:, 0] = diff_by_status

    return AgentPopulation(
        alpha_affinity=np.concatenate([stay_aff, to_alpha_aff]),
        alpha_status=np.concatenate([stay_st, to_alpha_st]),
        omega_affinity=np.concatenate([srv_aff, clone_aff, to_omega_aff]),
        omega_counter=np.concatenate([srv_cc, np.zeros(clone_aff.size, dtype=srv_cc.dtype),
                                      np.full(to_omega_aff.size, rates.entry_counter,
                                              dtype=srv_cc.dtype)]),
        omega_status=np.concatenate([srv_st, clone_st, to_omega_st]),
        diff_counts=diff,
        t_hours=pop.t_hours + 1)


@dataclass(frozen=True)
class AbmConfig:
    raw: RawParameters
    horizon_days: float = 100.0
    seed: int = 0
    initial_alpha: dict = field(default_factory=lambda: {"ph_minus": 100000})
    initial_omega: dict = field(default_factory=dict)
    imatinib_enabled: bool = False
    record_cadence_hours: int = 24
    status_params: dict = field(default_factory=dict)
    population_cap: int = 20_000_000

    def __post_init__(self):
        if self.horizon_days <= 0:
            raise ConfigError("horizon must be positive")
        total_hours = round(self.horizon_days * 24)
        if self.record_cadence_hours <= 0 or total_hours % self.record_cadence_hours:
            raise ConfigError("record cadence (hours) must divide the horizon")
        for block in (self.initial_alpha, self.initial_omega):
            for key in block:
                if key not in STATUS_NAMES:
                    raise ConfigError(f"unknown cell status {key!r}")


def _status_raw(config: AbmConfig, name: str) -> RawParameters:
    if name in config.status_params:
        return config.status_params[name]
    if name == "ph_minus":
        return config.raw
    preset = "ph-plus" if name == "ph_plus" else "imatinib-affected"
    return load_preset(preset)


def step_rates(config: AbmConfig) -> StepRates:
    """Build the per-hour rate pack from the configured parameter tables."""
    raw = config.raw
    sig_a, sig_o = [], []
    from .params import sigmoid_coefficients
    for name in STATUS_NAMES:
        r = _status_raw(config, name)
        sig_a.append(sigmoid_coefficients(r.f_alpha_knots))
        sig_o.append(sigmoid_coefficients(r.f_omega_knots))
    f_alpha = lambda total: np.array([s.evaluate(total) for s in sig_a])
    f_omega = lambda total: np.array([s.evaluate(total) for s in sig_o])
    return StepRates(
        f_alpha_of_total=f_alpha, f_omega_of_total=f_omega,
        a_min=raw.a_min, a_max=raw.a_max, r_factor=raw.r, d_factor=raw.d,
        g1_length=int(round(raw.c2_hours - raw.c1_hours)),
        cycle_length=int(round(raw.c2_hours)),
        entry_counter=int(round(raw.c2_hours - raw.c1_hours)),
        n_scale=raw.n_tilde_a, imatinib=config.imatinib_enabled,
        r_inh=raw.r_inh, r_deg=raw.r_deg)


def initial_population(config: AbmConfig) -> AgentPopulation:
    """All initial stem cells start fully immature (affinity a_max)."""
    pop = AgentPopulation.empty()
    a_parts, a_status = [], []
    for name, count in config.initial_alpha.items():
        code = STATUS_NAMES.index(name)
        a_parts.append(np.full(int(count), config.raw.a_max))
        a_status.append(np.full(int(count), code, dtype=np.int8))
    o_parts, o_status = [], []
    for name, count in config.initial_omega.items():
        code = STATUS_NAMES.index(name)
        o_parts.append(np.full(int(count), config.raw.a_max))
        o_status.append(np.full(int(count), code, dtype=np.int8))
    if a_parts:
        pop.alpha_affinity = np.concatenate(a_parts)
        pop.alpha_status = np.concatenate(a_status)
    if o_parts:
        pop.omega_affinity = np.concatenate(o_parts)
        pop.omega_counter = np.zeros(pop.omega_affinity.size, dtype=np.int16)
        pop.omega_status = np.concatenate(o_status)
    return pop


def simulate(config: AbmConfig) -> PopulationTrace:
    """Run the hourly model; deterministic for a fixed seed."""
    rates = step_rates(config)
    rng = np.random.default_rng(config.seed)
    pop = initial_population(config)
    total_hours = round(config.horizon_days * 24)
    cadence = config.record_cadence_hours
    scale = rates.n_scale

    times, rows, status_rows = [], [], []
    for hour in range(total_hours + 1):
        if hour % cadence == 0:
            per_status = pop.status_totals()
            times.append(hour / 24.0)
            rows.append(per_status.sum(axis=0))
            status_rows.append(per_status)
        if hour < total_hours:
            pop = step(pop, rates, rng)
            if pop.stem_count() > config.population_cap:
                raise ResourceLimitError(
                    f"stem cell count exceeded the hard cap {config.population_cap} "
                    f"at hour {pop.t_hours}")
    rows = np.array(rows, dtype=float) / scale
    status_rows = np.array(status_rows, dtype=float) / scale
    per_status = None
    active = {code for code in range(3)
              if status_rows[:, code, :].any()}
    if active - {PH_MINUS}:
        per_status = {
            STATUS_NAMES[code]: {
                "A_total": status_rows[:, code, 0],
                "Omega_total": status_rows[:, code, 1],
                "precursor": status_rows[:, code, 2],
                "mature": status_rows[:, code, 3],
            } for code in sorted(active)}
    return PopulationTrace(
        t_days=np.array(times), a_total=rows[:, 0], omega_total=rows[:, 1],
        precursor=rows[:, 2], mature=rows[:, 3], per_status=per_status,
        meta={"model": "abm", "seed": config.seed,
              "imatinib": config.imatinib_enabled, "n_scale": scale})
