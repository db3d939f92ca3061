"""Time-series containers shared by the simulators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

STATUS_NAMES = ("ph_minus", "ph_plus", "imatinib")


@dataclass
class PopulationTrace:
    """Recorded compartment totals, in population units of n_scale cells.

    `per_status` optionally holds the same four columns per cell status
    (agent-based runs with mixed Ph-/Ph+ populations).
    """

    t_days: np.ndarray
    a_total: np.ndarray
    omega_total: np.ndarray
    precursor: np.ndarray | None = None
    mature: np.ndarray | None = None
    per_status: dict[str, dict[str, np.ndarray]] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t_days = np.asarray(self.t_days, dtype=float)
        self.a_total = np.asarray(self.a_total, dtype=float)
        self.omega_total = np.asarray(self.omega_total, dtype=float)
        if self.t_days.ndim != 1 or self.a_total.shape != self.t_days.shape \
                or self.omega_total.shape != self.t_days.shape:
            raise ParameterError("trace columns must be 1-d arrays of equal length")
        if self.t_days.size >= 2 and not np.all(np.diff(self.t_days) > 0):
            raise ParameterError("trace timestamps must be strictly increasing")
        if np.any(self.a_total < 0) or np.any(self.omega_total < 0):
            raise ParameterError("trace totals must be nonnegative")

    @property
    def stem_total(self) -> np.ndarray:
        return self.a_total + self.omega_total

    @property
    def span_days(self) -> float:
        return float(self.t_days[-1] - self.t_days[0]) if self.t_days.size else 0.0

    def columns(self) -> dict[str, np.ndarray]:
        """Flat column mapping used by the CSV writer."""
        cols = {"t_days": self.t_days, "A_total": self.a_total,
                "Omega_total": self.omega_total}
        if self.precursor is not None:
            cols["precursor"] = np.asarray(self.precursor, dtype=float)
        if self.mature is not None:
            cols["mature"] = np.asarray(self.mature, dtype=float)
        if self.per_status:
            for status, block in self.per_status.items():
                for name, values in block.items():
                    cols[f"{name}_{status}"] = np.asarray(values, dtype=float)
        return cols


@dataclass
class FieldTrace:
    """Full proliferating-compartment snapshots for functional diagnostics."""

    t_days: np.ndarray          # (nt,)
    a_star: np.ndarray          # (nt,)
    omega_field: np.ndarray     # (nt, nx) cell averages
    x_centers: np.ndarray       # (nx,)
    x_widths: np.ndarray        # (nx,)
