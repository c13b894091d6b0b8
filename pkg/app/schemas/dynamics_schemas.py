"""
Trap-dynamics schemas: occupation state, event rates, channel model,
shutter schedule and wavelength sweep.
"""

import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SHUTTER_TOL = 1e-9


class TrapState(BaseModel):
    """Integer occupation of the window trap and of the doping layer."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_trapped:   int = Field(default=0, ge=0, description="Electrons held in the absorption-layer trap")
    n_ionized:   int = Field(default=200, ge=0, description="Photo-ionized donors feeding the channel")
    capacity:    int = Field(default=64, ge=0)
    donor_total: int = Field(default=200, ge=0)

    @model_validator(mode="after")
    def check_bounds(self):
        if self.n_trapped > self.capacity:
            raise ValueError(f"n_trapped={self.n_trapped} exceeds capacity={self.capacity}")
        if self.n_ionized > self.donor_total:
            raise ValueError(f"n_ionized={self.n_ionized} exceeds donor_total={self.donor_total}")
        return self

    def with_counts(self, n_trapped: int, n_ionized: int) -> "TrapState":
        return TrapState(
            n_trapped=n_trapped,
            n_ionized=n_ionized,
            capacity=self.capacity,
            donor_total=self.donor_total,
        )


class RateModel(BaseModel):
    """
    Wavelength-dependent event rates.

    The above-gap fraction s(lambda) = clip(1/2 - (lambda - lambda_gap) / crossover_width, 0, 1)
    splits the light between interband absorption (trapping) and sub-gap
    processes (neutralisation of trapped electrons, donor photo-ionization).
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    lambda_gap:            float = Field(default=1.31, gt=0, description="Interband edge, um")
    crossover_width:       float = Field(default=0.02, gt=0, description="Smoothing width around lambda_gap, um")
    trap_yield:            float = Field(default=1.0, ge=0, description="Trapped electrons per absorbed above-gap photon")
    detrap_cross_section:  float = Field(default=1e-3, ge=0, description="Neutralisations per incident sub-gap photon per trapped electron")
    ionize_cross_section:  float = Field(default=0.0, ge=0, description="Ionizations per incident sub-gap photon per neutral donor")
    dark_spike_rate:       float = Field(default=0.0, ge=0, description="Spontaneous detrap rate while occupied, 1/s")

    def above_gap_fraction(self, wavelength_um: float) -> float:
        s = 0.5 - (wavelength_um - self.lambda_gap) / self.crossover_width
        return float(np.clip(s, 0.0, 1.0))


class ChannelModel(BaseModel):
    """Soft-threshold source-drain current of the gated channel."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    G0:        float = Field(default=2.3968e-5, gt=0, description="Conductance scale, S")
    V_th0:     float = Field(default=0.1, description="Threshold with empty trap and neutral donors, V")
    dVth_trap: float = Field(default=0.01, gt=0, description="Threshold shift per trapped electron, V")
    dVth_ion:  float = Field(default=-0.003, lt=0, description="Threshold shift per ionized donor, V")
    V_sd:      float = Field(default=5e-4, description="Source-drain bias, V")
    softness:  float = Field(default=0.01, gt=0, description="Turn-on smoothing width, V")

    def threshold(self, n_trapped, n_ionized):
        return self.V_th0 + np.asarray(n_trapped) * self.dVth_trap + np.asarray(n_ionized) * self.dVth_ion


class ShutterSchedule(BaseModel):
    """Periodic shutter: open for `open_duration` at the start of each period from `t_start`."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    period:        float = Field(gt=0, description="s")
    open_duration: float = Field(gt=0, description="s")
    t_start:       float = Field(default=0.0, ge=0, description="First opening, s")
    total_time:    float = Field(default=math.inf, gt=0, description="Shutter stays closed from here on, s")

    @model_validator(mode="after")
    def check_open_duration(self):
        if self.open_duration > self.period:
            raise ValueError("open_duration must not exceed period")
        return self

    @classmethod
    def always_open(cls, duration: float) -> "ShutterSchedule":
        return cls(period=duration, open_duration=duration, t_start=0.0, total_time=math.inf)

    @classmethod
    def never_open(cls) -> "ShutterSchedule":
        return cls(period=1.0, open_duration=1.0, t_start=math.inf)

    @property
    def continuous(self) -> bool:
        return self.open_duration >= self.period

    def is_open(self, t: float) -> bool:
        if t < self.t_start - SHUTTER_TOL * self.period or t >= self.total_time:
            return False
        if self.continuous:
            return True
        j = math.floor((t - self.t_start) / self.period + SHUTTER_TOL)
        phase = t - self.t_start - j * self.period
        return phase < self.open_duration - SHUTTER_TOL * self.period

    def next_transition(self, t: float) -> float:
        """First time after t at which the shutter state may change (inf if never)."""
        eps = SHUTTER_TOL * self.period
        if t >= self.total_time:
            return math.inf
        if t < self.t_start - eps:
            return min(self.t_start, self.total_time)
        if self.continuous:
            return self.total_time
        j = math.floor((t - self.t_start) / self.period + SHUTTER_TOL)
        close = self.t_start + j * self.period + self.open_duration
        reopen = self.t_start + (j + 1) * self.period
        candidate = close if close > t + eps else reopen
        return min(candidate, self.total_time)

    def openings(self, duration: float) -> int:
        """Number of openings that start before `duration`."""
        end = min(duration, self.total_time)
        if end <= self.t_start:
            return 0
        return int(math.floor((end - self.t_start) / self.period - SHUTTER_TOL)) + 1


class SweepSpec(BaseModel):
    """Linear wavelength ramp."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    start_um:   float = Field(default=1.0, gt=0)
    stop_um:    float = Field(default=1.8, gt=0)
    duration_s: float = Field(default=80.0, gt=0)

    def wavelength(self, t: float) -> float:
        frac = min(max(t / self.duration_s, 0.0), 1.0)
        return self.start_um + (self.stop_um - self.start_um) * frac

    def time_of(self, wavelength_um: float) -> float:
        return (wavelength_um - self.start_um) / (self.stop_um - self.start_um) * self.duration_s


class GateSweep(BaseModel):
    """Gate-voltage grid for I_sd-V_g curves."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    start_V: float = -0.8
    stop_V:  float = 0.4
    points:  int = Field(default=121, ge=2)

    def values(self) -> np.ndarray:
        return np.linspace(self.start_V, self.stop_V, self.points)


class DynamicsPreset(BaseModel):
    """A named trap-dynamics run (one of trace / sweep / switch)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    mode:          str = Field(pattern="^(trace|sweep|switch)$")
    description:   str = ""
    V_g:           float = Field(default=-0.45, description="Gate voltage, V")
    wavelength_um: float = Field(default=1.30, gt=0)
    absorbed_rate: float = Field(default=1.0, ge=0, description="Absorbed photons/s while open")
    absorptivity:  float = Field(default=0.01, gt=0, le=1)
    rates:         RateModel = Field(default_factory=RateModel)
    initial:       TrapState = Field(default_factory=TrapState)
    schedule:      Optional[ShutterSchedule] = None
    sweep:         Optional[SweepSpec] = None
    duration_s:    float = Field(default=120.0, gt=0)
    sample_dt_s:   float = Field(default=0.1, gt=0)

    @field_validator("sample_dt_s")
    @classmethod
    def validate_sample_dt(cls, v, info):
        duration = info.data.get("duration_s")
        if duration is not None and v > duration:
            raise ValueError("sample_dt_s must not exceed duration_s")
        return v
