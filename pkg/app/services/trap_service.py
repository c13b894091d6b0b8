"""
Single-photoelectron trap dynamics.

An exact event-driven (Gillespie) simulation of the integer state
(n_trapped, n_ionized) under illumination, sampled into a source-drain
current trace through the soft-threshold channel model.

Rates are frozen between events. Shutter transitions and sample ticks end
the current waiting-time draw; the draw is then repeated with the rates of the
new segment, which is exact for rates that are piecewise constant on those
segments. During a wavelength sweep the wavelength is held at its value at the
start of each segment, so the ramp advances in steps of at most sample_dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from app.core.exceptions import ConfigError, NumericalError, ScheduleError
from app.core.utils import LoggerMixin
from app.schemas.dynamics_schemas import (
    ChannelModel,
    DynamicsPreset,
    RateModel,
    ShutterSchedule,
    SweepSpec,
    TrapState,
)
from app.schemas.optics_schemas import Illumination
from app.services.band_service import SolveResult
from app.services.derived_service import interband_wavelength

EVENT_KINDS = ("trap", "detrap", "ionize")
EVENT_DELTAS = ((1, 0), (-1, 0), (0, 1))


# ============================================================================
# Channel model
# ============================================================================

def current_of(model: ChannelModel, V_g: float, n_trapped, n_ionized):
    """Vectorised source-drain current, A."""
    v_eff = V_g - model.threshold(n_trapped, n_ionized)
    return model.V_sd * model.G0 * model.softness * np.logaddexp(0.0, v_eff / model.softness)


def channel_current(model: ChannelModel, V_g: float, state: TrapState) -> float:
    """
    I = V_sd G0 s ln(1 + exp(V_eff / s)) with
    V_eff = V_g - (V_th0 + n_trapped dVth_trap + n_ionized dVth_ion).
    """
    return float(current_of(model, V_g, state.n_trapped, state.n_ionized))


def channel_iv(model: ChannelModel, V_g: Sequence[float], state: TrapState) -> np.ndarray:
    """I_sd over a gate-voltage sweep at a fixed occupation, A."""
    return np.asarray(current_of(model, np.asarray(V_g, dtype=float), state.n_trapped, state.n_ionized), dtype=float)


def iv_table(model: ChannelModel, V_g: Sequence[float], states: Mapping[str, TrapState]) -> pd.DataFrame:
    """One I_sd-V_g column per named occupation; trapped electrons shift a curve right by n dVth_trap."""
    table = {"V_g_V": np.asarray(V_g, dtype=float)}
    for name, state in states.items():
        table[f"I_{name}_A"] = channel_iv(model, V_g, state)
    return pd.DataFrame(table)


def calibrate_conductance(
    model: ChannelModel,
    V_g: float,
    state: TrapState,
    target: float = 0.6e-9,
) -> ChannelModel:
    """Return `model` with G0 chosen so that the current at (V_g, state) equals `target`."""
    if target <= 0:
        raise ConfigError("Target current must be positive")
    shape = channel_current(model, V_g, state) / model.G0
    if shape <= 0:
        raise ConfigError("Channel is fully pinched off at the calibration point")
    return model.model_copy(update={"G0": target / shape})


def calibrate_trap_step(
    model: ChannelModel,
    V_g: float,
    state: TrapState,
    n_steps: int = 8,
    fraction: float = 0.01,
) -> ChannelModel:
    """Return `model` with dVth_trap such that n_steps more trapped electrons cut the current to `fraction`."""
    if not 0 < fraction < 1:
        raise ConfigError("fraction must lie in (0, 1)")
    if n_steps < 1:
        raise ConfigError("n_steps must be at least 1")

    def ratio_gap(step: float) -> float:
        trial = model.model_copy(update={"dVth_trap": step})
        before = current_of(trial, V_g, state.n_trapped, state.n_ionized)
        after = current_of(trial, V_g, state.n_trapped + n_steps, state.n_ionized)
        return float(np.log(after) - np.log(before) - np.log(fraction))

    step = brentq(ratio_gap, 1e-6, 1.0, xtol=1e-12)
    return model.model_copy(update={"dVth_trap": step})


# ============================================================================
# Trace
# ============================================================================

class Event(NamedTuple):
    t: float
    kind: str
    n_trapped: int
    n_ionized: int
    current: float


@dataclass
class Trace:
    """Sampled current record plus the exact event log of one run."""

    t: np.ndarray
    current: np.ndarray
    n_trapped: np.ndarray
    n_ionized: np.ndarray
    shutter: np.ndarray
    wavelength: np.ndarray
    events: List[Event]
    seed: int
    duration: float
    initial: TrapState
    config: Dict[str, object] = field(default_factory=dict)

    # ============= Tables =============

    def samples_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t_s": self.t,
            "I_A": self.current,
            "n_trapped": self.n_trapped,
            "n_ionized": self.n_ionized,
            "shutter": np.where(self.shutter, "open", "closed"),
            "wavelength_um": self.wavelength,
        })

    def events_frame(self) -> pd.DataFrame:
        columns = ["t_s", "kind", "n_trapped", "n_ionized", "I_A"]
        return pd.DataFrame([tuple(event) for event in self.events], columns=columns)

    # ============= Statistics =============

    def event_counts(self) -> Dict[str, int]:
        counts = {kind: 0 for kind in EVENT_KINDS}
        for event in self.events:
            counts[event.kind] += 1
        return counts

    def occupancy(self) -> Dict[Tuple[int, int], float]:
        """Fraction of the run spent in each (n_trapped, n_ionized) state."""
        spent: Dict[Tuple[int, int], float] = {}
        state = (self.initial.n_trapped, self.initial.n_ionized)
        last = 0.0
        for event in self.events:
            spent[state] = spent.get(state, 0.0) + event.t - last
            state, last = (event.n_trapped, event.n_ionized), event.t
        spent[state] = spent.get(state, 0.0) + self.duration - last
        return {key: value / self.duration for key, value in spent.items()}

    def trapped_occupancy(self) -> np.ndarray:
        """Time fraction per n_trapped value, indexed 0..capacity."""
        out = np.zeros(self.initial.capacity + 1)
        for (n_trapped, _), share in self.occupancy().items():
            out[n_trapped] += share
        return out

    def step_heights(self, kind: Optional[str] = None) -> np.ndarray:
        """Current change caused by each event (optionally of one kind), A."""
        heights = []
        previous = float(self.current[0]) if self.current.size else 0.0
        for event in self.events:
            if kind is None or event.kind == kind:
                heights.append(event.current - previous)
            previous = event.current
        return np.asarray(heights)

    def transitions_while_closed(self) -> int:
        closed = 0
        schedule = self.config.get("schedule")
        if schedule is None:
            return 0
        shutter = ShutterSchedule.model_validate(schedule)
        for event in self.events:
            if not shutter.is_open(event.t):
                closed += 1
        return closed


# ============================================================================
# Engine
# ============================================================================

def propensities(
    rates: RateModel,
    light: Illumination,
    wavelength: float,
    shutter_open: bool,
    n_trapped: int,
    n_ionized: int,
    capacity: int,
    donor_total: int,
) -> np.ndarray:
    """Event rates (trap, detrap, ionize) for the given state, 1/s."""
    s = rates.above_gap_fraction(wavelength)
    on = 1.0 if shutter_open else 0.0
    trap = on * light.absorbed_rate * rates.trap_yield * s if n_trapped < capacity else 0.0
    detrap = on * light.incident_rate * rates.detrap_cross_section * (1.0 - s) * n_trapped
    if n_trapped > 0:
        detrap += rates.dark_spike_rate
    ionize = on * light.incident_rate * rates.ionize_cross_section * (1.0 - s) * (donor_total - n_ionized)
    return np.array([trap, detrap, ionize])


class TrapKineticsEngine(LoggerMixin):
    """Exact stochastic simulation of one seeded run."""

    def __init__(
        self,
        channel: ChannelModel,
        rates: RateModel,
        light: Illumination,
        V_g: float,
        initial: TrapState,
        schedule: Optional[ShutterSchedule] = None,
        wavelength: Optional[Callable[[float], float]] = None,
    ):
        super().__init__()
        self.channel = channel
        self.rates = rates
        self.light = light
        self.V_g = V_g
        self.initial = initial
        self.schedule = schedule or ShutterSchedule.always_open(1.0)
        self._wavelength = wavelength or (lambda t: light.wavelength_um)

    def run(self, duration: float, sample_dt: float, seed: int, config: Optional[dict] = None) -> Trace:
        if duration <= 0 or sample_dt <= 0:
            raise ScheduleError("duration and sample_dt must be positive")
        if sample_dt > duration:
            raise ScheduleError("sample_dt must not exceed duration")

        rng = np.random.default_rng(seed)
        n_samples = int(math.floor(duration / sample_dt + 1e-9)) + 1
        times = np.arange(n_samples) * sample_dt
        trapped = np.zeros(n_samples, dtype=int)
        ionized = np.zeros(n_samples, dtype=int)
        shutter = np.zeros(n_samples, dtype=bool)
        wavelength = np.zeros(n_samples)

        capacity, donors = self.initial.capacity, self.initial.donor_total
        n_trap, n_ion = self.initial.n_trapped, self.initial.n_ionized
        events: List[Event] = []

        def record(k: int) -> None:
            trapped[k], ionized[k] = n_trap, n_ion
            shutter[k] = self.schedule.is_open(times[k])
            wavelength[k] = self._wavelength(times[k])

        record(0)
        k = 1
        t = 0.0
        while True:
            next_sample = times[k] if k < n_samples else math.inf
            boundary = min(next_sample, self.schedule.next_transition(t), duration)
            a = propensities(
                self.rates, self.light, self._wavelength(t), self.schedule.is_open(t),
                n_trap, n_ion, capacity, donors,
            )
            total = float(a.sum())
            wait = rng.exponential(1.0 / total) if total > 0 else math.inf

            if t + wait < boundary:
                t += wait
                index = int(np.searchsorted(np.cumsum(a), rng.random() * total, side="right"))
                index = min(index, len(a) - 1)
                while a[index] == 0:
                    index -= 1
                d_trap, d_ion = EVENT_DELTAS[index]
                n_trap += d_trap
                n_ion += d_ion
                if not (0 <= n_trap <= capacity and 0 <= n_ion <= donors):
                    raise NumericalError(
                        f"State bounds violated at t={t}: n_trapped={n_trap}, n_ionized={n_ion}"
                    )
                current = float(current_of(self.channel, self.V_g, n_trap, n_ion))
                events.append(Event(t, EVENT_KINDS[index], n_trap, n_ion, current))
                continue

            t = boundary
            if next_sample <= t:
                record(k)
                k += 1
            if t >= duration:
                break

        while k < n_samples:
            record(k)
            k += 1

        self.log_debug({"seed": seed, "events": len(events), "samples": n_samples})
        return Trace(
            t=times,
            current=current_of(self.channel, self.V_g, trapped, ionized).astype(float),
            n_trapped=trapped,
            n_ionized=ionized,
            shutter=shutter,
            wavelength=wavelength,
            events=events,
            seed=seed,
            duration=duration,
            initial=self.initial,
            config=config or {},
        )


def _echo(**parts) -> Dict[str, object]:
    return {
        key: (value.model_dump() if hasattr(value, "model_dump") else value)
        for key, value in parts.items()
        if value is not None
    }


# ============================================================================
# Scenarios
# ============================================================================

def simulate_trace(
    channel: ChannelModel,
    rates: RateModel,
    light: Illumination,
    V_g: float,
    initial: TrapState,
    duration: float,
    sample_dt: float,
    seed: int,
    schedule: Optional[ShutterSchedule] = None,
) -> Trace:
    """Constant-wavelength trace; the shutter is open throughout unless a schedule is given."""
    schedule = schedule or ShutterSchedule.always_open(duration)
    engine = TrapKineticsEngine(channel, rates, light, V_g, initial, schedule)
    config = _echo(
        mode="trace", channel=channel, rates=rates, light=light, V_g=V_g,
        initial=initial, schedule=schedule, duration_s=duration, sample_dt_s=sample_dt,
    )
    return engine.run(duration, sample_dt, seed, config)


def spectral_sweep(
    channel: ChannelModel,
    rates: RateModel,
    light: Illumination,
    V_g: float,
    initial: TrapState,
    sweep: SweepSpec,
    sample_dt: float,
    seed: int,
) -> Trace:
    """Trace under a linear wavelength ramp with the shutter open."""
    engine = TrapKineticsEngine(
        channel, rates, light, V_g, initial,
        ShutterSchedule.always_open(sweep.duration_s), sweep.wavelength,
    )
    lo, hi = sorted((sweep.start_um, sweep.stop_um))
    if not lo <= rates.lambda_gap <= hi:
        engine.log_debug(f"Sweep {lo}-{hi} um does not cross lambda_gap={rates.lambda_gap} um")
    config = _echo(
        mode="sweep", channel=channel, rates=rates, light=light, V_g=V_g,
        initial=initial, sweep=sweep, duration_s=sweep.duration_s, sample_dt_s=sample_dt,
    )
    return engine.run(sweep.duration_s, sample_dt, seed, config)


def check_balanced(rates: RateModel, light: Illumination, initial: TrapState) -> Tuple[float, float]:
    """Trap and neutralisation rates of the two-level switching trap; raises unless within 2x."""
    if initial.capacity != 1:
        raise ConfigError(f"Balanced switching needs a single-electron trap (capacity=1), got {initial.capacity}")
    s = rates.above_gap_fraction(light.wavelength_um)
    trap = light.absorbed_rate * rates.trap_yield * s
    detrap = light.incident_rate * rates.detrap_cross_section * (1.0 - s)
    if trap <= 0 or detrap <= 0 or max(trap, detrap) > 2.0 * min(trap, detrap):
        raise ConfigError(
            f"Rates are not balanced at {light.wavelength_um} um: trap={trap:.4g}/s, detrap={detrap:.4g}/s"
        )
    return trap, detrap


def balanced_switching(
    channel: ChannelModel,
    rates: RateModel,
    light: Illumination,
    V_g: float,
    initial: TrapState,
    schedule: ShutterSchedule,
    duration: float,
    sample_dt: float,
    seed: int,
) -> Trace:
    """Two-level random telegraph trace gated by a periodic shutter."""
    check_balanced(rates, light, initial)
    engine = TrapKineticsEngine(channel, rates, light, V_g, initial, schedule)
    config = _echo(
        mode="switch", channel=channel, rates=rates, light=light, V_g=V_g,
        initial=initial, schedule=schedule, duration_s=duration, sample_dt_s=sample_dt,
    )
    return engine.run(duration, sample_dt, seed, config)


def opening_changes(trace: Trace, schedule: ShutterSchedule) -> np.ndarray:
    """Per shutter opening: whether at least one event happened while it was open."""
    n_open = schedule.openings(trace.duration)
    changed = np.zeros(n_open, dtype=bool)
    for event in trace.events:
        j = int(math.floor((event.t - schedule.t_start) / schedule.period))
        if 0 <= j < n_open and schedule.is_open(event.t):
            changed[j] = True
    return changed


# ============================================================================
# Ensembles
# ============================================================================

def ensemble_median(traces: Sequence[Trace]) -> pd.DataFrame:
    """Median current per sample time over an ensemble (traces sorted by seed)."""
    if not traces:
        raise ConfigError("Empty ensemble")
    ordered = sorted(traces, key=lambda trace: trace.seed)
    currents = np.vstack([trace.current for trace in ordered])
    return pd.DataFrame({
        "t_s": ordered[0].t,
        "wavelength_um": ordered[0].wavelength,
        "I_median_A": np.median(currents, axis=0),
    })


def median_minimum_wavelength(traces: Sequence[Trace]) -> float:
    """Wavelength at which the ensemble-median current is lowest (middle of a tied run)."""
    table = ensemble_median(traces)
    current = table["I_median_A"].to_numpy()
    lowest = np.flatnonzero(current == current.min())
    return float(table["wavelength_um"].to_numpy()[lowest[len(lowest) // 2]])


# ============================================================================
# Presets
# ============================================================================

def rates_for_device(rates: RateModel, result: SolveResult, absorption_layer: str = "absorption") -> RateModel:
    """`rates` with lambda_gap taken from the solved interband edge of the absorption well."""
    return rates.model_copy(update={"lambda_gap": interband_wavelength(result, absorption_layer)})


def preset_light(preset: DynamicsPreset) -> Illumination:
    return Illumination.from_absorbed(preset.absorbed_rate, preset.wavelength_um, preset.absorptivity)


def run_preset(preset: DynamicsPreset, channel: ChannelModel, seed: int) -> Trace:
    """Run one seeded realisation of a named trace / sweep / switch preset."""
    light = preset_light(preset)
    if preset.mode == "sweep":
        sweep = preset.sweep or SweepSpec(duration_s=preset.duration_s)
        return spectral_sweep(channel, preset.rates, light, preset.V_g, preset.initial, sweep, preset.sample_dt_s, seed)
    if preset.mode == "switch":
        if preset.schedule is None:
            raise ScheduleError("Switch presets need a shutter schedule")
        return balanced_switching(
            channel, preset.rates, light, preset.V_g, preset.initial,
            preset.schedule, preset.duration_s, preset.sample_dt_s, seed,
        )
    return simulate_trace(
        channel, preset.rates, light, preset.V_g, preset.initial,
        preset.duration_s, preset.sample_dt_s, seed, preset.schedule,
    )
