"""
Trap-Dynamics Schema Tests
"""

import math

import pytest
from pydantic import ValidationError

from app.schemas.dynamics_schemas import (
    ChannelModel,
    DynamicsPreset,
    GateSweep,
    RateModel,
    ShutterSchedule,
    SweepSpec,
    TrapState,
)


@pytest.mark.unit
class TestTrapState:
    def test_defaults(self):
        state = TrapState()

        assert (state.n_trapped, state.n_ionized, state.capacity, state.donor_total) == (0, 200, 64, 200)

    def test_over_capacity(self):
        with pytest.raises(ValidationError):
            TrapState(n_trapped=2, capacity=1)

    def test_too_many_ionized(self):
        with pytest.raises(ValidationError):
            TrapState(n_ionized=201, donor_total=200)

    def test_with_counts_keeps_limits(self):
        state = TrapState(capacity=5, donor_total=10, n_ionized=3)

        moved = state.with_counts(2, 4)

        assert (moved.capacity, moved.donor_total) == (5, 10)
        assert (moved.n_trapped, moved.n_ionized) == (2, 4)


@pytest.mark.unit
class TestRateModel:
    """Test the above-gap fraction around the interband edge."""

    @pytest.mark.parametrize(
        "wavelength, expected",
        [(1.0, 1.0), (1.30, 1.0), (1.31, 0.5), (1.32, 0.0), (1.77, 0.0)],
    )
    def test_above_gap_fraction(self, wavelength, expected):
        assert RateModel().above_gap_fraction(wavelength) == pytest.approx(expected, abs=1e-9)

    def test_negative_rate(self):
        with pytest.raises(ValidationError):
            RateModel(trap_yield=-1.0)


@pytest.mark.unit
class TestChannelModel:
    def test_threshold_shifts(self):
        """Trapped electrons raise the threshold, ionized donors lower it."""
        model = ChannelModel()

        assert model.threshold(1, 0) > model.threshold(0, 0) > model.threshold(0, 1)

    def test_trap_step_must_be_positive(self):
        with pytest.raises(ValidationError):
            ChannelModel(dVth_trap=0.0)

    def test_ion_step_must_be_negative(self):
        with pytest.raises(ValidationError):
            ChannelModel(dVth_ion=0.001)


@pytest.mark.unit
class TestShutterSchedule:
    """Test open / closed intervals of a periodic shutter."""

    @pytest.fixture
    def schedule(self) -> ShutterSchedule:
        return ShutterSchedule(period=50.0, open_duration=10.0, t_start=20.0)

    def test_is_open(self, schedule: ShutterSchedule):
        assert not schedule.is_open(0.0)
        assert not schedule.is_open(19.9)
        assert schedule.is_open(20.0)
        assert schedule.is_open(29.99)
        assert not schedule.is_open(30.0)
        assert not schedule.is_open(69.0)
        assert schedule.is_open(70.0)

    def test_next_transition(self, schedule: ShutterSchedule):
        assert schedule.next_transition(0.0) == 20.0
        assert schedule.next_transition(20.0) == 30.0
        assert schedule.next_transition(25.0) == 30.0
        assert schedule.next_transition(30.0) == 70.0

    def test_openings(self, schedule: ShutterSchedule):
        """Openings at 20, 70, ..., 970 within 1000 s."""
        assert schedule.openings(1000.0) == 20
        assert schedule.openings(20.0) == 0
        assert schedule.openings(20.5) == 1

    def test_total_time_closes(self):
        schedule = ShutterSchedule(period=10.0, open_duration=5.0, total_time=25.0)

        assert schedule.is_open(20.0)
        assert not schedule.is_open(25.0)
        assert schedule.next_transition(22.0) == 25.0
        assert schedule.next_transition(30.0) == math.inf

    def test_open_longer_than_period(self):
        with pytest.raises(ValidationError):
            ShutterSchedule(period=10.0, open_duration=11.0)

    def test_always_and_never(self):
        always = ShutterSchedule.always_open(100.0)
        never = ShutterSchedule.never_open()

        assert always.continuous and always.is_open(99.0)
        assert not never.is_open(1e9)
        assert never.next_transition(0.0) == math.inf
        assert never.openings(1000.0) == 0


@pytest.mark.unit
class TestSweepAndPreset:
    def test_sweep_ramp(self):
        sweep = SweepSpec(start_um=1.0, stop_um=1.8, duration_s=80.0)

        assert sweep.wavelength(0.0) == 1.0
        assert sweep.wavelength(40.0) == pytest.approx(1.4)
        assert sweep.wavelength(200.0) == 1.8
        assert sweep.time_of(1.31) == pytest.approx(31.0)

    def test_sample_interval_bounded(self):
        with pytest.raises(ValidationError):
            DynamicsPreset(mode="trace", duration_s=1.0, sample_dt_s=2.0)

    def test_unknown_mode(self):
        with pytest.raises(ValidationError):
            DynamicsPreset(mode="dance")

    def test_gate_sweep_values(self):
        values = GateSweep().values()

        assert values.size == 121
        assert values[0] == pytest.approx(-0.8)
        assert values[-1] == pytest.approx(0.4)

    def test_gate_sweep_needs_two_points(self):
        with pytest.raises(ValidationError):
            GateSweep(points=1)
