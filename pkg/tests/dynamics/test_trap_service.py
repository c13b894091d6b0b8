"""
Trap Kinetics Tests

Tests for the channel model, the event-driven simulation and the named
scenarios (staircase, soak, sweep, shuttered switching).
"""

import numpy as np
import pytest
from scipy import stats

from app.config.config import Settings
from app.core.exceptions import ConfigError, ScheduleError
from app.schemas.dynamics_schemas import ChannelModel, RateModel, ShutterSchedule, SweepSpec, TrapState
from app.schemas.optics_schemas import Illumination
from app.services.derived_service import interband_wavelength
from app.services.trap_service import (
    balanced_switching,
    calibrate_conductance,
    calibrate_trap_step,
    channel_current,
    channel_iv,
    check_balanced,
    current_of,
    ensemble_median,
    iv_table,
    median_minimum_wavelength,
    opening_changes,
    propensities,
    rates_for_device,
    run_preset,
    simulate_trace,
    spectral_sweep,
)

QUIET = RateModel(trap_yield=0.0, detrap_cross_section=0.0, ionize_cross_section=0.0, dark_spike_rate=0.0)


@pytest.mark.unit
class TestChannelCurrent:
    """Test the soft-threshold current model."""

    def test_reference_operating_point(self, channel: ChannelModel):
        """200 ionized donors, empty trap, V_g = -0.45 V: 0.6 nA."""
        current = channel_current(channel, -0.45, TrapState())

        assert current == pytest.approx(0.6e-9, rel=1e-3)

    def test_eight_trapped_pinch_off(self, channel: ChannelModel):
        """Eight trapped electrons leave less than 1 % of the current."""
        start = channel_current(channel, -0.45, TrapState())
        after = channel_current(channel, -0.45, TrapState(n_trapped=8))

        assert after < 0.01 * start

    def test_switching_levels(self, channel: ChannelModel):
        """Two-level trap at V_g = 0 with 47 ionized donors."""
        empty = channel_current(channel, 0.0, TrapState(n_ionized=47, capacity=1))
        full = channel_current(channel, 0.0, TrapState(n_trapped=1, n_ionized=47, capacity=1))

        assert empty == pytest.approx(0.4933e-9, rel=2e-3)
        assert full == pytest.approx(0.3768e-9, rel=2e-3)

    def test_deep_pinch_off(self, channel: ChannelModel):
        """20 softness widths below threshold the current is negligible."""
        V_g = float(channel.threshold(0, 200)) - 20 * channel.softness

        current = channel_current(channel, V_g, TrapState())

        assert current < 1e-8 * channel.V_sd * channel.G0 * channel.softness

    def test_monotone_in_trapped(self, channel: ChannelModel):
        currents = current_of(channel, -0.45, np.arange(20), 200)

        assert np.all(np.diff(currents) < 0)

    def test_monotone_in_ionized(self, channel: ChannelModel):
        currents = current_of(channel, -0.45, 0, np.arange(201))

        assert np.all(np.diff(currents) >= 0)

    def test_iv_shifts_by_trapped_charge(self, channel: ChannelModel):
        """Each trapped electron moves the I-V curve right by dVth_trap."""
        V_g = np.linspace(-0.8, 0.4, 121)
        empty = TrapState()
        loaded = empty.with_counts(12, 200)

        shifted = channel_iv(channel, V_g + 12 * channel.dVth_trap, loaded)

        assert np.allclose(shifted, channel_iv(channel, V_g, empty), rtol=1e-9, atol=0.0)

    def test_iv_table(self, channel: ChannelModel):
        V_g = np.linspace(-0.8, 0.4, 13)
        states = {"start": TrapState(), "end": TrapState(n_trapped=8)}

        table = iv_table(channel, V_g, states)

        assert list(table.columns) == ["V_g_V", "I_start_A", "I_end_A"]
        assert np.all(np.diff(table["I_start_A"]) > 0)
        assert np.all(table["I_end_A"] < table["I_start_A"])


@pytest.mark.unit
class TestCalibration:
    def test_conductance_hits_target(self, channel: ChannelModel):
        tuned = calibrate_conductance(channel.model_copy(update={"G0": 1e-3}), -0.45, TrapState())

        assert channel_current(tuned, -0.45, TrapState()) == pytest.approx(0.6e-9, rel=1e-12)

    def test_trap_step_hits_ratio(self, channel: ChannelModel):
        tuned = calibrate_trap_step(channel, -0.45, TrapState())

        ratio = channel_current(tuned, -0.45, TrapState(n_trapped=8)) / channel_current(tuned, -0.45, TrapState())
        assert ratio == pytest.approx(0.01, rel=1e-6)

    def test_pinched_off_calibration_point(self, channel: ChannelModel):
        with pytest.raises(ConfigError):
            calibrate_conductance(channel, -100.0, TrapState())

    def test_bad_fraction(self, channel: ChannelModel):
        with pytest.raises(ConfigError):
            calibrate_trap_step(channel, -0.45, TrapState(), fraction=1.5)


@pytest.mark.unit
class TestPropensities:
    def test_closed_shutter_only_dark(self):
        rates = RateModel(dark_spike_rate=0.01)
        light = Illumination()

        a = propensities(rates, light, 1.30, False, 3, 200, 64, 200)

        assert list(a) == [0.0, 0.01, 0.0]

    def test_full_trap_cannot_trap(self):
        a = propensities(RateModel(), Illumination(), 1.30, True, 64, 200, 64, 200)

        assert a[0] == 0.0

    def test_below_gap_trapping(self):
        """At 1.30 um: one trap per second from one absorbed photon per second."""
        a = propensities(RateModel(), Illumination(), 1.30, True, 0, 200, 64, 200)

        assert a[0] == pytest.approx(1.0)
        assert a[1] == 0.0


@pytest.mark.unit
@pytest.mark.dynamics
class TestEngine:
    """Test invariants of a single simulated trace."""

    def test_no_rates_no_events(self, channel: ChannelModel):
        trace = simulate_trace(channel, QUIET, Illumination(), -0.45, TrapState(), 10.0, 0.1, seed=1)

        assert trace.events == []
        assert np.all(trace.current == trace.current[0])

    def test_deterministic(self, channel: ChannelModel):
        """Same seed, same trace."""
        rates = RateModel(dark_spike_rate=0.01)
        one = simulate_trace(channel, rates, Illumination(), -0.45, TrapState(), 60.0, 0.1, seed=7)
        two = simulate_trace(channel, rates, Illumination(), -0.45, TrapState(), 60.0, 0.1, seed=7)

        assert np.array_equal(one.current, two.current)
        assert one.events == two.events

    def test_seeds_differ(self, channel: ChannelModel):
        one = simulate_trace(channel, RateModel(), Illumination(), -0.45, TrapState(), 60.0, 0.1, seed=1)
        two = simulate_trace(channel, RateModel(), Illumination(), -0.45, TrapState(), 60.0, 0.1, seed=2)

        assert [e.t for e in one.events] != [e.t for e in two.events]

    def test_samples_consistent(self, channel: ChannelModel):
        """Times strictly increase and every sample matches the channel model."""
        trace = simulate_trace(channel, RateModel(dark_spike_rate=0.05), Illumination(), -0.45, TrapState(), 30.0, 0.1, seed=3)

        assert trace.t.size == 301
        assert np.all(np.diff(trace.t) > 0)
        expected = current_of(channel, -0.45, trace.n_trapped, trace.n_ionized)
        assert np.array_equal(trace.current, expected)
        assert np.all(np.diff([e.t for e in trace.events]) > 0)

    def test_state_bounds(self, channel: ChannelModel):
        """A 2-electron trap never holds more than two."""
        trace = simulate_trace(channel, RateModel(), Illumination(), -0.45, TrapState(capacity=2), 60.0, 0.5, seed=4)

        assert trace.n_trapped.max() <= 2
        assert trace.n_trapped.min() >= 0

    def test_bad_sampling(self, channel: ChannelModel):
        with pytest.raises(ScheduleError):
            simulate_trace(channel, RateModel(), Illumination(), -0.45, TrapState(), 1.0, 2.0, seed=0)

    def test_trace_tables(self, channel: ChannelModel):
        trace = simulate_trace(channel, RateModel(), Illumination(), -0.45, TrapState(), 5.0, 0.5, seed=5)

        samples = trace.samples_frame()
        events = trace.events_frame()

        assert list(samples.columns) == ["t_s", "I_A", "n_trapped", "n_ionized", "shutter", "wavelength_um"]
        assert list(events.columns) == ["t_s", "kind", "n_trapped", "n_ionized", "I_A"]
        assert len(events) == len(trace.events)

    def test_trap_count_is_poisson(self, channel: ChannelModel):
        """Trap counts over 200 seeds follow Poisson(rate x T)."""
        rates = RateModel(detrap_cross_section=0.0)
        duration, mean = 20.0, 20.0
        counts = np.array([
            simulate_trace(channel, rates, Illumination(), -0.45, TrapState(), duration, duration, seed=s).event_counts()["trap"]
            for s in range(200)
        ])

        edges = [0, 14, 17, 19, 21, 23, 26, 200]
        observed = np.array([np.sum((counts >= lo) & (counts < hi)) for lo, hi in zip(edges[:-1], edges[1:])])
        probs = np.diff(stats.poisson.cdf(np.array(edges) - 1, mean))
        probs[-1] += 1.0 - probs.sum()
        _, p_value = stats.chisquare(observed, probs * counts.size)

        assert p_value > 0.01


@pytest.mark.integration
@pytest.mark.dynamics
class TestScenarios:
    """Test the named figure scenarios."""

    def test_staircase_pinches_off(self, settings: Settings):
        """1.30 um light traps electrons one at a time until the channel closes."""
        preset = settings.preset("fig3_text")
        for seed in range(32):
            trace = run_preset(preset, settings.channel, seed)

            trap_events = [e for e in trace.events if e.kind == "trap"]
            assert len(trap_events) >= 3
            assert trace.current[-1] < 0.01 * trace.current[0]

            previous = preset.initial.n_trapped
            for event in trace.events:
                if event.kind == "trap":
                    assert event.n_trapped == previous + 1
                previous = event.n_trapped

    def test_caption_rate_staircase(self, settings: Settings):
        trace = run_preset(settings.preset("fig3_caption"), settings.channel, 0)

        assert trace.current[-1] < 0.01 * trace.current[0]

    def test_soak_raises_current(self, settings: Settings):
        """1.77 um soak ionizes donors and turns the channel on."""
        trace = run_preset(settings.preset("fig3_soak"), settings.channel, 0)

        assert trace.event_counts()["ionize"] > 150
        assert trace.event_counts()["trap"] == 0
        assert trace.current[-1] > 100 * trace.current[0]
        assert np.all(np.diff(trace.current) >= 0)

    def test_sweep_minimum_near_gap(self, settings: Settings):
        """Ensemble-median current is lowest within 0.05 um of the interband edge."""
        preset = settings.preset("fig4")
        traces = [run_preset(preset, settings.channel, seed) for seed in range(32)]

        minimum = median_minimum_wavelength(traces)

        assert abs(minimum - preset.rates.lambda_gap) <= 0.05

    def test_sweep_below_gap_never_rises(self, channel: ChannelModel):
        sweep = SweepSpec(start_um=1.0, stop_um=1.2, duration_s=20.0)
        traces = [
            spectral_sweep(channel, RateModel(), Illumination(), -0.45, TrapState(), sweep, 0.1, seed)
            for seed in range(8)
        ]

        median = ensemble_median(traces)["I_median_A"].to_numpy()

        assert np.all(np.diff(median) <= 0)

    def test_sweep_above_gap_never_falls(self, channel: ChannelModel):
        sweep = SweepSpec(start_um=1.4, stop_um=1.8, duration_s=20.0)
        start = TrapState(n_trapped=20)
        traces = [
            spectral_sweep(channel, RateModel(), Illumination(), -0.45, start, sweep, 0.1, seed)
            for seed in range(8)
        ]

        median = ensemble_median(traces)["I_median_A"].to_numpy()

        assert np.all(np.diff(median) >= 0)
        assert median[-1] > median[0]


@pytest.mark.integration
@pytest.mark.dynamics
class TestBalancedSwitching:
    """Test the shuttered two-level telegraph scenario."""

    def test_two_levels_no_closed_transitions(self, settings: Settings):
        preset = settings.preset("fig5")
        for seed in range(8):
            trace = run_preset(preset, settings.channel, seed)

            assert len(set(trace.current.tolist())) == 2
            assert trace.transitions_while_closed() == 0

    def test_most_openings_change_state(self, settings: Settings):
        """Balanced rates: at least 60 % of openings see a transition."""
        preset = settings.preset("fig5")
        changed = np.concatenate([
            opening_changes(run_preset(preset, settings.channel, seed), preset.schedule)
            for seed in range(8)
        ])

        assert changed.size == 160
        assert changed.mean() >= 0.6

    def test_shutter_never_open(self, settings: Settings):
        preset = settings.preset("fig5")
        light = Illumination.from_absorbed(preset.absorbed_rate, preset.wavelength_um)

        trace = balanced_switching(
            settings.channel, preset.rates, light, preset.V_g, preset.initial,
            ShutterSchedule.never_open(), 100.0, 0.5, seed=0,
        )

        assert trace.events == []
        assert len(set(trace.current.tolist())) == 1

    def test_rates_balanced(self, settings: Settings):
        preset = settings.preset("fig5")
        light = Illumination.from_absorbed(preset.absorbed_rate, preset.wavelength_um)

        trap, detrap = check_balanced(preset.rates, light, preset.initial)

        assert trap == pytest.approx(0.15)
        assert detrap == pytest.approx(0.15)

    def test_unbalanced_rejected(self, settings: Settings):
        preset = settings.preset("fig5")
        light = Illumination.from_absorbed(preset.absorbed_rate, 1.30)

        with pytest.raises(ConfigError):
            check_balanced(preset.rates, light, preset.initial)

    def test_multi_electron_trap_rejected(self, settings: Settings):
        preset = settings.preset("fig5")
        light = Illumination.from_absorbed(preset.absorbed_rate, preset.wavelength_um)

        with pytest.raises(ConfigError):
            check_balanced(preset.rates, light, TrapState(n_ionized=47, capacity=2))

    def test_deterministic(self, settings: Settings):
        preset = settings.preset("fig5")

        one = run_preset(preset, settings.channel, 11)
        two = run_preset(preset, settings.channel, 11)

        assert one.events == two.events


@pytest.mark.integration
@pytest.mark.solver
@pytest.mark.slow
class TestDeviceGap:
    """Test rates whose interband edge comes from a solved device."""

    def test_gap_from_solved_device(self, solved_device):
        rates = rates_for_device(RateModel(), solved_device)

        assert rates.lambda_gap == pytest.approx(interband_wavelength(solved_device))
        assert rates.crossover_width == RateModel().crossover_width

    def test_wider_well_moves_sweep_minimum(self, settings: Settings, absorption_width_series):
        """A 9 nm absorption well pushes the ensemble-median minimum to its longer edge."""
        preset = settings.preset("fig4")
        minima = {}
        for width in (4.5, 9.0):
            rates = rates_for_device(preset.rates, absorption_width_series[width])
            device_preset = preset.model_copy(update={"rates": rates})
            traces = [run_preset(device_preset, settings.channel, seed) for seed in range(16)]
            minima[width] = median_minimum_wavelength(traces)
            assert abs(minima[width] - rates.lambda_gap) <= 0.05

        assert minima[9.0] - minima[4.5] > 0.05
