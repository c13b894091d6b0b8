"""
Run service: executes one resolved RunConfig and writes its outputs.

Every command ends with a manifest in its output directory. Band-diagram
commands still write their tables when the solve does not converge and then
raise ConvergenceError, so the residual history is on disk for inspection.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from functools import partial
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from app.config.config import Settings
from app.core.exceptions import ConfigError, ConvergenceError, SptError
from app.core.utils import LoggerMixin
from app.repositories.material_repo import get_material_repository
from app.repositories.stack_repo import load_stack, paper_stack
from app.schemas.dynamics_schemas import DynamicsPreset, TrapState
from app.schemas.run_schemas import RunConfig
from app.schemas.stack_schemas import DeviceStack
from app.services.band_service import SchrodingerPoissonSolver, SolveResult
from app.services.derived_service import (
    absorption_lifetime,
    build_report,
    interband_transition,
)
from app.services.optics_service import (
    illumination_from_power,
    required_power,
    window_power_fraction,
)
from app.services.report_service import ReportWriter, profile_frame, solve_summary
from app.services.trap_service import (
    Trace,
    calibrate_conductance,
    calibrate_trap_step,
    channel_current,
    check_balanced,
    ensemble_median,
    iv_table,
    median_minimum_wavelength,
    opening_changes,
    preset_light,
    rates_for_device,
    run_preset,
)
from app.task.ensemble import run_ensemble, seed_range

DEFAULT_PRESET = {"trace": "fig3_text", "sweep": "fig4", "switch": "fig5", "calibrate": "fig3_text"}


@dataclass
class RunOutcome:
    """What a run produced; `summary` is the rounded console view."""

    out_dir: str
    files: List[str] = field(default_factory=list)
    summary: Dict[str, str] = field(default_factory=dict)
    error: Optional[SptError] = None


# ============================================================================
# Trace analysis
# ============================================================================

def trace_summary(trace: Trace, preset: DynamicsPreset) -> Dict[str, Any]:
    """Scalar description of one realisation."""
    start, end = float(trace.current[0]), float(trace.current[-1])
    summary: Dict[str, Any] = {
        "seed": trace.seed,
        "mode": preset.mode,
        "events": trace.event_counts(),
        "start_current_A": start,
        "final_current_A": end,
        "final_to_start": end / start if start > 0 else None,
        "final_state": {"n_trapped": int(trace.n_trapped[-1]), "n_ionized": int(trace.n_ionized[-1])},
    }
    if preset.mode == "sweep":
        lowest = int(np.argmin(trace.current))
        summary["minimum_current_wavelength_um"] = float(trace.wavelength[lowest])
        summary["lambda_gap_um"] = preset.rates.lambda_gap
    if preset.mode == "switch" and preset.schedule is not None:
        changed = opening_changes(trace, preset.schedule)
        summary["current_levels_A"] = sorted({float(value) for value in trace.current})
        summary["openings"] = int(changed.size)
        summary["openings_with_change"] = int(changed.sum())
        summary["transitions_while_closed"] = trace.transitions_while_closed()
    return summary


# ============================================================================
# Service
# ============================================================================

class RunService(LoggerMixin):
    """Maps each command onto the services that implement it."""

    def __init__(self, settings: Settings):
        super().__init__()
        self.settings = settings
        self.materials = get_material_repository(settings.materials_path)
        self._handlers: Dict[str, Callable[[RunConfig, ReportWriter, RunOutcome], None]] = {
            "band-diagram": self._band_diagram,
            "report": self._report,
            "wkb": self._wkb,
            "wavelength": self._wavelength,
            "flux": self._flux,
            "trace": self._dynamics,
            "sweep": self._dynamics,
            "switch": self._dynamics,
            "repro": self._repro,
            "calibrate": self._calibrate,
        }
        self._stack: Optional[DeviceStack] = None
        self._device_result: Optional[SolveResult] = None
        self._inputs: Dict[str, Any] = {}

    def run(self, config: RunConfig) -> RunOutcome:
        """
        Execute `config`.

        Returns:
            RunOutcome with the written files and a console summary

        Raises:
            SptError: configuration, numerical or output failure, raised
                after the manifest has been written
        """
        started = time.perf_counter()
        self._stack = None
        self._device_result = None
        self._inputs = {"run": config.echo()}
        writer = ReportWriter(config.out_dir)
        outcome = RunOutcome(out_dir=str(config.out_dir))

        self.log_info(f"Running '{config.command}' into {config.out_dir}")
        try:
            self._handlers[config.command](config, writer, outcome)
        except SptError as exc:
            outcome.error = outcome.error or exc

        writer.manifest(
            command=config.command,
            inputs=self._inputs,
            seed=config.seed,
            wall_time_s=time.perf_counter() - started,
            stack=self._stack,
            table_version=self.materials.version if self._stack is not None else None,
        )
        outcome.files = sorted(writer.written)
        if outcome.error is not None:
            raise outcome.error
        return outcome

    # ============= Band diagram =============

    def _device(self, config: RunConfig) -> DeviceStack:
        if config.builtin:
            stack = paper_stack(config.ionized_fraction, materials=self.materials)
        else:
            stack = load_stack(config.stack_path, self.materials)
        if config.gate_bias is not None:
            stack = stack.with_updates(gate_bias=config.gate_bias)
        return stack

    def _solve(self, config: RunConfig, outcome: RunOutcome) -> SolveResult:
        stack = self._device(config)
        solver_config = self.settings.solver.with_overrides(**config.solver)
        self._stack = stack
        self._inputs["solver"] = solver_config.model_dump(mode="json")
        result = SchrodingerPoissonSolver(solver_config, self.materials).solve(stack)
        outcome.summary["converged"] = str(result.converged)
        outcome.summary["iterations"] = str(result.iterations)
        if not result.converged:
            outcome.error = ConvergenceError(
                f"Band diagram did not converge in {result.iterations} iterations "
                f"(max|dEc| = {result.final_residual:.3e} eV)",
                result.residual_history,
            )
        return result

    def _band_diagram(self, config: RunConfig, writer: ReportWriter, outcome: RunOutcome) -> None:
        self._write_band(self._solve(config, outcome), writer, outcome)

    def _write_band(self, result: SolveResult, writer: ReportWriter, outcome: RunOutcome) -> None:
        writer.table("profile.csv", profile_frame(result))
        summary = solve_summary(result)
        writer.key_values("band_report.yaml", summary)
        if "channel_sheet_density_cm2" in summary:
            outcome.summary["channel n_s (cm^-2)"] = f"{summary['channel_sheet_density_cm2']:.3e}"

    def _report(self, config: RunConfig, writer: ReportWriter, outcome: RunOutcome) -> None:
        self._write_report(self._solve(config, outcome), writer, outcome)

    def _write_report(self, result: SolveResult, writer: ReportWriter, outcome: RunOutcome) -> None:
        self._inputs["beam"] = self.settings.beam.model_dump(mode="json")
        self._inputs["illumination"] = self.settings.illumination.model_dump(mode="json")
        report = build_report(result, self.settings.beam, self.settings.illumination)
        writer.key_values("report.yaml", report.as_dict())
        outcome.summary.update({
            "interband wavelength (um)": f"{report.interband_wavelength_um:.4f}",
            "g_eff (absorption)": f"{report.g_eff_absorption:+.3f}",
            "tunneling time (s)": f"{report.tunneling_time_s:.3e}",
            "channel n_s (cm^-2)": f"{report.channel_sheet_density_cm2:.3e}",
        })

    def _wkb(self, config: RunConfig, writer: ReportWriter, outcome: RunOutcome) -> None:
        result = self._solve(config, outcome)
        lifetime = absorption_lifetime(result, energy=config.energy_eV)
        writer.key_values("wkb.yaml", asdict(lifetime))
        outcome.summary.update({
            "transmission": f"{lifetime.transmission:.3e}",
            "tau (s)": f"{lifetime.tau_s:.3e}",
        })

    def _wavelength(self, config: RunConfig, writer: ReportWriter, outcome: RunOutcome) -> None:
        result = self._solve(config, outcome)
        transition = interband_transition(result)
        writer.key_values("wavelength.yaml", asdict(transition))
        outcome.summary["interband wavelength (um)"] = f"{transition.wavelength_um:.4f}"

    # ============= Photon budget =============

    def _flux(self, config: RunConfig, writer: ReportWriter, outcome: RunOutcome) -> None:
        beam = self.settings.beam
        light = self.settings.illumination
        if config.power_W is not None:
            light = illumination_from_power(config.power_W, light.wavelength_um, beam, light.absorptivity)
        fraction = window_power_fraction(beam)
        budget = light.budget
        data = {
            "beam": beam.model_dump(mode="json"),
            "window_area_cm2": beam.window_area_cm2,
            "window_power_fraction": fraction,
            "wavelength_um": light.wavelength_um,
            "beam_power_W": config.power_W,
            **budget.model_dump(),
            "power_for_absorbed_rate_W": required_power(
                budget.absorbed_rate, light.wavelength_um, fraction, budget.absorptivity
            ) if budget.absorptivity > 0 else None,
        }
        self._inputs["beam"] = data["beam"]
        writer.key_values("flux.yaml", data)
        outcome.summary.update({
            "window fraction": f"{fraction:.3e}",
            "absorbed (photons/s)": f"{budget.absorbed_rate:.3g}",
        })

    # ============= Trap dynamics =============

    def _resolve_preset(self, config: RunConfig, name: Optional[str] = None) -> DynamicsPreset:
        name = name or config.dynamics.preset or DEFAULT_PRESET[config.command]
        preset = self.settings.preset(name)
        changes = config.dynamics.changes()
        if changes:
            data = preset.model_dump()
            data.update(changes)
            if preset.mode == "sweep" and "duration_s" in changes and preset.sweep is not None:
                data["sweep"] = {**preset.sweep.model_dump(), "duration_s": changes["duration_s"]}
            preset = DynamicsPreset.model_validate(data)
        if config.command in ("trace", "sweep", "switch") and preset.mode != config.command:
            raise ConfigError(f"Preset '{name}' is a {preset.mode} preset, not {config.command}")
        return preset

    def _simulate(
        self,
        preset: DynamicsPreset,
        seed: int,
        size: int,
        writer: ReportWriter,
    ) -> List[Trace]:
        channel = self.settings.channel
        job = partial(run_preset, preset, channel)
        seeds = seed_range(seed, size)
        if size == 1:
            traces = [job(seed)]
        else:
            traces = run_ensemble(job, seeds, self.settings.ensemble_concurrency)

        summaries = []
        for trace in traces:
            target = writer if size == 1 else writer.subdir(f"seed_{trace.seed}")
            target.table("trace.csv", trace.samples_frame())
            target.table("events.csv", trace.events_frame())
            summary = trace_summary(trace, preset)
            target.key_values("summary.yaml", summary)
            summaries.append(summary)
            if target is not writer:
                writer.written.extend(f"{target.out_dir.name}/{name}" for name in target.written)

        if size > 1:
            writer.table("ensemble_median.csv", ensemble_median(traces))
            ensemble = {"seeds": seeds, "members": summaries}
            if preset.mode == "sweep":
                ensemble["median_minimum_wavelength_um"] = median_minimum_wavelength(traces)
                ensemble["lambda_gap_um"] = preset.rates.lambda_gap
            writer.key_values("ensemble.yaml", ensemble)
        return traces

    def _solved_device(self, config: RunConfig, outcome: RunOutcome) -> SolveResult:
        """Band diagram of --stack, solved once per run; its interband edge sets lambda_gap."""
        if self._device_result is None:
            result = self._solve(config, outcome)
            if outcome.error is not None:
                raise outcome.error
            self._device_result = result
            self._inputs["lambda_gap_um"] = rates_for_device(self.settings.rates, result).lambda_gap
            self.log_info(f"lambda_gap from {config.stack_path}: {self._inputs['lambda_gap_um']:.4f} um")
        return self._device_result

    def _run_preset(self, config: RunConfig, writer: ReportWriter, outcome: RunOutcome, name: Optional[str] = None, size: int = 1) -> List[Trace]:
        preset = self._resolve_preset(config, name)
        key = name or config.dynamics.preset or DEFAULT_PRESET[config.command]
        if not config.builtin:
            rates = rates_for_device(preset.rates, self._solved_device(config, outcome))
            preset = preset.model_copy(update={"rates": rates})
        self._inputs.setdefault("presets", {})[key] = preset.model_dump(mode="json")
        self._inputs["channel"] = self.settings.channel.model_dump(mode="json")
        if preset.mode == "switch":
            trap, detrap = check_balanced(preset.rates, preset_light(preset), preset.initial)
            self.log_info(f"Switching rates: trap={trap:.3g}/s, neutralise={detrap:.3g}/s")

        traces = self._simulate(preset, config.seed, size, writer)
        first = traces[0]
        prefix = f"{key}: " if config.command == "repro" else ""
        outcome.summary[f"{prefix}I start -> end (nA)"] = (
            f"{first.current[0] * 1e9:.3f} -> {first.current[-1] * 1e9:.3f}"
        )
        outcome.summary[f"{prefix}events"] = str(sum(first.event_counts().values()))
        if preset.mode == "sweep" and len(traces) > 1:
            outcome.summary[f"{prefix}median minimum (um)"] = f"{median_minimum_wavelength(traces):.3f}"
        return traces

    def _dynamics(self, config: RunConfig, writer: ReportWriter, outcome: RunOutcome) -> None:
        self._run_preset(config, writer, outcome, size=config.dynamics.ensemble or 1)

    # ============= Figures =============

    def _repro(self, config: RunConfig, writer: ReportWriter, outcome: RunOutcome) -> None:
        if config.figure == "fig1":
            result = self._solve(config, outcome)
            self._write_band(result, writer, outcome)
            if outcome.error is None:
                self._write_report(result, writer, outcome)
            return
        figure = self.settings.figure(config.figure)
        size = config.dynamics.ensemble or figure.ensemble
        runs: Dict[str, Trace] = {}
        for name in figure.presets:
            target = writer.subdir(name) if len(figure.presets) > 1 else writer
            runs[name] = self._run_preset(config, target, outcome, name=name, size=size)[0]
            if target is not writer:
                writer.written.extend(f"{name}/{item}" for item in target.written)
        if figure.iv_curves:
            self._write_iv(runs, writer, outcome)

    def _write_iv(self, runs: Dict[str, Trace], writer: ReportWriter, outcome: RunOutcome) -> None:
        """I_sd-V_g curves at the start and end state of each run (lowest seed)."""
        channel = self.settings.channel
        states: Dict[str, TrapState] = {}
        for name, trace in runs.items():
            states[f"{name}_start"] = trace.initial
            states[f"{name}_end"] = trace.initial.with_counts(int(trace.n_trapped[-1]), int(trace.n_ionized[-1]))
        self._inputs["gate_sweep"] = self.settings.gate_sweep.model_dump(mode="json")
        writer.table("iv.csv", iv_table(channel, self.settings.gate_sweep.values(), states))
        writer.key_values("iv.yaml", {
            "bias_V_g": {name: trace.config.get("V_g") for name, trace in runs.items()},
            "states": {label: state.model_dump() for label, state in states.items()},
            "threshold_V": {
                label: float(channel.threshold(state.n_trapped, state.n_ionized))
                for label, state in states.items()
            },
        })
        outcome.summary["I-V curves"] = f"{len(states)} in iv.csv"

    # ============= Calibration =============

    def _calibrate(self, config: RunConfig, writer: ReportWriter, outcome: RunOutcome) -> None:
        preset = self._resolve_preset(config)
        state: TrapState = preset.initial
        # current ratios do not depend on G0
        tuned = calibrate_trap_step(self.settings.channel, preset.V_g, state)
        tuned = calibrate_conductance(tuned, preset.V_g, state)
        data = {
            "V_g": preset.V_g,
            "state": state.model_dump(),
            "G0_S": tuned.G0,
            "dVth_trap_V": tuned.dVth_trap,
            "current_A": channel_current(tuned, preset.V_g, state),
            "current_after_8_trapped_A": channel_current(
                tuned, preset.V_g, state.with_counts(state.n_trapped + 8, state.n_ionized)
            ),
        }
        self._inputs["channel"] = self.settings.channel.model_dump(mode="json")
        writer.key_values("calibration.yaml", data)
        outcome.summary.update({"G0 (S)": f"{tuned.G0:.4e}", "dVth_trap (V)": f"{tuned.dVth_trap:.4e}"})
