"""
Command line: `python run_app.py <command> [options]`.

Exit codes: 0 success, 2 configuration / input errors (also click usage
errors), 3 numerical failures, 4 output I/O errors.
"""

import sys
from pathlib import Path
from typing import Any, Dict, Optional

import click
from pydantic import ValidationError

from app.config.config import Settings, get_settings, load_settings
from app.core.exceptions import ConfigError, ConvergenceError, SptError
from app.core.utils import configure_logging, logger
from app.schemas.run_schemas import DynamicsOverrides, RunConfig
from app.services.run_service import RunService

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]
RESIDUAL_TAIL = 10


def _fail(exc: SptError) -> None:
    logger.log_error(f"[{exc.category}] {exc.message}")
    if isinstance(exc, ConvergenceError) and exc.residual_history:
        tail = exc.residual_history[-RESIDUAL_TAIL:]
        start = len(exc.residual_history) - len(tail) + 1
        click.echo("Residual history (max|dEc|, eV):", err=True)
        for index, value in enumerate(tail, start):
            click.echo(f"  {index:4d}  {value:.3e}", err=True)
    sys.exit(exc.exit_code)


def _execute(settings: Settings, default_out: str, **fields: Any) -> None:
    out = fields.pop("out", None)
    fields["out_dir"] = Path(out) if out else Path(settings.output_dir) / default_out
    try:
        config = RunConfig(**fields)
    except ValidationError as exc:
        first = exc.errors()[0]
        _fail(ConfigError(f"{'.'.join(str(p) for p in first['loc']) or 'run'}: {first['msg']}"))
        return

    try:
        outcome = RunService(settings).run(config)
    except SptError as exc:
        _fail(exc)
        return

    for key, value in outcome.summary.items():
        click.echo(f"{key:>32}: {value}")
    click.echo(f"{len(outcome.files)} files written to {outcome.out_dir}")


# ============================================================================
# Shared options
# ============================================================================

def _solver_overrides(dz: Optional[float], max_iter: Optional[int], mixing: Optional[float], tol: Optional[float]) -> Dict[str, Any]:
    values = {"dz": dz, "max_iter": max_iter, "mixing": mixing, "tol_potential": tol}
    return {key: value for key, value in values.items() if value is not None}


def device_options(func):
    """--stack / --out / soak state / bias / solver knobs."""
    options = [
        click.option("--stack", "stack_path", type=click.Path(dir_okay=False), default=None,
                     help="Device-description YAML (default: builtin reference device)."),
        click.option("--out", type=click.Path(file_okay=False), default=None,
                     help="Output directory (default: <output_dir>/<command>)."),
        click.option("--ionized-fraction", type=float, default=1.0, show_default=True,
                     help="Soak state of the builtin device's doping layer (0..1)."),
        click.option("--gate-bias", type=float, default=None, help="Override the gate bias, V."),
        click.option("--dz", type=float, default=None, help="Grid spacing, nm."),
        click.option("--max-iter", type=int, default=None, help="Self-consistency iteration cap."),
        click.option("--mixing", type=float, default=None, help="Potential mixing factor (0, 1]."),
        click.option("--tol", type=float, default=None, help="Convergence threshold on max|dEc|, eV."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def dynamics_options(func):
    """--seed / --duration-s / --sample-dt-s / --ensemble and light overrides."""
    options = [
        click.option("--preset", default=None, help="Named dynamics preset (see docs/DYNAMICS.md)."),
        click.option("--seed", type=int, default=0, show_default=True,
                     help="Random seed; recorded in the manifest."),
        click.option("--duration-s", type=float, default=None, help="Simulated time, s."),
        click.option("--sample-dt-s", type=float, default=None, help="Trace sampling interval, s."),
        click.option("--ensemble", type=int, default=None,
                     help="Run seeds seed..seed+N-1 concurrently."),
        click.option("--wavelength-um", type=float, default=None, help="Override the wavelength, um."),
        click.option("--absorbed-rate", type=float, default=None, help="Absorbed photons/s while open."),
        click.option("--gate-voltage", "V_g", type=float, default=None, help="Override the gate voltage, V."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _dynamics(**kwargs) -> DynamicsOverrides:
    try:
        return DynamicsOverrides(**kwargs)
    except ValidationError as exc:
        first = exc.errors()[0]
        _fail(ConfigError(f"{first['loc'][0]}: {first['msg']}"))


pass_settings = click.pass_obj


# ============================================================================
# Group
# ============================================================================

@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Settings YAML; environment variables are never read.")
@click.option("--materials", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Material table YAML overriding the packaged one.")
@click.option("--log-level", type=click.Choice(LOG_LEVELS, case_sensitive=False), default=None,
              help="Logging level (default from settings: INFO).")
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[str], materials: Optional[str], log_level: Optional[str]):
    """Single-photoelectron transistor toolkit: band diagrams, device figures, trap dynamics."""
    try:
        settings = load_settings(config_path) if config_path else get_settings()
    except SptError as exc:
        configure_logging("INFO")
        _fail(exc)
        return
    updates: Dict[str, Any] = {}
    if materials:
        updates["materials_path"] = materials
    if log_level:
        updates["log_level"] = log_level.upper()
    if updates:
        settings = settings.model_copy(update=updates)
    configure_logging(settings.log_level)
    ctx.obj = settings


# ============================================================================
# Band diagram and derived quantities
# ============================================================================

def _device_fields(stack_path, out, ionized_fraction, gate_bias, dz, max_iter, mixing, tol) -> Dict[str, Any]:
    return {
        "stack_path": Path(stack_path) if stack_path else None,
        "out": out,
        "ionized_fraction": ionized_fraction,
        "gate_bias": gate_bias,
        "solver": _solver_overrides(dz, max_iter, mixing, tol),
    }


@cli.command("band-diagram")
@device_options
@pass_settings
def band_diagram(settings: Settings, **device):
    """Self-consistent band diagram: profile.csv + band_report.yaml."""
    _execute(settings, "band-diagram", command="band-diagram", **_device_fields(**device))


@cli.command()
@device_options
@pass_settings
def report(settings: Settings, **device):
    """Every derived scalar (wavelength, g-factor, tunneling time, photon budget)."""
    _execute(settings, "report", command="report", **_device_fields(**device))


@cli.command()
@device_options
@click.option("--energy-eV", "energy_eV", type=float, default=None,
              help="Tunneling energy on the Ec scale, eV (default: absorption ground state).")
@pass_settings
def wkb(settings: Settings, energy_eV: Optional[float], **device):
    """WKB transmission and tunneling time out of the absorption well."""
    _execute(settings, "wkb", command="wkb", energy_eV=energy_eV, **_device_fields(**device))


@cli.command()
@device_options
@pass_settings
def wavelength(settings: Settings, **device):
    """Interband absorption wavelength of the absorption well."""
    _execute(settings, "wavelength", command="wavelength", **_device_fields(**device))


@cli.command()
@click.option("--power-W", "power_W", type=float, default=None,
              help="Total beam power, W (default: use the configured incident rate).")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@pass_settings
def flux(settings: Settings, power_W: Optional[float], out: Optional[str]):
    """Photon budget through the gate window."""
    _execute(settings, "flux", command="flux", power_W=power_W, out=out)


# ============================================================================
# Trap dynamics
# ============================================================================

def _dynamics_command(name: str, doc: str):
    @cli.command(name, help=doc)
    @dynamics_options
    @click.option("--stack", "stack_path", type=click.Path(dir_okay=False), default=None,
                  help="Device-description YAML; its solved interband edge replaces lambda_gap.")
    @click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
    @pass_settings
    def command(settings: Settings, seed: int, stack_path: Optional[str], out: Optional[str], **overrides):
        _execute(
            settings, name,
            command=name,
            seed=seed,
            out=out,
            stack_path=Path(stack_path) if stack_path else None,
            dynamics=_dynamics(**overrides),
        )
    return command


trace = _dynamics_command("trace", "Constant-wavelength current trace (default preset fig3_text).")
sweep = _dynamics_command("sweep", "Wavelength sweep (default preset fig4).")
switch = _dynamics_command("switch", "Shuttered balanced switching (default preset fig5).")


@cli.command()
@click.argument("figure")
@dynamics_options
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@pass_settings
def repro(settings: Settings, figure: str, seed: int, out: Optional[str], **overrides):
    """Reproduce a figure preset: fig1, fig3, fig4 or fig5."""
    _execute(
        settings, f"repro/{figure}",
        command="repro",
        figure=figure,
        seed=seed,
        out=out,
        dynamics=_dynamics(**overrides),
    )


@cli.command()
@click.option("--preset", default=None, help="Preset supplying V_g and the start state (default fig3_text).")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@pass_settings
def calibrate(settings: Settings, preset: Optional[str], out: Optional[str]):
    """Fit G0 to 0.6 nA and dVth_trap so 8 trapped electrons leave 1 % of it."""
    _execute(settings, "calibrate", command="calibrate", out=out, dynamics=_dynamics(preset=preset))
