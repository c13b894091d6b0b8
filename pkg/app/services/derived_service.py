"""
Device figures of merit computed from a converged band diagram.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from app.core.constants import HBAR2_2M0, HC_EV_UM, M0, Q
from app.core.exceptions import ConfigError, NoBoundState
from app.schemas.optics_schemas import BeamGeometry, Illumination
from app.services.band_service import SolveResult, well_sheet_density
from app.services.grid_service import Grid
from app.services.optics_service import required_power, window_power_fraction
from app.services.schrodinger_service import Subband

ATTEMPT_CONVENTION = "f = v / (2 L), v = sqrt(2 E / m)"

LayerRef = Union[int, str]


def _layer(result: SolveResult, layer: LayerRef) -> int:
    if isinstance(layer, int):
        return layer
    try:
        return result.stack.index_of(layer)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None


# ============================================================================
# g-factor
# ============================================================================

def layer_weights(subband: Subband, grid: Grid) -> np.ndarray:
    """Envelope probability carried by each layer."""
    return np.array([subband.weight(grid.layer_slice(k), grid.dz) for k in range(grid.n_layers)])


def effective_g(subband: Subband, grid: Grid) -> float:
    """Envelope-weighted bulk electron g-factor."""
    weights = layer_weights(subband, grid)
    total = weights.sum()
    if total <= 0:
        raise ConfigError("Subband envelope has zero norm")
    g_layers = np.array([grid.g_e[grid.boundaries[k]] for k in range(grid.n_layers)])
    return float(np.dot(g_layers, weights) / total)


def localized_states(
    subbands: Sequence[Subband],
    grid: Grid,
    layer: int,
    threshold: float = 0.5,
) -> List[Subband]:
    """Subbands with more than `threshold` of their probability inside `layer`, lowest first."""
    nodes = grid.layer_slice(layer)
    found = [band for band in subbands if band.weight(nodes, grid.dz) > threshold]
    return sorted(found, key=lambda band: band.energy)


# ============================================================================
# Tunneling
# ============================================================================

def wkb_transmission(
    Ec: Sequence[float],
    mass: Union[float, Sequence[float]],
    E: float,
    dz: float,
) -> float:
    """
    WKB transmission exp(-2 int kappa dz) through the region where Ec > E.

    kappa = sqrt(2 m (Ec - E)) / hbar, integrated with the trapezoid rule.
    Returns 1.0 when nothing is classically forbidden.
    """
    Ec = np.asarray(Ec, dtype=float)
    mass = np.broadcast_to(np.asarray(mass, dtype=float), Ec.shape)
    barrier = np.clip(Ec - E, 0.0, None)
    if not np.any(barrier > 0):
        return 1.0
    kappa = np.sqrt(mass * barrier / HBAR2_2M0)      # nm^-1
    exponent = 2.0 * float(np.trapezoid(kappa, dx=dz))
    return math.exp(-exponent)


def tunneling_time(
    well_width: float,
    well_mass: float,
    E_above_well_bottom: float,
    transmission: float,
) -> float:
    """
    Escape time 1 / (f T) with the bounce attempt frequency f = v / (2 L).

    Args:
        well_width: nm
        well_mass: m0
        E_above_well_bottom: kinetic energy in the well, eV
        transmission: barrier transmission

    Returns:
        seconds; +inf when the transmission underflows to zero
    """
    if E_above_well_bottom <= 0 or well_width <= 0 or well_mass <= 0:
        raise ConfigError("Well width, mass and energy above the well bottom must be positive")
    if transmission < 0 or transmission > 1:
        raise ConfigError(f"Transmission {transmission} outside [0, 1]")
    if transmission == 0:
        return math.inf
    return 1.0 / (attempt_frequency(well_width, well_mass, E_above_well_bottom) * transmission)


def attempt_frequency(well_width: float, well_mass: float, E_above_well_bottom: float) -> float:
    velocity = math.sqrt(2.0 * E_above_well_bottom * Q / (well_mass * M0))
    return velocity / (2.0 * well_width * 1e-9)


@dataclass(frozen=True)
class LifetimeEstimate:
    energy_eV: float
    well_bottom_eV: float
    transmission: float
    attempt_frequency_Hz: float
    tau_s: float
    convention: str = ATTEMPT_CONVENTION


def absorption_lifetime(
    result: SolveResult,
    absorption: LayerRef = "absorption",
    channel: LayerRef = "channel",
    energy: Optional[float] = None,
) -> LifetimeEstimate:
    """
    Lifetime of the absorption-well ground state against tunneling through
    the barrier layers into the channel well.

    `energy` (eV, on the Ec scale) replaces the ground-state energy, e.g. to
    probe a hot photoelectron; it must lie above the well bottom.
    """
    grid = result.grid
    a = _layer(result, absorption)
    c = _layer(result, channel)
    states = localized_states(result.subbands, grid, a)
    if not states:
        raise NoBoundState(f"No electron state localized in layer {a}")
    ground = states[0]
    level = ground.energy if energy is None else energy

    Ec = result.profile.Ec
    nodes = grid.layer_slice(a)
    bottom = float(np.min(Ec[nodes]))
    if a < c:
        lo, hi = int(grid.boundaries[a + 1]), int(grid.boundaries[c])
    else:
        lo, hi = int(grid.boundaries[c + 1]), int(grid.boundaries[a])
    transmission = wkb_transmission(Ec[lo:hi + 1], grid.m_e[lo:hi + 1], level, grid.dz)

    width = grid.layer_span(a)[1] - grid.layer_span(a)[0]
    kinetic = level - bottom
    if kinetic <= 0:
        raise ConfigError(f"Energy {level:.4f} eV lies below the well bottom {bottom:.4f} eV")
    frequency = attempt_frequency(width, ground.mass, kinetic)
    tau = tunneling_time(width, ground.mass, kinetic, transmission)
    return LifetimeEstimate(
        energy_eV=level,
        well_bottom_eV=bottom,
        transmission=transmission,
        attempt_frequency_Hz=frequency,
        tau_s=tau,
    )


# ============================================================================
# Optical transition
# ============================================================================

@dataclass(frozen=True)
class Transition:
    electron_confinement_eV: float
    hole_confinement_eV: float
    gap_eV: float
    energy_eV: float
    wavelength_um: float


def interband_transition(result: SolveResult, absorption_layer: LayerRef = "absorption") -> Transition:
    """
    Lowest heavy-hole to conduction-band transition of a well layer.

    Raises:
        NoBoundState: no electron or heavy-hole state holds > 50 % of its
            probability in the layer
    """
    grid = result.grid
    k = _layer(result, absorption_layer)
    electrons = localized_states(result.subbands, grid, k)
    holes = localized_states(result.hole_subbands, grid, k)
    if not electrons:
        raise NoBoundState(f"No electron subband localized in layer {k} ({grid.materials[k]})")
    if not holes:
        raise NoBoundState(f"No heavy-hole subband localized in layer {k} ({grid.materials[k]})")

    nodes = grid.layer_slice(k)
    Ec_mean = float(np.mean(result.profile.Ec[nodes]))
    Ev_mean = float(np.mean(result.profile.Ev[nodes]))
    gap = float(grid.E_g[grid.boundaries[k]])
    conf_e = electrons[0].energy - Ec_mean
    conf_h = holes[0].energy + Ev_mean
    energy = gap + conf_e + conf_h
    return Transition(
        electron_confinement_eV=conf_e,
        hole_confinement_eV=conf_h,
        gap_eV=gap,
        energy_eV=energy,
        wavelength_um=HC_EV_UM / energy,
    )


def interband_wavelength(result: SolveResult, absorption_layer: LayerRef = "absorption") -> float:
    """Interband absorption edge of the layer, um."""
    return interband_transition(result, absorption_layer).wavelength_um


# ============================================================================
# Report bundle
# ============================================================================

@dataclass(frozen=True)
class DeviceReport:
    fermi_level_eV: float
    iterations: int
    converged: bool
    channel_sheet_density_cm2: float
    channel_ground_eV: Optional[float]
    absorption_ground_eV: float
    absorption_hh1_eV: float
    electron_confinement_eV: float
    hole_confinement_eV: float
    interband_wavelength_um: float
    g_eff_absorption: float
    g_eff_channel: Optional[float]
    wkb_transmission: float
    attempt_frequency_Hz: float
    tunneling_time_s: float
    attempt_convention: str
    window_power_fraction: float
    incident_rate_in_window: float
    absorptivity: float
    absorbed_rate: float
    required_power_W: float

    def as_dict(self) -> Dict[str, object]:
        return asdict(self)


def build_report(
    result: SolveResult,
    beam: Optional[BeamGeometry] = None,
    illumination: Optional[Illumination] = None,
    absorption: LayerRef = "absorption",
    channel: LayerRef = "channel",
) -> DeviceReport:
    """Every derived scalar of a solved device."""
    beam = beam or BeamGeometry()
    illumination = illumination or Illumination()
    grid = result.grid
    a = _layer(result, absorption)
    c = _layer(result, channel)

    transition = interband_transition(result, a)
    lifetime = absorption_lifetime(result, a, c)
    e_abs = localized_states(result.subbands, grid, a)[0]
    h_abs = localized_states(result.hole_subbands, grid, a)[0]
    e_chan = localized_states(result.subbands, grid, c)

    fraction = window_power_fraction(beam)
    budget = illumination.budget
    wavelength = transition.wavelength_um
    power = (
        required_power(budget.absorbed_rate, wavelength, fraction, budget.absorptivity)
        if budget.absorptivity > 0 and fraction > 0
        else math.nan
    )

    return DeviceReport(
        fermi_level_eV=result.fermi_level,
        iterations=result.iterations,
        converged=result.converged,
        channel_sheet_density_cm2=well_sheet_density(result, c),
        channel_ground_eV=e_chan[0].energy if e_chan else None,
        absorption_ground_eV=e_abs.energy,
        absorption_hh1_eV=-h_abs.energy,
        electron_confinement_eV=transition.electron_confinement_eV,
        hole_confinement_eV=transition.hole_confinement_eV,
        interband_wavelength_um=wavelength,
        g_eff_absorption=effective_g(e_abs, grid),
        g_eff_channel=effective_g(e_chan[0], grid) if e_chan else None,
        wkb_transmission=lifetime.transmission,
        attempt_frequency_Hz=lifetime.attempt_frequency_Hz,
        tunneling_time_s=lifetime.tau_s,
        attempt_convention=lifetime.convention,
        window_power_fraction=fraction,
        incident_rate_in_window=budget.incident_rate_in_window,
        absorptivity=budget.absorptivity,
        absorbed_rate=budget.absorbed_rate,
        required_power_W=power,
    )
