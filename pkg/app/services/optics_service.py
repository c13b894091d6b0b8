"""
Photon budget of the windowed gate.
"""

from typing import Tuple

import numpy as np

from app.core.constants import HC_EV_UM, Q
from app.core.exceptions import ConfigError
from app.schemas.optics_schemas import BeamGeometry, BeamProfile, Illumination


def window_power_fraction(beam: BeamGeometry) -> float:
    """
    Fraction of the beam power passing through the window (beam centred on it).

    gaussian: 1 - exp(-2 r^2 / w^2) with r the window radius and w the 1/e^2
    intensity radius; uniform: area ratio clipped to 1.
    """
    if beam.profile == BeamProfile.UNIFORM:
        return float(min(1.0, (beam.window_diameter / beam.spot_diameter) ** 2))
    r = beam.window_diameter / 2
    w = beam.spot_diameter / 2
    return float(-np.expm1(-2.0 * r**2 / w**2))


def photon_energy_J(wavelength_um: float) -> float:
    if wavelength_um <= 0:
        raise ConfigError("Wavelength must be positive")
    return HC_EV_UM / wavelength_um * Q


def absorbed_photon_rate(
    power: float,
    wavelength: float,
    fraction: float,
    absorptivity: float,
) -> Tuple[float, float]:
    """
    Photon rates from beam power.

    Args:
        power: total beam power, W
        wavelength: um
        fraction: share of the power reaching the window
        absorptivity: share of window photons absorbed

    Returns:
        (absorbed rate, incident rate in window), photons/s
    """
    if min(power, fraction, absorptivity) < 0:
        raise ConfigError("Power, window fraction and absorptivity must be non-negative")
    incident = power * fraction / photon_energy_J(wavelength)
    return incident * absorptivity, incident


def required_power(absorbed_rate: float, wavelength: float, fraction: float, absorptivity: float) -> float:
    """Beam power that yields `absorbed_rate` photons/s in the absorption layer, W."""
    if fraction <= 0 or absorptivity <= 0:
        raise ConfigError("Window fraction and absorptivity must be positive")
    return absorbed_rate / absorptivity / fraction * photon_energy_J(wavelength)


def illumination_from_power(
    power: float,
    wavelength: float,
    beam: BeamGeometry,
    absorptivity: float,
) -> Illumination:
    _, incident = absorbed_photon_rate(power, wavelength, window_power_fraction(beam), absorptivity)
    return Illumination(wavelength_um=wavelength, incident_rate=incident, absorptivity=absorptivity)
