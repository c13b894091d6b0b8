"""
Illumination schemas: beam geometry, photon budget and light sources.
"""

import math
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator


class BeamProfile(str, Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"


class BeamGeometry(BaseModel):
    """Spot on the sample and the gate window it falls on."""

    model_config = ConfigDict(frozen=True, use_enum_values=True)

    spot_diameter:   float = Field(
        default=5000.0,
        gt=0,
        description="Spot diameter, um (1/e^2 intensity diameter for a gaussian beam)",
    )
    window_diameter: float = Field(default=1.0, gt=0, description="Gate window diameter, um")
    profile:         BeamProfile = BeamProfile.GAUSSIAN

    @property
    def window_area_cm2(self) -> float:
        return math.pi * (self.window_diameter * 1e-4 / 2) ** 2


class PhotonBudget(BaseModel):
    """Photon rates through the gate window."""

    model_config = ConfigDict(frozen=True)

    incident_rate_in_window: float = Field(ge=0, description="photons/s")
    absorptivity:            float = Field(ge=0, le=1)
    absorbed_rate:           float = Field(ge=0, description="photons/s")

    @model_validator(mode="after")
    def check_product(self):
        expected = self.incident_rate_in_window * self.absorptivity
        if not math.isclose(self.absorbed_rate, expected, rel_tol=1e-12, abs_tol=1e-300):
            raise ValueError(
                f"absorbed_rate {self.absorbed_rate} != incident_rate_in_window x absorptivity ({expected})"
            )
        return self

    @classmethod
    def from_incident(cls, incident_rate: float, absorptivity: float) -> "PhotonBudget":
        return cls(
            incident_rate_in_window=incident_rate,
            absorptivity=absorptivity,
            absorbed_rate=incident_rate * absorptivity,
        )


class Illumination(BaseModel):
    """Monochromatic light reaching the window while the shutter is open."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    wavelength_um: float = Field(default=1.30, gt=0)
    incident_rate: float = Field(default=100.0, ge=0, description="Photons/s entering the window")
    absorptivity:  float = Field(default=0.01, ge=0, le=1, description="Fraction absorbed in the absorption layer")

    @property
    def absorbed_rate(self) -> float:
        return self.incident_rate * self.absorptivity

    @property
    def budget(self) -> PhotonBudget:
        return PhotonBudget.from_incident(self.incident_rate, self.absorptivity)

    @classmethod
    def from_absorbed(cls, absorbed_rate: float, wavelength_um: float, absorptivity: float = 0.01) -> "Illumination":
        if absorptivity <= 0:
            raise ValueError("absorptivity must be positive to infer the incident rate")
        return cls(
            wavelength_um=wavelength_um,
            incident_rate=absorbed_rate / absorptivity,
            absorptivity=absorptivity,
        )
