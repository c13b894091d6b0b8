"""
Run configuration: one CLI invocation, resolved.
"""

from pathlib import Path
from typing import Any, Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

Command = Literal[
    "band-diagram",
    "report",
    "wkb",
    "wavelength",
    "flux",
    "trace",
    "sweep",
    "switch",
    "repro",
    "calibrate",
]

RANDOMIZED = {"trace", "sweep", "switch", "repro"}


class DynamicsOverrides(BaseModel):
    """Command-line overrides applied on top of a dynamics preset."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    preset:        Optional[str] = None
    duration_s:    Optional[float] = Field(default=None, gt=0)
    sample_dt_s:   Optional[float] = Field(default=None, gt=0)
    ensemble:      Optional[int] = Field(default=None, ge=1)
    wavelength_um: Optional[float] = Field(default=None, gt=0)
    absorbed_rate: Optional[float] = Field(default=None, ge=0)
    V_g:           Optional[float] = None

    def changes(self) -> Dict[str, Any]:
        """Preset fields replaced by these overrides."""
        fields = ("duration_s", "sample_dt_s", "wavelength_um", "absorbed_rate", "V_g")
        return {name: getattr(self, name) for name in fields if getattr(self, name) is not None}


class RunConfig(BaseModel):
    """
    Everything a run needs besides Settings.

    `stack_path = None` selects the builtin device. `seed` is required for
    randomized commands; nothing is ever seeded from the clock.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    command:          Command
    out_dir:          Path
    stack_path:       Optional[Path] = None
    ionized_fraction: float = Field(default=1.0, ge=0, le=1, description="Soak state of the builtin device")
    gate_bias:        Optional[float] = None
    solver:           Dict[str, Any] = Field(default_factory=dict)
    dynamics:         DynamicsOverrides = Field(default_factory=DynamicsOverrides)
    seed:             Optional[int] = None
    figure:           Optional[str] = None
    energy_eV:        Optional[float] = None
    power_W:          Optional[float] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def check_command_inputs(self):
        if self.command in RANDOMIZED and self.seed is None:
            raise ValueError(f"'{self.command}' needs an explicit seed")
        if self.command == "repro" and not self.figure:
            raise ValueError("'repro' needs a figure name")
        return self

    @property
    def builtin(self) -> bool:
        return self.stack_path is None

    def echo(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", exclude_defaults=False)
