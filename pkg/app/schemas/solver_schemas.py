"""
Schrödinger–Poisson solver configuration.
"""

from typing import Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator


class SolverConfig(BaseModel):
    """Numerical knobs of the self-consistent band-diagram solve."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dz:                  float = Field(default=0.1, gt=0, description="Grid spacing, nm")
    tol_potential:       float = Field(default=1e-5, gt=0, description="Convergence threshold on max|dEc|, eV")
    max_iter:            int = Field(default=500, ge=1)
    mixing:              float = Field(default=0.2, gt=0, le=1)
    n_states:            int = Field(default=40, ge=1, description="Subbands computed per carrier type")
    predictor_corrector: bool = True
    quantum_region:      Union[Literal["auto", "full"], Tuple[float, float]] = "auto"
    quantum_margin_nm:   float = Field(default=40.0, ge=0)
    occupation_cutoff_kT: float = Field(default=40.0, gt=0)
    newton_tol:          float = Field(default=1e-10, gt=0, description="Inner Poisson/Newton tolerance, V")
    newton_max_iter:     int = Field(default=100, ge=1)
    newton_max_step:     float = Field(default=0.1, gt=0, description="Largest potential change per Newton step, V")
    spectrum_window_eV:  float = Field(default=0.3, ge=0, description="Final-potential states are reported up to this far above each well floor, eV")

    @field_validator("quantum_region")
    @classmethod
    def validate_region(cls, v):
        if isinstance(v, tuple):
            start, stop = v
            if start < 0 or stop <= start:
                raise ValueError("quantum_region must satisfy 0 <= start < stop (nm).")
        return v

    def with_overrides(self, **overrides) -> "SolverConfig":
        data = self.model_dump()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return SolverConfig.model_validate(data)
