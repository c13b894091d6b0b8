"""
Material parameter schemas: one immutable record per III-V material at 4.2 K.
"""

from typing import Dict, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator


class MaterialParams(BaseModel):
    """Band, transport and spin constants of one material."""

    model_config = ConfigDict(frozen=True)

    name:     str
    E_g:      float = Field(gt=0, description="Bandgap, eV")
    m_e:      float = Field(gt=0, description="Electron effective mass, m0")
    m_hh:     float = Field(gt=0, description="Heavy-hole mass along the growth axis, m0")
    eps_r:    float = Field(ge=1, description="Static relative dielectric constant")
    g_e:      float = Field(description="Bulk electron g-factor")
    E_c_ref:  float = Field(description="Conduction-band edge on a common absolute scale, eV")
    sources:  Dict[str, str] = Field(default_factory=dict, description="Per-value source notes")

    @field_validator("name")
    @classmethod
    def validate_name(cls, v: str) -> str:
        v = v.strip()
        if not v:
            raise ValueError("Material name cannot be empty.")
        return v

    @property
    def E_v_ref(self) -> float:
        return self.E_c_ref - self.E_g


class MaterialTable(BaseModel):
    """On-disk layout of the material table file."""

    version:     str
    temperature_K: float = Field(gt=0)
    reference:   Optional[str] = None
    materials:   Dict[str, MaterialParams]

    @field_validator("materials", mode="before")
    @classmethod
    def inject_names(cls, v):
        if isinstance(v, dict):
            return {
                key: ({"name": key, **value} if isinstance(value, dict) else value)
                for key, value in v.items()
            }
        return v
