"""
Device-description schemas: the layer stack a band diagram is computed for.

Field names follow the on-disk document (docs/DEVICE_FILE.md) so a parsed
document validates directly into DeviceStack.
"""

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator


class Layer(BaseModel):
    """One epitaxial layer."""

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    material:         str
    thickness:        float = Field(gt=0, alias="thickness_nm", description="nm")
    donor_doping:     float = Field(default=0.0, ge=0, alias="doping_cm3", description="cm^-3")
    ionized_fraction: float = Field(default=1.0, ge=0, le=1)
    label:            Optional[str] = None

    @field_validator("material")
    @classmethod
    def validate_material(cls, v: str) -> str:
        v = v.strip()
        if not v:
            raise ValueError("Material cannot be empty.")
        return v

    @property
    def ionized_donors(self) -> float:
        """Ionized donor density, cm^-3."""
        return self.donor_doping * self.ionized_fraction


class DeviceStack(BaseModel):
    """Ordered layer list, surface first, plus boundary and bias conditions."""

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    layers:          List[Layer]
    surface_barrier: float = Field(alias="surface_barrier_eV", description="Ec - E_F at the gated surface, eV")
    gate_bias:       float = Field(default=0.0, alias="gate_bias_V")
    temperature:     float = Field(default=4.2, gt=0, alias="temperature_K")

    @field_validator("layers")
    @classmethod
    def validate_layers(cls, v: List[Layer]) -> List[Layer]:
        if not v:
            raise ValueError("Device stack has no layers")
        labels = [layer.label for layer in v if layer.label]
        if len(labels) != len(set(labels)):
            raise ValueError("Layer labels must be unique.")
        return v

    @property
    def total_thickness(self) -> float:
        return sum(layer.thickness for layer in self.layers)

    @property
    def thinnest(self) -> float:
        return min(layer.thickness for layer in self.layers)

    def index_of(self, label: str) -> int:
        for index, layer in enumerate(self.layers):
            if layer.label == label:
                return index
        raise KeyError(f"No layer labelled '{label}'")

    def __getitem__(self, label: str) -> Layer:
        return self.layers[self.index_of(label)]

    def with_updates(self, **changes) -> "DeviceStack":
        return self.model_copy(update=changes)
