from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Union

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.exceptions import ConfigError
from app.schemas.dynamics_schemas import ChannelModel, DynamicsPreset, GateSweep, RateModel
from app.schemas.optics_schemas import BeamGeometry, Illumination
from app.schemas.solver_schemas import SolverConfig


class FigurePreset(BaseModel):
    """Dynamics presets run by `repro <figure>`."""

    presets:   List[str] = Field(min_length=1)
    ensemble:  int = Field(default=1, ge=1)
    iv_curves: bool = Field(default=False, description="Also write I_sd-V_g curves at each start and end state")


def _packaged_presets() -> dict:
    text = resources.files("app.data").joinpath("presets.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text) or {}


def _default_presets() -> Dict[str, DynamicsPreset]:
    data = _packaged_presets().get("presets", {})
    return {name: DynamicsPreset.model_validate(body) for name, body in data.items()}


def _default_figures() -> Dict[str, FigurePreset]:
    data = _packaged_presets().get("figures", {})
    return {name: FigurePreset.model_validate(body) for name, body in data.items()}


class Settings(BaseSettings):
    # materials
    materials_path: Optional[str] = None          # None -> packaged table

    # logging / output
    log_level:  str = "INFO"
    output_dir: str = "runs"

    # band diagram
    solver: SolverConfig = Field(default_factory=SolverConfig)

    # photon budget
    beam:         BeamGeometry = Field(default_factory=BeamGeometry)
    illumination: Illumination = Field(default_factory=Illumination)

    # trap dynamics
    channel:    ChannelModel = Field(default_factory=ChannelModel)
    rates:      RateModel = Field(default_factory=RateModel)
    gate_sweep: GateSweep = Field(default_factory=GateSweep)
    presets:    Dict[str, DynamicsPreset] = Field(default_factory=_default_presets)
    figures:    Dict[str, FigurePreset] = Field(default_factory=_default_figures)

    # ensembles
    ensemble_concurrency: int = Field(default=4, ge=1)

    model_config = SettingsConfigDict(extra="forbid")

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls,
        init_settings,
        env_settings,
        dotenv_settings,
        file_secret_settings,
    ):
        # Only explicit values: no environment, no .env
        return (init_settings,)

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        level = v.upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown log level '{v}'")
        return level

    def preset(self, name: str) -> DynamicsPreset:
        """Named preset with its rate fields layered over the configured base rates."""
        try:
            preset = self.presets[name]
        except KeyError:
            raise ConfigError(
                f"Unknown preset '{name}' (available: {', '.join(sorted(self.presets))})"
            ) from None
        explicit = {field: getattr(preset.rates, field) for field in preset.rates.model_fields_set}
        return preset.model_copy(update={"rates": self.rates.model_copy(update=explicit)})

    def figure(self, name: str) -> FigurePreset:
        try:
            return self.figures[name]
        except KeyError:
            raise ConfigError(
                f"Unknown figure '{name}' (available: {', '.join(sorted(self.figures))})"
            ) from None


def load_settings(path: Union[str, Path]) -> Settings:
    """Build Settings from a YAML document; keys absent from it keep their defaults."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"Cannot read settings file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"Settings file {path} must hold a mapping")
    try:
        return Settings(**data)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"Invalid settings in {path} at '{where}': {first['msg']}") from exc


# lru_cache so settings are singleton
@lru_cache()
def get_settings() -> Settings:
    return Settings()
