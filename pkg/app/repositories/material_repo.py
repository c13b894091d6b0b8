"""
Material registry.

Read-only after construction; lookups return the same frozen record every
time, so a single repository may be shared freely between solves.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import yaml
from pydantic import ValidationError

from app.core.exceptions import ConfigError, UnknownMaterial
from app.core.utils import LoggerMixin
from app.schemas.material_schemas import MaterialParams, MaterialTable

REQUIRED_MATERIALS = ("In0.53Ga0.47As", "In0.52Al0.48As", "InP")


class MaterialRepository(LoggerMixin):
    """Versioned lookup table of MaterialParams."""

    def __init__(self, table: MaterialTable, source: str = "builtin"):
        super().__init__()
        missing = [name for name in REQUIRED_MATERIALS if name not in table.materials]
        if missing:
            raise ConfigError(f"Material table '{source}' lacks required materials: {missing}")
        self._table = table
        self._materials: Dict[str, MaterialParams] = dict(table.materials)
        self.source = source
        self.log_info({"material_table": source, "version": table.version, "materials": len(self._materials)})

    # ------------------------------------------------------------------ #
    #  Construction                                                        #
    # ------------------------------------------------------------------ #

    @classmethod
    def from_text(cls, text: str, source: str = "<text>") -> "MaterialRepository":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"Material table '{source}' is not valid YAML: {exc}") from exc
        try:
            table = MaterialTable.model_validate(data)
        except ValidationError as exc:
            first = exc.errors()[0]
            loc = ".".join(str(p) for p in first["loc"])
            raise ConfigError(f"Material table '{source}': {loc}: {first['msg']}") from exc
        return cls(table, source=source)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "MaterialRepository":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"Cannot read material table {path}: {exc}") from exc
        return cls.from_text(text, source=str(path))

    @classmethod
    def builtin(cls) -> "MaterialRepository":
        text = resources.files("app.data").joinpath("materials.yaml").read_text(encoding="utf-8")
        return cls.from_text(text, source="builtin")

    # ------------------------------------------------------------------ #
    #  Queries                                                             #
    # ------------------------------------------------------------------ #

    @property
    def version(self) -> str:
        return self._table.version

    def names(self) -> List[str]:
        return sorted(self._materials)

    def __contains__(self, name: str) -> bool:
        return name in self._materials

    def lookup(self, name: str) -> MaterialParams:
        try:
            return self._materials[name]
        except KeyError:
            self.log_debug(f"Lookup of unknown material '{name}' in table '{self.source}'")
            raise UnknownMaterial(name) from None


def band_offsets(a: MaterialParams, b: MaterialParams) -> Tuple[float, float]:
    """
    Conduction- and valence-band offsets of `a` relative to `b`, eV.

    dEc = Ec(a) - Ec(b) and dEv = Ev(a) - Ev(b); both flip sign exactly
    when the arguments are swapped, and dEc - dEv = Eg(a) - Eg(b).
    """
    dEc = a.E_c_ref - b.E_c_ref
    dEv = a.E_v_ref - b.E_v_ref
    return dEc, dEv


@lru_cache()
def get_material_repository(path: Optional[str] = None) -> MaterialRepository:
    if path is None:
        return MaterialRepository.builtin()
    return MaterialRepository.from_file(path)


def lookup(name: str) -> MaterialParams:
    """Look up `name` in the builtin table."""
    return get_material_repository().lookup(name)
