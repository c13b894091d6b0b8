"""
Report service.

Writes run outputs: comma-separated tables (pandas), key-value reports and
the run manifest (YAML). Floats are written with full round-trip precision;
the console summary is the only rounded view.
"""

from __future__ import annotations

import math
import platform
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional

import numpy as np
import pandas as pd
import yaml

from app.core.exceptions import OutputError
from app.core.utils import LoggerMixin
from app.repositories.stack_repo import serialize_stack
from app.services.band_service import SolveResult, well_sheet_density

VERSIONED_PACKAGES = ("numpy", "scipy", "pandas", "pydantic", "PyYAML", "click")

MANIFEST = "manifest.yaml"


# ============================================================================
# Value helpers
# ============================================================================

def _plain(value: Any) -> Any:
    """Convert numpy scalars/arrays and paths to YAML-safe builtins."""
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        value = float(value)
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, Path):
        return str(value)
    return value


def package_versions() -> Dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


# ============================================================================
# Band-diagram tables
# ============================================================================

def profile_frame(result: SolveResult) -> pd.DataFrame:
    profile = result.profile
    return pd.DataFrame({
        "z_nm": profile.z,
        "Ec_eV": profile.Ec,
        "Ev_eV": profile.Ev,
        "phi_V": profile.phi,
        "n_cm3": result.n,
    })


def solve_summary(result: SolveResult) -> Dict[str, Any]:
    """Scalar report of a band-diagram solve."""
    stack = result.stack
    sheet = {}
    for k, layer in enumerate(stack.layers):
        if layer.label:
            sheet[layer.label] = well_sheet_density(result, k, margin_nm=0.0)
    summary: Dict[str, Any] = {
        "fermi_level_eV": result.fermi_level,
        "converged": result.converged,
        "iterations": result.iterations,
        "final_max_dEc_eV": result.final_residual,
        "subbands": [
            {"energy_eV": band.energy, "sheet_density_cm2": band.sheet_density, "mass_m0": band.mass}
            for band in result.subbands
        ],
        "hole_subbands_eV": [-band.energy for band in result.hole_subbands],
        "layer_sheet_density_cm2": sheet,
    }
    if "channel" in sheet:
        summary["channel_sheet_density_cm2"] = well_sheet_density(result, "channel")
    return summary


# ============================================================================
# Writer
# ============================================================================

class ReportWriter(LoggerMixin):
    """Owns one output directory."""

    def __init__(self, out_dir: Path):
        super().__init__()
        self.out_dir = Path(out_dir)
        self.written: List[str] = []
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OutputError(f"Cannot create output directory {self.out_dir}: {exc}") from exc

    def subdir(self, name: str) -> "ReportWriter":
        return ReportWriter(self.out_dir / name)

    def _target(self, name: str) -> Path:
        return self.out_dir / name

    def _done(self, path: Path) -> Path:
        self.written.append(path.name)
        self.log_info(f"Wrote {path}")
        return path

    # ============= Formats =============

    def table(self, name: str, frame: pd.DataFrame) -> Path:
        path = self._target(name)
        try:
            frame.to_csv(path, index=False)
        except OSError as exc:
            raise OutputError(f"Cannot write {path}: {exc}") from exc
        return self._done(path)

    def key_values(self, name: str, data: Mapping[str, Any]) -> Path:
        path = self._target(name)
        try:
            with path.open("w", encoding="utf-8") as handle:
                yaml.safe_dump(_plain(data), handle, sort_keys=False)
        except OSError as exc:
            raise OutputError(f"Cannot write {path}: {exc}") from exc
        return self._done(path)

    def manifest(
        self,
        command: str,
        inputs: Mapping[str, Any],
        seed: Optional[int] = None,
        wall_time_s: Optional[float] = None,
        stack: Optional[Any] = None,
        table_version: Optional[str] = None,
        outputs: Optional[Iterable[str]] = None,
    ) -> Path:
        """Write manifest.yaml: enough to re-run the exact job."""
        document = {
            "command": command,
            "inputs": inputs,
            "seed": seed,
            "material_table_version": table_version,
            "versions": package_versions(),
            "outputs": sorted(outputs if outputs is not None else self.written),
            "wall_time_s": wall_time_s,
        }
        if stack is not None:
            document["stack_document"] = serialize_stack(stack)
        return self.key_values(MANIFEST, document)


def read_manifest(out_dir: Path) -> Dict[str, Any]:
    path = Path(out_dir) / MANIFEST
    try:
        return yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise OutputError(f"Cannot read {path}: {exc}") from exc
