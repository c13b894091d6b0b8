"""
Shared test fixtures and configuration for pytest.
"""

from importlib import resources
from typing import Dict

import pytest

from app.config.config import Settings
from app.repositories.material_repo import MaterialRepository, get_material_repository
from app.repositories.stack_repo import paper_stack
from app.schemas.dynamics_schemas import ChannelModel
from app.schemas.stack_schemas import DeviceStack, Layer
from app.services.band_service import SolveResult, self_consistent_solve


@pytest.fixture(scope="session")
def materials() -> MaterialRepository:
    """The packaged material table."""
    return get_material_repository()


@pytest.fixture
def device() -> DeviceStack:
    """The builtin reference device, fully soaked, zero bias."""
    return paper_stack()


@pytest.fixture
def device_document() -> str:
    """The shipped device-description document."""
    return resources.files("app.data").joinpath("paper_stack.yaml").read_text(encoding="utf-8")


@pytest.fixture
def single_well() -> DeviceStack:
    """InP / 10 nm InGaAs / InP, undoped."""
    return DeviceStack(
        layers=[
            Layer(material="InP", thickness=10.0, label="left"),
            Layer(material="In0.53Ga0.47As", thickness=10.0, label="well"),
            Layer(material="InP", thickness=10.0, label="right"),
        ],
        surface_barrier=0.5,
    )


@pytest.fixture(scope="session")
def solved_device() -> SolveResult:
    """Converged band diagram of the soaked reference device (solved once per session)."""
    return self_consistent_solve(paper_stack(ionized_fraction=1.0))


@pytest.fixture(scope="session")
def solved_unsoaked() -> SolveResult:
    """Converged band diagram before any donor photo-ionization."""
    return self_consistent_solve(paper_stack(ionized_fraction=0.0))


@pytest.fixture
def channel() -> ChannelModel:
    return ChannelModel()


@pytest.fixture
def settings() -> Settings:
    """Fresh default settings (not the cached singleton)."""
    return Settings()


def with_absorption_width(stack: DeviceStack, width_nm: float) -> DeviceStack:
    """`stack` with the absorption well resized."""
    layers = [
        layer.model_copy(update={"thickness": width_nm}) if layer.label == "absorption" else layer
        for layer in stack.layers
    ]
    return stack.with_updates(layers=layers)


ABSORPTION_WIDTHS_NM = (3.0, 4.5, 6.0, 9.0)


@pytest.fixture(scope="session")
def absorption_width_series(solved_device: SolveResult) -> Dict[float, SolveResult]:
    """Soaked reference device solved at each absorption-well width."""
    series = {4.5: solved_device}
    for width in ABSORPTION_WIDTHS_NM:
        if width not in series:
            series[width] = self_consistent_solve(with_absorption_width(paper_stack(), width))
    return dict(sorted(series.items()))


@pytest.fixture
def resize_absorption():
    return with_absorption_width
