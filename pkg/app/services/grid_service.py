"""
Uniform 1D discretisation of a DeviceStack.

Node i sits at z = i * dz measured from the surface. A node belongs to the
layer whose half-open interval [start, end) contains it; the last node
belongs to the last layer. Material boundaries always land on nodes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from app.core.exceptions import GridTooCoarse
from app.repositories.material_repo import MaterialRepository, get_material_repository
from app.schemas.stack_schemas import DeviceStack

logger = logging.getLogger(__name__)

SNAP_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Grid:
    """Node positions and piecewise-constant material properties."""

    dz: float
    z: np.ndarray
    layer_index: np.ndarray
    boundaries: np.ndarray      # node index where each layer starts, plus the final node
    materials: List[str]
    m_e: np.ndarray
    m_hh: np.ndarray
    eps_r: np.ndarray
    Ec_offset: np.ndarray       # E_c_ref relative to the surface material, eV
    E_g: np.ndarray
    g_e: np.ndarray
    donors: np.ndarray          # ionized donor density, cm^-3

    @property
    def size(self) -> int:
        return self.z.size

    @property
    def n_layers(self) -> int:
        return len(self.materials)

    @property
    def Ev_offset(self) -> np.ndarray:
        return self.Ec_offset - self.E_g

    def layer_slice(self, k: int) -> slice:
        """Nodes owned by layer k."""
        start = int(self.boundaries[k])
        stop = int(self.boundaries[k + 1])
        if k == self.n_layers - 1:
            stop += 1
        return slice(start, stop)

    def layer_span(self, k: int) -> tuple:
        """(start, end) of layer k in nm."""
        return float(self.boundaries[k] * self.dz), float(self.boundaries[k + 1] * self.dz)

    def node_at(self, z_nm: float) -> int:
        return int(np.clip(round(z_nm / self.dz), 0, self.size - 1))


def discretize(
    stack: DeviceStack,
    dz: float,
    materials: Optional[MaterialRepository] = None,
) -> Grid:
    """
    Discretise `stack` on a uniform grid of spacing `dz` (nm).

    Raises:
        GridTooCoarse: dz exceeds a quarter of the thinnest layer
    """
    if dz <= 0:
        raise GridTooCoarse(dz, stack.thinnest)
    if dz > stack.thinnest / 4 * (1 + SNAP_TOLERANCE):
        raise GridTooCoarse(dz, stack.thinnest)

    materials = materials or get_material_repository()

    counts = []
    for index, layer in enumerate(stack.layers):
        exact = layer.thickness / dz
        count = int(round(exact))
        if abs(exact - count) > SNAP_TOLERANCE * max(1.0, exact):
            logger.warning(
                f"Layer {index} ({layer.label or layer.material}) thickness {layer.thickness} nm "
                f"is not a multiple of dz={dz}; snapped to {count * dz:g} nm"
            )
        counts.append(count)

    boundaries = np.concatenate([[0], np.cumsum(counts)]).astype(int)
    n_nodes = int(boundaries[-1]) + 1
    z = np.arange(n_nodes) * dz

    layer_index = np.repeat(np.arange(len(counts)), counts)
    layer_index = np.append(layer_index, len(counts) - 1)

    params = [materials.lookup(layer.material) for layer in stack.layers]
    surface_ref = params[0].E_c_ref

    def per_node(values) -> np.ndarray:
        return np.asarray(values, dtype=float)[layer_index]

    return Grid(
        dz=dz,
        z=z,
        layer_index=layer_index,
        boundaries=boundaries,
        materials=[layer.material for layer in stack.layers],
        m_e=per_node([p.m_e for p in params]),
        m_hh=per_node([p.m_hh for p in params]),
        eps_r=per_node([p.eps_r for p in params]),
        Ec_offset=per_node([p.E_c_ref - surface_ref for p in params]),
        E_g=per_node([p.E_g for p in params]),
        g_e=per_node([p.g_e for p in params]),
        donors=per_node([layer.ionized_donors for layer in stack.layers]),
    )
