"""
Effective-mass Schrödinger eigenproblem and subband filling.

The position-dependent-mass (BenDaniel–Duke) operator

    -(hbar^2 / 2) d/dz [ (1/m(z)) d psi/dz ] + V(z) psi = E psi

is discretised with inverse masses averaged onto half nodes, which keeps the
matrix symmetric tridiagonal. psi vanishes at both ends of the array passed
in; envelopes are returned normalised so that sum(|psi|^2) * dz = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from app.core.constants import DOS2D_M0, HBAR2_2M0, K_B, NM_PER_CM
from app.core.exceptions import ConfigError, EigenSolveError


@dataclass(frozen=True)
class Subband:
    energy: float           # eV
    psi: np.ndarray         # nm^-1/2
    mass: float             # envelope-weighted effective mass, m0
    sheet_density: float = 0.0   # cm^-2

    def weight(self, nodes: slice, dz: float) -> float:
        """Probability carried by the nodes in `nodes`."""
        return float(np.sum(self.psi[nodes] ** 2) * dz)


def _hamiltonian(edge: np.ndarray, mass: np.ndarray, dz: float) -> Tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of the interior-node Hamiltonian."""
    inv_half = 0.5 * (1.0 / mass[:-1] + 1.0 / mass[1:])
    t = HBAR2_2M0 / dz**2
    diag = edge[1:-1] + t * (inv_half[:-1] + inv_half[1:])
    off = -t * inv_half[1:-1]
    return diag, off


def solve_schrodinger(
    profile_edge: Sequence[float],
    mass: Sequence[float],
    n_states: int,
    dz: float,
    energy_max: Optional[float] = None,
) -> List[Subband]:
    """
    Lowest eigenstates of the BenDaniel–Duke operator.

    Args:
        profile_edge: band edge per node, eV
        mass: effective mass per node, m0
        n_states: number of lowest states to return
        dz: node spacing, nm
        energy_max: if given and the n_states-th level lies below it, every
            level up to energy_max is returned instead

    Returns:
        Subbands sorted by ascending energy, sheet densities unset

    Raises:
        ConfigError: fewer than three nodes, non-positive mass, or more states
            than interior nodes
        EigenSolveError: LAPACK failed to converge
    """
    edge = np.asarray(profile_edge, dtype=float)
    mass = np.asarray(mass, dtype=float)
    if edge.size < 3 or edge.shape != mass.shape:
        raise ConfigError("Schrödinger grid needs >= 3 nodes and matching mass array")
    if np.any(mass <= 0):
        raise ConfigError("Effective masses must be positive")
    interior = edge.size - 2
    if n_states > interior:
        raise ConfigError(f"n_states={n_states} exceeds the {interior} interior nodes")

    diag, off = _hamiltonian(edge, mass, dz)
    try:
        values, vectors = eigh_tridiagonal(
            diag, off, select="i", select_range=(0, n_states - 1)
        )
        if energy_max is not None and values[-1] < energy_max:
            spread = np.abs(np.concatenate([[0.0], off])) + np.abs(np.concatenate([off, [0.0]]))
            lower = float(np.min(diag - spread)) - 1.0
            values, vectors = eigh_tridiagonal(
                diag, off, select="v", select_range=(lower, energy_max)
            )
    except (LinAlgError, ValueError) as exc:
        raise EigenSolveError(
            f"Tridiagonal eigensolve failed: {exc}",
            diagnostics={
                "nodes": int(edge.size),
                "n_states": n_states,
                "edge_min": float(edge.min()),
                "edge_max": float(edge.max()),
                "mass_min": float(mass.min()),
            },
        ) from exc

    if not np.all(np.isfinite(values)):
        raise EigenSolveError("Eigensolver returned non-finite energies", {"nodes": int(edge.size)})

    order = np.argsort(values, kind="stable")
    subbands = []
    for k in order:
        vec = vectors[:, k]
        if vec[np.argmax(np.abs(vec))] < 0:
            vec = -vec
        psi = np.zeros_like(edge)
        psi[1:-1] = vec / np.sqrt(dz)
        m_eff = float(np.sum(psi**2 * mass) * dz)
        subbands.append(Subband(energy=float(values[k]), psi=psi, mass=m_eff))
    return subbands


def sheet_density(energy: float, mass: float, fermi_level: float, temperature: float) -> float:
    """Fermi–Dirac 2D sheet density of one subband, cm^-2."""
    kT = K_B * temperature
    return DOS2D_M0 * mass * kT * float(np.logaddexp(0.0, (fermi_level - energy) / kT))


def subband_density(
    subbands: Sequence[Subband],
    fermi_level: float,
    temperature: float,
    dz: float,
) -> Tuple[List[Subband], np.ndarray]:
    """
    Fill subbands with Fermi–Dirac statistics.

    Returns:
        (subbands with sheet_density set, electron density n(z) in cm^-3)
    """
    if temperature <= 0:
        raise ConfigError("Temperature must be positive")
    if not subbands:
        return [], np.zeros(0)

    filled = []
    n = np.zeros_like(subbands[0].psi)
    for band in subbands:
        ns = sheet_density(band.energy, band.mass, fermi_level, temperature)
        filled.append(replace(band, sheet_density=ns))
        n += ns * band.psi**2 * NM_PER_CM
    return filled, n


def embed(subbands: Sequence[Subband], region: slice, size: int) -> List[Subband]:
    """Place envelopes computed on a sub-range of the grid into full-length arrays."""
    placed = []
    for band in subbands:
        psi = np.zeros(size)
        psi[region] = band.psi
        placed.append(replace(band, psi=psi))
    return placed
