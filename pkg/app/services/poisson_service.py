"""
One-dimensional Poisson equation

    d/dz [ eps_r(z) dphi/dz ] = -(q / eps0) * rho(z)

on the node grid, finite-volume form. Node 0 carries a Dirichlet value; the
last node closes with a zero-field half cell, so the total charge is balanced
by the surface sheet implied by the Dirichlet end. Charge densities are in
units of q per cm^3 (N_D+ - n), potentials in V, lengths in nm.
"""

from __future__ import annotations

import logging
from typing import Callable, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from app.core.constants import CM3_TO_NM3, Q_OVER_EPS0
from app.core.exceptions import ConfigError, ConvergenceError, NumericalError

logger = logging.getLogger(__name__)

# (n, dn/dphi) in cm^-3 and cm^-3 / V for a trial potential
DensityModel = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


# ============================================================================
# Assembly
# ============================================================================

def _half_node_eps(eps: np.ndarray) -> np.ndarray:
    """Harmonic mean of neighbouring nodes: two half cells in series."""
    return 2.0 * eps[:-1] * eps[1:] / (eps[:-1] + eps[1:])


def _row_weights(size: int, dz: float) -> np.ndarray:
    """Control-volume length of each row times dz; the substrate row is a half cell."""
    w = np.full(size, dz * dz)
    w[-1] *= 0.5
    w[0] = 0.0
    return w


def _assemble(eps: np.ndarray) -> np.ndarray:
    """
    Banded (1, 1) form of the negated operator -d/dz eps d/dz, scaled by dz^2.

    Row 0 is the Dirichlet identity row.
    """
    size = eps.size
    e_half = _half_node_eps(eps)
    ab = np.zeros((3, size))

    diag = np.zeros(size)
    diag[1:-1] = e_half[:-1] + e_half[1:]
    diag[-1] = e_half[-1]
    diag[0] = 1.0

    upper = np.zeros(size - 1)
    upper[1:] = -e_half[1:]
    lower = -e_half

    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    return ab


def _apply(ab: np.ndarray, phi: np.ndarray) -> np.ndarray:
    out = ab[1] * phi
    out[:-1] += ab[0, 1:] * phi[1:]
    out[1:] += ab[2, :-1] * phi[:-1]
    return out


def _validate(charge: np.ndarray, eps: np.ndarray, dz: float) -> None:
    if charge.shape != eps.shape or charge.ndim != 1:
        raise ConfigError("Charge and permittivity arrays must be 1D and aligned to the grid")
    if charge.size < 2:
        raise ConfigError("Poisson grid needs at least two nodes")
    if dz <= 0:
        raise ConfigError("Grid spacing must be positive")
    if np.any(eps <= 0):
        raise ConfigError("Permittivity must be positive")


# ============================================================================
# Linear solve
# ============================================================================

def solve_poisson(
    charge: Sequence[float],
    eps: Sequence[float],
    bc_surface: float,
    dz: float,
) -> np.ndarray:
    """
    Solve Poisson's equation for a fixed charge density.

    Args:
        charge: signed volume charge per node, q cm^-3
        eps: relative permittivity per node
        bc_surface: potential at node 0, V
        dz: node spacing, nm

    Returns:
        phi per node, V (zero field at the last node)

    Raises:
        ConfigError: misaligned arrays or non-positive permittivity
        NumericalError: singular system
    """
    charge = np.asarray(charge, dtype=float)
    eps = np.asarray(eps, dtype=float)
    _validate(charge, eps, dz)

    ab = _assemble(eps)
    rhs = Q_OVER_EPS0 * charge * CM3_TO_NM3 * _row_weights(charge.size, dz)
    rhs[0] = bc_surface
    try:
        phi = solve_banded((1, 1), ab, rhs)
    except (LinAlgError, ValueError) as exc:
        raise NumericalError(f"Poisson system is singular: {exc}") from exc
    if not np.all(np.isfinite(phi)):
        raise NumericalError("Poisson solve produced non-finite potential")
    return phi


def poisson_residual(
    phi: Sequence[float],
    charge: Sequence[float],
    eps: Sequence[float],
    dz: float,
) -> float:
    """
    Largest discrete residual |d/dz eps dphi/dz + (q/eps0) rho| over the
    non-Dirichlet rows, relative to the largest charge term.
    """
    phi = np.asarray(phi, dtype=float)
    charge = np.asarray(charge, dtype=float)
    eps = np.asarray(eps, dtype=float)
    weights = _row_weights(phi.size, dz)
    source = Q_OVER_EPS0 * charge * CM3_TO_NM3 * weights
    residual = _apply(_assemble(eps), phi) - source
    scale = max(float(np.max(np.abs(source[1:]))), np.finfo(float).tiny)
    return float(np.max(np.abs(residual[1:]))) / scale


def boundary_field(
    phi: Sequence[float],
    charge: Sequence[float],
    eps: Sequence[float],
    dz: float,
) -> float:
    """Electric field at the substrate end, V/nm (flux balance over the last half cell)."""
    phi = np.asarray(phi, dtype=float)
    charge = np.asarray(charge, dtype=float)
    eps = np.asarray(eps, dtype=float)
    e_last = _half_node_eps(eps[-2:])[0]
    flux = e_last * (phi[-1] - phi[-2]) / dz - Q_OVER_EPS0 * charge[-1] * CM3_TO_NM3 * dz / 2
    return float(-flux / eps[-1])


# ============================================================================
# Nonlinear solve (density responding to the potential)
# ============================================================================

def solve_poisson_nonlinear(
    density: DensityModel,
    donors: Sequence[float],
    eps: Sequence[float],
    bc_surface: float,
    dz: float,
    phi_start: Sequence[float],
    tol: float = 1e-10,
    max_iter: int = 100,
    max_step: float = 0.1,
    strict: bool = False,
) -> Tuple[np.ndarray, int]:
    """
    Newton iteration on eps-Laplacian(phi) = -(q/eps0) (N_D - n(phi)).

    Each step solves the tridiagonal Jacobian system; updates are clipped to
    `max_step` volts per node.

    Args:
        density: returns (n, dn/dphi) for a trial potential
        donors: ionized donor density per node, cm^-3
        eps: relative permittivity per node
        bc_surface: Dirichlet value at node 0, V
        dz: node spacing, nm
        phi_start: initial potential
        tol: stop when max |update| < tol, V
        max_iter: Newton step limit
        max_step: largest potential change per step, V
        strict: raise ConvergenceError instead of returning the last iterate

    Returns:
        (phi, number of Newton steps)
    """
    donors = np.asarray(donors, dtype=float)
    eps = np.asarray(eps, dtype=float)
    _validate(donors, eps, dz)

    ab = _assemble(eps)
    weights = Q_OVER_EPS0 * CM3_TO_NM3 * _row_weights(donors.size, dz)
    phi = np.array(phi_start, dtype=float)
    phi[0] = bc_surface

    history = []
    for step in range(1, max_iter + 1):
        n, dn = density(phi)
        residual = _apply(ab, phi) - weights * (donors - n)
        residual[0] = 0.0

        jac = ab.copy()
        jac[1] += weights * dn
        try:
            update = solve_banded((1, 1), jac, -residual)
        except (LinAlgError, ValueError) as exc:
            raise NumericalError(f"Newton Jacobian is singular: {exc}") from exc

        largest = float(np.max(np.abs(update)))
        if largest > max_step:
            update *= max_step / largest
        phi += update
        history.append(largest)
        if largest < tol:
            return phi, step

    message = f"Nonlinear Poisson did not converge in {max_iter} steps (last update {history[-1]:.3e} V)"
    if strict:
        raise ConvergenceError(message, history)
    logger.debug(message)
    return phi, max_iter
