"""
Self-consistent Schrödinger–Poisson band diagram.

Conventions: E_F = 0; Ec(z) = Ec_offset(z) - phi(z); phi(0) = gate_bias -
surface_barrier so that Ec(0) - E_F equals the pinned surface barrier at zero
bias; the substrate end is field free. Electron subbands are computed on a
quantum region near the surface (closed box), electrons outside it are
treated as a classical 3D Fermi gas.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from app.core.constants import CM3_TO_NM3, DOS2D_M0, K_B, NC_M0, NM_PER_CM
from app.core.exceptions import ConfigError
from app.core.utils import LoggerMixin
from app.repositories.material_repo import MaterialRepository, get_material_repository
from app.schemas.solver_schemas import SolverConfig
from app.schemas.stack_schemas import DeviceStack
from app.services.grid_service import Grid, discretize
from app.services.poisson_service import (
    boundary_field,
    solve_poisson,
    solve_poisson_nonlinear,
)
from app.services.schrodinger_service import (
    Subband,
    embed,
    solve_schrodinger,
    subband_density,
)

FERMI_LEVEL = 0.0


# ============================================================================
# Result types
# ============================================================================

@dataclass(frozen=True)
class PotentialProfile:
    z: np.ndarray       # nm
    Ec: np.ndarray      # eV
    Ev: np.ndarray      # eV
    phi: np.ndarray     # V


@dataclass(frozen=True)
class SolveResult:
    stack: DeviceStack
    config: SolverConfig
    grid: Grid
    profile: PotentialProfile
    subbands: List[Subband]
    hole_subbands: List[Subband]
    fermi_level: float
    n: np.ndarray                   # cm^-3
    iterations: int
    converged: bool
    residual_history: List[float] = field(default_factory=list)
    region: slice = slice(None)

    @property
    def charge(self) -> np.ndarray:
        """Net volume charge N_D+ - n, q cm^-3."""
        return self.grid.donors - self.n

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")


# ============================================================================
# Classical electron gas
# ============================================================================

def fermi_half(eta: Union[float, np.ndarray]) -> np.ndarray:
    """
    Normalised Fermi–Dirac integral of order 1/2 (closed-form approximation,
    relative error below 0.4 %). Behaves as exp(eta) for eta << 0 and as
    (4 / 3 sqrt(pi)) eta^(3/2) for eta >> 0.
    """
    eta = np.asarray(eta, dtype=float)
    nu = eta**4 + 50.0 + 33.6 * eta * (1.0 - 0.68 * np.exp(-0.17 * (eta + 1.0) ** 2))
    xi = 0.75 * np.sqrt(np.pi) * nu ** (-0.375)
    return 1.0 / (np.exp(np.minimum(-eta, 700.0)) + xi)


def effective_dos(mass: np.ndarray, temperature: float) -> np.ndarray:
    """Conduction-band effective density of states, cm^-3."""
    kT = K_B * temperature
    return 2.0 * (NC_M0 * np.asarray(mass) * kT) ** 1.5 / CM3_TO_NM3


def classical_density(
    Ec: np.ndarray, mass: np.ndarray, fermi_level: float, temperature: float
) -> Tuple[np.ndarray, np.ndarray]:
    """3D electron density and its derivative with respect to phi, cm^-3 and cm^-3/V."""
    kT = K_B * temperature
    eta = (fermi_level - Ec) / kT
    nc = effective_dos(mass, temperature)
    h = 1e-3
    n = nc * fermi_half(eta)
    dn = nc * (fermi_half(eta + h) - fermi_half(eta - h)) / (2.0 * h) / kT
    return n, dn


# ============================================================================
# Quantum region
# ============================================================================

def find_wells(grid: Grid) -> List[int]:
    """Interior layers whose band-edge reference lies below both neighbours."""
    refs = [float(grid.Ec_offset[grid.boundaries[k]]) for k in range(grid.n_layers)]
    return [
        k for k in range(1, grid.n_layers - 1)
        if refs[k] < refs[k - 1] and refs[k] < refs[k + 1]
    ]


def quantum_region(grid: Grid, config: SolverConfig) -> slice:
    """Node range on which the subband problems are solved."""
    if config.quantum_region == "full":
        return slice(0, grid.size)
    if isinstance(config.quantum_region, tuple):
        start, stop = config.quantum_region
        region = slice(grid.node_at(start), grid.node_at(stop) + 1)
    else:
        wells = find_wells(grid)
        if not wells:
            return slice(0, grid.size)
        _, end = grid.layer_span(max(wells))
        region = slice(0, grid.node_at(end + config.quantum_margin_nm) + 1)
    if region.stop - region.start < 3:
        raise ConfigError(f"Quantum region {config.quantum_region} spans fewer than three nodes")
    return region


@dataclass(frozen=True)
class _Problem:
    stack: DeviceStack
    grid: Grid
    region: slice
    classical: np.ndarray       # nodes carrying classical electrons
    bc_surface: float
    temperature: float


# ============================================================================
# Solver
# ============================================================================

class SchrodingerPoissonSolver(LoggerMixin):
    """Damped fixed-point iteration between the subband and Poisson problems."""

    def __init__(
        self,
        config: Optional[SolverConfig] = None,
        materials: Optional[MaterialRepository] = None,
    ):
        super().__init__()
        self.config = config or SolverConfig()
        self.materials = materials or get_material_repository()

    # ============= Setup =============

    def prepare(self, stack: DeviceStack) -> _Problem:
        grid = discretize(stack, self.config.dz, self.materials)
        region = quantum_region(grid, self.config)
        classical = np.ones(grid.size, dtype=bool)
        classical[region] = False
        self.log_debug({
            "nodes": grid.size,
            "region_nm": f"{grid.z[region.start]:g}-{grid.z[region.stop - 1]:g}",
            "wells": find_wells(grid),
        })
        return _Problem(
            stack=stack,
            grid=grid,
            region=region,
            classical=classical,
            bc_surface=stack.gate_bias - stack.surface_barrier,
            temperature=stack.temperature,
        )

    # ============= Building blocks =============

    def _states(
        self,
        problem: _Problem,
        edge: np.ndarray,
        mass: np.ndarray,
        energy_max: Optional[float],
    ) -> List[Subband]:
        r = problem.region
        interior = r.stop - r.start - 2
        n_states = min(self.config.n_states, interior)
        return solve_schrodinger(edge[r], mass[r], n_states, problem.grid.dz, energy_max)

    def _occupation_limit(self, problem: _Problem) -> float:
        return FERMI_LEVEL + self.config.occupation_cutoff_kT * K_B * problem.temperature

    def _density_model(self, problem: _Problem, bands: Sequence[Subband], phi_ref: np.ndarray):
        """n(phi) with subband energies shifted rigidly by the local potential change."""
        grid = problem.grid
        r = problem.region
        kT = K_B * problem.temperature
        mask = problem.classical

        if bands:
            psi2 = np.array([band.psi**2 for band in bands])
            energies = np.array([band.energy for band in bands])[:, None]
            prefactor = (DOS2D_M0 * np.array([band.mass for band in bands]) * kT * NM_PER_CM)[:, None]
        ref = phi_ref[r]

        def model(phi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            n = np.zeros(grid.size)
            dn = np.zeros(grid.size)
            if bands:
                x = (FERMI_LEVEL - energies + (phi[r] - ref)[None, :]) / kT
                n[r] = np.sum(psi2 * prefactor * np.logaddexp(0.0, x), axis=0)
                dn[r] = np.sum(psi2 * prefactor * expit(x), axis=0) / kT
            if mask.any():
                Ec = grid.Ec_offset[mask] - phi[mask]
                n[mask], dn[mask] = classical_density(
                    Ec, grid.m_e[mask], FERMI_LEVEL, problem.temperature
                )
            return n, dn

        return model

    def _step(self, problem: _Problem, phi: np.ndarray) -> np.ndarray:
        """One fixed-point update from phi; returns the mixed potential."""
        grid = problem.grid
        cfg = self.config
        bands = self._states(
            problem, grid.Ec_offset - phi, grid.m_e, self._occupation_limit(problem)
        )
        model = self._density_model(problem, bands, phi)

        if cfg.predictor_corrector:
            phi_solve, _ = solve_poisson_nonlinear(
                model,
                grid.donors,
                grid.eps_r,
                problem.bc_surface,
                grid.dz,
                phi,
                tol=cfg.newton_tol,
                max_iter=cfg.newton_max_iter,
                max_step=cfg.newton_max_step,
            )
        else:
            n, _ = model(phi)
            phi_solve = solve_poisson(grid.donors - n, grid.eps_r, problem.bc_surface, grid.dz)

        return phi + cfg.mixing * (phi_solve - phi)

    def _spectrum_limits(self, problem: _Problem, Ec: np.ndarray, Ev: np.ndarray) -> Tuple[float, Optional[float]]:
        grid = problem.grid
        window = self.config.spectrum_window_eV
        wells = [
            k for k in find_wells(grid)
            if grid.layer_slice(k).start >= problem.region.start
            and grid.layer_slice(k).stop <= problem.region.stop
        ]
        electron_max = self._occupation_limit(problem)
        if not wells:
            return electron_max, None
        e_floor = max(float(np.min(Ec[grid.layer_slice(k)])) for k in wells)
        h_floor = max(float(np.min(-Ev[grid.layer_slice(k)])) for k in wells)
        return max(electron_max, e_floor + window), h_floor + window

    # ============= Public API =============

    def solve(self, stack: DeviceStack) -> SolveResult:
        """
        Iterate to self-consistency.

        Returns a SolveResult whether or not the iteration converged; check
        `converged` and `residual_history`.
        """
        cfg = self.config
        problem = self.prepare(stack)
        grid = problem.grid

        phi = np.full(grid.size, problem.bc_surface)
        history: List[float] = []
        converged = False
        iterations = 0

        for iterations in range(1, cfg.max_iter + 1):
            phi_new = self._step(problem, phi)
            delta = float(np.max(np.abs(phi_new - phi)))
            history.append(delta)
            phi = phi_new
            self.log_debug({"iteration": iterations, "max_dEc_eV": f"{delta:.3e}"})
            if delta < cfg.tol_potential:
                converged = True
                break

        if converged:
            self.log_info(f"Converged in {iterations} iterations (max|dEc| = {history[-1]:.2e} eV)")
        else:
            self.log_warning(
                f"No convergence after {cfg.max_iter} iterations (max|dEc| = {history[-1]:.2e} eV)"
            )

        return self._finalize(problem, phi, iterations, converged, history)

    def _finalize(
        self,
        problem: _Problem,
        phi: np.ndarray,
        iterations: int,
        converged: bool,
        history: List[float],
    ) -> SolveResult:
        grid = problem.grid
        Ec = grid.Ec_offset - phi
        Ev = Ec - grid.E_g
        electron_max, hole_max = self._spectrum_limits(problem, Ec, Ev)

        bands = self._states(problem, Ec, grid.m_e, electron_max)
        filled, n_region = subband_density(bands, FERMI_LEVEL, problem.temperature, grid.dz)
        holes = self._states(problem, -Ev, grid.m_hh, hole_max)

        n, _ = self._density_model(problem, [], phi)(phi)
        if filled:
            n[problem.region] += n_region

        return SolveResult(
            stack=problem.stack,
            config=self.config,
            grid=grid,
            profile=PotentialProfile(z=grid.z, Ec=Ec, Ev=Ev, phi=phi),
            subbands=embed(filled, problem.region, grid.size),
            hole_subbands=embed(holes, problem.region, grid.size),
            fermi_level=FERMI_LEVEL,
            n=n,
            iterations=iterations,
            converged=converged,
            residual_history=history,
            region=problem.region,
        )

    def fixed_point_update(self, result: SolveResult) -> float:
        """max|dEc| that one more full iteration from `result` would apply, eV."""
        problem = self.prepare(result.stack)
        phi = result.profile.phi
        return float(np.max(np.abs(self._step(problem, phi) - phi)))


def self_consistent_solve(
    stack: DeviceStack,
    config: Optional[SolverConfig] = None,
    materials: Optional[MaterialRepository] = None,
) -> SolveResult:
    return SchrodingerPoissonSolver(config, materials).solve(stack)


# ============================================================================
# Post-processing
# ============================================================================

def _layer_index(result: SolveResult, layer: Union[int, str]) -> int:
    if isinstance(layer, str):
        try:
            return result.stack.index_of(layer)
        except KeyError as exc:
            raise ConfigError(str(exc)) from None
    return layer


def well_sheet_density(result: SolveResult, layer: Union[int, str], margin_nm: float = 2.0) -> float:
    """Electron sheet density within a layer (extended by margin_nm each side), cm^-2."""
    grid = result.grid
    start, end = grid.layer_span(_layer_index(result, layer))
    lo = grid.node_at(start - margin_nm)
    hi = grid.node_at(end + margin_nm)
    return float(np.sum(result.n[lo:hi + 1]) * grid.dz / NM_PER_CM)


def substrate_field(result: SolveResult) -> float:
    """Electric field at the substrate end, V/nm."""
    grid = result.grid
    return boundary_field(result.profile.phi, result.charge, grid.eps_r, grid.dz)
