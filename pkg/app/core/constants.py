"""
Physical constants in the units the solvers work in.

Lengths are nm, energies eV, potentials V, densities nm^-3 internally and
cm^-3 / cm^-2 at the public boundaries, times s.
"""

import math

from scipy import constants as sc

Q = sc.e
M0 = sc.m_e
HBAR = sc.hbar

# hbar^2 / (2 m0), eV nm^2
HBAR2_2M0 = HBAR**2 / (2.0 * M0) / Q * 1e18

# q / eps0, V nm  (so that eps_r * phi'' = -Q_OVER_EPS0 * rho[nm^-3])
Q_OVER_EPS0 = Q / sc.epsilon_0 * 1e9

K_B = sc.k / Q

# m0 / (pi hbar^2), cm^-2 eV^-1
DOS2D_M0 = M0 / (math.pi * HBAR**2) * Q * 1e-4

# m0 / (2 pi hbar^2), nm^-2 eV^-1 (effective density of states prefactor)
NC_M0 = M0 / (2.0 * math.pi * HBAR**2) * Q * 1e-18

# h c, eV um
HC_EV_UM = sc.h * sc.c / Q * 1e6

CM3_TO_NM3 = 1e-21
NM_PER_CM = 1e7
