"""Couplings, effective potentials and the energy functional of the mixture.

Code units: hbar = m_B = a_B = 1, so the boson coupling is g_B = 4 pi, the
fermion mass is m_F = 1/w, energies are in hbar^2/(m_B a_B^2) and times in
m_B a_B^2/hbar.  In these units

    mu    = 1/(1 + w)                   reduced mass
    a_BF  = g_BF mu / (2 pi)            boson-fermion scattering length
    C_BF  = (6 pi^2)^(2/3) a_BF^2 w / 2
    C_LHY = 64/(15 sqrt(pi)) g_B
    alpha = 16 pi n_B / (6 pi^2 n_F)^(2/3)

The condensate is unit-normalised with n_B = N_B |psi_B|^2; fermion orbitals
are unit-normalised each and n_F = sum_j |psi_j|^2.
"""

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np

from .afunction import AlphaRangeWarning
from .grid import integrate, kinetic_energy

DENSITY_FLOOR = 1e-12
SIGNIFICANT = 1e-3
_SIX_PI2 = 6.0 * np.pi**2


@dataclass(frozen=True)
class MixtureParams:
    N_B: float
    N_F: int
    w: float
    omega_B: float
    omega_F: float
    g_BF_over_gB: float = 0.0
    g_B: float = 4.0 * np.pi

    def __post_init__(self):
        if not self.g_B >= 0:
            raise ValueError("boson coupling must be non-negative")
        if self.N_F < 1 or int(self.N_F) != self.N_F:
            raise ValueError("need a positive integer number of fermions")
        if not self.w > 0:
            raise ValueError("mass ratio w must be positive")
        if not self.N_B > 0:
            raise ValueError("need a positive number of bosons")
        for name in ("omega_B", "omega_F"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise ValueError(f"{name} must be non-negative")

    @property
    def mass_B(self):
        return 1.0

    @property
    def mass_F(self):
        return 1.0 / self.w

    @property
    def g_BF(self):
        return self.g_BF_over_gB * self.g_B

    @property
    def mu(self):
        return 1.0 / (1.0 + self.w)

    @property
    def a_BF(self):
        return self.g_BF * self.mu / (2.0 * np.pi)

    @property
    def C_LHY(self):
        # a_B = 1 in code units
        return 64.0 / (15.0 * np.sqrt(np.pi)) * self.g_B

    @property
    def C_BF(self):
        return _SIX_PI2 ** (2.0 / 3.0) * self.a_BF**2 * self.w / 2.0

    def with_coupling(self, g_BF_over_gB):
        return dataclasses.replace(self, g_BF_over_gB=float(g_BF_over_gB))

    def without_traps(self):
        return dataclasses.replace(self, omega_B=0.0, omega_F=0.0)

    def trap_B(self, grid):
        return grid.harmonic(self.mass_B, self.omega_B)

    def trap_F(self, grid):
        return grid.harmonic(self.mass_F, self.omega_F)


@dataclass
class EnergyBreakdown:
    kinetic_B: float
    kinetic_F: float
    trap_B: float
    trap_F: float
    mean_field_BB: float
    lhy: float
    mean_field_BF: float
    higher_order_BF: float

    COLUMNS = ("kinetic_B", "kinetic_F", "trap_B", "trap_F", "mean_field_BB", "lhy",
               "mean_field_BF", "higher_order_BF")

    @property
    def total(self):
        return float(sum(getattr(self, c) for c in self.COLUMNS))

    @property
    def boson(self):
        """Energy of the decoupled boson sector (kinetic, trap, BB, LHY)."""
        return self.kinetic_B + self.trap_B + self.mean_field_BB + self.lhy

    @property
    def fermion(self):
        """Fermion kinetic + trap + all boson-fermion terms."""
        return self.kinetic_F + self.trap_F + self.mean_field_BF + self.higher_order_BF

    def as_dict(self):
        d = {c: getattr(self, c) for c in self.COLUMNS}
        d["total"] = self.total
        return d


def alpha_of_densities(n_B, n_F, floor=DENSITY_FLOOR):
    """alpha = 16 pi n_B / (6 pi^2 n_F)^(2/3) with n_F floored at ``floor``."""
    n_F = np.maximum(n_F, floor)
    return 16.0 * np.pi * np.asarray(n_B) / (_SIX_PI2 * n_F) ** (2.0 / 3.0)


def _warn_if_clamped_where_relevant(alpha, n_B, n_F, table):
    # clamping in the dilute tails is harmless; only flag it inside the cloud
    lo, hi = table.alpha_range
    relevant = (n_B > SIGNIFICANT * n_B.max()) & (n_F > SIGNIFICANT * n_F.max())
    outside = relevant & ((alpha < lo) | (alpha > hi))
    if np.any(outside):
        warnings.warn(f"alpha outside the tabulated range [{lo:g}, {hi:g}] at {int(outside.sum())} "
                      "points inside the cloud; clamped", AlphaRangeWarning, stacklevel=3)


def _a_terms(n_B, n_F, table):
    alpha = alpha_of_densities(n_B, n_F)
    _warn_if_clamped_where_relevant(alpha, n_B, n_F, table)
    A, dA = table.evaluate(alpha, warn=False)
    # below the floor alpha no longer depends on n_F
    above = n_F > DENSITY_FLOOR
    return alpha, A, dA, above


def effective_potentials(n_B, n_F, params, table, grid, traps=True):
    """Return ``(V_B, V_F)``, the functional derivatives of the energy w.r.t. n_B and n_F.

    ``traps=False`` drops the external potentials (trap release).
    """
    _check_table(params, table)
    n_B = np.maximum(n_B, 0.0)
    n_F = np.maximum(n_F, 0.0)
    p = params
    V_B = p.g_B * n_B + 2.5 * p.C_LHY * n_B**1.5
    V_F = np.zeros_like(n_F)
    if p.g_BF != 0.0:
        alpha, A, dA, above = _a_terms(n_B, n_F, table)
        cbrt_F = np.cbrt(n_F)
        nF43 = n_F * cbrt_F
        # d alpha/d n_B = alpha/n_B ; d alpha/d n_F = -(2/3) alpha/n_F
        V_B = V_B + p.g_BF * n_F + p.C_BF * nF43 * (A + alpha * dA)
        ader = np.where(above, alpha * dA, 0.0)
        V_F = p.g_BF * n_B + p.C_BF * n_B * cbrt_F * (4.0 / 3.0 * A - 2.0 / 3.0 * ader)
    if traps:
        V_B = V_B + p.trap_B(grid)
        V_F = V_F + p.trap_F(grid)
    return V_B, V_F


def effective_potential_boson(n_B, n_F, params, table, grid):
    return effective_potentials(n_B, n_F, params, table, grid)[0]


def effective_potential_fermion(n_B, n_F, params, table, grid):
    return effective_potentials(n_B, n_F, params, table, grid)[1]


def interaction_energy(n_B, n_F, params, table, grid):
    """E_B + E_BF as ``(mean_field_BB, lhy, mean_field_BF, higher_order_BF)``."""
    p = params
    n_B = np.maximum(n_B, 0.0)
    n_F = np.maximum(n_F, 0.0)
    bb = float(integrate(0.5 * p.g_B * n_B**2, grid))
    lhy = float(integrate(p.C_LHY * n_B**2.5, grid))
    if p.g_BF == 0.0:
        return bb, lhy, 0.0, 0.0
    _check_table(params, table)
    alpha = alpha_of_densities(n_B, n_F)
    mf = float(integrate(p.g_BF * n_B * n_F, grid))
    ho = float(integrate(p.C_BF * n_B * n_F * np.cbrt(n_F) * table.A(alpha, warn=False), grid))
    return bb, lhy, mf, ho


def density_functional(n_B, n_F, params, table, grid, traps=True):
    """Potential part of the energy (everything except kinetic) for given densities."""
    e = sum(interaction_energy(n_B, n_F, params, table, grid))
    if traps:
        e += float(integrate(params.trap_B(grid) * n_B, grid))
        e += float(integrate(params.trap_F(grid) * n_F, grid))
    return e


def total_energy(psi_B, fermions, params, table, grid, traps=True):
    """Energy breakdown of a state; kinetic parts are k-space quadratic forms."""
    if not (np.all(np.isfinite(psi_B)) and np.all(np.isfinite(fermions))):
        raise FloatingPointError("non-finite wave function passed to total_energy")
    n_B = params.N_B * (psi_B.real**2 + psi_B.imag**2)
    n_F = (fermions.real**2 + fermions.imag**2).sum(axis=0)
    kin_B = params.N_B * float(kinetic_energy(psi_B, grid, params.mass_B))
    kin_F = float(np.sum(kinetic_energy(fermions, grid, params.mass_F)))
    if traps:
        trap_B = float(integrate(params.trap_B(grid) * n_B, grid))
        trap_F = float(integrate(params.trap_F(grid) * n_F, grid))
    else:
        trap_B = trap_F = 0.0
    bb, lhy, mf, ho = interaction_energy(n_B, n_F, params, table, grid)
    return EnergyBreakdown(kin_B, kin_F, trap_B, trap_F, bb, lhy, mf, ho)


def _check_table(params, table):
    if table is None:
        if params.g_BF != 0.0:
            raise ValueError("an A-function table is required when g_BF != 0")
        return
    if not np.isclose(table.w, params.w, rtol=1e-12, atol=0.0):
        raise ValueError(f"A table built for w={table.w} but parameters have w={params.w}")
