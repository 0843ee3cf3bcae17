"""Lie-Trotter split-step propagation of the mixture in real or imaginary time.

One step of length dt for a field of mass m in the potential V:

    psi <- F^-1[ exp(-i k^2 dt / 2m) F[ exp(-i V dt) psi ] ]

In imaginary time (t -> -i tau) both phases become real decay factors.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import forward_transform, inverse_transform, norm2
from .orthonorm import OrbitalSet, gram_schmidt
from .physics import effective_potentials

REAL = "real"
IMAGINARY = "imaginary"


@dataclass(frozen=True)
class StepConfig:
    dt: float
    mode: str = IMAGINARY
    mass: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.mode not in (REAL, IMAGINARY):
            raise ValueError(f"mode must be 'real' or 'imaginary', got {self.mode!r}")
        if not self.mass > 0:
            raise ValueError("mass must be positive")


@dataclass(frozen=True)
class RampSchedule:
    g_final: float
    t_f: float

    def __post_init__(self):
        if not self.t_f > 0:
            raise ValueError(f"ramp duration must be positive, got {self.t_f}")


def ramp_value(t, sched):
    """Sine-squared ramp from 0 at t = 0 to ``g_final`` at t = t_f, constant afterwards."""
    if t < 0:
        raise ValueError("ramp time must be non-negative")
    if t >= sched.t_f:
        return sched.g_final
    return sched.g_final * np.sin(0.5 * np.pi * t / sched.t_f) ** 2


@lru_cache(maxsize=32)
def _kinetic_factor(grid, dt, mass, mode):
    e = grid.k2 * (dt / (2.0 * mass))
    if mode == REAL:
        return np.exp(-1j * e)
    return np.exp(-e)


def _potential_factor(V, dt, mode):
    if mode == REAL:
        return np.exp(-1j * dt * V)
    return np.exp(-dt * V)


def split_step(psi, V, grid, cfg):
    """Advance ``psi`` (a field or a stack of fields) by one step in potential ``V``."""
    if not np.all(np.isfinite(V)):
        raise FloatingPointError("non-finite effective potential")
    if np.shape(V) != grid.shape:
        raise ValueError("potential does not live on the field's grid")
    phi = psi * _potential_factor(V, cfg.dt, cfg.mode)
    spec = forward_transform(phi, grid)
    spec *= _kinetic_factor(grid, cfg.dt, cfg.mass, cfg.mode)
    return inverse_transform(spec, grid)


def renormalize(psi, grid, target_norm=1.0):
    """Scale ``psi`` so that sqrt(sum |psi|^2 dV) equals ``target_norm``."""
    nrm = float(np.sqrt(norm2(psi, grid)))
    if nrm == 0.0:
        raise ZeroDivisionError("cannot renormalise a zero field")
    return psi * (target_norm / nrm)


def evolve_mixture_step(state, params, table, grid, dt, mode=IMAGINARY, ramp=None, t=0.0,
                        traps=True, evolve_bosons=True, evolve_fermions=True):
    """One coupled step: densities frozen from the pre-step state, both sectors advanced.

    With ``ramp`` given (real time only) the mutual coupling is taken from the
    ramp at time ``t``.  In imaginary time the condensate is renormalised and
    the fermion orbitals are Gram-Schmidt orthonormalised after the step.
    Either sector can be frozen (used by the eigensolver-based methods).
    """
    if ramp is not None:
        if mode != REAL:
            raise ValueError("a coupling ramp requires real-time propagation")
        params = params.with_coupling(ramp_value(t, ramp))
    n_B, n_F = state.densities(params.N_B)
    V_B, V_F = effective_potentials(n_B, n_F, params, table, grid, traps=traps)
    psi_B, fermions = state.psi_B, state.fermions
    if evolve_bosons:
        psi_B = split_step(psi_B, V_B, grid, StepConfig(dt, mode, params.mass_B))
    if evolve_fermions:
        fermions = split_step(fermions, V_F, grid, StepConfig(dt, mode, params.mass_F))
    orthonormal = state.orthonormal
    if mode == IMAGINARY:
        if evolve_bosons:
            psi_B = renormalize(psi_B, grid)
        if evolve_fermions:
            fermions = gram_schmidt(fermions, grid)
            orthonormal = True
    return OrbitalSet(psi_B, fermions, orthonormal)
