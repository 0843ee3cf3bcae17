"""Ground states and droplet dynamics of trapped three-dimensional Bose-Fermi mixtures."""

from .afunction import AFunctionTable, afun_quadrature, build_afun_table, cached_afun_table
from .grid import Grid3D, make_grid
from .methods import (
    ConvergenceCriteria,
    MethodKind,
    RunReport,
    observables,
    release_trap_and_evolve,
    run_a_rtp,
    run_itp_iev,
    run_itp_itp_gs,
)
from .orthonorm import OrbitalSet, gram_schmidt
from .physics import EnergyBreakdown, MixtureParams, effective_potentials, total_energy

__version__ = "0.1.0"

__all__ = [
    "AFunctionTable",
    "ConvergenceCriteria",
    "EnergyBreakdown",
    "Grid3D",
    "MethodKind",
    "MixtureParams",
    "OrbitalSet",
    "RunReport",
    "afun_quadrature",
    "build_afun_table",
    "cached_afun_table",
    "effective_potentials",
    "gram_schmidt",
    "make_grid",
    "observables",
    "release_trap_and_evolve",
    "run_a_rtp",
    "run_itp_iev",
    "run_itp_itp_gs",
    "total_energy",
]
