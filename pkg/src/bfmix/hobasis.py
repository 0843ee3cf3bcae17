"""Harmonic-oscillator basis, Hamiltonian assembly and the self-consistent
eigenvalue (IEV) iteration for the fermion orbitals at frozen boson density.

Two storage strategies give the same algebra:

``cached3D``
    every 3D basis function is kept on the grid (memory = size * points * 8 B);
``onthefly1D``
    only the three 1D tables are stored and blocks of 3D functions are
    rebuilt as products whenever they are needed.

Both walk the same block structure with identical arithmetic, so the
assembled matrices agree bit for bit.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import psutil
import scipy.linalg

from .grid import integrate, kinetic_energy
from .parallel import blas_limits
from .physics import effective_potentials, interaction_energy

log = logging.getLogger(__name__)

CACHED_3D = "cached3D"
ONTHEFLY_1D = "onthefly1D"
STRATEGIES = (CACHED_3D, ONTHEFLY_1D)
BLOCK = 128


class BasisMemoryError(MemoryError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class ResolutionWarning(UserWarning):
    pass


def shell_size(n_shell):
    """Number of triples with nx + ny + nz <= n_shell."""
    return (n_shell + 1) * (n_shell + 2) * (n_shell + 3) // 6


def shell_triples(n_shell):
    """Basis labels ordered by shell, then lexicographically."""
    out = []
    for s in range(n_shell + 1):
        for nx in range(s, -1, -1):
            for ny in range(s - nx, -1, -1):
                out.append((nx, ny, s - nx - ny))
    return np.array(out, dtype=int).reshape(-1, 3)


@dataclass
class HermiteBasis1D:
    """Normalised oscillator eigenfunctions phi_0..phi_nmax sampled on ``x``.

    Built with the three-term recurrence of the normalised functions,
        phi_{n+1} = sqrt(2/(n+1)) b x phi_n - sqrt(n/(n+1)) phi_{n-1},
    with b = sqrt(m omega), so no raw Hermite polynomial is ever formed.
    """

    x: np.ndarray
    omega: float
    mass: float
    n_max: int
    values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        b = np.sqrt(self.mass * self.omega)
        bx = b * self.x
        vals = np.empty((self.n_max + 1, self.x.size))
        vals[0] = (b * b / np.pi) ** 0.25 * np.exp(-0.5 * bx * bx)
        if self.n_max >= 1:
            vals[1] = np.sqrt(2.0) * bx * vals[0]
        for n in range(1, self.n_max):
            vals[n + 1] = np.sqrt(2.0 / (n + 1)) * bx * vals[n] - np.sqrt(n / (n + 1)) * vals[n - 1]
        self.values = vals


class ShellBasis3D:
    """Oscillator states with nx + ny + nz <= n_shell on a grid."""

    def __init__(self, grid, omega, mass, n_shell, strategy=CACHED_3D, memory_cap=None):
        if n_shell < 0:
            raise ValueError("shell cutoff must be non-negative")
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown basis strategy {strategy!r}; choose from {STRATEGIES}")
        self.grid = grid
        self.omega = np.broadcast_to(np.asarray(omega, dtype=float), (3,)).copy()
        self.mass = float(mass)
        self.n_shell = int(n_shell)
        self.strategy = strategy
        self.triples = shell_triples(n_shell)
        self.energies = (self.triples + 0.5) @ self.omega
        self.tables = [HermiteBasis1D(grid.axis(i), self.omega[i], self.mass, n_shell).values for i in range(3)]
        self._check_resolution()
        self.memory_bytes = self.size * grid.size * 8
        self._cache = None
        if strategy == CACHED_3D:
            cap = default_memory_cap() if memory_cap is None else memory_cap
            if self.memory_bytes > cap:
                raise BasisMemoryError(
                    f"cached3D basis of {self.size} states needs {self.memory_bytes / 2**30:.2f} GiB "
                    f"(cap {cap / 2**30:.2f} GiB); use the onthefly1D strategy"
                )
            self._cache = np.empty((self.size, grid.size))
            for lo, hi in self.blocks():
                self._cache[lo:hi] = self._synthesize(lo, hi)
        log.debug("basis N_shell=%d size=%d strategy=%s", n_shell, self.size, strategy)

    @property
    def size(self):
        return len(self.triples)

    @property
    def stored_bytes(self):
        """Bytes held by the basis (3D cache or the 1D tables)."""
        if self._cache is not None:
            return self._cache.nbytes
        return sum(t.nbytes for t in self.tables)

    def trap(self):
        return self.grid.harmonic(self.mass, self.omega)

    def blocks(self, block=BLOCK):
        for lo in range(0, self.size, block):
            yield lo, min(lo + block, self.size)

    def _synthesize(self, lo, hi):
        t = self.triples[lo:hi]
        tx, ty, tz = self.tables
        f = tx[t[:, 0]][:, :, None, None] * ty[t[:, 1]][:, None, :, None] * tz[t[:, 2]][:, None, None, :]
        return f.reshape(hi - lo, -1)

    def functions(self, lo, hi):
        """Rows ``lo:hi`` of the (size, grid points) basis matrix."""
        if self._cache is not None:
            return self._cache[lo:hi]
        return self._synthesize(lo, hi)

    def _check_resolution(self):
        n = self.n_shell
        for i in range(3):
            length = 1.0 / np.sqrt(self.mass * self.omega[i])
            lobe = np.pi * length / np.sqrt(2 * n + 1)
            if self.grid.dx > lobe / 4.0:
                warnings.warn(
                    f"grid spacing {self.grid.dx:g} resolves the highest oscillator state "
                    f"(lobe {lobe:.3g}) with fewer than 4 points",
                    ResolutionWarning,
                    stacklevel=3,
                )
                return
            edge = self.grid.axis(i)[0]
            if abs(edge) < np.sqrt(2 * n + 1) * length + 3.0 * length:
                warnings.warn("box does not contain the classical turning region of the highest state",
                              ResolutionWarning, stacklevel=3)
                return


def default_memory_cap():
    return int(0.8 * psutil.virtual_memory().total)


def build_basis(grid, omega_F, mass, n_shell, strategy=CACHED_3D, memory_cap=None):
    return ShellBasis3D(grid, omega_F, mass, n_shell, strategy, memory_cap)


def assemble_hamiltonian(V_eff_F, basis):
    """H_ab = E_a delta_ab + <a| V_eff_F - V_ext^F |b> with grid quadrature."""
    dV = V_eff_F - basis.trap()
    if not np.all(np.isfinite(dV)):
        raise FloatingPointError("non-finite fermion potential")
    flat = dV.reshape(-1)
    m = basis.size
    H = np.zeros((m, m))
    with blas_limits():
        for lo_i, hi_i in basis.blocks():
            weighted = basis.functions(lo_i, hi_i) * flat
            for lo_j, hi_j in basis.blocks():
                if lo_j > lo_i:
                    break
                H[lo_i:hi_i, lo_j:hi_j] = weighted @ basis.functions(lo_j, hi_j).T
    H *= basis.grid.dV
    H = np.tril(H) + np.tril(H, -1).T
    H[np.diag_indices(m)] += basis.energies
    return H


@dataclass
class EigenResult:
    eigenvalues: np.ndarray
    coefficients: np.ndarray
    orbitals: np.ndarray


def solve_lowest(H, count, basis=None):
    """Lowest ``count`` eigenpairs of the symmetric matrix ``H``.

    Vectors get a deterministic sign (largest component positive).  When a
    basis is given the grid orbitals are synthesised through its storage
    strategy.
    """
    m = H.shape[0]
    if count > m or count < 1:
        raise ValueError(f"cannot extract {count} eigenpairs from a {m}x{m} matrix")
    with blas_limits():
        try:
            vals, vecs = scipy.linalg.eigh(H, subset_by_index=[0, count - 1], driver="evr")
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"dense eigensolver failed: {exc}") from exc
    order = np.argsort(vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    pivot = np.argmax(np.abs(vecs) > (1.0 - 1e-8) * np.abs(vecs).max(axis=0), axis=0)
    signs = np.sign(vecs[pivot, np.arange(count)])
    vecs = vecs * np.where(signs == 0, 1.0, signs)
    resid = np.linalg.norm(H @ vecs - vecs * vals, axis=0)
    hnorm = np.linalg.norm(H, 2) if m <= 2000 else np.linalg.norm(H)
    if np.any(resid > 1e-10 * max(hnorm, 1.0)):
        raise ConvergenceError(f"eigenpair residuals too large: {resid.max():.2e}")
    orbitals = synthesize(vecs, basis) if basis is not None else None
    return EigenResult(vals, vecs, orbitals)


def synthesize(coefficients, basis):
    """Grid fields sum_a c_aj phi_a for each column j of ``coefficients``."""
    out = np.zeros((coefficients.shape[1], basis.grid.size))
    with blas_limits():
        for lo, hi in basis.blocks():
            out += coefficients[lo:hi].T @ basis.functions(lo, hi)
    return out.reshape((coefficients.shape[1],) + basis.grid.shape).astype(complex)


def fermion_energy(orbitals, n_B, params, table, grid):
    """Kinetic + trap energy of the orbitals plus the boson-fermion interaction."""
    n_F = (orbitals.real**2 + orbitals.imag**2).sum(axis=0)
    kin = float(np.sum(kinetic_energy(orbitals, grid, params.mass_F)))
    trap = float(integrate(params.trap_F(grid) * n_F, grid))
    _, _, mf, ho = interaction_energy(n_B, n_F, params, table, grid)
    return kin + trap + mf + ho


@dataclass
class IEVResult:
    orbitals: np.ndarray
    energy: float
    eigenvalues: np.ndarray
    iterations: int
    trace: list


def iev_fermion_loop(n_B, params, table, basis, tol, n_F=None, max_iter=500, mixing=1.0):
    """Self-consistent fermion orbitals in the oscillator basis at fixed n_B.

    Starts from ``n_F`` (zero by default) and repeats potential -> matrix ->
    eigenvectors -> density -> energy until successive fermion energies
    differ by less than ``tol``.  ``mixing`` < 1 blends the new density with
    the old one before the next potential build.
    """
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    grid = basis.grid
    if n_F is None:
        n_F = np.zeros(grid.shape)
    trace = []
    prev = None
    for it in range(1, max_iter + 1):
        _, V_F = effective_potentials(n_B, n_F, params, table, grid)
        H = assemble_hamiltonian(V_F, basis)
        res = solve_lowest(H, params.N_F, basis)
        new_nF = (res.orbitals.real**2).sum(axis=0)
        energy = fermion_energy(res.orbitals, n_B, params, table, grid)
        trace.append(energy)
        log.debug("IEV iteration %d: E_F = %.12g", it, energy)
        if params.g_BF == 0.0 or (prev is not None and abs(energy - prev) < tol):
            return IEVResult(res.orbitals, energy, res.eigenvalues, it, trace)
        prev = energy
        n_F = new_nF if mixing == 1.0 else mixing * new_nF + (1.0 - mixing) * n_F
    raise ConvergenceError(f"IEV did not converge in {max_iter} iterations", trace)
