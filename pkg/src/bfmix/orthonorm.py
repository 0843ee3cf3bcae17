"""Orbital container and Gram-Schmidt orthonormalisation of the fermion orbitals."""

from dataclasses import dataclass

import numpy as np

DEPENDENCE_RATIO = 1e-10


class LinearDependenceError(ValueError):
    def __init__(self, index, ratio):
        super().__init__(
            f"orbital {index} is linearly dependent on the preceding ones "
            f"(norm ratio after projection {ratio:.2e})"
        )
        self.index = index
        self.ratio = ratio


@dataclass
class OrbitalSet:
    """Condensate field plus the stack of N_F fermion orbitals.

    ``fermions`` has shape ``(N_F, nx, ny, nz)``; the leading index is the
    orbital label and never gets permuted.
    """

    psi_B: np.ndarray
    fermions: np.ndarray
    orthonormal: bool = False

    def copy(self):
        return OrbitalSet(self.psi_B.copy(), self.fermions.copy(), self.orthonormal)

    @property
    def n_fermions(self):
        return self.fermions.shape[0]

    def densities(self, N_B):
        n_B = N_B * (self.psi_B.real**2 + self.psi_B.imag**2)
        n_F = (self.fermions.real**2 + self.fermions.imag**2).sum(axis=0)
        return n_B, n_F


def overlap_matrix(fields, grid):
    flat = fields.reshape(fields.shape[0], -1)
    return (flat.conj() @ flat.T) * grid.dV


def gram_schmidt(fields, grid, passes=2):
    """Modified Gram-Schmidt on a stack of fields, returned as a new array.

    Each orbital is projected against the already orthonormalised ones
    ``passes`` times (re-orthogonalisation keeps overlaps at round-off level).
    """
    fields = np.array(fields, dtype=complex, copy=True)
    if fields.ndim != 4 or fields.shape[0] == 0:
        raise ValueError("expected a non-empty stack of 3D fields")
    dV = grid.dV
    flat = fields.reshape(fields.shape[0], -1)
    for j in range(flat.shape[0]):
        v = flat[j]
        before = np.sqrt(np.vdot(v, v).real * dV)
        if before == 0.0:
            raise LinearDependenceError(j + 1, 0.0)
        for _ in range(passes if j else 0):
            for i in range(j):
                v -= (np.vdot(flat[i], v) * dV) * flat[i]
        after = np.sqrt(np.vdot(v, v).real * dV)
        if after < DEPENDENCE_RATIO * before:
            raise LinearDependenceError(j + 1, after / before)
        v /= after
    return fields


def is_orthonormal(fields, grid, tol=1e-12):
    s = overlap_matrix(fields, grid)
    return float(np.max(np.abs(s - np.eye(s.shape[0])))) <= tol

