"""Uniform periodic 3D grid, spectral transforms and grid quadrature.

Transform convention: the forward transform is unnormalised and the inverse
carries the 1/N factor (numpy/scipy "backward" norm).  Consequently

    sum |psi|^2 dV = (dV / N) sum |fft(psi)|^2.

Fields are plain complex128 arrays of shape ``grid.shape`` (or a stack
``(m, *grid.shape)``); densities and potentials are float64 arrays.
"""

import struct
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft

from .parallel import get_threads

FIELD_MAGIC = b"BFX1"
BOUNDARY_THRESHOLD = 1e-12


class BoundaryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Grid3D:
    n: tuple
    dx: float

    def __post_init__(self):
        if len(self.n) != 3:
            raise ValueError("grid needs three axis sizes")
        for m in self.n:
            if m < 4 or m % 2:
                raise ValueError(f"grid points per axis must be even and >= 4, got {m}")
        if not self.dx > 0:
            raise ValueError(f"grid spacing must be positive, got {self.dx}")

    @property
    def shape(self):
        return tuple(self.n)

    @property
    def size(self):
        return int(np.prod(self.n))

    @property
    def dV(self):
        return self.dx**3

    def axis(self, i):
        """Coordinates x_j = (j - n/2) dx along axis ``i``."""
        m = self.n[i]
        return (np.arange(m) - m // 2) * self.dx

    def kaxis(self, i):
        """Angular wavenumbers in FFT order along axis ``i``."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n[i], d=self.dx)

    @cached_property
    def coords(self):
        """Broadcastable (x, y, z) arrays of shapes (n,1,1), (1,n,1), (1,1,n)."""
        x, y, z = (self.axis(i) for i in range(3))
        return x[:, None, None], y[None, :, None], z[None, None, :]

    @cached_property
    def r2(self):
        x, y, z = self.coords
        return x**2 + y**2 + z**2

    @cached_property
    def k2(self):
        kx, ky, kz = (self.kaxis(i) for i in range(3))
        return kx[:, None, None] ** 2 + ky[None, :, None] ** 2 + kz[None, None, :] ** 2

    def harmonic(self, mass, omega):
        """0.5 m (w_x^2 x^2 + w_y^2 y^2 + w_z^2 z^2); ``omega`` scalar or 3-sequence."""
        om = np.broadcast_to(np.asarray(omega, dtype=float), (3,))
        x, y, z = self.coords
        return 0.5 * mass * (om[0] ** 2 * x**2 + om[1] ** 2 * y**2 + om[2] ** 2 * z**2)


def make_grid(n, dx):
    """Build a grid with ``n`` points per axis (int or 3-tuple) and spacing ``dx``."""
    if np.isscalar(n):
        n = (int(n),) * 3
    n = tuple(int(m) for m in n)
    return Grid3D(n=n, dx=float(dx))


def _check(f, grid):
    if f.shape[-3:] != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")


def forward_transform(f, grid):
    _check(f, grid)
    return scipy.fft.fftn(f, axes=(-3, -2, -1), workers=get_threads())


def inverse_transform(f, grid):
    _check(f, grid)
    return scipy.fft.ifftn(f, axes=(-3, -2, -1), workers=get_threads())


def integrate(f, grid):
    """Riemann sum over the last three axes with weight dx^3."""
    _check(np.asarray(f), grid)
    return np.sum(f, axis=(-3, -2, -1)) * grid.dV


def norm2(psi, grid):
    return integrate(psi.real**2 + psi.imag**2, grid)


def inner(a, b, grid):
    """<a|b> = sum conj(a) b dV for single fields."""
    return np.vdot(a.ravel(), b.ravel()) * grid.dV


def density(psi, weight=1.0):
    """weight * |psi|^2; a stack of fields is summed over its leading axis."""
    if weight < 0:
        raise ValueError("density weight must be non-negative")
    d = psi.real**2 + psi.imag**2
    if d.ndim == 4:
        d = d.sum(axis=0)
    return weight * d


def kinetic_energy(psi, grid, mass=1.0):
    """<psi| -lap/(2m) |psi> evaluated in k-space (per field for a stack)."""
    spec = forward_transform(psi, grid)
    p2 = spec.real**2 + spec.imag**2
    return np.sum(p2 * grid.k2, axis=(-3, -2, -1)) * grid.dV / grid.size / (2.0 * mass)


def boundary_ratio(n, grid):
    """Largest boundary-face density divided by the peak density."""
    peak = float(np.max(n))
    if peak <= 0.0:
        return 0.0
    faces = [n[0], n[-1], n[:, 0], n[:, -1], n[:, :, 0], n[:, :, -1]]
    return max(float(np.max(f)) for f in faces) / peak


def check_boundary(n, grid, threshold=BOUNDARY_THRESHOLD, what="density"):
    ratio = boundary_ratio(n, grid)
    if ratio > threshold:
        warnings.warn(
            f"{what} at the box boundary is {ratio:.2e} of its peak (> {threshold:g}); "
            "the periodic box may be too small",
            BoundaryWarning,
            stacklevel=2,
        )
    return ratio


def write_field(path, f, grid):
    """Dump a real or complex field: "BFX1", 3 x u32 dims, f64 dx, then little-endian f64 data."""
    _check(f, grid)
    with Path(path).open("wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<3Id", *grid.shape, grid.dx))
        if np.iscomplexobj(f):
            fh.write(np.ascontiguousarray(f, dtype="<c16").tobytes())
        else:
            fh.write(np.ascontiguousarray(f, dtype="<f8").tobytes())


def read_field(path):
    """Inverse of :func:`write_field`; returns ``(field, grid)``."""
    raw = Path(path).read_bytes()
    if raw[:4] != FIELD_MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}")
    nx, ny, nz, dx = struct.unpack("<3Id", raw[4:24])
    grid = make_grid((nx, ny, nz), dx)
    payload = raw[24:]
    count = nx * ny * nz
    if len(payload) == 16 * count:
        f = np.frombuffer(payload, dtype="<c16").reshape(grid.shape).astype(complex)
    elif len(payload) == 8 * count:
        f = np.frombuffer(payload, dtype="<f8").reshape(grid.shape).astype(float)
    else:
        raise ValueError(f"{path}: payload of {len(payload)} bytes fits neither real nor complex {grid.shape}")
    return f, grid
