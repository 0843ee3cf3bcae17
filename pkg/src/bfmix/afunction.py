"""Beyond-mean-field Bose-Fermi function A(w, alpha) and its tabulation.

A(w, alpha) is the triple integral over the relative momentum k in [0, inf),
the direction cosine Omega in [-1, 1] and the fermion momentum q in [0, 1]
(units of the Fermi momentum), restricted to states outside the Fermi sphere:

    A = c(w) int dk int dOmega [1 - 3k^2(1+w)/s int dq q^2 (1 - Theta) / D]

with s = sqrt(k^2 + alpha), D = s + w k + 2 q w Omega and
c(w) = 2(1+w)/(3w) (6/pi)^(2/3).

The production quadrature integrates Omega analytically.  For fixed (k, q)
the Pauli restriction q^2 + k^2 + 2kq Omega >= 1 is the lower limit
Omega >= (1 - q^2 - k^2)/(2kq), so the step function never gets sampled.
The remaining q integral uses tanh-sinh nodes (the integrand has a
logarithmic near-singularity at q = 1 when s is small) and k is integrated by
adaptive Gauss-Legendre bisection on [0, 1], [1, 2] and, after k = 2/u, on
[2, inf).  For k >= 2 every q is allowed and the bracket reduces to a
cancellation-free series in r = 2w/(s + wk).
"""

import logging
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

log = logging.getLogger(__name__)

ALPHA_MIN = 1e-4
ALPHA_MAX = 1e6
_TABLE_MAGIC = b"BFA1"


class QuadratureError(RuntimeError):
    """Raised when the adaptive quadrature fails to reach its tolerance."""


class AlphaRangeWarning(UserWarning):
    pass


def _prefactor(w):
    return 2.0 * (1.0 + w) / (3.0 * w) * (6.0 / np.pi) ** (2.0 / 3.0)


def _tanh_sinh(h=1.0 / 16.0, tmax=3.3):
    t = np.arange(-tmax, tmax + 0.5 * h, h)
    y = 0.5 * np.pi * np.sinh(t)
    # distance of the node from the right end of [0, 1], computed without
    # cancellation: (1 - tanh y)/2 = 1/(1 + exp(2y))
    comp = 1.0 / (1.0 + np.exp(2.0 * y))
    weight = h * 0.5 * np.pi * np.cosh(t) / np.cosh(y) ** 2 * 0.5
    keep = (comp > 0.0) & (comp < 1.0) & (weight > 1e-300)
    return comp[keep], weight[keep]


_TS_COMP, _TS_WEIGHT = _tanh_sinh()
_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _inner_q(k, s, w):
    """q-integral J(k) for 0 < k < 2 (vectorised over k)."""
    k = np.asarray(k, dtype=float)[:, None]
    s = np.asarray(s, dtype=float)[:, None]
    a = s + w * k
    comp = _TS_COMP[None, :]
    wt = _TS_WEIGHT[None, :]

    # restricted piece: q in [q1, 1], Omega from Omega_0(q) to 1
    q1 = np.where(k < 1.0, 1.0 - k, k - 1.0)
    length = 1.0 - q1
    one_minus_q = length * comp
    q = 1.0 - one_minus_q
    d2 = s + w * one_minus_q * (1.0 + q) / k
    arg = w * ((q + k) ** 2 - 1.0) / (k * d2)
    restricted = np.sum(wt * q * np.log1p(arg), axis=1) * length[:, 0]

    # full piece (1 < k < 2): q in [0, k-1], Omega over [-1, 1]
    full = np.zeros(k.shape[0])
    sel = k[:, 0] > 1.0
    if np.any(sel):
        as_, q1s = a[sel], q1[sel]
        qf = q1s * (1.0 - comp)
        argf = 4.0 * qf * w / (as_ - 2.0 * qf * w)
        full[sel] = np.sum(wt * qf * np.log1p(argf), axis=1) * q1s[:, 0]
    return (restricted + full) / (2.0 * w)


def _series_tail(r):
    """sum_{n>=1} r^(2n+1) / ((2n+1)(2n+3)) for 0 <= r < 1."""
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    small = r < 0.3
    rs = r[small]
    acc = np.zeros_like(rs)
    term = rs ** 3
    r2 = rs * rs
    for n in range(1, 40):
        acc += term / ((2 * n + 1) * (2 * n + 3))
        term = term * r2
    out[small] = acc
    rb = r[~small]
    at = np.arctanh(rb)
    out[~small] = 0.5 * (at - (at - rb) / rb**2) - rb / 3.0
    return out


def _bracket(k, alpha, w):
    """Omega- and q-integrated bracket B(k) of the A integral."""
    k = np.asarray(k, dtype=float)
    s = np.sqrt(k * k + alpha)
    out = np.empty_like(k)
    low = k < 2.0
    if np.any(low):
        kl, sl = k[low], s[low]
        out[low] = 2.0 - 3.0 * kl * kl * (1.0 + w) / sl * _inner_q(kl, sl, w)
    hi = ~low
    if np.any(hi):
        kh, sh = k[hi], s[hi]
        a = sh + w * kh
        r = 2.0 * w / a
        lead = 2.0 * alpha * (1.0 + w * kh / (sh + kh)) / (sh * a)
        out[hi] = lead - 3.0 * kh * kh * (1.0 + w) / (sh * w) * _series_tail(r)
    return out


def _adaptive(f, lo, hi, rtol, atol=0.0, max_intervals=20000):
    """Adaptive Gauss-Legendre bisection of a vectorised integrand on [lo, hi]."""

    def gl(a, b):
        mid = 0.5 * (a + b)[:, None]
        half = 0.5 * (b - a)[:, None]
        x = mid + half * _GL_X[None, :]
        vals = f(x.ravel()).reshape(x.shape)
        return np.sum(vals * _GL_W[None, :], axis=1) * half[:, 0]

    a = np.array([lo], dtype=float)
    b = np.array([hi], dtype=float)
    whole = gl(a, b)
    total = 0.0
    err_total = 0.0
    scale = abs(whole[0])
    evaluated = 1
    while a.size:
        m = 0.5 * (a + b)
        left = gl(a, m)
        right = gl(m, b)
        evaluated += 2 * a.size
        refined = left + right
        err = np.abs(refined - whole)
        scale = max(scale, abs(total + refined.sum()))
        frac = (b - a) / (hi - lo)
        ok = (err <= np.maximum(rtol * scale, atol) * np.maximum(frac, 1e-3)) | (b - a < 1e-13 * (hi - lo))
        total += refined[ok].sum()
        err_total += err[ok].sum()
        a_new = np.concatenate([a[~ok], m[~ok]])
        b_new = np.concatenate([m[~ok], b[~ok]])
        whole = np.concatenate([left[~ok], right[~ok]])
        a, b = a_new, b_new
        if evaluated > max_intervals:
            raise QuadratureError(
                f"adaptive quadrature on [{lo}, {hi}] did not converge: "
                f"{a.size} unresolved intervals, error so far {err_total:.3e}, "
                f"partial value {total:.12g}"
            )
    return total, err_total


def afun_quadrature(w, alpha, rtol=1e-11):
    """Evaluate A(w, alpha) by direct quadrature.

    Parameters
    ----------
    w : float
        Mass ratio m_B / m_F, must be positive.
    alpha : float
        Density parameter, must be non-negative.
    rtol : float
        Relative tolerance of the adaptive k integration.
    """
    if not w > 0:
        raise ValueError(f"mass ratio must be positive, got {w}")
    if not alpha >= 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    w = float(w)
    alpha = float(alpha)

    def upper(u):
        k = 2.0 / u
        return _bracket(k, alpha, w) * 2.0 / (u * u)

    def lower(k):
        return _bracket(k, alpha, w)

    parts = [
        _adaptive(lower, 0.0, 1.0, rtol),
        _adaptive(lower, 1.0, 2.0, rtol),
        _adaptive(upper, 0.0, 1.0, rtol),
    ]
    total = sum(p[0] for p in parts)
    err = sum(p[1] for p in parts)
    if err > 1e3 * rtol * max(abs(total), 1.0):
        raise QuadratureError(f"A({w}, {alpha}) error estimate {err:.3e} too large (value {total:.12g})")
    return _prefactor(w) * total


@dataclass(frozen=True)
class AFunctionTable:
    """A(w, alpha) and dA/dalpha tabulated on a log-spaced alpha grid.

    Values outside ``[alpha_grid[0], alpha_grid[-1]]`` are clamped to the
    edge value of A with a zero derivative, so energies and potentials stay
    mutually consistent.  Immutable once built.
    """

    w: float
    alpha_grid: np.ndarray
    A_values: np.ndarray
    dA_dalpha_values: np.ndarray

    def __post_init__(self):
        g = self.alpha_grid
        if g.ndim != 1 or g.size < 2 or np.any(np.diff(g) <= 0):
            raise ValueError("alpha grid must be strictly increasing")
        if not (np.all(np.isfinite(self.A_values)) and np.all(np.isfinite(self.dA_dalpha_values))):
            raise ValueError("table values must be finite")
        u = np.log(g)
        object.__setattr__(self, "_spline_A", CubicSpline(u, self.A_values))
        object.__setattr__(self, "_spline_dA", CubicSpline(u, self.dA_dalpha_values))

    @property
    def alpha_range(self):
        return float(self.alpha_grid[0]), float(self.alpha_grid[-1])

    def _clamped_log(self, alpha, warn=True):
        alpha = np.asarray(alpha, dtype=float)
        lo, hi = self.alpha_range
        outside = (alpha < lo) | (alpha > hi)
        if warn and np.any(outside):
            warnings.warn(
                f"alpha outside tabulated range [{lo:g}, {hi:g}] at {int(outside.sum())} points; clamped",
                AlphaRangeWarning,
                stacklevel=3,
            )
        u = np.log(np.clip(alpha, lo, hi))
        return u, outside

    def A(self, alpha, warn=True):
        u, _ = self._clamped_log(alpha, warn)
        return self._spline_A(u)

    def dA(self, alpha, warn=True):
        u, outside = self._clamped_log(alpha, warn)
        d = self._spline_dA(u)
        return np.where(outside, 0.0, d)

    def evaluate(self, alpha, warn=True):
        """Return ``(A, dA/dalpha)`` at once, sharing the clamping work."""
        u, outside = self._clamped_log(alpha, warn)
        return self._spline_A(u), np.where(outside, 0.0, self._spline_dA(u))

    def save(self, path):
        path = Path(path)
        with path.open("wb") as fh:
            fh.write(_TABLE_MAGIC)
            fh.write(struct.pack("<dI", self.w, self.alpha_grid.size))
            data = np.stack([self.alpha_grid, self.A_values, self.dA_dalpha_values])
            fh.write(data.astype("<f8").tobytes())

    @classmethod
    def load(cls, path):
        raw = Path(path).read_bytes()
        if raw[:4] != _TABLE_MAGIC:
            raise ValueError(f"{path}: not an A-function table")
        w, n = struct.unpack("<dI", raw[4:16])
        data = np.frombuffer(raw[16:], dtype="<f8").reshape(3, n)
        return cls(w=w, alpha_grid=data[0].copy(), A_values=data[1].copy(), dA_dalpha_values=data[2].copy())


def build_afun_table(w, alpha_min=ALPHA_MIN, alpha_max=ALPHA_MAX, nodes=256, fd_step=1e-3, rtol=1e-12):
    """Tabulate A and dA/dalpha for mass ratio ``w``.

    The derivative at each node is the centred difference of direct
    quadratures at alpha * exp(+-fd_step).
    """
    if nodes < 64:
        raise ValueError(f"need at least 64 table nodes, got {nodes}")
    if not 0 < alpha_min < alpha_max:
        raise ValueError("alpha range must satisfy 0 < alpha_min < alpha_max")
    grid = np.geomspace(alpha_min, alpha_max, nodes)
    A = np.array([afun_quadrature(w, a, rtol) for a in grid])
    up = np.array([afun_quadrature(w, a * np.exp(fd_step), rtol) for a in grid])
    dn = np.array([afun_quadrature(w, a * np.exp(-fd_step), rtol) for a in grid])
    dA = (up - dn) / (grid * 2.0 * np.sinh(fd_step))
    log.info("built A table for w=%g with %d nodes", w, nodes)
    return AFunctionTable(w=float(w), alpha_grid=grid, A_values=A, dA_dalpha_values=dA)


def cached_afun_table(w, cache_dir=None, alpha_min=ALPHA_MIN, alpha_max=ALPHA_MAX, nodes=256):
    """Load the table keyed by ``(w, range, nodes)`` from ``cache_dir`` or build and store it."""
    if cache_dir is None:
        return build_afun_table(w, alpha_min, alpha_max, nodes)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = f"afun_w{float(w).hex()}_a{float(alpha_min).hex()}_{float(alpha_max).hex()}_n{nodes}.bin"
    path = cache_dir / key.replace("+", "p").replace("-", "m")
    if path.exists():
        return AFunctionTable.load(path)
    table = build_afun_table(w, alpha_min, alpha_max, nodes)
    table.save(path)
    return table
