"""Correlated Gaussian random fields on the unit square.

Fields are sampled on an N x N node grid covering [0,1]^2 and evaluated
anywhere by bilinear interpolation. Raw fields are stationary, zero mean,
unit variance with squared-exponential covariance

    E[f(r1) f(r2)] = exp(-|r1 - r2|^2 / (2 d^2)),

synthesized by circulant embedding on a doubled torus (exact to clipping
tolerance for this kernel). A separate windowing pass multiplies by a
raised-cosine (Tukey) taper so the domain boundary becomes the unique
global-minimum level contour, then rescales the range to exactly [0, 1].

Randomness comes from numpy's PCG64 generator, so a (n, d, seed) triple
reproduces the identical grid on any platform.
"""

from __future__ import annotations

import json
import struct

import numpy as np

_MAGIC = b"FRA1"
_TAPER = 0.15  # taper width per side; window is 1 on the central 70%


class ParameterError(ValueError):
    pass


class DomainError(ValueError):
    pass


class ScalarField:
    """Immutable gridded scalar field over the unit square."""

    def __init__(self, grid, corr_length, seed, window_applied):
        grid = np.ascontiguousarray(grid, dtype=np.float64)
        if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
            raise ParameterError("grid must be square")
        if not np.all(np.isfinite(grid)):
            raise ParameterError("grid contains non-finite values")
        grid.setflags(write=False)
        self.grid = grid
        self.corr_length = float(corr_length)
        self.seed = int(seed)
        self.window_applied = bool(window_applied)
        self._cache = {}

    @property
    def n(self):
        return self.grid.shape[0]

    @property
    def spacing(self):
        return 1.0 / (self.n - 1)

    def _locate(self, x, y):
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            raise DomainError(f"point ({x}, {y}) outside the unit square")
        nm1 = self.n - 1
        px = x * nm1
        py = y * nm1
        j = min(int(px), nm1 - 1)
        i = min(int(py), nm1 - 1)
        return i, j, px - j, py - i

    def value_at(self, x, y):
        """Bilinear interpolation of the grid at (x, y)."""
        i, j, u, v = self._locate(x, y)
        g = self.grid
        g00 = g[i, j]
        g01 = g[i, j + 1]
        g10 = g[i + 1, j]
        g11 = g[i + 1, j + 1]
        return float(
            g00 * (1 - u) * (1 - v)
            + g01 * u * (1 - v)
            + g10 * (1 - u) * v
            + g11 * u * v
        )

    def gradient_at(self, x, y):
        """Gradient of the bilinear interpolant (piecewise linear per axis)."""
        i, j, u, v = self._locate(x, y)
        g = self.grid
        nm1 = self.n - 1
        g00 = g[i, j]
        g01 = g[i, j + 1]
        g10 = g[i + 1, j]
        g11 = g[i + 1, j + 1]
        gx = ((g01 - g00) * (1 - v) + (g11 - g10) * v) * nm1
        gy = ((g10 - g00) * (1 - u) + (g11 - g01) * u) * nm1
        return float(gx), float(gy)

    def values_at(self, points):
        """Vectorized bilinear evaluation for an (k, 2) array of xy points."""
        p = np.asarray(points, dtype=float)
        if p.size == 0:
            return np.zeros(0)
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise DomainError("point outside the unit square")
        nm1 = self.n - 1
        px = np.clip(p[:, 0], 0.0, 1.0) * nm1
        py = np.clip(p[:, 1], 0.0, 1.0) * nm1
        j = np.minimum(px.astype(np.int64), nm1 - 1)
        i = np.minimum(py.astype(np.int64), nm1 - 1)
        u = px - j
        v = py - i
        g = self.grid
        return (
            g[i, j] * (1 - u) * (1 - v)
            + g[i, j + 1] * u * (1 - v)
            + g[i + 1, j] * (1 - u) * v
            + g[i + 1, j + 1] * u * v
        )


def generate_grf(n, d, seed):
    """Sample a raw (unwindowed) GRF on an n x n grid.

    Circulant embedding: the kernel is periodized onto a 3n x 3n torus
    (separable wrap sum, which keeps the DFT eigenvalues non-negative up to
    roundoff; residual negatives are clipped at 0). One transform of
    eigenvalue-scaled complex white noise yields an exact sample on the
    n x n sub-grid; wrap-around bias at this padding is below 1e-5 for
    d <= 1.
    """
    n = int(n)
    if n < 64:
        raise ParameterError("grid size must be at least 64")
    if not (0.0 < d <= 1.0):
        raise ParameterError("correlation length must lie in (0, 1]")
    m = 3 * n
    h = 1.0 / (n - 1)
    period = m * h
    x = np.arange(m) * h
    k1 = np.zeros(m)
    for wrap in range(-3, 4):
        k1 += np.exp(-((x + wrap * period) ** 2) / (2.0 * d * d))
    kernel = k1[:, None] * k1[None, :]
    lam = np.fft.fft2(kernel).real
    np.maximum(lam, 0.0, out=lam)
    rng = np.random.Generator(np.random.PCG64(seed))
    noise = rng.standard_normal((2, m, m))
    coeff = np.sqrt(lam / (m * m)) * (noise[0] + 1j * noise[1])
    sample = np.fft.fft2(coeff).real
    return ScalarField(sample[:n, :n], d, seed, window_applied=False)


def _tukey(n):
    t = np.linspace(0.0, 1.0, n)
    w = np.ones(n)
    left = t < _TAPER
    w[left] = 0.5 * (1.0 - np.cos(np.pi * t[left] / _TAPER))
    right = t > 1.0 - _TAPER
    w[right] = 0.5 * (1.0 - np.cos(np.pi * (1.0 - t[right]) / _TAPER))
    return w


def apply_boundary_window(field):
    """Taper a raw field so the boundary ring is the unique global minimum.

    The raw grid is lifted to a strictly positive range, multiplied by a
    separable raised-cosine window (1 on the central 70%, 0 on the border
    ring), and rescaled so min = 0 (attained exactly on the ring) and
    max = 1.
    """
    g = field.grid
    span = float(g.max() - g.min())
    n = field.n
    if span == 0.0:
        out = np.zeros_like(g)
    else:
        lifted = (g - g.min()) / span + 0.5
        w = _tukey(n)
        out = lifted * w[:, None] * w[None, :]
        out = out / out.max()
    return ScalarField(out, field.corr_length, field.seed, window_applied=True)


def make_field(n, d, seed):
    """Generate and window a field in one step."""
    return apply_boundary_window(generate_grf(n, d, seed))


def save_field(field, path):
    """Binary archive: magic + (n, d, seed, window flag) header + grid."""
    header = struct.pack(
        "<IdqB", field.n, field.corr_length, field.seed, int(field.window_applied)
    )
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(header)
        fh.write(field.grid.tobytes())


def load_field(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise IOError(f"{path}: not a field archive")
        n, d, seed, window = struct.unpack("<IdqB", fh.read(21))
        grid = np.frombuffer(fh.read(n * n * 8), dtype=np.float64).reshape(n, n)
    return ScalarField(grid, d, seed, bool(window))


def field_to_json(field, max_size=128, decimals=4):
    """Downsampled JSON export for the web client."""
    stride = max(1, int(np.ceil(field.n / max_size)))
    sub = field.grid[::stride, ::stride]
    return {
        "n": field.n,
        "d": field.corr_length,
        "seed": field.seed,
        "window_applied": field.window_applied,
        "stride": stride,
        "values": np.round(sub, decimals).tolist(),
    }


def write_field_json(field, path, **kw):
    with open(path, "w") as fh:
        json.dump(field_to_json(field, **kw), fh)
