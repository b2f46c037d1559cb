"""Periodic 1D grid on [0, 2*pi) and the finite-difference substrate.

Fields are plain float arrays of length ``grid.n_x``; index arithmetic wraps
modulo ``n_x``.  Node ``j`` (0-based) sits at ``x_j = j * dx``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

TWO_PI = 2.0 * np.pi


class GridError(ValueError):
    """Raised for malformed grids or fields that do not live on a grid."""


@dataclass(frozen=True)
class GridSpec:
    n_x: int

    def __post_init__(self):
        if int(self.n_x) != self.n_x or self.n_x < 4:
            raise GridError(f"n_x must be an integer >= 4, got {self.n_x!r}")
        object.__setattr__(self, "n_x", int(self.n_x))

    @property
    def dx(self) -> float:
        return TWO_PI / self.n_x

    @cached_property
    def x(self) -> np.ndarray:
        x = np.arange(self.n_x) * self.dx
        x.flags.writeable = False
        return x

    @cached_property
    def centered_matrix(self) -> sp.csr_matrix:
        """Sparse centered-difference matrix D, so that ``D @ f == centered_difference(f)``."""
        n = self.n_x
        j = np.arange(n)
        c = 1.0 / (2.0 * self.dx)
        rows = np.concatenate([j, j])
        cols = np.concatenate([(j + 1) % n, (j - 1) % n])
        vals = np.concatenate([np.full(n, c), np.full(n, -c)])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def kernel_basis(self) -> np.ndarray:
        """Orthonormal basis (columns) of the null space of the centered stencil.

        Constants always; the alternating mode as well when ``n_x`` is even.
        """
        n = self.n_x
        cols = [np.ones(n)]
        if n % 2 == 0:
            cols.append((-1.0) ** np.arange(n))
        return np.stack(cols, axis=1) / np.sqrt(n)


def check_field(f, grid: GridSpec) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.n_x,):
        raise GridError(f"field has shape {f.shape}, grid expects ({grid.n_x},)")
    if not np.all(np.isfinite(f)):
        raise GridError("field contains non-finite entries")
    return f


def centered_difference(f, grid: GridSpec) -> np.ndarray:
    f = check_field(f, grid)
    return (np.roll(f, -1) - np.roll(f, 1)) / (2.0 * grid.dx)


def forward_difference(f, grid: GridSpec) -> np.ndarray:
    f = check_field(f, grid)
    return (np.roll(f, -1) - f) / grid.dx


def backward_difference(f, grid: GridSpec) -> np.ndarray:
    f = check_field(f, grid)
    return (f - np.roll(f, 1)) / grid.dx


def minmod(a, b):
    """Two-argument minmod limiter.

    Zero when the arguments disagree in sign (or either vanishes), otherwise the
    argument of smaller modulus.  Works elementwise on arrays; returns a float for
    scalar input.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.where(a * b > 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)
    return float(out) if out.ndim == 0 else out


def circular_convolution(s, k, grid: GridSpec, method: str = "direct") -> np.ndarray:
    """Riemann-sum periodic convolution ``(s * k)_j = dx * sum_i s_i k_{(j - i) mod n}``.

    ``method="direct"`` is the O(n^2) reference; ``method="fft"`` uses numpy's FFT,
    which handles arbitrary (non power-of-two) lengths.
    """
    s = check_field(s, grid)
    k = check_field(k, grid)
    n = grid.n_x
    if method == "direct":
        idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
        return grid.dx * (k[idx] @ s)
    if method == "fft":
        return grid.dx * np.fft.irfft(np.fft.rfft(s) * np.fft.rfft(k), n=n)
    raise ValueError(f"unknown convolution method {method!r}")


def mean(f) -> float:
    return float(np.mean(f))


def l1_norm(f, grid: GridSpec) -> float:
    """Physically scaled L1 norm ``dx * sum |f_j|``."""
    return float(grid.dx * np.sum(np.abs(f)))


def linf_norm(f) -> float:
    return float(np.max(np.abs(f)))
