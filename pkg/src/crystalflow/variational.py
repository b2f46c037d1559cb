"""Weighted Laplacian and the discrete energies of the semi-implicit step.

Two total-variation conventions live here on purpose:

* :func:`tv_energy` is ``dx * sum |Dh|`` (physical scaling, grid independent);
* :func:`discrete_tv` is ``sum |Dh|``, the matrix-level term that the inner
  saddle-point iteration actually minimizes and that enters :func:`objective_phi`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .grid import GridSpec, centered_difference, check_field

MEAN_TOL = 1e-10


class HMinus1Error(ValueError):
    """The argument of the weighted H^-1 norm is not in the range of the Laplacian."""


@dataclass(frozen=True, eq=False)
class WeightedLaplacian:
    """``A = D^t diag(M) D`` for the centered-difference matrix ``D``."""

    mobility: np.ndarray
    grid: GridSpec

    @cached_property
    def sparse(self) -> sp.csr_matrix:
        D = self.grid.centered_matrix
        A = (D.T @ sp.diags(self.mobility) @ D).tocsr()
        # at small n the stencil wraps onto itself; symmetrize away summation-order noise
        return ((A + A.T) * 0.5).tocsr()

    @property
    def matrix(self) -> np.ndarray:
        return self.sparse.toarray()

    def apply(self, v) -> np.ndarray:
        return self.sparse @ np.asarray(v, dtype=float)


def assemble_weighted_laplacian(M, grid: GridSpec) -> WeightedLaplacian:
    M = check_field(M, grid)
    if np.any(M <= 0.0):
        raise ValueError("mobility must be strictly positive")
    M = M.copy()
    M.flags.writeable = False
    return WeightedLaplacian(M, grid)


def tv_energy(h, grid: GridSpec) -> float:
    return float(grid.dx * np.sum(np.abs(centered_difference(h, grid))))


def discrete_tv(h, grid: GridSpec) -> float:
    return float(np.sum(np.abs(centered_difference(h, grid))))


def _chains(n: int) -> list[np.ndarray]:
    # orbits of j -> j + 2 (mod n): one for odd n, the even/odd sublattices for even n
    if n % 2:
        return [(2 * np.arange(n)) % n]
    return [np.arange(0, n, 2), np.arange(1, n, 2)]


def kernel_components(psi, grid: GridSpec) -> dict[str, float]:
    """Averages of ``psi`` against the null modes of the centered stencil."""
    psi = np.asarray(psi, dtype=float)
    comps = {"constant": float(np.mean(psi))}
    if grid.n_x % 2 == 0:
        comps["alternating"] = float(np.mean(psi * (-1.0) ** np.arange(grid.n_x)))
    return comps


def particular_flux(psi, grid: GridSpec) -> np.ndarray:
    """Some ``s`` with ``D^t s = psi`` (``psi`` must be orthogonal to the stencil's kernel).

    Uses the recursion ``s_{j+1} = s_{j-1} - 2 dx psi_j`` along each sublattice.
    """
    n = grid.n_x
    s = np.zeros(n)
    for chain in _chains(n):
        # s at chain[k+1] = s at chain[k] - 2 dx psi at the node between them
        between = (chain[:-1] + 1) % n
        s[chain[1:]] = -2.0 * grid.dx * np.cumsum(psi[between])
    return s


def minimal_flux(s, M, grid: GridSpec) -> np.ndarray:
    """Shift ``s`` along ``ker(D^t)`` to minimize ``sum s_j^2 / M_j``."""
    s = np.array(s, dtype=float)
    w = 1.0 / np.asarray(M, dtype=float)
    for chain in _chains(grid.n_x):
        s[chain] -= np.sum(s[chain] * w[chain]) / np.sum(w[chain])
    return s


def flux_energy(s, M) -> float:
    return float(np.sum(np.asarray(s) ** 2 / np.asarray(M)))


def hminus1_sq(psi, A: WeightedLaplacian, tol: float = MEAN_TOL) -> float:
    """Matrix-level squared weighted H^-1 norm ``psi^t A^+ psi``.

    Evaluated through the equivalent flux problem
    ``min { s^t diag(M)^-1 s : D^t s = psi }``, which stays accurate when the
    mobility spans many orders of magnitude.  No ``dx`` factor is applied.
    """
    grid = A.grid
    psi = check_field(psi, grid)
    comps = kernel_components(psi, grid)
    for mode, value in comps.items():
        if abs(value) > tol:
            raise HMinus1Error(f"argument has a {mode} component {value:.3e} in the kernel of A")
    basis = grid.kernel_basis()
    psi = psi - basis @ (basis.T @ psi)
    s = minimal_flux(particular_flux(psi, grid), A.mobility, grid)
    return flux_energy(s, A.mobility)


def hminus1_sq_from_flux(s, A: WeightedLaplacian) -> float:
    """Same norm as :func:`hminus1_sq` for ``psi = D^t s``, given the flux ``s`` directly."""
    return flux_energy(minimal_flux(s, A.mobility, A.grid), A.mobility)


def objective_phi(h, h_prev, A_prev: WeightedLaplacian, tau: float, flux=None) -> float:
    """Discrete semi-implicit objective ``sum |Dh| + ||h - h_prev||^2_{A^+} / (2 tau)``.

    When ``flux`` with ``D^t flux = h - h_prev`` is known (the inner solver produces
    one) it is used instead of reconstructing a flux from the displacement.
    """
    grid = A_prev.grid
    h = check_field(h, grid)
    h_prev = check_field(h_prev, grid)
    if abs(np.mean(h) - np.mean(h_prev)) > MEAN_TOL:
        raise HMinus1Error("h and h_prev must share their mean")
    if flux is None:
        dist = hminus1_sq(h - h_prev, A_prev)
    else:
        dist = hminus1_sq_from_flux(flux, A_prev)
    return discrete_tv(h, grid) + dist / (2.0 * tau)
