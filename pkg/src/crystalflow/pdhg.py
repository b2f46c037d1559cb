"""Inner primal-dual hybrid gradient solver for one semi-implicit step.

Given ``h^n`` and the weighted Laplacian ``A`` built from its mobility, the
iteration

    h^(m+1)    = argmin (1/2tau)|h - h^n|^2_{A^+} + phi^(m).Dh + (1/2lam)|h - h^(m)|^2_P
    hbar^(m+1) = 2 h^(m+1) - h^(m)
    phi^(m+1)  = clip(phi^(m) + sigma D hbar^(m+1), -1, 1)

converges to the minimizer of ``sum |Dh| + (1/2tau)|h - h^n|^2_{A^+}``.  ``P`` is
``D^t D`` for the ``"h1-dot"`` penalty and the identity for ``"l2"``.

Two primal solvers are provided.  ``"identity"`` factorizes
``(tau/lam) A D^t D + I`` (or ``A + (lam/tau) I``) densely, exactly as written.
``"flux"`` writes ``h - h^n = D^t q`` and solves the symmetric positive definite
system ``(diag(M)^-1 / tau + D P D^t / lam) q = ...``, which stays well posed when
the mobility spans tens of orders of magnitude; it is banded and is what the
compiled loop uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .grid import GridSpec, centered_difference, check_field
from .variational import WeightedLaplacian, objective_phi

H1_DOT = "h1-dot"
L2 = "l2"
PENALTIES = (H1_DOT, L2)
SOLVERS = ("flux", "identity")
ENGINES = ("numba", "numpy")


@dataclass(frozen=True)
class PdhgConfig:
    lam: float = 500.0
    sigma: float = 5e-4
    delta: float = 5e-6
    max_iter: int = 200_000
    penalty: str = H1_DOT
    ergodic_tracking: bool = False
    solver: str = "flux"
    engine: str = "numba"

    def __post_init__(self):
        for name in ("lam", "sigma", "delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter!r}")
        if self.penalty not in PENALTIES:
            raise ValueError(f"penalty must be one of {PENALTIES}, got {self.penalty!r}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.solver == "identity" and self.engine == "numba":
            object.__setattr__(self, "engine", "numpy")


@dataclass
class PdhgState:
    h: np.ndarray
    phi: np.ndarray
    h_bar: np.ndarray
    m: int = 0
    sum_h: np.ndarray | None = None
    sum_phi: np.ndarray | None = None


@dataclass
class PdhgReport:
    iterations: int
    update_norm: float
    converged: bool
    objective: float
    max_dual_linf: float
    phi: np.ndarray = field(repr=False)
    flux: np.ndarray | None = field(default=None, repr=False)
    ergodic_h: np.ndarray | None = field(default=None, repr=False)
    ergodic_phi: np.ndarray | None = field(default=None, repr=False)


def _folded_order(n: int) -> np.ndarray:
    # 0, n-1, 1, n-2, ... turns a periodic band of half-width w into a plain band of width <= 2w
    order = np.empty(n, dtype=np.int64)
    order[0::2] = np.arange((n + 1) // 2)
    order[1::2] = n - 1 - np.arange(n // 2)
    return order


def _band_storage(H: sp.spmatrix, order: np.ndarray) -> np.ndarray:
    Hp = H.tocsr()[order][:, order].tocoo()
    u = int(np.max(np.abs(Hp.row - Hp.col))) if Hp.nnz else 0
    Hp = Hp.tocsr()
    n = Hp.shape[0]
    ab = np.zeros((u + 1, n))
    for d in range(u + 1):
        ab[u - d, d:] = Hp.diagonal(d)
    return ab


class PrimalSolver:
    """Primal update of the inner iteration, factorized once per outer step."""

    def __init__(self, A: WeightedLaplacian, tau: float, lam: float, penalty: str = H1_DOT,
                 method: str = "flux"):
        if penalty not in PENALTIES:
            raise ValueError(f"unknown penalty {penalty!r}")
        if method not in SOLVERS:
            raise ValueError(f"unknown primal solver {method!r}")
        self.A = A
        self.grid = A.grid
        self.tau = float(tau)
        self.lam = float(lam)
        self.penalty = penalty
        self.method = method
        D = self.grid.centered_matrix
        if method == "flux":
            P = D @ D @ D @ D if penalty == H1_DOT else -(D @ D)
            H = sp.diags(1.0 / (self.tau * A.mobility)) + P / self.lam
            self.order = _folded_order(self.grid.n_x)
            self.cb = sla.cholesky_banded(_band_storage(H, self.order), lower=False)
        else:
            Ad = A.matrix
            n = self.grid.n_x
            if penalty == H1_DOT:
                L = (D.T @ D).toarray()
                self._lu = sla.lu_factor((self.tau / self.lam) * Ad @ L + np.eye(n))
                self._L = L
            else:
                self._cho = sla.cho_factor(Ad + (self.lam / self.tau) * np.eye(n))
            self._A = Ad

    def flux(self, h_m, phi_m, h_n) -> np.ndarray:
        """Flux ``q`` with ``h^(m+1) - h^n = D^t q`` (flux solver only)."""
        if self.method != "flux":
            raise RuntimeError("flux is only available for the flux solver")
        g = self.grid
        y = np.asarray(h_m, dtype=float) - np.asarray(h_n, dtype=float)
        Dy = centered_difference(y, g)
        By = -centered_difference(centered_difference(Dy, g), g) if self.penalty == H1_DOT else Dy
        rhs = By / self.lam + centered_difference(centered_difference(phi_m, g), g)
        z = sla.cho_solve_banded((self.cb, False), rhs[self.order], check_finite=False)
        q = np.empty_like(z)
        q[self.order] = z
        return q

    def solve(self, h_m, phi_m, h_n) -> np.ndarray:
        h_m = np.asarray(h_m, dtype=float)
        phi_m = np.asarray(phi_m, dtype=float)
        h_n = np.asarray(h_n, dtype=float)
        if self.method == "flux":
            return h_n - centered_difference(self.flux(h_m, phi_m, h_n), self.grid)
        Dt_phi = -centered_difference(phi_m, self.grid)
        if self.penalty == H1_DOT:
            u = self._L @ h_m - self.lam * Dt_phi
            return sla.lu_solve(self._lu, (self.tau / self.lam) * (self._A @ u) + h_n)
        rhs = self._A @ (h_m - self.lam * Dt_phi) + (self.lam / self.tau) * h_n
        return sla.cho_solve(self._cho, rhs)


def primal_step_h1(h_m, phi_m, h_n, A: WeightedLaplacian, tau: float, lam: float,
                   method: str = "flux") -> np.ndarray:
    """Solve ``((tau/lam) A D^t D + I) h = (tau/lam) A (D^t D h_m - lam D^t phi_m) + h_n``."""
    return PrimalSolver(A, tau, lam, H1_DOT, method).solve(h_m, phi_m, h_n)


def primal_step_l2(h_m, phi_m, h_n, A: WeightedLaplacian, tau: float, lam: float,
                   method: str = "flux") -> np.ndarray:
    """Solve ``(A + (lam/tau) I) h = A (h_m - lam D^t phi_m) + (lam/tau) h_n``."""
    return PrimalSolver(A, tau, lam, L2, method).solve(h_m, phi_m, h_n)


def extrapolate(h_new, h_old) -> np.ndarray:
    return 2.0 * np.asarray(h_new, dtype=float) - np.asarray(h_old, dtype=float)


def dual_step(phi_m, h_bar, sigma: float, grid: GridSpec) -> np.ndarray:
    """Projected ascent step; the clamp is the prox of the indicator of ``|phi|_inf <= 1``."""
    u = np.asarray(phi_m, dtype=float) + sigma * centered_difference(h_bar, grid)
    return np.clip(u, -1.0, 1.0)


def dual_prox_l2ball(u) -> np.ndarray:
    """Projection onto the Euclidean unit ball, for the quadratic-energy variant."""
    u = np.asarray(u, dtype=float)
    return u / max(1.0, float(np.linalg.norm(u)))


def pdhg_iterate(state: PdhgState, h_n, solver: PrimalSolver, sigma: float) -> float:
    """Advance ``state`` by one iteration in place; returns the update norm."""
    h_new = solver.solve(state.h, state.phi, h_n)
    h_bar = extrapolate(h_new, state.h)
    phi_new = dual_step(state.phi, h_bar, sigma, solver.grid)
    r = float(np.sqrt(np.sum((h_new - state.h) ** 2) + np.sum((phi_new - state.phi) ** 2)))
    state.h, state.phi, state.h_bar = h_new, phi_new, h_bar
    state.m += 1
    if state.sum_h is not None:
        state.sum_h += h_new
        state.sum_phi += phi_new
    return r


def _solve_numpy(h_n, solver, cfg):
    n = h_n.size
    state = PdhgState(h_n.copy(), np.zeros(n), h_n.copy())
    if cfg.ergodic_tracking:
        state.sum_h, state.sum_phi = np.zeros(n), np.zeros(n)
    flux = None
    r, max_phi, converged = np.inf, 0.0, False
    q_prev = q = np.zeros(n)
    while state.m < cfg.max_iter:
        if solver.method == "flux":
            q_prev, q = q, solver.flux(state.h, state.phi, h_n)
        r = pdhg_iterate(state, h_n, solver, cfg.sigma)
        max_phi = max(max_phi, float(np.max(np.abs(state.phi))))
        if r < cfg.delta:
            converged = True
            break
    if solver.method == "flux":
        flux = 2.0 * q - q_prev
    return state, r, converged, max_phi, flux


def _solve_numba(h_n, solver, cfg):
    from ._kernels import pdhg_loop

    n = h_n.size
    g = solver.grid
    y, phi, q, q_prev, y_bar = (np.zeros(n) for _ in range(5))
    erg_y, erg_phi = np.zeros(n), np.zeros(n)
    m, r, converged, max_phi = pdhg_loop(
        solver.cb, solver.order, centered_difference(h_n, g), 1.0 / (2.0 * g.dx),
        1.0 / cfg.lam, cfg.sigma, cfg.delta, int(cfg.max_iter), cfg.penalty == H1_DOT,
        cfg.ergodic_tracking, y, phi, q, q_prev, y_bar, erg_y, erg_phi,
    )
    state = PdhgState(h_n + y, phi, h_n + y_bar, int(m))
    if cfg.ergodic_tracking:
        state.sum_h = erg_y + m * h_n
        state.sum_phi = erg_phi
    return state, float(r), bool(converged), float(max_phi), 2.0 * q - q_prev


def solve_inner(h_n, A: WeightedLaplacian, tau: float, cfg: PdhgConfig,
                solver: PrimalSolver | None = None):
    """Run the inner iteration from ``h^(0) = h^n``, ``phi^(0) = 0``.

    Returns ``(h_next, report)`` where ``h_next`` is the last extrapolated iterate.
    Non-convergence within ``cfg.max_iter`` is reported through
    ``report.converged`` rather than raised.
    """
    h_n = check_field(h_n, A.grid)
    if solver is None:
        solver = PrimalSolver(A, tau, cfg.lam, cfg.penalty, cfg.solver)
    if cfg.engine == "numba" and solver.method == "flux":
        state, r, converged, max_phi, flux = _solve_numba(h_n, solver, cfg)
    else:
        state, r, converged, max_phi, flux = _solve_numpy(h_n, solver, cfg)
    h_next = state.h_bar
    report = PdhgReport(
        iterations=state.m,
        update_norm=r,
        converged=converged,
        objective=objective_phi(h_next, h_n, A, tau, flux=flux),
        max_dual_linf=max_phi,
        phi=state.phi,
        flux=flux,
    )
    if cfg.ergodic_tracking and state.m > 0:
        report.ergodic_h = state.sum_h / state.m
        report.ergodic_phi = state.sum_phi / state.m
    return h_next, report
