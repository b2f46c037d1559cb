"""Refinement and penalization studies built on :func:`crystalflow.flow.evolve`."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .flow import FlowConfig, FlowError, evolve
from .grid import GridError, GridSpec, check_field, l1_norm
from .initial import initial_profile
from .mobility import SMOOTHED_SIGN, MobilityConfig
from .pdhg import H1_DOT, L2, PdhgConfig, PrimalSolver, solve_inner
from .flow import _Stepper

SPACE_SIZES = (16, 32, 64, 128, 256, 512)
TIME_STEPS = (5, 10, 20, 40, 80)
PENALTY_SIZES = (32, 64, 124, 250, 500, 750)


class StudyError(RuntimeError):
    def __init__(self, message: str, partial: "StudyResult"):
        super().__init__(message)
        self.partial = partial


@dataclass
class StudyResult:
    """Pairs of (refinement parameter, value) per variant plus a log-log fit.

    ``slope`` is the raw fitted exponent of value against parameter, so a
    first-order error decay shows up as ``slope = -1``.
    """

    name: str
    rows: list[tuple[float, float, str]] = field(default_factory=list)
    slope: float = float("nan")
    residual: float = float("nan")
    censored: dict[tuple[float, str], bool] = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def series(self, variant: str) -> tuple[np.ndarray, np.ndarray]:
        pts = sorted((p, v) for p, v, var in self.rows if var == variant)
        return np.array([p for p, _ in pts]), np.array([v for _, v in pts])

    @property
    def variants(self) -> list[str]:
        return list(dict.fromkeys(var for _, _, var in self.rows))

    @property
    def order(self) -> float:
        return -self.slope


def restrict_fine_to_coarse(h_fine, coarse: GridSpec) -> np.ndarray:
    h_fine = np.asarray(h_fine, dtype=float)
    if h_fine.ndim != 1 or h_fine.size != 2 * coarse.n_x:
        raise GridError(
            f"restriction needs a fine grid of exactly {2 * coarse.n_x} nodes, got {h_fine.shape}")
    return h_fine[::2].copy()


def l1_difference(a, b, grid: GridSpec) -> tuple[float, float]:
    """``(absolute, relative)`` dx-weighted L1 distance; relative is nan when ``b`` vanishes."""
    a = check_field(a, grid)
    b = check_field(b, grid)
    absolute = l1_norm(a - b, grid)
    denom = l1_norm(b, grid)
    return absolute, (absolute / denom if denom > 0 else float("nan"))


def relative_l1_error(a, b, grid: GridSpec) -> float:
    return l1_difference(a, b, grid)[1]


def fit_loglog_slope(pairs: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares line through ``(log x, log y)``; returns ``(slope, rms residual)``."""
    pts = np.asarray(pairs, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("need at least three (x, y) pairs")
    if np.any(~np.isfinite(pts)) or np.any(pts <= 0):
        raise ValueError("log-log fit needs finite positive values")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, icpt = np.polyfit(lx, ly, 1)
    res = ly - (slope * lx + icpt)
    return float(slope), float(np.sqrt(np.mean(res**2)))


def refinement_base(n_x: int = 256, n_t: int = 10, max_iter: int = 2_000_000) -> FlowConfig:
    """Setup used by both refinement studies: sine data, tanh sign, eps = 0.05, T = 1e-4."""
    return FlowConfig(
        grid=GridSpec(n_x),
        final_time=1e-4,
        n_t=n_t,
        mobility=MobilityConfig.make(0.05, SMOOTHED_SIGN, 10.0),
        pdhg=PdhgConfig(max_iter=max_iter),
        initial="sine",
    )


def _pairs_study(name, param_key, params, run, coarse_grid, on_pair=None) -> StudyResult:
    result = StudyResult(name)
    cache: dict[int, np.ndarray] = {}

    def final(p):
        if p not in cache:
            cache[p] = run(p)
        return cache[p]

    for p in params:
        try:
            fine, coarse = final(2 * p), final(p)
        except FlowError as exc:
            result.extras["failed"] = {param_key: p, "step": exc.step, "error": str(exc)}
            raise StudyError(f"{name}: run failed at {param_key}={p}: {exc}", result) from exc
        grid = coarse_grid(p)
        if fine.size != coarse.size:
            fine = restrict_fine_to_coarse(fine, grid)
        absolute, relative = l1_difference(coarse, fine, grid)
        result.rows.append((float(p), relative, "relative"))
        result.rows.append((float(p), absolute, "absolute"))
        if on_pair is not None:
            on_pair(p, relative, absolute)
    ps, errs = result.series("relative")
    if len(ps) >= 3 and np.all(errs > 0):
        result.slope, result.residual = fit_loglog_slope(list(zip(ps, errs)))
    return result


def space_refinement_study(base: FlowConfig, sizes: Sequence[int] = SPACE_SIZES,
                           on_pair: Callable | None = None) -> StudyResult:
    """Compare ``h(N_x)`` with ``h(2 N_x)`` restricted to the coarse nodes at the final time."""
    sizes = sorted(int(s) for s in sizes)

    def run(n):
        return evolve(replace(base, grid=GridSpec(n))).final

    return _pairs_study("space", "n_x", sizes, run, GridSpec, on_pair)


def time_refinement_study(base: FlowConfig, steps: Sequence[int] = TIME_STEPS,
                          on_pair: Callable | None = None) -> StudyResult:
    """Compare ``h(N_t)`` with ``h(2 N_t)`` on a fixed grid at the final time."""
    steps = sorted(int(s) for s in steps)

    def run(n_t):
        return evolve(replace(base, n_t=n_t)).final

    return _pairs_study("time", "n_t", steps, run, lambda _: base.grid, on_pair)


@dataclass(frozen=True)
class PenaltyVariant:
    name: str
    penalty: str
    lam: float
    sigma: float
    max_iter: int


DEFAULT_PENALTY_VARIANTS = (
    PenaltyVariant(H1_DOT, H1_DOT, 500.0, 5e-4, 2_000_000),
    PenaltyVariant(L2, L2, 5e-5, 5e-5, 20_000_000),
)


def penalty_base(n_x: int = 32) -> FlowConfig:
    """One outer step of size 1e-6 from sine data with the tanh sign and eps = 0.05."""
    return FlowConfig(
        grid=GridSpec(n_x),
        final_time=1e-6,
        n_t=1,
        mobility=MobilityConfig.make(0.05, SMOOTHED_SIGN, 10.0),
        initial="sine",
    )


def penalty_comparison_study(base: FlowConfig, sizes: Sequence[int] = PENALTY_SIZES,
                             variants: Sequence[PenaltyVariant] = DEFAULT_PENALTY_VARIANTS,
                             on_run: Callable | None = None) -> StudyResult:
    """Inner iteration counts of the first outer step for each penalization.

    Runs that hit ``max_iter`` are kept and flagged in ``censored``.  The
    first-step solutions are kept in ``extras["solutions"]`` keyed by
    ``(n_x, variant)``.
    """
    result = StudyResult("penalty")
    solutions = result.extras.setdefault("solutions", {})
    for n in sorted(int(s) for s in sizes):
        cfg = replace(base, grid=GridSpec(n))
        h0 = initial_profile(cfg.initial, cfg.grid)
        stepper = _Stepper(cfg)
        A = stepper.laplacian(h0)
        for v in variants:
            pcfg = replace(base.pdhg, lam=v.lam, sigma=v.sigma, max_iter=v.max_iter, penalty=v.penalty)
            solver = PrimalSolver(A, cfg.tau, pcfg.lam, pcfg.penalty, pcfg.solver)
            h1, report = solve_inner(h0, A, cfg.tau, pcfg, solver=solver)
            result.rows.append((float(n), float(report.iterations), v.name))
            result.censored[(float(n), v.name)] = not report.converged
            solutions[(n, v.name)] = h1
            if on_run is not None:
                on_run(n, v.name, report)
    return result
