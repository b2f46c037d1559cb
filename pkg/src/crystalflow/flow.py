"""Outer semi-implicit loop: mobility, weighted Laplacian, inner solve, diagnostics."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, centered_difference, l1_norm
from .initial import initial_profile
from .mobility import MobilityConfig, compute_mobility, reciprocal, sample_mollifier_derivative
from .pdhg import PdhgConfig, PrimalSolver, solve_inner
from .variational import WeightedLaplacian, assemble_weighted_laplacian, discrete_tv, tv_energy

log = logging.getLogger(__name__)

NONCONVERGENCE_POLICIES = ("abort", "warn")


class FlowError(RuntimeError):
    """A numerical failure during the outer loop; carries the step and partial trace."""

    def __init__(self, message: str, step: int, trace: "FlowTrace | None" = None):
        super().__init__(f"step {step}: {message}")
        self.step = step
        self.trace = trace


class StepBoundWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class FlowConfig:
    grid: GridSpec
    final_time: float
    n_t: int
    mobility: MobilityConfig
    pdhg: PdhgConfig = PdhgConfig()
    initial: str = "sine"
    snapshot_stride: int = 1
    on_nonconvergence: str = "abort"
    enforce_step_bound: bool = False

    def __post_init__(self):
        if not self.final_time > 0:
            raise ValueError(f"final time must be positive, got {self.final_time!r}")
        if int(self.n_t) != self.n_t or self.n_t < 1:
            raise ValueError(f"n_t must be a positive integer, got {self.n_t!r}")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 1:
            raise ValueError(f"snapshot stride must be a positive integer, got {self.snapshot_stride!r}")
        if self.on_nonconvergence not in NONCONVERGENCE_POLICIES:
            raise ValueError(f"on_nonconvergence must be one of {NONCONVERGENCE_POLICIES}")

    @property
    def tau(self) -> float:
        return self.final_time / self.n_t

    def time(self, n: int) -> float:
        return self.final_time * n / self.n_t


@dataclass
class StepRecord:
    n: int
    t: float
    tv_energy: float
    mob_l1: float
    mob_inv_l1: float
    inner_iters: int
    converged: bool
    phi_before: float
    phi_after: float
    step_bound: float = float("nan")
    max_dual_linf: float = 0.0
    mean: float = 0.0
    checkerboard: float = 0.0


@dataclass
class FlowTrace:
    config: FlowConfig
    records: list[StepRecord] = field(default_factory=list)
    snapshots: list[tuple[int, float, np.ndarray]] = field(default_factory=list)
    final: np.ndarray | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


@dataclass
class BoundCheck:
    estimate: float
    ratio: float
    converged: bool
    passed: bool

    @property
    def margin(self) -> float:
        return 1.0 / self.ratio if self.ratio > 0 else float("inf")


def estimate_step_operator_norm(A: WeightedLaplacian, iters: int = 50, rtol: float = 1e-6):
    """Power-iteration estimate of ``||A D^t D||_2``; returns ``(estimate, converged)``."""
    grid = A.grid

    def lap(v):
        return -centered_difference(centered_difference(v, grid), grid)

    def op(v):
        return A.apply(lap(v))

    def op_t(v):
        return lap(A.apply(v))

    v = np.random.default_rng(0).standard_normal(grid.n_x)
    v /= np.linalg.norm(v)
    est, converged = 0.0, False
    for _ in range(iters):
        w = op_t(op(v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, True
        new = float(np.sqrt(nw))
        v = w / nw
        if est > 0 and abs(new - est) <= rtol * new:
            est, converged = new, True
            break
        est = new
    return est, converged


def validate_config(cfg: FlowConfig, A: WeightedLaplacian) -> BoundCheck:
    """Check ``(tau/lam) ||A D^t D|| < 1``.

    When the power iteration does not settle, the check only passes with a
    factor-two margin.
    """
    est, converged = estimate_step_operator_norm(A)
    ratio = cfg.tau / cfg.pdhg.lam * est
    passed = ratio < 1.0 if converged else ratio < 0.5
    return BoundCheck(est, ratio, converged, passed)


def _checkerboard(h) -> float:
    return float(abs(np.mean(h * (-1.0) ** np.arange(h.size))))


class _Stepper:
    def __init__(self, cfg: FlowConfig):
        self.cfg = cfg
        self.kernel = sample_mollifier_derivative(cfg.mobility.mollifier, cfg.grid)

    def laplacian(self, h) -> WeightedLaplacian:
        M = compute_mobility(h, self.cfg.grid, self.cfg.mobility, kernel=self.kernel)
        return assemble_weighted_laplacian(M, self.cfg.grid)

    def bound(self, A, n):
        cfg = self.cfg
        check = validate_config(cfg, A)
        if not check.passed:
            msg = (f"(tau/lambda)||A D^t D|| = {check.ratio:.3e} >= 1 "
                   f"(estimate {check.estimate:.3e})")
            if cfg.enforce_step_bound or cfg.pdhg.solver == "identity":
                raise FlowError(msg, n)
            warnings.warn(f"step {n}: {msg}", StepBoundWarning, stacklevel=3)
        return check


def step_outer(h_n, cfg: FlowConfig, n: int = 0, stepper: _Stepper | None = None):
    """One semi-implicit step from ``h_n``; returns ``(h_next, A, report, bound_check)``."""
    stepper = stepper or _Stepper(cfg)
    A = stepper.laplacian(h_n)
    check = stepper.bound(A, n)
    solver = PrimalSolver(A, cfg.tau, cfg.pdhg.lam, cfg.pdhg.penalty, cfg.pdhg.solver)
    h_next, report = solve_inner(h_n, A, cfg.tau, cfg.pdhg, solver=solver)
    return h_next, A, report, check


def _record(cfg, n, h, A, iters, converged, phi_before, phi_after, check, max_dual) -> StepRecord:
    g = cfg.grid
    return StepRecord(
        n=n,
        t=cfg.time(n),
        tv_energy=tv_energy(h, g),
        mob_l1=l1_norm(A.mobility, g),
        mob_inv_l1=l1_norm(reciprocal(A.mobility), g),
        inner_iters=iters,
        converged=converged,
        phi_before=phi_before,
        phi_after=phi_after,
        step_bound=check.ratio if check is not None else float("nan"),
        max_dual_linf=max_dual,
        mean=float(np.mean(h)),
        checkerboard=_checkerboard(h),
    )


def evolve(cfg: FlowConfig, h0=None, progress=None) -> FlowTrace:
    """Run ``cfg.n_t`` outer steps and return the trace.

    ``h0`` overrides the configured initial profile (it is used as given).
    ``progress(record)`` is called after every step.  Failures raise
    :class:`FlowError` with the partial trace attached.
    """
    g = cfg.grid
    h = initial_profile(cfg.initial, g) if h0 is None else np.array(h0, dtype=float)
    trace = FlowTrace(cfg)
    stepper = _Stepper(cfg)
    try:
        A = stepper.laplacian(h)
    except ArithmeticError as exc:
        raise FlowError(str(exc), 0, trace) from exc
    tv0 = discrete_tv(h, g)
    trace.records.append(_record(cfg, 0, h, A, 0, True, tv0, tv0, None, 0.0))
    trace.snapshots.append((0, cfg.time(0), h.copy()))
    for n in range(cfg.n_t):
        try:
            check = stepper.bound(A, n)
            solver = PrimalSolver(A, cfg.tau, cfg.pdhg.lam, cfg.pdhg.penalty, cfg.pdhg.solver)
            h_next, report = solve_inner(h, A, cfg.tau, cfg.pdhg, solver=solver)
            if not report.converged and cfg.on_nonconvergence == "abort":
                raise FlowError(
                    f"inner solver stopped after {report.iterations} iterations "
                    f"with update norm {report.update_norm:.3e}", n)
            if not report.converged:
                log.warning("step %d: inner solver did not converge (update norm %.3e)",
                            n, report.update_norm)
            phi_before = discrete_tv(h, g)
            A_next = stepper.laplacian(h_next)
        except FlowError as exc:
            exc.trace = trace
            trace.final = h.copy()
            raise
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            trace.final = h.copy()
            raise FlowError(str(exc), n, trace) from exc
        h, A = h_next, A_next
        rec = _record(cfg, n + 1, h, A, report.iterations, report.converged,
                      phi_before, report.objective, check, report.max_dual_linf)
        trace.records.append(rec)
        if (n + 1) % cfg.snapshot_stride == 0 or n + 1 == cfg.n_t:
            trace.snapshots.append((n + 1, rec.t, h.copy()))
        if progress is not None:
            progress(rec)
    trace.final = h.copy()
    return trace
