"""Regularized exponential mobility ``M(h) = exp(-phi_eps' * s(f))``.

``f`` is the minmod-limited slope of the height profile and ``s`` is either the
exact sign function (with ``sgn(0) = 0``) or ``tanh(slope * f)``.  The derivative
of the standard bump mollifier is sampled on the grid and convolved with the sign
field by a Riemann sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .grid import (
    GridSpec,
    backward_difference,
    check_field,
    circular_convolution,
    forward_difference,
    minmod,
)

EXACT_SIGN = "exact-sign"
SMOOTHED_SIGN = "smoothed-sign"
VARIANTS = (EXACT_SIGN, SMOOTHED_SIGN)

# exp() of anything larger than this is within a few decades of float overflow
EXPONENT_LIMIT = 700.0


class MobilityOverflowError(ArithmeticError):
    """The mobility exponent left the representable range."""

    def __init__(self, max_exponent: float):
        self.max_exponent = max_exponent
        super().__init__(
            f"mobility exponent reached |g| = {max_exponent:.6g} > {EXPONENT_LIMIT:g}; "
            "epsilon is too small for this grid"
        )


@lru_cache(maxsize=None)
def bump_normalization() -> float:
    """Constant ``c`` such that ``c * exp(-1 / (1 - x^2))`` has unit mass on (-1, 1)."""
    mass, _ = integrate.quad(
        lambda x: math.exp(-1.0 / (1.0 - x * x)), -1.0, 1.0, epsabs=1e-14, epsrel=1e-13
    )
    return 1.0 / mass


def bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    t = x[inside]
    out[inside] = bump_normalization() * np.exp(-1.0 / (1.0 - t * t))
    return out


def bump_derivative(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    t = x[inside]
    out[inside] = bump_normalization() * np.exp(-1.0 / (1.0 - t * t)) * (-2.0 * t / (1.0 - t * t) ** 2)
    return out


@dataclass(frozen=True)
class MollifierSpec:
    epsilon: float

    def __post_init__(self):
        if not (0.0 < self.epsilon < np.pi):
            raise ValueError(f"mollifier radius must lie in (0, pi), got {self.epsilon!r}")


@dataclass(frozen=True)
class MobilityConfig:
    mollifier: MollifierSpec
    variant: str = EXACT_SIGN
    slope: float = 10.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"mobility variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == SMOOTHED_SIGN and not self.slope > 0:
            raise ValueError(f"tanh slope must be positive, got {self.slope!r}")

    @classmethod
    def make(cls, epsilon: float, variant: str = EXACT_SIGN, slope: float = 10.0) -> "MobilityConfig":
        return cls(MollifierSpec(epsilon), variant, slope)


def sample_mollifier_derivative(spec: MollifierSpec, grid: GridSpec) -> np.ndarray:
    """Derivative kernel ``phi_eps'(x) = phi'(x / eps) / eps^2`` sampled at the nodes.

    Node offsets are wrapped into ``[-pi, pi)``.  The samples are shifted by their
    mean so the discrete kernel has exactly zero mass, which makes constant
    profiles map to ``M == 1`` exactly.
    """
    eps = spec.epsilon
    x = grid.x
    offsets = np.where(x >= np.pi, x - 2.0 * np.pi, x)
    kernel = bump_derivative(offsets / eps) / eps**2
    return kernel - kernel.mean()


def sign_field(h, grid: GridSpec, cfg: MobilityConfig) -> np.ndarray:
    f = minmod(forward_difference(h, grid), backward_difference(h, grid))
    if cfg.variant == EXACT_SIGN:
        return np.sign(f)
    return np.tanh(cfg.slope * f)


def mobility_exponent(h, grid: GridSpec, cfg: MobilityConfig, kernel=None, method="direct") -> np.ndarray:
    """The exponent ``g = phi_eps' * s(f)``, so that ``M = exp(-g)``."""
    if kernel is None:
        kernel = sample_mollifier_derivative(cfg.mollifier, grid)
    return circular_convolution(sign_field(h, grid, cfg), kernel, grid, method=method)


def compute_mobility(h, grid: GridSpec, cfg: MobilityConfig, kernel=None, method="direct") -> np.ndarray:
    """Per-node mobility for the profile ``h``.

    ``kernel`` may be passed to reuse a sampled derivative kernel across calls;
    ``method`` selects the convolution path ("direct" or "fft").
    Raises :class:`MobilityOverflowError` when ``|g|`` exceeds the exponent limit.
    """
    h = check_field(h, grid)
    g = mobility_exponent(h, grid, cfg, kernel, method)
    g_max = float(np.max(np.abs(g)))
    if g_max > EXPONENT_LIMIT:
        raise MobilityOverflowError(g_max)
    return np.exp(-g)


def reciprocal(M) -> np.ndarray:
    return 1.0 / np.asarray(M, dtype=float)
