"""Initial height profiles, sampled at the nodes and made mean-zero."""

from __future__ import annotations

import numpy as np

from .grid import GridSpec

KINDS = ("sine", "jump", "facet", "zero")


def _in(x, a, b):
    return (x >= a) & (x < b)


def raw_profile(kind: str, x) -> np.ndarray:
    """The piecewise formulas before mean subtraction; pieces are closed on the left."""
    x = np.asarray(x, dtype=float)
    pi = np.pi
    if kind == "sine":
        return np.sin(x)
    if kind == "jump":
        return np.where(_in(x, pi / 2, 3 * pi / 2), np.sin(2 * x), 0.0)
    if kind == "facet":
        h = np.zeros_like(x)
        rise = _in(x, pi / 2, 3 * pi / 4)
        top = _in(x, 3 * pi / 4, 5 * pi / 4)
        fall = _in(x, 5 * pi / 4, 3 * pi / 2)
        h[rise] = np.sin(2 * (x[rise] - pi / 2))
        h[top] = 1.0
        h[fall] = np.cos(2 * (x[fall] - 5 * pi / 4))
        return h
    if kind == "zero":
        return np.zeros_like(x)
    raise ValueError(f"unknown initial profile {kind!r}; expected one of {KINDS}")


def initial_profile(kind: str, grid: GridSpec) -> np.ndarray:
    h = raw_profile(kind, grid.x)
    return h - h.mean()
