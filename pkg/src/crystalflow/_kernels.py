"""Compiled inner loop for the flux-form PDHG iteration.

All stencils are the periodic centered difference ``(Df)_j = c (f_{j+1} - f_{j-1})``
with ``c = 1 / (2 dx)``; ``D^t = -D`` and ``D^t D = -D D``.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def band_solve(cb, b, out):
    """Solve ``U^t U x = b`` with ``U`` stored in LAPACK upper band form ``cb``."""
    u = cb.shape[0] - 1
    n = b.shape[0]
    for j in range(n):
        s = b[j]
        for i in range(max(0, j - u), j):
            s -= cb[u + i - j, j] * out[i]
        out[j] = s / cb[u, j]
    for i in range(n - 1, -1, -1):
        s = out[i]
        for j in range(i + 1, min(n - 1, i + u) + 1):
            s -= cb[u + i - j, j] * out[j]
        out[i] = s / cb[u, i]


@njit(cache=True)
def _diff(f, c, out):
    n = f.shape[0]
    out[0] = c * (f[1] - f[n - 1])
    for j in range(1, n - 1):
        out[j] = c * (f[j + 1] - f[j - 1])
    out[n - 1] = c * (f[0] - f[n - 2])


@njit(cache=True)
def pdhg_loop(cb, order, Dhn, c, inv_lam, sigma, delta, max_iter, h1, track,
              y, phi, q, q_prev, y_bar, erg_y, erg_phi):
    """Run PDHG on the displacement ``y = h - h^n`` until the update norm drops below ``delta``.

    ``y``, ``phi``, ``q`` carry the state in and out; ``y_bar`` receives the last
    extrapolated displacement and ``2 q - q_prev`` is a flux for it.
    Returns ``(iterations, update_norm, converged, max |phi|)``.
    """
    n = y.shape[0]
    t1 = np.empty(n)
    t2 = np.empty(n)
    rhs = np.empty(n)
    z = np.empty(n)
    y_new = np.empty(n)
    delta2 = delta * delta
    r2 = np.inf
    max_phi = 0.0
    m = 0
    converged = False
    while m < max_iter:
        # rhs = (1/lam) B y - (D D^t) phi, with B = D (D^t D) for h1 and B = D for l2
        _diff(y, c, t1)
        if h1:
            _diff(t1, c, t2)
            for j in range(n):
                t2[j] = -t2[j]
            _diff(t2, c, rhs)
        else:
            for j in range(n):
                rhs[j] = t1[j]
        _diff(phi, c, t1)
        _diff(t1, c, t2)
        for k in range(n):
            j = order[k]
            z[k] = inv_lam * rhs[j] + t2[j]
        band_solve(cb, z, t1)
        for k in range(n):
            q_prev[order[k]] = q[order[k]]
            q[order[k]] = t1[k]
        # y_new = D^t q = -D q
        _diff(q, c, y_new)
        for j in range(n):
            y_new[j] = -y_new[j]
            y_bar[j] = 2.0 * y_new[j] - y[j]
        _diff(y_bar, c, t1)
        r2 = 0.0
        for j in range(n):
            u = phi[j] + sigma * (Dhn[j] + t1[j])
            if u > 1.0:
                u = 1.0
            elif u < -1.0:
                u = -1.0
            a = abs(u)
            if a > max_phi:
                max_phi = a
            r2 += (y_new[j] - y[j]) ** 2 + (u - phi[j]) ** 2
            phi[j] = u
            y[j] = y_new[j]
        m += 1
        if track:
            for j in range(n):
                erg_y[j] += y[j]
                erg_phi[j] += phi[j]
        if r2 < delta2:
            converged = True
            break
    return m, np.sqrt(r2), converged, max_phi
