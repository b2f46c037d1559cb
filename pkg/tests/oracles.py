"""Reference implementations that share no code with the package."""

import numpy as np


def centered_matrix(n):
    dx = 2 * np.pi / n
    D = np.zeros((n, n))
    for j in range(n):
        D[j, (j + 1) % n] += 1 / (2 * dx)
        D[j, (j - 1) % n] -= 1 / (2 * dx)
    return D


def kernel_projector(n):
    """Orthonormal basis of the complement of span{1, alternating (even n)}."""
    K = [np.ones(n)]
    if n % 2 == 0:
        K.append((-1.0) ** np.arange(n))
    K = np.array(K).T
    Q, _ = np.linalg.qr(np.hstack([K, np.eye(n)]))
    return Q[:, K.shape[1]:n]


def primal_kkt(h_m, phi, h_n, M, tau, lam, penalty):
    """Minimize (1/2tau)|h-hn|^2_{A+} + phi.Dh + (1/2lam)|h-hm|^2_P with h-hn orthogonal to ker A."""
    n = h_n.size
    D = centered_matrix(n)
    A = D.T @ np.diag(M) @ D
    Ap = np.linalg.pinv(A, rcond=1e-12, hermitian=True)
    P = D.T @ D if penalty == "h1-dot" else np.eye(n)
    Z = kernel_projector(n)
    H = Z.T @ (Ap / tau + P / lam) @ Z
    rhs = Z.T @ (P @ (h_m - h_n)) / lam - Z.T @ (D.T @ phi)
    w = np.linalg.solve(H, rhs)
    return h_n + Z @ w


def dual_coordinatewise(phi_m, h_bar, sigma):
    """Maximize p*a - (p-b)^2/(2 sigma) over p in [-1, 1], one coordinate at a time."""
    n = h_bar.size
    a = centered_matrix(n) @ h_bar
    out = np.empty(n)
    for j in range(n):
        def obj(p):
            return p * a[j] - (p - phi_m[j]) ** 2 / (2 * sigma)
        cands = [-1.0, 1.0]
        stat = phi_m[j] + sigma * a[j]
        if -1.0 < stat < 1.0:
            cands.append(stat)
        out[j] = max(cands, key=obj)
    return out
