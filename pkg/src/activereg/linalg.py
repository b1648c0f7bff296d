"""Small dense linear algebra: spectral norm, SPD solves, Jacobi eigenvalues.

Matrices are plain 2-D float arrays. Dimensions here are tiny (model
dimensions up to a few dozen), so clarity wins over blocked algorithms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFinite, NotPositiveDefinite, TooLarge

POWER_MAX_ITER = 10_000
PIVOT_FLOOR = 1e-12


@dataclass(frozen=True)
class SpdSolveResult:
    solution: np.ndarray
    min_pivot: float


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite("matrix has non-finite entries")
    return a


def spectral_norm(a, tol: float = 1e-8) -> float:
    """Largest singular value of ``a`` by power iteration on ``a.T @ a``.

    The start vector is the normalized all-ones vector. Iteration stops when
    the eigen-residual of the Gram matrix drops below ``tol`` relative to the
    current Rayleigh quotient. If the iteration stalls, or lands below the
    largest Gram diagonal (a certificate that it missed the top eigenvector),
    the Jacobi oracle is used for matrices up to 64 columns.
    """
    if not 0 < tol <= 1e-3:
        raise ValueError("tol must lie in (0, 1e-3]")
    a = _as_matrix(a)
    if a.size == 0 or not np.any(a):
        return 0.0
    g = a.T @ a
    d = g.shape[0]
    diag_max = float(np.max(np.diag(g)))
    x = np.full(d, 1.0 / np.sqrt(d))
    rho = 0.0
    converged = False
    for _ in range(POWER_MAX_ITER):
        y = g @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            break
        rho = float(x @ y)
        if np.linalg.norm(y - rho * x) <= tol * rho:
            converged = True
            break
        x = y / ny
    if converged and rho >= diag_max * (1.0 - tol):
        return float(np.sqrt(rho))
    if d > 64:
        raise ArithmeticError("power iteration did not converge and matrix is too large for the oracle")
    return float(np.sqrt(max(eig_sym_oracle(g)[0], 0.0)))


def spd_solve(a, b, pivot_floor: float = PIVOT_FLOOR) -> SpdSolveResult:
    """Solve ``a x = b`` for symmetric positive-definite ``a``.

    Cholesky factorization with symmetric (diagonal) pivoting. A pivot at or
    below ``pivot_floor`` times the largest diagonal entry raises
    NotPositiveDefinite. ``b`` may be a vector or a matrix of right-hand sides.
    """
    a = _as_matrix(a)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if scale == 0.0 or not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * scale):
        if scale == 0.0:
            raise NotPositiveDefinite("zero matrix", min_pivot=0.0)
        raise ValueError("matrix is not symmetric")
    b = np.asarray(b, dtype=float)
    work = a.copy()
    perm = np.arange(n)
    L = np.zeros_like(work)
    ref = float(np.max(np.diag(work)))
    if ref <= 0.0:
        raise NotPositiveDefinite("non-positive diagonal", min_pivot=ref)
    min_pivot = np.inf
    for k in range(n):
        j = k + int(np.argmax(np.diag(work)[k:]))
        if j != k:
            work[[k, j]] = work[[j, k]]
            work[:, [k, j]] = work[:, [j, k]]
            L[[k, j], :k] = L[[j, k], :k]
            perm[[k, j]] = perm[[j, k]]
        piv = work[k, k]
        min_pivot = min(min_pivot, piv)
        if piv <= pivot_floor * ref:
            raise NotPositiveDefinite(f"pivot {piv:.3e} at step {k} below floor", min_pivot=float(piv))
        lkk = np.sqrt(piv)
        L[k, k] = lkk
        col = work[k + 1:, k] / lkk
        L[k + 1:, k] = col
        work[k + 1:, k + 1:] -= np.outer(col, col)
    # a[perm][:, perm] = L L^T
    rhs = b[perm]
    z = _forward(L, rhs)
    xp = _backward(L.T, z)
    x = np.empty_like(xp)
    x[perm] = xp
    return SpdSolveResult(solution=x, min_pivot=float(min_pivot))


def _forward(L, b):
    n = L.shape[0]
    z = np.zeros_like(b, dtype=float)
    for i in range(n):
        z[i] = (b[i] - L[i, :i] @ z[:i]) / L[i, i]
    return z


def _backward(U, b):
    n = U.shape[0]
    x = np.zeros_like(b, dtype=float)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - U[i, i + 1:] @ x[i + 1:]) / U[i, i]
    return x


def eig_sym_oracle(a, max_dim: int = 64, sweeps: int = 100) -> np.ndarray:
    """All eigenvalues of a symmetric matrix, descending, by cyclic Jacobi."""
    a = _as_matrix(a)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if n > max_dim:
        raise TooLarge(f"dimension {n} exceeds max_dim={max_dim}")
    m = 0.5 * (a + a.T)
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.tril(m, -1) ** 2))
        if off <= np.finfo(float).eps * max(np.linalg.norm(m), np.finfo(float).tiny):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = m[p, q]
                if apq == 0.0:
                    continue
                diff = m[q, q] - m[p, p]
                if abs(apq) <= 1e-300 * max(abs(diff), 1.0):
                    m[p, q] = m[q, p] = 0.0
                    continue
                theta = diff / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # theta^2 would overflow; tan of the small angle
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp = m[p, :].copy()
                rq = m[q, :].copy()
                m[p, :] = c * rp - s * rq
                m[q, :] = s * rp + c * rq
                cp = m[:, p].copy()
                cq = m[:, q].copy()
                m[:, p] = c * cp - s * cq
                m[:, q] = s * cp + c * cq
    return np.sort(np.diag(m))[::-1].copy()
