"""Matrix kernels for the completion solvers.

SVD-based singular value soft-thresholding, 1-D forward-difference operators
and the Cholesky-factored ``(beta * D^T D + rho * I)`` solves used by the
smoothed ADMM.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


class SVDError(RuntimeError):
    pass


def svd(a: np.ndarray):
    """Thin SVD ``a = U @ diag(s) @ V.T``.

    Returns ``(U, s, V)`` with ``s`` nonincreasing.  LAPACK non-convergence is
    raised as :class:`SVDError`; there is no fallback driver.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise SVDError("matrix contains non-finite entries")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SVDError(f"SVD did not converge for a {a.shape[0]}x{a.shape[1]} matrix") from exc
    return u, s, vt.T


def svt(a: np.ndarray, threshold: float) -> np.ndarray:
    """Singular value soft-thresholding: shrink every singular value by
    ``threshold`` and clamp at zero."""
    if threshold < 0:
        raise ValueError(f"threshold must be nonnegative, got {threshold}")
    u, s, v = svd(a)
    s = np.maximum(s - threshold, 0.0)
    keep = s > 0
    # only the surviving triplets contribute
    return (u[:, keep] * s[keep]) @ v[:, keep].T


def nuclear_norm(a: np.ndarray) -> float:
    return float(np.sum(np.linalg.svd(np.asarray(a, dtype=float), compute_uv=False)))


def build_difference_operator(n: int) -> np.ndarray:
    """``(n-1) x n`` forward-difference matrix with rows ``(..., -1, +1, ...)``.

    No wraparound and no boundary row, so ``D.T @ D`` is the Laplacian of the
    path graph on ``n`` nodes.
    """
    if int(n) != n or n < 2:
        raise ValueError(f"difference operator needs n >= 2, got {n}")
    n = int(n)
    d = np.zeros((n - 1, n))
    idx = np.arange(n - 1)
    d[idx, idx] = -1.0
    d[idx, idx + 1] = 1.0
    return d


def path_laplacian(n: int) -> np.ndarray:
    """Graph Laplacian of the path on ``n`` nodes, built from degrees and
    adjacency rather than from a difference operator."""
    adj = np.zeros((n, n))
    idx = np.arange(n - 1)
    adj[idx, idx + 1] = 1.0
    adj[idx + 1, idx] = 1.0
    return np.diag(adj.sum(axis=1)) - adj


class RegularizedSolver:
    """Applies ``(beta * D^T D + rho * I)^{-1}`` column-wise.

    The matrix is factored once (Cholesky) at construction.  With
    ``beta == 0`` the solve degenerates to a division by ``rho``.
    """

    def __init__(self, d: np.ndarray, beta: float, rho: float):
        if rho <= 0:
            raise ValueError(f"rho must be positive, got {rho}")
        if beta < 0:
            raise ValueError(f"beta must be nonnegative, got {beta}")
        d = np.asarray(d, dtype=float)
        self.n = d.shape[1]
        self.beta = float(beta)
        self.rho = float(rho)
        self.matrix = self.beta * (d.T @ d) + self.rho * np.eye(self.n)
        if self.beta == 0.0:
            self._factor = None
        else:
            try:
                self._factor = scipy.linalg.cho_factor(self.matrix, lower=True)
            except np.linalg.LinAlgError as exc:
                raise np.linalg.LinAlgError(
                    f"Cholesky factorization failed for n={self.n}, beta={beta}, rho={rho}"
                ) from exc

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"right-hand side has {b.shape[0]} rows, solver expects {self.n}")
        if self._factor is None:
            return b / self.rho
        return scipy.linalg.cho_solve(self._factor, b)

    __call__ = solve


def precompute_solver(d: np.ndarray, beta: float, rho: float) -> RegularizedSolver:
    return RegularizedSolver(d, beta, rho)
