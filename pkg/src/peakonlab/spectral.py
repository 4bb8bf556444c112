"""Isospectral matrix of a multipeakon state.

The matrix A with entries A[i, j] = p_j e^{-|q_i - q_j|/2} has eigenvalues
that are constants of the multipeakon flow and equal the asymptotic peakon
speeds. A factors as Lambda D with Lambda[i, j] = e^{-|q_i - q_j|/2}
symmetric positive definite and D = diag(p); writing B for the symmetric
square root of Lambda, the symmetric positive definite matrix B D B has the
same spectrum, so the eigenvalues are computed by cyclic Jacobi rotations on
B D B and are always real, positive and simple. Eigenvectors of A itself are
recovered as v = B w.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConditioningError",
    "ConvergenceError",
    "Spectrum",
    "peakon_matrix",
    "symmetric_eigen",
    "spectrum",
    "spectral_decomposition",
    "eigen_residual",
]


class ConditioningError(RuntimeError):
    """The kernel matrix lost positive definiteness (near-merged nodes)."""


class ConvergenceError(RuntimeError):
    """Jacobi sweeps failed to reduce the off-diagonal norm."""


def peakon_matrix(s):
    """Dense matrix A[i, j] = p_j e^{-|q_i - q_j|/2}."""
    diff = np.abs(s.q[:, None] - s.q[None, :])
    return np.exp(-0.5 * diff) * s.p[None, :]


def symmetric_eigen(M, max_sweeps=100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues sorted ascending and the matching orthonormal
    eigenvector columns. Convergence: off-diagonal Frobenius norm below
    1e-14 times the matrix norm within ``max_sweeps`` sweeps.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    n = M.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    scale = float(np.max(np.abs(M))) or 1.0
    if float(np.max(np.abs(M - M.T))) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (M + M.T)
    v = np.eye(n)
    norm = float(np.linalg.norm(a))
    if norm == 0.0:
        return np.zeros(n), v
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum(a**2) - np.sum(np.diag(a) ** 2)))
        if off < 1e-14 * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p] = rot_p
                a[:, q] = rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :] = rot_p
                a[q, :] = rot_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p] = rot_p
                v[:, q] = rot_q
    else:
        raise ConvergenceError(f"no convergence in {max_sweeps} Jacobi sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    w = w[order]
    v = v[:, order]
    # deterministic sign: largest-magnitude component of each vector positive
    for j in range(n):
        col = v[:, j]
        k = int(np.argmax(np.abs(col)))
        if col[k] < 0.0:
            v[:, j] = -col
    return w, v


@dataclass(frozen=True)
class Spectrum:
    """Sorted eigenvalues of the isospectral matrix (positive, simple)."""

    values: np.ndarray

    def __init__(self, values):
        values = np.asarray(values, dtype=float).reshape(-1).copy()
        if values.size:
            if not np.all(values > 0.0):
                raise ValueError("eigenvalues must be positive")
            if values.size > 1 and not np.all(np.diff(values) > 0.0):
                raise ValueError("eigenvalues must be strictly increasing")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    def to_dict(self):
        return {"lambda": list(map(float, self.values))}


def _sqrt_factor(s):
    diff = np.abs(s.q[:, None] - s.q[None, :])
    kernel = np.exp(-0.5 * diff)
    w, v = symmetric_eigen(kernel)
    if w[0] < 1e-13 * w[-1]:
        raise ConditioningError(
            "kernel matrix numerically loses positive definiteness "
            f"(eig ratio {w[0] / w[-1]:.3e}); nodes are nearly merged"
        )
    return (v * np.sqrt(w)) @ v.T


def spectral_decomposition(s):
    """Eigenvalues (ascending) and eigenvectors of the isospectral matrix."""
    n = len(s)
    if n == 0:
        return Spectrum(np.zeros(0)), np.zeros((0, 0))
    b = _sqrt_factor(s)
    sym = b @ np.diag(s.p) @ b
    sym = 0.5 * (sym + sym.T)
    w, wvec = symmetric_eigen(sym)
    return Spectrum(w), b @ wvec


def spectrum(s):
    """Eigenvalues of the isospectral matrix via its symmetrization."""
    return spectral_decomposition(s)[0]


def eigen_residual(s, lam, vec):
    """Max-norm residual ||A v - lam v|| of the discrete eigenrelation."""
    vec = np.asarray(vec, dtype=float).reshape(-1)
    if vec.size != len(s):
        raise ValueError("eigenvector length must match the state size")
    a = peakon_matrix(s)
    return float(np.max(np.abs(a @ vec - lam * vec))) if vec.size else 0.0
