"""Top-2 eigenpairs of S = A^T A by block power iteration.

S is never formed: each step applies A then A^T to an n-by-2 block, so one
iteration costs O(nnz(A)), which is O(mn) for a dense pattern. The block is
re-orthonormalised by Gram-Schmidt after every multiply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import NoModelError
from .graph import SparseMatrix

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10000
DEFAULT_GAP_FLOOR = 1e-9
INIT_SEED = 20100401


@dataclass(frozen=True, eq=False)
class EigenEstimate:
    lambda1: float
    lambda2: float
    authority: np.ndarray
    hub: np.ndarray
    iterations: int
    residual: float
    converged: bool = True
    degenerate: bool = False
    second: Optional[np.ndarray] = None
    second_residual: float = 0.0

    @property
    def gap(self) -> float:
        return self.lambda1 - self.lambda2


def eigengap(est: EigenEstimate) -> float:
    return max(est.lambda1 - est.lambda2, 0.0)


def _as_csr(A) -> sp.csr_matrix:
    if isinstance(A, SparseMatrix):
        return A.to_csr()
    if sp.issparse(A):
        return sp.csr_matrix(A, dtype=float)
    return sp.csr_matrix(np.asarray(A, dtype=float))


def _fix_sign(v: np.ndarray) -> np.ndarray:
    if v.size == 0:
        return v
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


def _filler(n: int, against: np.ndarray, salt: int) -> np.ndarray:
    """Deterministic unit vector orthogonal to ``against``."""
    rng = np.random.default_rng(INIT_SEED + salt)
    for _ in range(8):
        v = rng.standard_normal(n)
        v -= (against @ v) * against
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            return v / norm
    return np.zeros(n)


def initial_pair(n: int, seed: int = INIT_SEED) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, min(2, n))))
    return q


def gram_schmidt(Y: np.ndarray, salt: int = 0) -> np.ndarray:
    """Orthonormalise the (at most two) columns of ``Y`` in order.

    A second column that collapses onto the first (rank-deficient S) is
    replaced by a deterministic orthogonal filler so the block stays full rank.
    """
    Q = np.empty_like(Y)
    norm = np.linalg.norm(Y[:, 0])
    if norm == 0:
        raise NoModelError("iteration collapsed to the zero vector")
    Q[:, 0] = Y[:, 0] / norm
    if Y.shape[1] > 1:
        v = Y[:, 1] - (Q[:, 0] @ Y[:, 1]) * Q[:, 0]
        v -= (Q[:, 0] @ v) * Q[:, 0]
        vnorm = np.linalg.norm(v)
        if vnorm <= 1e-13 * max(norm, np.linalg.norm(Y[:, 1])):
            Q[:, 1] = _filler(Y.shape[0], Q[:, 0], salt)
        else:
            Q[:, 1] = v / vnorm
    return Q


def _start_block(n: int, init) -> np.ndarray:
    if init is None:
        return initial_pair(n)
    cols = [np.asarray(v, dtype=float).ravel() for v in init if v is not None]
    cols = [np.pad(v, (0, n - v.size)) if v.size < n else v[:n] for v in cols]
    cols = [v for v in cols if np.linalg.norm(v) > 0]
    if not cols:
        return initial_pair(n)
    X = np.column_stack(cols[:2])
    if X.shape[1] < min(2, n):
        x0 = X[:, 0] / np.linalg.norm(X[:, 0])
        X = np.column_stack([x0, _filler(n, x0, 1)])
    return gram_schmidt(X, salt=1)


def block_power_top2(A, init: Optional[Sequence[np.ndarray]] = None, tol: float = DEFAULT_TOL,
                     max_iter: Optional[int] = None,
                     gap_floor: float = DEFAULT_GAP_FLOOR) -> EigenEstimate:
    """Top two eigenpairs of A^T A plus the matching hub vector.

    Stops once the principal vector moves by at most ``tol`` between
    iterations and the second Rayleigh quotient moves by at most
    ``tol * lambda1``. ``init`` may carry previous authority vectors for a
    warm start; shorter vectors are zero-padded to the current width.
    An estimate whose relative eigengap is below ``gap_floor`` is flagged
    degenerate. Hitting ``max_iter`` returns the estimate with
    ``converged=False``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    max_iter = DEFAULT_MAX_ITER if max_iter is None else int(max_iter)
    if max_iter < 1:
        raise ValueError("max_iter must be positive")
    csr = _as_csr(A)
    if csr.nnz == 0 or not np.any(csr.data):
        raise NoModelError()
    csr_t = csr.T.tocsr()
    n = csr.shape[1]

    X = _start_block(n, init)
    prev_l2 = None
    converged = False
    k = 0
    for k in range(1, max_iter + 1):
        Y = csr_t @ (csr @ X)
        rayleigh = np.einsum("ij,ij->j", X, Y)
        Q = gram_schmidt(Y, salt=k)
        change = np.linalg.norm(Q[:, 0] - X[:, 0])
        l2_steady = True
        if Q.shape[1] > 1:
            l2_steady = prev_l2 is not None and abs(rayleigh[1] - prev_l2) <= tol * rayleigh[0]
            prev_l2 = rayleigh[1]
        X = Q
        if change <= tol and l2_steady:
            converged = True
            break

    authority = _fix_sign(X[:, 0])
    S_x = csr_t @ (csr @ authority)
    lambda1 = float(authority @ S_x)
    residual = float(np.linalg.norm(S_x - lambda1 * authority))
    if X.shape[1] > 1:
        second = _fix_sign(X[:, 1])
        S_y = csr_t @ (csr @ second)
        lambda2 = max(float(second @ S_y), 0.0)
        second_residual = float(np.linalg.norm(S_y - lambda2 * second))
    else:
        second = np.zeros(n)
        lambda2 = 0.0
        second_residual = 0.0
    hub = csr @ authority
    hub_norm = np.linalg.norm(hub)
    hub = _fix_sign(hub / hub_norm) if hub_norm > 0 else hub
    degenerate = (lambda1 - lambda2) <= gap_floor * lambda1
    return EigenEstimate(lambda1, lambda2, authority, hub, k, residual, converged,
                         degenerate, second, second_residual)


def first_element_scaling_top2(A, tol: float = 1e-12, max_iter: int = DEFAULT_MAX_ITER,
                               rel_zero: float = 1e-9):
    """Block power iteration normalised by each vector's first nonzero entry.

    Returns ``(factor1, factor2, iterations)``. At convergence the scaling
    factors approach the top two eigenvalues of A^T A. Entries smaller than
    ``rel_zero`` times the vector's max magnitude count as zero.
    """
    csr = _as_csr(A)
    if csr.nnz == 0:
        raise NoModelError()
    csr_t = csr.T.tocsr()
    X = initial_pair(csr.shape[1])
    factors = np.zeros(X.shape[1])
    for k in range(1, max_iter + 1):
        Y = csr_t @ (csr @ X)
        if Y.shape[1] > 1:
            Y[:, 1] -= (Y[:, 0] @ Y[:, 1]) / (Y[:, 0] @ Y[:, 0]) * Y[:, 0]
        new = np.empty_like(factors)
        for j in range(Y.shape[1]):
            col = Y[:, j]
            big = np.flatnonzero(np.abs(col) > rel_zero * np.abs(col).max())
            new[j] = col[big[0]]
            Y[:, j] = col / new[j]
        done = k > 1 and np.all(np.abs(new - factors) <= tol * abs(new[0]))
        factors, X = new, Y
        if done:
            break
    f2 = float(factors[1]) if factors.size > 1 else 0.0
    return float(factors[0]), f2, k


def dense_eig_oracle(M, max_sweeps: int = 100, max_dim: int = 64):
    """Full eigendecomposition of a small symmetric matrix by cyclic Jacobi.

    Returns ``(values, vectors)`` with values sorted descending and
    ``vectors[:, i]`` the unit eigenvector for ``values[i]``.
    """
    a = np.array(M, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("oracle needs a square matrix")
    d = a.shape[0]
    if d > max_dim:
        raise ValueError(f"oracle is capped at dimension {max_dim}, got {d}")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max(initial=0))):
        raise ValueError("oracle needs a symmetric matrix")
    a = (a + a.T) / 2
    v = np.eye(d)
    offdiag = ~np.eye(d, dtype=bool)
    scale = max(np.abs(a).max(initial=0.0), 1e-300)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a[offdiag])
        if off <= 1e-15 * scale * d:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    return values[order], v[:, order]
