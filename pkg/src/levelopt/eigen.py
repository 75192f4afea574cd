"""Dense symmetric eigenproblems, the affine matrix map and its adjoint."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

SYM_TOL = 1e-12
OFF_TOL = 1e-12
MAX_SWEEPS = 100
MAX_ORDER = 500


def as_symmetric(A) -> np.ndarray:
    """Validate and return a symmetric float matrix (exactly symmetrized)."""
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    asym = float(np.max(np.abs(A - A.T), initial=0.0))
    if asym > SYM_TOL * max(1.0, float(np.max(np.abs(A), initial=0.0))):
        raise ValueError(f"matrix is not symmetric (residual {asym:.2e})")
    return 0.5 * (A + A.T)


@dataclass(frozen=True)
class EigDecomp:
    """Eigenvalues in descending order with matching orthonormal columns."""
    values: np.ndarray
    vectors: np.ndarray
    sweeps: int = 0
    converged: bool = True

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T

    @property
    def top_vector(self) -> np.ndarray:
        return self.vectors[:, 0]


def _round_robin(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Rounds of disjoint index pairs covering every pair once (circle method)."""
    size = m + (m % 2)
    idx = list(range(size))
    rounds = []
    for _ in range(size - 1):
        p = np.array(idx[: size // 2])
        q = np.array(idx[size // 2:][::-1])
        keep = (p < m) & (q < m)
        lo, hi = np.minimum(p, q)[keep], np.maximum(p, q)[keep]
        rounds.append((lo, hi))
        idx = [idx[0]] + [idx[-1]] + idx[1:-1]
    return rounds


def _off_norm(A) -> float:
    off = A - np.diag(np.diag(A))
    return float(np.linalg.norm(off))


def jacobi_eig(A) -> EigDecomp:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Each sweep visits all pairs in round-robin order; pairs within a round
    are disjoint, so their rotations are applied together.  Stops when the
    off-diagonal Frobenius norm drops below ``1e-12 ||A||_F``.
    """
    A = as_symmetric(A)
    m = A.shape[0]
    if m > MAX_ORDER:
        raise ValueError(f"order {m} exceeds the supported {MAX_ORDER}")
    V = np.eye(m)
    target = OFF_TOL * float(np.linalg.norm(A))
    rounds = _round_robin(m) if m > 1 else []
    sweeps, converged = 0, _off_norm(A) <= target
    while not converged and sweeps < MAX_SWEEPS:
        sweeps += 1
        for p, q in rounds:
            apq = A[p, q]
            nz = np.abs(apq) > 0
            if not np.any(nz):
                continue
            p, q, apq = p[nz], q[nz], apq[nz]
            # t = tan of the rotation angle, the smaller root of t^2 + 2 tau t - 1
            with np.errstate(over="ignore", divide="ignore"):
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            Ap, Aq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = c * Ap - s * Aq
            A[:, q] = s * Ap + c * Aq
            Ap, Aq = A[p, :].copy(), A[q, :].copy()
            A[p, :] = c[:, None] * Ap - s[:, None] * Aq
            A[q, :] = s[:, None] * Ap + c[:, None] * Aq
            A[p, q] = 0.0
            A[q, p] = 0.0
            Vp, Vq = V[:, p].copy(), V[:, q].copy()
            V[:, p] = c * Vp - s * Vq
            V[:, q] = s * Vp + c * Vq
        converged = _off_norm(A) <= target
    if not converged:
        log.warning("Jacobi did not converge in %d sweeps", MAX_SWEEPS)
    vals = np.diag(A).copy()
    order = np.argsort(-vals, kind="stable")
    vals, V = vals[order], V[:, order]
    # sign convention: first nonzero component of each eigenvector positive
    for j in range(m):
        col = V[:, j]
        k = int(np.argmax(np.abs(col) > 1e-14))
        if col[k] < 0:
            V[:, j] = -col
    return EigDecomp(vals, V, sweeps, converged)


# ---------------------------------------------------------------------------
# affine matrix map

def _split(matrices):
    mats = np.asarray(matrices, dtype=float)
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2] or mats.shape[0] < 1:
        raise ValueError("matrices must be a stack (n+1, m, m) starting with A0")
    return mats[0], mats[1:]


def apply_A(matrices: Sequence, x) -> np.ndarray:
    """``A0 + sum_i x_i A_i`` for ``matrices = [A0, A1, ..., An]``."""
    A0, As = _split(matrices)
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != As.shape[0]:
        raise ValueError(f"dimension mismatch: {As.shape[0]} matrices, {x.size} weights")
    return A0 + np.tensordot(x, As, axes=1)


def adjoint_A(matrices: Sequence, Y) -> np.ndarray:
    """``(<A_1, Y>, ..., <A_n, Y>)`` in the Frobenius inner product."""
    _, As = _split(matrices)
    Y = np.asarray(Y, dtype=float)
    if Y.shape != As.shape[1:]:
        raise ValueError("Y has the wrong shape")
    return np.tensordot(As, Y, axes=([1, 2], [0, 1]))


def softmax_weights(values, eta: float) -> tuple[np.ndarray, float]:
    """Weights ``exp(v/eta)`` normalized, and ``eta log sum exp(v/eta)``."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    v = np.asarray(values, dtype=float)
    top = float(v.max())
    w = np.exp((v - top) / eta)
    total = float(w.sum())
    return w / total, top + eta * float(np.log(total))


def matrix_softmax(A, eta: float, decomp: EigDecomp | None = None):
    """Return ``(Y, lse)``: the spectral softmax ``Q diag(w) Q^T`` of `A` at
    temperature `eta` and ``eta log tr exp(A / eta)``."""
    d = decomp if decomp is not None else jacobi_eig(A)
    w, lse = softmax_weights(d.values, eta)
    Y = (d.vectors * w) @ d.vectors.T
    return Y, lse
