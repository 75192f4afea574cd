"""Bilinear saddle structure ``f(x) = f_hat(x) + max_y <Ax, y>``, entropy
smoothing, and the uniform smoothing level method."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .abl import GapOutcome
from .apl import AplConfig, apl_constant, level_gap, run_outer
from .core import (Cut, OracleEval, ProxSetup, SolveContext, SolveResult, as_point,
                   default_prox)
from .eigen import apply_A, jacobi_eig, softmax_weights

POWER_TOL = 1e-8


class SaddleProblem:
    """``f(x) = <c, x> + c0 + F(x)`` with ``F(x) = max_{y in Y} <A x + b, y>``.

    ``kind='simplex'``: `A` is ``m x n`` and `offset` a length-m vector.
    ``kind='spectahedron'``: `A` is a stack ``(n, m, m)`` of symmetric
    matrices, `offset` the matrix ``A0``, and ``F`` is the largest
    eigenvalue of ``A0 + sum x_i A_i``.

    ``Y`` carries the entropy (or matrix entropy) prox with modulus 1 and
    size ``ln m``.  The constant offset plays the role of a linear ``-g_hat``.
    """

    sigma_v = 1.0

    def __init__(self, kind: str, A, offset=None, c=None, c0: float = 0.0):
        if kind not in ("simplex", "spectahedron"):
            raise ValueError(f"unknown dual set {kind!r}")
        self.kind = kind
        A = np.array(A, dtype=float)
        if kind == "simplex":
            if A.ndim != 2:
                raise ValueError("simplex kind needs an m x n matrix")
            self.m, self.n = A.shape
            self.offset = np.zeros(self.m) if offset is None else np.array(offset, dtype=float)
            if self.offset.shape != (self.m,):
                raise ValueError("offset must have length m")
        else:
            if A.ndim != 3 or A.shape[1] != A.shape[2]:
                raise ValueError("spectahedron kind needs a stack (n, m, m)")
            if not np.allclose(A, np.transpose(A, (0, 2, 1)), atol=1e-12, rtol=0):
                raise ValueError("matrices must be symmetric")
            self.n, self.m = A.shape[0], A.shape[1]
            off = np.zeros((self.m, self.m)) if offset is None else np.array(offset, dtype=float)
            if off.shape != (self.m, self.m) or not np.allclose(off, off.T, atol=1e-12, rtol=0):
                raise ValueError("A0 must be a symmetric m x m matrix")
            self.offset = 0.5 * (off + off.T)
            A = 0.5 * (A + np.transpose(A, (0, 2, 1)))
            self._stack = np.concatenate([self.offset[None], A], axis=0)
        self.A = A
        self.c = np.zeros(self.n) if c is None else np.array(c, dtype=float)
        self.c0 = float(c0)
        self._norms: dict = {}

    @property
    def D_v(self) -> float:
        """Size of ``Y`` under its entropy prox: ``ln m``."""
        return math.log(self.m)

    def f_hat(self, x) -> float:
        return float(self.c @ x) + self.c0

    # linear map and adjoint ------------------------------------------------
    def apply(self, x):
        """``A x`` without the offset."""
        x = np.asarray(x, dtype=float)
        if self.kind == "simplex":
            return self.A @ x
        return np.tensordot(x, self.A, axes=1)

    def adjoint(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.kind == "simplex":
            return self.A.T @ y
        return np.tensordot(self.A, y, axes=([1, 2], [0, 1]))

    def affine(self, x):
        """``A x + b`` (vector or symmetric matrix)."""
        if self.kind == "simplex":
            return self.A @ np.asarray(x, dtype=float) + self.offset
        return apply_A(self._stack, x)

    def spectrum(self, x):
        """Eigen-data of the dual argument: sorted values and a decomposition."""
        z = self.affine(x)
        if self.kind == "simplex":
            return z, None
        d = jacobi_eig(z)
        return d.values, d

    # operator norm -----------------------------------------------------------
    def op_norm(self, x_norm: str = "l1") -> float:
        """``max <A x, y>`` over ``||x|| <= 1`` and ``||y|| <= 1`` where ``Y``
        uses the l1 (simplex) or nuclear (spectahedron) norm.

        Exact for an l1 `x_norm`.  For the Euclidean x-norm on the simplex
        kind it is the largest row norm; on the spectahedron kind it is the
        certified power-iteration bound through the Frobenius norm.
        """
        if x_norm in self._norms:
            return self._norms[x_norm]
        if x_norm == "l1":
            if self.kind == "simplex":
                val = float(np.max(np.abs(self.A), initial=0.0))
            else:
                val = max((spectral_norm(Ai) for Ai in self.A), default=0.0)
        elif x_norm == "euclidean":
            if self.kind == "simplex":
                val = float(np.max(np.linalg.norm(self.A, axis=1), initial=0.0))
            else:
                val = power_norm(self.A.reshape(self.n, -1).T)[0]
        else:
            raise ValueError(f"unknown norm {x_norm!r}")
        self._norms[x_norm] = val
        return val


def spectral_norm(S) -> float:
    d = jacobi_eig(S)
    return float(np.max(np.abs(d.values), initial=0.0))


def power_norm(B, tol: float = POWER_TOL, max_iter: int = 10_000, seed: int = 0):
    """Largest singular value of `B` by power iteration on ``B^T B``.

    Returns ``(sigma, residual)``; the residual ``||B^T B v - s^2 v||``
    relative to ``s^2`` is driven below `tol`.
    """
    B = np.asarray(B, dtype=float)
    if not np.any(B):
        return 0.0, 0.0
    rng = np.random.default_rng(seed)
    v = rng.normal(size=B.shape[1])
    v /= np.linalg.norm(v)
    lam, res = 0.0, math.inf
    for _ in range(max_iter):
        w = B.T @ (B @ v)
        lam = float(v @ w)
        res = float(np.linalg.norm(w - lam * v)) / max(lam, 1e-300)
        nw = np.linalg.norm(w)
        if res <= tol:
            break
        v = w / nw
    return math.sqrt(max(lam, 0.0)), res


@dataclass(frozen=True)
class SmoothedEval:
    """``F_eta(x)``, its gradient ``A^*(y)`` and the maximizer ``y``."""
    value: float
    gradient: np.ndarray
    maximizer: np.ndarray
    eta: float


def eval_F(prob: SaddleProblem, x, spectrum=None) -> OracleEval:
    """Exact ``F(x)`` and the subgradient ``A^*(y)`` for a maximizing ``y``."""
    x = np.asarray(x, dtype=float)
    vals, d = spectrum if spectrum is not None else prob.spectrum(x)
    if prob.kind == "simplex":
        j = int(np.argmax(vals))
        return OracleEval(float(vals[j]), prob.A[j].copy())
    u = d.top_vector
    return OracleEval(float(d.values[0]), prob.adjoint(np.outer(u, u)))


def eval_F_eta(prob: SaddleProblem, x, eta: float, spectrum=None) -> SmoothedEval:
    """Entropy-smoothed ``F_eta(x) = eta log sum exp(z / eta) - eta ln m``
    over the entries (or eigenvalues) ``z`` of ``A x + b``."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    x = np.asarray(x, dtype=float)
    vals, d = spectrum if spectrum is not None else prob.spectrum(x)
    w, lse = softmax_weights(vals, eta)
    value = lse - eta * math.log(prob.m)
    if prob.kind == "simplex":
        y = w
    else:
        y = (d.vectors * w) @ d.vectors.T
    return SmoothedEval(value, prob.adjoint(y), y, eta)


class SaddleOracle:
    """First-order oracle for ``f = f_hat + F`` (for the black-box solvers)."""

    def __init__(self, prob: SaddleProblem):
        self.prob = prob

    def __call__(self, x) -> OracleEval:
        ev = eval_F(self.prob, x)
        return OracleEval(ev.value + self.prob.f_hat(x), ev.subgrad + self.prob.c)

    def value(self, x) -> float:
        vals, _ = self.prob.spectrum(x)
        return float(np.max(vals)) + self.prob.f_hat(np.asarray(x, dtype=float))


@dataclass
class UslConfig(AplConfig):
    """APL parameters plus the initial estimate `Q1` of ``D_v`` (``None``
    uses the exact ``ln m``)."""
    Q1: Optional[float] = None

    def __post_init__(self):
        super().__post_init__()
        if self.Q1 is not None and not self.Q1 > 0:
            raise ValueError("Q1 must be positive")


def smoothing_eta(theta: float, ub0: float, level: float, D_tilde: float) -> float:
    """``theta (ub0 - level) / (2 D_tilde)``."""
    return theta * (ub0 - level) / (2.0 * D_tilde)


def k_usl(delta0: float, D_tilde: float, norm_A: float, D_omega: float, beta: float,
          theta: float, policy: str = "polynomial", sigma_omega: float = 1.0,
          sigma_v: float = 1.0) -> int:
    """Worst-case iteration count of one USL gap-reduction call."""
    c = apl_constant(policy, 1.0)
    return math.ceil(2.0 * norm_A / (beta * theta * delta0)
                     * math.sqrt(c * D_omega * D_tilde / (sigma_omega * sigma_v)))


def delta_bar_F(norm_A: float, D_omega: float, D_v: float, sigma_omega: float = 1.0,
                sigma_v: float = 1.0) -> float:
    """``||A|| sqrt(D_omega D_v / (sigma_omega sigma_v))``; the initial gap is
    at most four times this."""
    return norm_A * math.sqrt(D_omega * D_v / (sigma_omega * sigma_v))


def nonsignificant_bound(D_v: float, Q1: float) -> int:
    """Maximum number of doubling phases: ``ceil(log2(D_v / Q1))``."""
    return max(0, math.ceil(math.log2(D_v / Q1)))


class _Evaluator:
    """Counts evaluations and reuses the spectrum of the last upper-bound
    candidate for the smoothed test."""

    def __init__(self, prob: SaddleProblem):
        self.prob = prob
        self.calls = 0
        self._last = (None, None)

    def spectrum(self, x):
        key = np.asarray(x, dtype=float).tobytes()
        if self._last[0] == key:
            return self._last[1]
        self.calls += 1
        sp = self.prob.spectrum(x)
        self._last = (key, sp)
        return sp

    def f(self, x) -> float:
        vals, _ = self.spectrum(x)
        return float(np.max(vals)) + self.prob.f_hat(x)

    def f_eta(self, x, eta) -> float:
        return eval_F_eta(self.prob, x, eta, self.spectrum(x)).value + self.prob.f_hat(x)

    def smoothed_cut(self, z, eta):
        s = eval_F_eta(self.prob, z, eta, self.spectrum(z))
        return Cut(np.array(z, dtype=float), s.value + self.prob.f_hat(z), s.gradient + self.prob.c)


def usl_gap(p, lb: float, D_tilde: float, cfg: UslConfig, prox: Optional[ProxSetup],
            prob: SaddleProblem, X, *, ub0: Optional[float] = None, ctx=None,
            phase_index: int = 1, evaluator: Optional[_Evaluator] = None) -> GapOutcome:
    """One USL gap-reduction call.  Either contracts the gap by ``q`` with
    ``D_plus = D_tilde`` or exits through the smoothed test with
    ``D_plus = 2 D_tilde``."""
    if not D_tilde > 0:
        raise ValueError("D_tilde must be positive")
    prox = prox if prox is not None else default_prox(X)
    ev = evaluator if evaluator is not None else _Evaluator(prob)
    ctx = ctx if ctx is not None else SolveContext("usl", ev)
    p = as_point(p, X.dim)
    f0 = ev.f(p) if ub0 is None else float(ub0)
    level = cfg.beta * lb + (1.0 - cfg.beta) * f0
    eta = smoothing_eta(cfg.theta, f0, level, D_tilde)

    def cut_at(z):
        return ev.smoothed_cut(z, eta).block()

    def smoothed_exit(xu, ub, lvl, ub_start):
        if ev.f_eta(xu, eta) <= lvl + 0.5 * cfg.theta * (ub_start - lvl):
            return "3b"
        return None

    out = level_gap(p, lb, f0, cfg, prox, X, cut_at, ev.f, ctx=ctx,
                    phase_index=phase_index, extra_exit=smoothed_exit)
    rec = out.phase
    rec.eta = eta
    rec.Q_estimate = D_tilde
    rec.significant = rec.exit_step != "3b"
    out.D_plus = 2.0 * D_tilde if rec.exit_step == "3b" else D_tilde
    return out


def usl_initial_bounds(ev: _Evaluator, prob: SaddleProblem, X, p0):
    """Minimize ``f_hat + F(p0) + <F'(p0), x - p0>`` over `X`."""
    p0 = as_point(p0, X.dim)
    sp = ev.spectrum(p0)
    e = eval_F(prob, p0, sp)
    g = e.subgrad + prob.c
    f0 = e.value + prob.f_hat(p0)
    p1 = X.linear_min(g, anchor=p0)
    lb1 = f0 + float(g @ (p1 - p0))
    f1 = ev.f(p1)
    if f0 < f1:
        return p0.copy(), f0, lb1
    return p1, f1, lb1


def usl_solve(p0, cfg: UslConfig, prox: Optional[ProxSetup], prob: SaddleProblem, X) -> SolveResult:
    """USL outer loop with automatic doubling of the ``D_v`` estimate."""
    prox = prox if prox is not None else default_prox(X)
    ev = _Evaluator(prob)
    state = {"Q": cfg.Q1 if cfg.Q1 is not None else prob.D_v}

    def start():
        p, ub, lb = usl_initial_bounds(ev, prob, X, p0)
        state["p1_ub_lb"] = (p.copy(), ub, lb)
        return p, ub, lb

    def gap_call(p, lb, ub, ctx, s):
        out = usl_gap(p, lb, state["Q"], cfg, prox, prob, X, ub0=ub, ctx=ctx,
                      phase_index=s, evaluator=ev)
        state["Q"] = out.D_plus
        return out

    res = run_outer("usl", p0, cfg, X, ev, start, gap_call)
    res.trace.meta = {"Q_final": state["Q"], "Q1": cfg.Q1 if cfg.Q1 is not None else prob.D_v,
                      "initial": state.get("p1_ub_lb"), "p0": as_point(p0, X.dim)}
    return res

