"""Projections and the two bundle subproblems.

The lower-bound problem is a linear program over the localizer and is
handed to HiGHS.  The prox-step has at most ``B + 2`` constraints and is
solved through its Lagrangian dual, whose inner minimization has a closed
form for the shipped (prox, set) pairs.  Semismooth Newton runs first, then
bound-constrained L-BFGS.  If the level set has no interior the dual
optimum runs off to infinity, and SLSQP on the primal takes over.  Projected
gradient ascent is the last resort.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import Bounds, linprog, minimize, nnls

from .core import (LOG_FLOOR, Box, Cut, EntropyProx, EuclideanProx, PieceBlock,
                   ProxSetup, Simplex)

log = logging.getLogger(__name__)

FEAS_TOL = 1e-8
GAP_TOL = 1e-8
MEMBER_TOL = 1e-10
MAX_DUAL_ITERS = 50_000
DIVERGENCE = 1e12


def project_box(x, lower, upper) -> np.ndarray:
    """Euclidean projection onto a box (componentwise clamp)."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > upper):
        raise ValueError("lower must not exceed upper")
    return np.clip(np.asarray(x, dtype=float), lower, upper)


def project_simplex(x) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum x = 1}`` by sort-and-threshold."""
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, x.size + 1)
    r = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[r] / (r + 1.0)
    return np.maximum(x - tau, 0.0)


def entropy_prox_map(g) -> np.ndarray:
    """``argmin_{x in simplex} <g, x> + sum x_i log x_i``, i.e. ``softmax(-g)``."""
    z = -np.asarray(g, dtype=float)
    z = z - z.max()
    w = np.exp(z)
    return w / w.sum()


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


# ---------------------------------------------------------------------------
# localizers

class LocalizerSet:
    """``X`` intersected with retained cut blocks and an optional prox-center
    halfspace.

    Every stored block reads ``block(x) <= 0`` (levels already folded in).
    Blocks are kept first-in first-out, at most `bundle_limit` of them; a
    multi-piece block occupies one slot.
    """

    def __init__(self, base, blocks: Sequence[PieceBlock] = (),
                 center_halfspace: Optional[PieceBlock] = None,
                 bundle_limit: Optional[int] = None):
        self.base = base
        self.bundle_limit = bundle_limit
        blocks = list(blocks)
        if bundle_limit is not None and len(blocks) > bundle_limit:
            raise ValueError("more cuts than the bundle limit allows")
        self.blocks = blocks
        self.center_halfspace = center_halfspace

    @property
    def dim(self) -> int:
        return self.base.dim

    def with_cut(self, block: PieceBlock, center_halfspace=None) -> "LocalizerSet":
        """New localizer with `block` appended (oldest pruned) and the
        prox-center halfspace replaced."""
        blocks = self.blocks + [block]
        if self.bundle_limit is not None:
            blocks = blocks[-self.bundle_limit:]
        return LocalizerSet(self.base, blocks, center_halfspace, self.bundle_limit)

    def constraints(self) -> list[PieceBlock]:
        out = list(self.blocks)
        if self.center_halfspace is not None:
            out.append(self.center_halfspace)
        return out

    def contains(self, x, tol: float = MEMBER_TOL) -> bool:
        if not self.base.contains(x, tol):
            return False
        return all(np.all(b.values(x) <= tol) for b in self.constraints())


def center_halfspace(prox: ProxSetup, x0, xk) -> Optional[PieceBlock]:
    """``{x : <grad d(x_k), x - x_k> >= 0}`` written as ``block(x) <= 0``,
    where ``d`` is the Bregman distance from `x0`.  None when trivial."""
    g = prox.omega_grad(xk) - prox.omega_grad(x0)
    if not np.any(g):
        return None
    return PieceBlock.affine(-g, float(g @ xk))


@dataclass
class SubproblemReport:
    minimizer: Optional[np.ndarray]
    optimal_value: float
    status: str
    dual_iterations: int = 0
    multipliers: Optional[np.ndarray] = None
    feasibility: float = 0.0
    duality_gap: float = 0.0
    converged: bool = True

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# ---------------------------------------------------------------------------
# lower-bound linear program

def _as_block(obj) -> PieceBlock:
    if isinstance(obj, PieceBlock):
        return obj
    if isinstance(obj, Cut):
        return obj.block()
    if hasattr(obj, "block"):
        return obj.block()
    raise TypeError(f"cannot use {type(obj).__name__} as a cut")


_HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def minimize_over(base, objective: PieceBlock,
                  constraints: Sequence[PieceBlock] = ()) -> SubproblemReport:
    """Minimize a piecewise-affine block over ``base`` intersected with
    ``{c(x) <= 0}`` for every constraint block, as one linear program."""
    n = base.dim
    blocks = [objective] + list(constraints)
    simplex = isinstance(base, Simplex)
    use_s = (not simplex) and any(np.any(b.l1) for b in blocks)
    epi = objective.size > 1 or (np.any(objective.l1) and not simplex)
    nv = n + (n if use_s else 0) + (1 if epi else 0)

    def rows(b: PieceBlock):
        a = np.zeros((b.size, nv))
        a[:, :n] = b.slopes
        off = b.offsets.copy()
        if simplex:
            off = off + b.l1
        elif use_s:
            a[:, n:2 * n] = b.l1[:, None]
        return a, off

    A_ub, b_ub = [], []
    c = np.zeros(nv)
    if epi:
        a, off = rows(objective)
        a[:, -1] = -1.0
        A_ub.append(a)
        b_ub.append(-off)
        c[-1] = 1.0
        const = 0.0
    else:
        a, off = rows(objective)
        c[:] = a[0]
        const = float(off[0])
    for b in constraints:
        a, off = rows(b)
        A_ub.append(a)
        b_ub.append(-off)
    if use_s:
        eye = np.eye(n)
        for sgn in (1.0, -1.0):
            a = np.zeros((n, nv))
            a[:, :n] = sgn * eye
            a[:, n:2 * n] = -eye
            A_ub.append(a)
            b_ub.append(np.zeros(n))
    bounds = []
    if simplex:
        bounds += [(0.0, None)] * n
        A_eq = np.zeros((1, nv))
        A_eq[0, :n] = 1.0
        b_eq = np.array([1.0])
    else:
        bounds += list(zip(base.lower, base.upper))
        A_eq = b_eq = None
    if use_s:
        bounds += [(0.0, None)] * n
    if epi:
        bounds += [(None, None)]
    res = linprog(c, A_ub=np.vstack(A_ub) if A_ub else None,
                  b_ub=np.concatenate(b_ub) if b_ub else None,
                  A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs",
                  options=_HIGHS)
    if res.status == 2:
        return SubproblemReport(None, math.inf, "infeasible")
    if res.status != 0:
        raise RuntimeError(f"lower-bound LP failed: {res.message}")
    x = np.asarray(res.x[:n], dtype=float)
    x = base.project(x) if isinstance(base, Box) else np.maximum(x, 0.0) / max(np.maximum(x, 0.0).sum(), 1e-300)
    value = float(res.fun) + const
    feas = max([0.0] + [float(np.max(b.values(x))) for b in constraints])
    return SubproblemReport(x, value, "optimal", int(getattr(res, "nit", 0)), feasibility=feas)


def solve_lower_bound(loc: LocalizerSet, cut: Union[Cut, PieceBlock]) -> SubproblemReport:
    """Minimum of the cut over the localizer; ``status='infeasible'`` when the
    localizer is empty (the lower bound is then ``+inf``)."""
    return minimize_over(loc.base, _as_block(cut), loc.constraints())


# ---------------------------------------------------------------------------
# prox-step through the Lagrangian dual

class _InnerMap:
    """Closed-form ``argmin_{x in X} d(x) + <lin, x> + T ||x||_1`` and the
    derivative of the minimizer with respect to the linear term."""

    def __init__(self, base, prox: ProxSetup, center):
        self.base = base
        self.prox = prox
        self.center = np.asarray(center, dtype=float)
        if isinstance(prox, EntropyProx):
            if not isinstance(base, Simplex):
                raise ValueError("entropy prox needs a simplex")
            self.mode = "entropy"
            self.w = np.log(np.maximum(self.center, LOG_FLOOR))
        elif isinstance(prox, EuclideanProx):
            self.mode = "box" if isinstance(base, Box) else "simplex"
            self.w = self.center
        else:
            raise ValueError(f"no closed-form inner map for {prox.name}")

    def __call__(self, lin, T=0.0) -> np.ndarray:
        v = self.w - lin
        if self.mode == "box":
            if T > 0:
                v = _soft(v, T)
            return np.clip(v, self.base.lower, self.base.upper)
        if self.mode == "simplex":
            return project_simplex(v)
        return entropy_prox_map(-v)

    def distance(self, x) -> float:
        return self.prox.bregman(x, self.center)

    def curvature(self, x, T=0.0, A=None) -> np.ndarray:
        """``A D A^T`` where ``D`` is the generalized Jacobian of the map."""
        if self.mode == "box":
            free = (x > self.base.lower) & (x < self.base.upper)
            if T > 0:
                free &= x != 0
            Af = A[:, free]
            return Af @ Af.T
        if self.mode == "simplex":
            s = x > 0
            As = A[:, s]
            m = As.sum(axis=1)
            return As @ As.T - np.outer(m, m) / max(s.sum(), 1)
        Ax = A @ x
        return (A * x) @ A.T - np.outer(Ax, Ax)


@dataclass
class _DualProblem:
    inner: _InnerMap
    A: np.ndarray
    b: np.ndarray
    tau: np.ndarray
    evals: int = 0
    scale: np.ndarray = field(default=None)

    def evaluate(self, mu):
        self.evals += 1
        lin = self.A.T @ mu
        T = float(self.tau @ mu) if self.tau.size else 0.0
        x = self.inner(lin, T)
        g = self.A @ x + self.b
        if np.any(self.tau):
            g = g + self.tau * np.abs(x).sum()
        theta = self.inner.distance(x) + float(mu @ g)
        return x, g, theta

    def effective(self, x):
        if np.any(self.tau) and self.inner.mode == "box":
            return self.A + np.outer(self.tau, np.sign(x))
        return self.A

    def done(self, mu, g):
        feas = float(np.max(g / self.scale, initial=0.0))
        # complementarity relative to the multiplier mass, so that large
        # multipliers do not demand residuals far below FEAS_TOL
        gap = abs(float(mu @ g)) / max(1.0, float(mu @ self.scale))
        return feas <= FEAS_TOL and gap <= GAP_TOL, feas, gap


def _newton(dp: _DualProblem, mu, max_iter: int = 40):
    """Semismooth Newton on the natural residual ``min(mu, -g(mu)) = 0``."""
    x, g, th = dp.evaluate(mu)
    phi = np.minimum(mu, -g)
    res = float(np.linalg.norm(phi))
    for _ in range(max_iter):
        ok, _, _ = dp.done(mu, g)
        if ok and np.all(mu >= 0):
            return mu, x, g, th, True
        act = mu > -g
        Aeff = dp.effective(x)
        step = np.zeros_like(mu)
        step[~act] = -mu[~act]
        if np.any(act):
            H = dp.inner.curvature(x, float(dp.tau @ mu), Aeff)
            rhs = g[act] + H[np.ix_(act, ~act)] @ mu[~act]
            Haa = H[np.ix_(act, act)]
            step[act] = np.linalg.lstsq(Haa, rhs, rcond=1e-13)[0]
        s = 1.0
        for _ in range(30):
            trial = mu + s * step
            xt, gt, tht = dp.evaluate(trial)
            rt = float(np.linalg.norm(np.minimum(trial, -gt)))
            if rt <= (1.0 - 1e-4 * s) * res or rt == 0.0:
                break
            s *= 0.5
        else:
            return mu, x, g, th, False
        mu, x, g, th, res = trial, xt, gt, tht, rt
        if res == 0.0:
            break
    mu = np.maximum(mu, 0.0)
    x, g, th = dp.evaluate(mu)
    ok, _, _ = dp.done(mu, g)
    return mu, x, g, th, ok


def _quasi_newton(dp: _DualProblem, mu, max_iter: int = 2000):
    """Bound-constrained L-BFGS on the dual, then a Newton polish.  Handles the
    thin level sets where a few multipliers grow large and the dual becomes
    badly conditioned."""
    def neg(m):
        _, g, th = dp.evaluate(m)
        return -th, -g

    r = minimize(neg, np.maximum(mu, 0.0), jac=True, method="L-BFGS-B",
                 bounds=[(0.0, None)] * mu.size,
                 options={"maxiter": max_iter, "ftol": 1e-16, "gtol": 1e-13, "maxcor": 20})
    m = np.maximum(r.x, 0.0)
    x, g, th = dp.evaluate(m)
    if dp.done(m, g)[0]:
        return m, x, g, th, True
    return _newton(dp, m)


def _primal_step(dp: _DualProblem, x0):
    """SLSQP on the primal.  Used when the level set has (almost) no interior:
    the dual optimum then sits at huge multipliers and dual methods stall."""
    inner = dp.inner
    prox, c, base = inner.prox, inner.center, inner.base
    gc = prox.omega_grad(c)
    cons = [{"type": "ineq", "fun": lambda x: -(dp.A @ x + dp.b), "jac": lambda x: -dp.A}]
    if isinstance(base, Simplex):
        bounds = Bounds(np.zeros(base.dim), np.full(base.dim, np.inf))
        cons.append({"type": "eq", "fun": lambda x: np.array([x.sum() - 1.0]),
                     "jac": lambda x: np.ones((1, x.size))})
    else:
        bounds = Bounds(base.lower, base.upper)
    r = minimize(lambda x: (prox.bregman(x, c), prox.omega_grad(x) - gc), base.project(x0),
                 jac=True, method="SLSQP", bounds=bounds, constraints=cons,
                 options={"ftol": 1e-15, "maxiter": 1000})
    x = base.project(r.x)
    return x, dp.A @ x + dp.b


def _kkt_multipliers(dp: _DualProblem, x, g):
    """Nonnegative least-squares multipliers for the rows active at `x`,
    and the relative stationarity residual on the free coordinates."""
    inner = dp.inner
    r = inner.prox.omega_grad(x) - inner.prox.omega_grad(inner.center)
    base = inner.base
    if isinstance(base, Simplex):
        free = x > 1e-12
        # the equality multiplier is free: split it into two signed columns
        extra = np.column_stack([np.ones(base.dim), -np.ones(base.dim)])
    else:
        free = (x > base.lower + 1e-12) & (x < base.upper - 1e-12)
        extra = np.zeros((base.dim, 0))
    act = g >= -1e-7 * dp.scale
    M = np.column_stack([dp.A[act].T, extra])[free]
    mu = np.zeros(dp.b.size)
    if M.shape[1] == 0 or not np.any(free):
        return mu, float(np.linalg.norm(r[free]))
    sol, res = nnls(M, -r[free])
    mu[act] = sol[:int(act.sum())]
    return mu, res / max(1.0, float(np.linalg.norm(r)))


def _fista(dp: _DualProblem, mu, max_iter: int, polish_every: int = 25):
    """Accelerated projected gradient ascent with backtracking and restart."""
    mu = np.maximum(mu, 0.0)
    x, g, th = dp.evaluate(mu)
    y, ty = mu.copy(), 1.0
    L = max(1e-8, float(np.linalg.norm(dp.A, 2) ** 2))
    xy, gy, thy = x, g, th
    it = 0
    while it < max_iter:
        it += 1
        while True:
            new = np.maximum(y + gy / L, 0.0)
            xn, gn, thn = dp.evaluate(new)
            d = new - y
            if thn >= thy + float(gy @ d) - 0.5 * L * float(d @ d) - 1e-14 * max(1.0, abs(thy)):
                break
            L *= 2.0
        if thn >= DIVERGENCE:
            return new, xn, gn, thn, it, "infeasible"
        ok, _, _ = dp.done(new, gn)
        if ok:
            return new, xn, gn, thn, it, "optimal"
        if thn < th:
            # restart momentum
            y, ty = mu.copy(), 1.0
            xy, gy, thy = x, g, th
            continue
        tn = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * ty * ty))
        y = new + ((ty - 1.0) / tn) * (new - mu)
        y = np.maximum(y, 0.0)
        mu, x, g, th, ty = new, xn, gn, thn, tn
        xy, gy, thy = dp.evaluate(y)
        L *= 0.9
        if it % polish_every == 0:
            m2, x2, g2, th2, ok2 = _newton(dp, mu)
            if ok2:
                return m2, x2, g2, th2, it, "optimal"
    return mu, x, g, th, it, "capped"


def prox_project(base, prox: ProxSetup, center, constraints: Sequence[PieceBlock],
                 max_iter: int = MAX_DUAL_ITERS) -> SubproblemReport:
    """``argmin d(x)`` over ``base`` subject to every block ``<= 0``, where
    ``d`` is the Bregman distance of `prox` from `center`."""
    center = np.asarray(center, dtype=float)
    inner = _InnerMap(base, prox, center)
    constraints = [c for c in constraints if c.size]
    if not constraints:
        x = inner(np.zeros(base.dim))
        return SubproblemReport(x, inner.distance(x), "optimal", 0, np.zeros(0))
    blk = PieceBlock.stack(constraints)
    # repeated cuts make the dual degenerate; solve with one copy of each row
    keep = np.sort(np.unique(np.column_stack([blk.slopes, blk.offsets, blk.l1]),
                             axis=0, return_index=True)[1])
    A, b, tau = blk.slopes[keep], blk.offsets[keep].copy(), blk.l1[keep].copy()
    if isinstance(base, Simplex) and np.any(tau):
        b = b + tau
        tau = np.zeros_like(tau)
    scale = np.maximum(1.0, np.abs(A).max(axis=1))
    dp = _DualProblem(inner, A, b, tau, scale=scale)
    mu = np.zeros(b.size)
    x, g, th = dp.evaluate(mu)
    ok, _, _ = dp.done(mu, g)
    status, iters = "optimal", 0
    if not ok:
        mu, x, g, th, ok = _newton(dp, mu)
        if not ok:
            # an empty constraint set makes the dual unbounded; certify it
            # directly rather than waiting for the ascent to diverge
            zero = PieceBlock(np.zeros((1, base.dim)), np.zeros(1), np.zeros(1))
            if minimize_over(base, zero, constraints).status == "infeasible":
                full = np.zeros(blk.size)
                full[keep] = mu
                return SubproblemReport(None, math.inf, "infeasible", dp.evals, full)
            mu, x, g, th, ok = _quasi_newton(dp, mu)
            if not ok and not np.any(tau):
                xp, gp = _primal_step(dp, x)
                feas = float(np.max(gp / scale, initial=0.0))
                if feas <= FEAS_TOL:
                    mu_p, stat = _kkt_multipliers(dp, xp, gp)
                    full = np.zeros(blk.size)
                    full[keep] = mu_p
                    return SubproblemReport(xp, inner.distance(xp), "optimal", dp.evals, full,
                                            feasibility=feas, duality_gap=stat,
                                            converged=stat <= 1e-6)
            if not ok:
                mu, x, g, th, iters, status = _fista(dp, mu, max_iter)
    ok, feas, gap = dp.done(mu, g)
    full = np.zeros(blk.size)
    full[keep] = mu
    if status == "infeasible":
        return SubproblemReport(None, math.inf, "infeasible", dp.evals, full)
    if status == "capped":
        log.warning("prox-step dual capped: feasibility %.2e, gap %.2e", feas, gap)
    return SubproblemReport(x, inner.distance(x), "optimal", dp.evals, full,
                            feasibility=feas, duality_gap=gap, converged=ok)


def solve_prox_step(loc: LocalizerSet, prox: ProxSetup, center, level_cut, level: float,
                    max_iter: int = MAX_DUAL_ITERS) -> SubproblemReport:
    """Bregman projection of `center` onto the localizer intersected with
    ``{level_cut(x) <= level}``."""
    cons = loc.constraints() + [_as_block(level_cut).shifted(level)]
    return prox_project(loc.base, prox, center, cons, max_iter=max_iter)
