"""Accelerated bundle-level method with a full-memory cutting-plane model."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (CountingOracle, Cut, EuclideanProx, PhaseRecord, SolveContext,
                   SolveResult, StepPolicy, as_point)
from .geometry import minimize_over, prox_project
from .core import PieceBlock

# relative slack below which a new upper-bound candidate is not taken
UB_NOOP = 1e-14


@dataclass
class AblConfig:
    """Parameters of the ABL method.

    `lam` is the per-phase contraction target.  The polynomial policy
    ``alpha_k = 2/(lam (k+2))`` needs ``lam`` in ``(2/3, 1]``.
    """
    lam: float = 0.75
    policy: str = "polynomial"
    epsilon: float = 1e-6
    max_iters: int = 2000
    max_phases: int = 500
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lam must lie in (0, 1)")
        if self.policy == "polynomial" and not 2.0 / 3.0 < self.lam <= 1.0:
            raise ValueError("the polynomial policy requires lam in (2/3, 1]")
        if self.policy not in ("polynomial", "recursive"):
            raise ValueError(f"unknown policy {self.policy!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def make_policy(self) -> StepPolicy:
        return StepPolicy.for_abl(self.policy, self.lam)


@dataclass
class GapOutcome:
    """Result of one gap-reduction call.  Unpacks as ``(p_plus, lb_plus, phase)``."""
    p_plus: np.ndarray
    lb_plus: float
    ub_plus: float
    phase: PhaseRecord
    D_plus: Optional[float] = None

    def __iter__(self):
        return iter((self.p_plus, self.lb_plus, self.phase))


def abl_constants(policy: str, lam: float, rho: float) -> tuple[float, float]:
    """``(c1, c2)`` with ``gamma_k <= c1 k^-2`` and
    ``gamma_k ||Gamma_k|| <= c2 k^{-(1+3 rho)/2}``."""
    if policy == "polynomial":
        return 6.0, 2.0 ** (3 - rho) / 3.0 ** ((1 - rho) / 2) * lam ** (-(1 + rho))
    if policy == "recursive":
        return 4.0 / lam ** 2, 4.0 / 3.0 ** ((1 - rho) / 2) * lam ** (-(1 + 3 * rho) / 2)
    raise ValueError(f"unknown policy {policy!r}")


def k_abl(delta0: float, M: float, rho: float, D_X: float, lam: float,
          policy: str = "polynomial") -> int:
    """Worst-case iteration count of one ABL gap-reduction call."""
    c1, c2 = abl_constants(policy, lam, rho)
    alpha1 = StepPolicy.for_abl(policy, lam).alpha1
    first = math.sqrt(2.0 * c1 * (1.0 - lam * alpha1) / lam)
    second = (2.0 * c2 * M * D_X ** (1 + rho) / ((1 + rho) * delta0)) ** (2.0 / (1 + 3 * rho))
    return math.ceil(first + second)


def abl_phase_bound(eps: float, M: float, rho: float, D_X: float, lam: float) -> int:
    """Worst-case number of ABL phases to reach a gap of `eps`."""
    ratio = M * D_X ** (1 + rho) / ((1 + rho) * eps)
    return math.ceil(max(0.0, math.log(ratio) / math.log(1.0 / lam))) if ratio > 0 else 0


def _value(oracle, x) -> float:
    return float(oracle.value(x)) if hasattr(oracle, "value") else float(oracle(x).value)


def abl_gap(p, lb: float, cfg: AblConfig, oracle, X, *, ub0: Optional[float] = None,
            ctx: Optional[SolveContext] = None, phase_index: int = 1) -> GapOutcome:
    """One ABL gap-reduction call from search point `p` and lower bound `lb`.

    Returns a point and lower bound whose gap is at most ``lam`` times the
    incoming gap ``f(p) - lb``.
    """
    p = as_point(p, X.dim)
    ctx = ctx if ctx is not None else SolveContext("abl")
    prox = EuclideanProx()
    policy = cfg.make_policy()
    ev0 = oracle(p)
    f0 = float(ev0.value) if ub0 is None else float(ub0)
    lam = cfg.lam
    x_prev = p.copy() if cfg.x0 is None else as_point(cfg.x0, X.dim)
    xu, ub, lbk = p.copy(), f0, float(lb)
    delta0 = ub - lbk
    cuts = [Cut.from_oracle(p, ev0).block()]
    rec = PhaseRecord(phase_index, ub_start=ub, lb_start=lbk)
    cum_step = 0.0
    while True:
        k = policy.k + 1
        if k > cfg.max_iters:
            rec.capped = True
            rec.exit_step = "cap"
            break
        a = policy.next()
        xl = (1.0 - a) * xu + a * x_prev
        cuts.append(Cut.from_oracle(xl, oracle(xl)).block())
        model = PieceBlock.stack(cuts)
        low = minimize_over(X, model)
        lbk = max(lbk, low.optimal_value)
        sub = low.dual_iterations
        diag = {"k": k, "alpha": a, "gamma": policy.gamma, "lb": lbk,
                "ub_prev": ub, "delta_prev": ub - rec.lb_start if k == 1 else rec.diagnostics[-1]["delta"]}
        if ub - lbk <= lam * delta0:
            # the lower bound alone already meets the target
            diag.update(delta=ub - lbk, exit=True)
            rec.diagnostics.append(diag)
            ctx.log(phase_index, ub, lbk, sub)
            rec.exit_step = "1"
            break
        level = lam * lbk + (1.0 - lam) * ub
        step = prox_project(X, prox, x_prev, [model.shifted(level)])
        sub += step.dual_iterations
        if not step.optimal:
            # the model exceeds the level everywhere, so f* >= level
            lbk = max(lbk, level)
            diag.update(delta=ub - lbk, level=level, exit=True)
            rec.diagnostics.append(diag)
            ctx.log(phase_index, ub, lbk, sub)
            rec.exit_step = "2"
            break
        xk = step.minimizer
        cand = a * xk + (1.0 - a) * xu
        fc = _value(oracle, cand)
        if fc < ub - UB_NOOP * max(1.0, abs(ub)):
            ub, xu = fc, cand
        d = xk - x_prev
        cum_step += float(d @ d)
        diag.update(level=level, step_sq=float(d @ d), cum_step_sq=cum_step,
                    delta=ub - lbk, ub=ub, cand_value=fc, prox_feasibility=step.feasibility,
                    prox_converged=step.converged)
        rec.diagnostics.append(diag)
        ctx.log(phase_index, ub, lbk, sub)
        x_prev = xk
        if ub - lbk <= lam * delta0:
            rec.exit_step = "4"
            break
    rec.iterations = policy.k
    rec.ub_end, rec.lb_end = ub, lbk
    rec.meta["x0"] = p if cfg.x0 is None else as_point(cfg.x0, X.dim)
    return GapOutcome(xu, lbk, ub, rec)


def initial_bounds(oracle, X, p0):
    """Outer step 0: minimize the linearization at `p0` over `X`.

    Returns ``(p1, ub1, lb1)``; `p0` is kept when it is the better point.
    """
    p0 = as_point(p0, X.dim)
    ev = oracle(p0)
    p1 = X.linear_min(ev.subgrad, anchor=p0)
    lb1 = float(ev.value) + float(ev.subgrad @ (p1 - p0))
    f1 = _value(oracle, p1)
    if float(ev.value) < f1:
        return p0.copy(), float(ev.value), lb1
    return p1, f1, lb1


def abl_solve(p0, cfg: AblConfig, oracle, X) -> SolveResult:
    """ABL outer loop: repeat gap-reduction calls until ``ub - lb <= epsilon``."""
    counter = CountingOracle(oracle)
    ctx = SolveContext("abl", counter)
    p, ub, lb = initial_bounds(counter, X, p0)
    ctx.log(0, ub, lb, 0, advance=False)
    status = "converged"
    s = 0
    while ub - lb > cfg.epsilon:
        if s >= cfg.max_phases:
            status = "phase_cap"
            break
        s += 1
        out = abl_gap(p, lb, cfg, counter, X, ub0=ub, ctx=ctx, phase_index=s)
        ctx.trace.phases.append(out.phase)
        p, lb, ub = out.p_plus, out.lb_plus, out.ub_plus
        if out.phase.capped:
            status = "iter_cap"
            break
    return SolveResult(p, ub, lb, ctx.trace, status)
