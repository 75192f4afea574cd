"""Accelerated prox-level method: fixed-level gap reduction with a
restricted-memory localizer and a general prox-function."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .abl import UB_NOOP, GapOutcome, _value, initial_bounds
from .core import (CountingOracle, Cut, PhaseRecord, PieceBlock, ProxSetup, SolveContext,
                   SolveResult, StepPolicy, as_point, bregman_radius, choose_prox_center,
                   default_prox)
from .geometry import LocalizerSet, center_halfspace, minimize_over, prox_project


def q_factor(beta: float, theta: float) -> float:
    """Guaranteed per-phase contraction ``1 - (1 - theta) min(beta, 1 - beta)``."""
    return 1.0 - (1.0 - theta) * min(beta, 1.0 - beta)


@dataclass
class AplConfig:
    beta: float = 0.5
    theta: float = 0.5
    policy: str = "polynomial"
    bundle_limit: int = 10
    epsilon: float = 1e-6
    max_iters: int = 5000
    max_phases: int = 500
    prox_center: Union[str, np.ndarray] = "p"

    def __post_init__(self):
        for name in ("beta", "theta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.policy not in ("polynomial", "recursive"):
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.bundle_limit < 1:
            raise ValueError("bundle_limit must be at least 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def q(self) -> float:
        return q_factor(self.beta, self.theta)

    def make_policy(self) -> StepPolicy:
        pol = StepPolicy.for_apl(self.policy)
        if pol.alpha1 != 1.0:
            raise ValueError("fixed-level methods need alpha_1 = 1")
        return pol


def apl_constant(policy: str, rho: float) -> float:
    """``c`` with ``gamma_k(1) ||Gamma_k(1, rho)|| <= c k^{-(1+3 rho)/2}``."""
    if policy == "polynomial":
        return 2.0 ** (1 + rho) * 3.0 ** (-(1 - rho) / 2)
    if policy == "recursive":
        return 4.0 / 3.0 ** ((1 - rho) / 2)
    raise ValueError(f"unknown policy {policy!r}")


def k_apl(delta0: float, M: float, rho: float, Omega: float, beta: float, theta: float,
          policy: str = "polynomial") -> int:
    """Worst-case iteration count of one APL gap-reduction call."""
    c = apl_constant(policy, rho)
    base = c * M * Omega ** ((1 + rho) / 2) / (beta * theta * (1 + rho) * delta0)
    return math.ceil(base ** (2.0 / (1 + 3 * rho)))


def apl_phase_bound(eps: float, M: float, rho: float, Omega: float, q: float) -> int:
    """Worst-case number of APL phases to reach a gap of `eps`."""
    ratio = M * Omega ** ((1 + rho) / 2) / ((1 + rho) * eps)
    return math.ceil(max(0.0, math.log(ratio) / math.log(1.0 / q))) if ratio > 0 else 0


def level_gap(p, lb: float, ub0: float, cfg: AplConfig, prox: ProxSetup, X,
              cut_at: Callable, value_at: Callable, *, ctx: SolveContext,
              phase_index: int = 1, extra_exit: Optional[Callable] = None) -> GapOutcome:
    """Fixed-level gap reduction shared by APL, its composite variant and USL.

    `cut_at(z)` returns the model piece block anchored at `z`; `value_at(x)`
    returns the objective used for the upper bound.
    `extra_exit(x_u, ub, level, ub_start)` may return an exit label after
    the upper-bound update.
    """
    p = as_point(p, X.dim)
    beta, theta = cfg.beta, cfg.theta
    f0, lb0 = float(ub0), float(lb)
    level = beta * lb0 + (1.0 - beta) * f0
    lb_target = level - theta * (level - lb0)
    ub_target = level + theta * (f0 - level)
    x0 = choose_prox_center(prox, X, p, cfg.prox_center)
    policy = cfg.make_policy()
    loc = LocalizerSet(X, bundle_limit=cfg.bundle_limit)
    xu, ub, lbk, x_prev = p.copy(), f0, lb0, x0.copy()
    rec = PhaseRecord(phase_index, ub_start=f0, lb_start=lb0, level=level)
    rec.meta.update(x0=x0, omega_radius=_radius(prox, X, x0))
    cum_step = 0.0
    while True:
        k = policy.k + 1
        if k > cfg.max_iters:
            rec.capped, rec.exit_step = True, "cap"
            break
        a = policy.next()
        xl = (1.0 - a) * xu + a * x_prev
        block = cut_at(xl)
        low = minimize_over(X, block, loc.constraints())
        h_low = low.optimal_value
        lbk = max(lbk, min(level, h_low))
        sub = low.dual_iterations
        diag = {"k": k, "alpha": a, "gamma": policy.gamma, "lb": lbk, "ub_prev": ub,
                "h_low": h_low, "n_blocks": len(loc.blocks)}
        if lbk >= lb_target:
            diag.update(exit=True)
            rec.diagnostics.append(diag)
            ctx.log(phase_index, ub, lbk, sub)
            rec.exit_step = "1"
            break
        step = prox_project(X, prox, x0, loc.constraints() + [block.shifted(level)])
        sub += step.dual_iterations
        if not step.optimal:
            # empty level set on the localizer: f* >= level
            lbk = max(lbk, level)
            diag.update(exit=True, prox_infeasible=True)
            rec.diagnostics.append(diag)
            ctx.log(phase_index, ub, lbk, sub)
            rec.exit_step = "1"
            break
        xk = step.minimizer
        cand = a * xk + (1.0 - a) * xu
        fc = value_at(cand)
        ub_prev = ub
        if fc < ub - UB_NOOP * max(1.0, abs(ub)):
            ub, xu = fc, cand
        d = xk - x_prev
        cum_step += float(d @ d) if prox.norm_tag == "euclidean" else prox.norm(d) ** 2
        diag.update(step_norm=prox.norm(d), cum_step_sq=cum_step,
                    d_omega=prox.bregman(xk, x0), ub=ub, cand_value=fc, ub_prev=ub_prev,
                    prox_feasibility=step.feasibility, prox_converged=step.converged,
                    block=block, xk=xk)
        rec.diagnostics.append(diag)
        ctx.log(phase_index, ub, lbk, sub)
        if ub <= ub_target:
            rec.exit_step = "3"
            break
        if extra_exit is not None:
            label = extra_exit(xu, ub, level, f0)
            if label:
                rec.exit_step = label
                break
        loc = loc.with_cut(block.shifted(level), center_halfspace(prox, x0, xk))
        x_prev = xk
    rec.iterations = policy.k
    rec.ub_end, rec.lb_end = ub, lbk
    return GapOutcome(xu, lbk, ub, rec)


def _radius(prox, X, x0) -> float:
    try:
        return bregman_radius(prox, X, x0)
    except ValueError:
        return math.nan


def oracle_cut(oracle) -> Callable:
    """Scalar cutting plane ``f(z) + <f'(z), x - z>`` as a one-piece block."""
    def cut_at(z) -> PieceBlock:
        return Cut.from_oracle(z, oracle(z)).block()
    return cut_at


def apl_gap(p, lb: float, cfg: AplConfig, prox: Optional[ProxSetup], oracle, X, *,
            ub0: Optional[float] = None, ctx: Optional[SolveContext] = None,
            phase_index: int = 1) -> GapOutcome:
    """One APL gap-reduction call; the outgoing gap is at most ``q`` times
    the incoming gap ``f(p) - lb``."""
    prox = prox if prox is not None else default_prox(X)
    ctx = ctx if ctx is not None else SolveContext("apl")
    if ub0 is None:
        ub0 = _value(oracle, p)
    return level_gap(p, lb, ub0, cfg, prox, X, oracle_cut(oracle),
                     lambda x: _value(oracle, x), ctx=ctx, phase_index=phase_index)


def run_outer(method: str, p0, cfg, X, counter, start, gap_call) -> SolveResult:
    """Outer loop shared by the fixed-level methods.

    `start()` gives ``(p1, ub1, lb1)``; ``gap_call(p, lb, ub, ctx, s)``
    runs one phase and returns a :class:`GapOutcome`.
    """
    ctx = SolveContext(method, counter)
    p, ub, lb = start()
    ctx.log(0, ub, lb, 0, advance=False)
    status = "converged"
    s = 0
    while ub - lb > cfg.epsilon:
        if s >= cfg.max_phases:
            status = "phase_cap"
            break
        s += 1
        out = gap_call(p, lb, ub, ctx, s)
        ctx.trace.phases.append(out.phase)
        p, lb, ub = out.p_plus, out.lb_plus, out.ub_plus
        if out.phase.capped:
            status = "iter_cap"
            break
    return SolveResult(p, ub, lb, ctx.trace, status)


def apl_solve(p0, cfg: AplConfig, prox: Optional[ProxSetup], oracle, X) -> SolveResult:
    """APL outer loop: repeat gap-reduction calls until ``ub - lb <= epsilon``."""
    prox = prox if prox is not None else default_prox(X)
    counter = CountingOracle(oracle)
    return run_outer(
        "apl", p0, cfg, X, counter,
        lambda: initial_bounds(counter, X, p0),
        lambda p, lb, ub, ctx, s: apl_gap(p, lb, cfg, prox, counter, X, ub0=ub,
                                          ctx=ctx, phase_index=s))
