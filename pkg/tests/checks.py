"""Invariant checks on solver traces.  Each returns a list of violation
messages; an empty list means the run passed."""

import math

import numpy as np

from levelopt.abl import k_abl
from levelopt.apl import k_apl
from levelopt.usl import k_usl

TOL = 1e-9


def _scale(*vals):
    return max(1.0, *[abs(v) for v in vals if np.isfinite(v)])


def contraction(res, factor, significant_only=False):
    out = []
    for ph in res.trace.phases:
        if significant_only and not ph.significant:
            continue
        if ph.capped:
            out.append(f"phase {ph.phase_index} hit the iteration cap")
            continue
        lim = factor * ph.delta_start + TOL * _scale(ph.ub_start, ph.lb_start)
        if ph.delta_end > lim:
            out.append(f"phase {ph.phase_index}: {ph.delta_end:.3e} > {factor} * "
                       f"{ph.delta_start:.3e}")
    return out


def monotone_bounds(res):
    ub, lb = res.trace.column("ub"), res.trace.column("lb")
    out = []
    s = _scale(*ub[:1])
    if np.any(np.diff(ub) > TOL * s):
        out.append("upper bound increased")
    if np.any(np.diff(lb) < -TOL * s):
        out.append("lower bound decreased")
    return out


def brackets(res, f_star, tol=1e-8):
    if f_star is None:
        return []
    ub, lb = res.trace.column("ub"), res.trace.column("lb")
    s = _scale(f_star)
    bad = np.nonzero((lb > f_star + tol * s) | (ub < f_star - tol * s))[0]
    return [f"f* = {f_star} outside [lb, ub] at rows {bad[:5].tolist()}"] if bad.size else []


def abl_clustering(res, D_X):
    out = []
    for ph in res.trace.phases:
        for d in ph.diagnostics:
            if "cum_step_sq" in d and d["cum_step_sq"] > D_X ** 2 * (1 + 1e-9) + 1e-12:
                out.append(f"phase {ph.phase_index} k={d['k']}: "
                           f"{d['cum_step_sq']:.6e} > D_X^2 = {D_X ** 2:.6e}")
    return out


def apl_clustering(res, sigma=1.0):
    out = []
    for ph in res.trace.phases:
        for d in ph.diagnostics:
            if "cum_step_sq" not in d:
                continue
            lhs = 0.5 * sigma * d["cum_step_sq"]
            if lhs > d["d_omega"] + d["k"] * 1e-8:
                out.append(f"phase {ph.phase_index} k={d['k']}: {lhs:.6e} > "
                           f"{d['d_omega']:.6e}")
    return out


def abl_recursion(res, M, rho, lam):
    out = []
    for ph in res.trace.phases:
        for d in ph.diagnostics:
            if "step_sq" not in d:
                continue
            a = d["alpha"]
            err = M * (a * math.sqrt(d["step_sq"])) ** (1 + rho) / (1 + rho)
            rhs = (1 - lam * a) * d["delta_prev"] + err
            if d["delta"] > rhs + 1e-9 * _scale(d["ub"]):
                out.append(f"phase {ph.phase_index} k={d['k']}: {d['delta']:.3e} > {rhs:.3e}")
    return out


def apl_recursion(res, M, rho):
    out = []
    for ph in res.trace.phases:
        l = ph.level
        for d in ph.diagnostics:
            if "step_norm" not in d:
                continue
            a = d["alpha"]
            rhs = (1 - a) * (d["ub_prev"] - l) + M * (a * d["step_norm"]) ** (1 + rho) / (1 + rho)
            if d["ub"] - l > rhs + 1e-9 * _scale(d["ub"]):
                out.append(f"phase {ph.phase_index} k={d['k']}: {d['ub'] - l:.3e} > {rhs:.3e}")
    return out


def abl_iteration_bound(res, M, rho, D_X, lam, policy):
    out = []
    for ph in res.trace.phases:
        K = k_abl(ph.delta_start, M, rho, D_X, lam, policy)
        if ph.iterations > K:
            out.append(f"phase {ph.phase_index}: {ph.iterations} > K_ABL = {K}")
    return out


def apl_iteration_bound(res, M, rho, beta, theta, policy, sigma=1.0):
    out = []
    for ph in res.trace.phases:
        Omega = 2.0 * ph.meta["omega_radius"] / sigma
        K = k_apl(ph.delta_start, M, rho, Omega, beta, theta, policy)
        if ph.iterations > K:
            out.append(f"phase {ph.phase_index}: {ph.iterations} > K_APL = {K}")
    return out


def usl_iteration_bound(res, norm_A, beta, theta, policy, sigma=1.0):
    out = []
    for ph in res.trace.phases:
        K = k_usl(ph.delta_start, ph.Q_estimate, norm_A, ph.meta["omega_radius"], beta,
                  theta, policy, sigma)
        if ph.iterations > K:
            out.append(f"phase {ph.phase_index}: {ph.iterations} > K_USL = {K}")
    return out


# one line per acceptance criterion, printed in the pytest terminal summary
ACCEPTANCE_LOG = []


def report(number, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LOG.append(line)
    print(line)
    return ok
