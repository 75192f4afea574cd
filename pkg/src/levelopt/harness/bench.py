"""Solver dispatch, the projected subgradient baseline and the benchmark
driver that writes traces and a JSON summary."""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..abl import AblConfig, abl_gap, abl_solve, initial_bounds
from ..apl import AplConfig, apl_gap, apl_solve
from ..composite import apl_composite_solve
from ..core import CountingOracle, RunTrace, SolveContext, SolveResult, as_point
from ..usl import UslConfig, usl_solve
from .instances import Instance, InstanceSpec, build_instance, lovasz_box

METHODS = ("abl", "apl", "apl-composite", "usl", "subgrad")
SCHEMA = 1


@dataclass
class SolverSettings:
    """Method parameters shared by the CLI and the bench driver."""
    eps: float = 1e-6
    beta: float = 0.5
    theta: float = 0.5
    lam: float = 0.75
    bundle: int = 10
    policy: str = "polynomial"
    Q1: Optional[float] = None
    max_iters: int = 5000
    max_phases: int = 500
    subgrad_iters: int = 2000

    def apl(self) -> AplConfig:
        return AplConfig(self.beta, self.theta, self.policy, self.bundle, self.eps,
                         self.max_iters, self.max_phases)

    def usl(self) -> UslConfig:
        return UslConfig(self.beta, self.theta, self.policy, self.bundle, self.eps,
                         self.max_iters, self.max_phases, Q1=self.Q1)

    def abl(self) -> AblConfig:
        return AblConfig(self.lam, self.policy, self.eps, self.max_iters, self.max_phases)


def subgradient_baseline(inst: Instance, iters: int, eps: float = 0.0) -> RunTrace:
    """Projected subgradient method.

    Step ``D_X / (M sqrt(k))`` along the normalized subgradient when Hoelder
    data is known, else ``1/sqrt(k)``.  The lower bound is the best minimum
    over `X` of a single linearization.  The final point and status go to
    ``trace.meta``.
    """
    counter = CountingOracle(inst.oracle)
    ctx = SolveContext("subgrad", counter)
    X = inst.X
    x = as_point(inst.p0, X.dim)
    scale = 1.0
    if inst.smoothness is not None:
        scale = inst.D_X / max(inst.smoothness.M, 1e-300)
    ub, lb, best = math.inf, -math.inf, x.copy()
    status = "iter_cap"
    for k in range(1, int(iters) + 1):
        ev = counter(x)
        if ev.value < ub:
            ub, best = float(ev.value), x.copy()
        g = ev.subgrad
        z = X.linear_min(g, anchor=x)
        lb = max(lb, float(ev.value) + float(g @ (z - x)))
        ctx.log(1, ub, lb, 0)
        if ub - lb <= eps:
            status = "converged"
            break
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            continue
        step = (scale if inst.smoothness is not None else 1.0) / math.sqrt(k)
        x = X.project(x - step * g / gn)
    ctx.trace.meta = {"x": best, "status": status, "ub": ub, "lb": lb}
    return ctx.trace


def _shrinking_solve(inst: Instance, method: str, s: SolverSettings) -> SolveResult:
    """Per-phase update of the Lovasz box ``|x_e| <= v - 1`` with ``v`` the
    best upper bound found so far (ABL and APL)."""
    counter = CountingOracle(inst.oracle)
    ctx = SolveContext(method, counter)
    n = inst.X.dim
    X = inst.X
    p, ub, lb = initial_bounds(counter, X, inst.p0)
    ctx.log(0, ub, lb, 0, advance=False)
    best_x, best_ub = p.copy(), ub
    cfg = s.abl() if method == "abl" else s.apl()
    status, phase = "converged", 0
    boxes = [float(X.upper[0])]
    while best_ub - lb > s.eps:
        if phase >= s.max_phases:
            status = "phase_cap"
            break
        phase += 1
        X = lovasz_box(best_ub, n)
        boxes.append(float(X.upper[0]))
        p = X.project(p)
        f_p = counter.value(p)
        if method == "abl":
            out = abl_gap(p, lb, cfg, counter, X, ub0=f_p, ctx=ctx, phase_index=phase)
        else:
            out = apl_gap(p, lb, cfg, inst.prox, counter, X, ub0=f_p, ctx=ctx,
                          phase_index=phase)
        ctx.trace.phases.append(out.phase)
        p, lb = out.p_plus, out.lb_plus
        if out.ub_plus < best_ub:
            best_ub, best_x = out.ub_plus, out.p_plus.copy()
        if out.phase.capped:
            status = "iter_cap"
            break
    ctx.trace.meta["box_half_widths"] = boxes
    return SolveResult(best_x, best_ub, lb, ctx.trace, status)


def solve_instance(inst: Instance, method: str, settings: Optional[SolverSettings] = None,
                   shrink: Optional[bool] = None) -> SolveResult:
    """Run one method on one instance."""
    s = settings if settings is not None else SolverSettings()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if shrink is None:
        shrink = bool(inst.meta.get("shrink", False))
    if shrink and (inst.spec is None or inst.spec.family != "lovasz_tiny"):
        raise ValueError("domain shrinking applies to lovasz_tiny instances")
    if shrink and method in ("abl", "apl"):
        return _shrinking_solve(inst, method, s)
    # the other methods keep the initial box |x_e| <= v0 - 1
    if method == "abl":
        return abl_solve(inst.p0, s.abl(), inst.oracle, inst.X)
    if method == "apl":
        return apl_solve(inst.p0, s.apl(), inst.prox, inst.oracle, inst.X)
    if method == "apl-composite":
        return apl_composite_solve(inst.p0, s.apl(), inst.prox, inst.inner, inst.psi, inst.X)
    if method == "usl":
        if inst.saddle is None:
            raise ValueError("usl needs an instance with saddle structure")
        return usl_solve(inst.p0, s.usl(), inst.prox, inst.saddle, inst.X)
    tr = subgradient_baseline(inst, s.subgrad_iters, s.eps)
    return SolveResult(tr.meta["x"], tr.meta["ub"], tr.meta["lb"], tr, tr.meta["status"])


def scaling_slope(epsilons: Sequence[float], iterations: Sequence[float]) -> float:
    """Least-squares slope of ``log(iterations)`` against ``log(eps)``."""
    e = np.log(np.asarray(epsilons, dtype=float))
    it = np.log(np.maximum(np.asarray(iterations, dtype=float), 1.0))
    if e.size < 2 or np.ptp(e) == 0:
        return math.nan
    return float(np.polyfit(e, it, 1)[0])


@dataclass
class RunSummary:
    instance: str
    method: str
    eps: float
    status: str
    ub: float
    lb: float
    gap: float
    iterations: int
    phases: int
    oracle_calls: int
    wall_s: float
    f_star: Optional[float] = None
    trace_file: Optional[str] = None


@dataclass
class BenchResult:
    runs: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"schema": SCHEMA,
                "runs": [vars(r) for r in self.runs],
                "slopes": {f"{k[0]}|{k[1]}": v for k, v in self.slopes.items()}}

    @property
    def all_converged(self) -> bool:
        return all(r.status == "converged" for r in self.runs)


def _one_run(spec: InstanceSpec, method: str, eps: float, settings: SolverSettings):
    inst = build_instance(spec)
    s = SolverSettings(**{**vars(settings), "eps": eps})
    t0 = time.perf_counter()
    res = solve_instance(inst, method, s)
    wall = time.perf_counter() - t0
    tr = res.trace
    row = RunSummary(inst.name, method, eps, res.status, res.ub, res.lb, res.gap,
                     tr.last.iter if len(tr) else 0, len(tr.phases),
                     tr.last.oracle_calls if len(tr) else 0, wall, inst.f_star)
    return row, tr


def run_bench(specs: Sequence[InstanceSpec], methods: Sequence[str], epsilons: Sequence[float],
              out_dir=None, settings: Optional[SolverSettings] = None,
              workers: int = 1) -> BenchResult:
    """Run every (instance, method, eps) combination.

    Writes ``trace_<i>_<method>_<j>.csv`` per run and ``summary.json`` into
    `out_dir` when given.  Cap exits are recorded in the status column.
    """
    settings = settings if settings is not None else SolverSettings()
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    jobs = [(i, spec, m, j, float(e)) for i, spec in enumerate(specs) for m in methods
            for j, e in enumerate(epsilons)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            outs = list(ex.map(lambda jb: _one_run(jb[1], jb[2], jb[4], settings), jobs))
    else:
        outs = [_one_run(spec, m, e, settings) for _, spec, m, _, e in jobs]
    result = BenchResult()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for (i, _, m, j, _), (row, tr) in zip(jobs, outs):
        key = (i, m, j)
        result.traces[key] = tr
        if out is not None:
            name = f"trace_{i}_{m}_{j}.csv"
            tr.to_csv(out / name)
            row.trace_file = name
        result.runs.append(row)
    if len(epsilons) > 1:
        for i in range(len(specs)):
            for m in methods:
                its = [result.traces[(i, m, j)].last.iter for j in range(len(epsilons))]
                result.slopes[(i, m)] = scaling_slope(epsilons, its)
    if out is not None:
        (out / "summary.json").write_text(json.dumps(result.summary(), indent=2, default=float))
    return result


def load_suite(text: str) -> tuple[list, list, list, SolverSettings]:
    """Parse a suite file: ``{"instances": [...], "methods": [...],
    "epsilons": [...], "settings": {...}}``."""
    d = json.loads(text)
    if not isinstance(d, dict):
        raise ValueError("suite must be a JSON object")
    specs = [InstanceSpec.from_dict(x) for x in d.get("instances", [])]
    methods = list(d.get("methods", []))
    eps = [float(e) for e in d.get("epsilons", [1e-3])]
    settings = SolverSettings(**d.get("settings", {}))
    return specs, methods, eps, settings
