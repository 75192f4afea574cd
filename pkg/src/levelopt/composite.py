"""Composite objectives ``f(x) = Psi(phi(x))`` and the APL variant that cuts
with the support function ``Psi(phi(z) + phi'(z)(x - z))``."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .abl import _value
from .apl import AplConfig, level_gap, run_outer
from .core import (CountingOracle, Cut, OracleEval, PieceBlock, ProxSetup, SolveResult,
                   as_point, default_prox)
from .geometry import minimize_over

KINDS = ("identity", "max_of_m", "sum_of_two", "linear_plus_l1")


@dataclass(frozen=True)
class PsiTemplate:
    """Outer map ``Psi``.

    * ``identity``: ``Psi(y) = y_1``
    * ``max_of_m``: ``Psi(y) = max_i y_i``
    * ``sum_of_two``: ``Psi(y) = y_1 + y_2``
    * ``linear_plus_l1``: ``Psi(y) = y_1 + reg ||x||_1`` where the l1 term is
      kept exact instead of being linearized

    All four are nondecreasing in every component and have ``M0 = 1``.
    """
    kind: str = "identity"
    m: int = 1
    reg: float = 0.0
    monotone_components: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown template {self.kind!r}")
        want = {"identity": 1, "sum_of_two": 2, "linear_plus_l1": 1}.get(self.kind)
        if want is not None and self.m != want:
            raise ValueError(f"{self.kind} needs m = {want}")
        if self.m < 1:
            raise ValueError("m must be positive")
        if self.kind == "linear_plus_l1" and self.reg < 0:
            raise ValueError("reg must be nonnegative")
        if not self.monotone_components:
            object.__setattr__(self, "monotone_components", tuple(range(self.m)))

    @classmethod
    def identity(cls):
        return cls("identity", 1)

    @classmethod
    def max_of(cls, m: int):
        return cls("max_of_m", int(m))

    @classmethod
    def sum_of_two(cls):
        return cls("sum_of_two", 2)

    @classmethod
    def linear_plus_l1(cls, reg: float):
        return cls("linear_plus_l1", 1, float(reg))

    @property
    def M0(self) -> float:
        return 1.0

    def __call__(self, y, x=None) -> float:
        y = np.asarray(y, dtype=float)
        if self.kind == "max_of_m":
            return float(np.max(y))
        if self.kind == "sum_of_two":
            return float(y[0] + y[1])
        if self.kind == "linear_plus_l1":
            return float(y[0]) + self.reg * float(np.abs(np.asarray(x, dtype=float)).sum())
        return float(y[0])

    def tilde_M(self, Ms: Sequence[float]) -> float:
        """Directional growth of Psi along ``(M_1, ..., M_m)``."""
        Ms = np.asarray(Ms, dtype=float)
        if self.kind == "max_of_m":
            return float(Ms.max())
        if self.kind == "sum_of_two":
            return float(Ms.sum())
        return float(Ms[0])


class InnerOracle:
    """Inner map ``phi``: ``fun(x)`` gives the m values and ``jac(x)`` the
    ``m x n`` matrix of their subgradients."""

    def __init__(self, fun: Callable, jac: Callable, m: int):
        self.fun = fun
        self.jac = jac
        self.m = int(m)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        vals = np.asarray(self.fun(x), dtype=float).reshape(-1)
        J = np.asarray(self.jac(x), dtype=float).reshape(self.m, -1)
        if vals.size != self.m or J.shape[1] != x.size:
            raise ValueError("inner oracle output has the wrong shape")
        return vals, J

    def values(self, x) -> np.ndarray:
        return np.asarray(self.fun(np.asarray(x, dtype=float)), dtype=float).reshape(-1)


@dataclass(frozen=True)
class CompositeCut:
    """``h(z, x) = Psi(phi(z) + J (x - z))``."""
    anchor: np.ndarray
    phi: np.ndarray
    jac: np.ndarray
    psi: PsiTemplate

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return self.psi(self.phi + self.jac @ (x - self.anchor), x)

    def block(self) -> PieceBlock:
        z, kind = self.anchor, self.psi.kind
        if kind == "max_of_m":
            return PieceBlock(self.jac.copy(), self.phi - self.jac @ z, np.zeros(self.phi.size))
        if kind == "sum_of_two":
            return Cut(z, float(self.phi.sum()), self.jac.sum(axis=0)).block()
        b = Cut(z, float(self.phi[0]), self.jac[0].copy()).block()
        if kind == "linear_plus_l1":
            return PieceBlock(b.slopes, b.offsets, np.full(1, self.psi.reg))
        return b

    @property
    def is_linear(self) -> bool:
        return self.psi.kind in ("identity", "sum_of_two")

    def scalar(self) -> Cut:
        """The cut as a plain cutting plane (linear templates only)."""
        if self.psi.kind == "sum_of_two":
            return Cut(self.anchor, float(self.phi.sum()), self.jac.sum(axis=0))
        return Cut(self.anchor, float(self.phi[0]), self.jac[0].copy())


def support_cut(z, inner: InnerOracle, psi: PsiTemplate) -> CompositeCut:
    """Support-function cut of ``Psi o phi`` anchored at `z`."""
    z = np.array(z, dtype=float)
    vals, J = inner(z)
    if vals.size != psi.m:
        raise ValueError("inner oracle and template disagree on m")
    return CompositeCut(z, vals, J, psi)


class CompositeObjective:
    """``f = Psi o phi`` with oracle-style access for the other solvers."""

    def __init__(self, inner: InnerOracle, psi: PsiTemplate):
        self.inner = inner
        self.psi = psi

    def value(self, x) -> float:
        return self.psi(self.inner.values(x), x)

    def __call__(self, x) -> OracleEval:
        """Value and one subgradient (chain rule through the active piece)."""
        x = np.asarray(x, dtype=float)
        vals, J = self.inner(x)
        kind = self.psi.kind
        if kind == "max_of_m":
            g = J[int(np.argmax(vals))]
        elif kind == "sum_of_two":
            g = J.sum(axis=0)
        else:
            g = J[0].copy()
            if kind == "linear_plus_l1":
                g = g + self.psi.reg * np.sign(x)
        return OracleEval(self.psi(vals, x), g)


class _InnerCounter:
    def __init__(self, inner):
        self.inner = inner
        self.calls = 0
        self.m = inner.m

    def __call__(self, x):
        self.calls += 1
        return self.inner(x)

    def values(self, x):
        self.calls += 1
        return self.inner.values(x)


def composite_initial_bounds(inner, psi: PsiTemplate, X, p0):
    """Minimize the support cut at `p0` over `X`; keep `p0` if it is better."""
    p0 = as_point(p0, X.dim)
    cut = support_cut(p0, inner, psi)
    f0 = cut(p0)
    if cut.is_linear:
        sc = cut.scalar()
        p1 = X.linear_min(sc.slope, anchor=p0)
        lb1 = sc.value + float(sc.slope @ (p1 - p0))
    else:
        rep = minimize_over(X, cut.block())
        p1, lb1 = rep.minimizer, rep.optimal_value
    f1 = psi(inner.values(p1), p1)
    if f0 < f1:
        return p0.copy(), f0, lb1
    return p1, f1, lb1


def apl_composite_solve(p0, cfg: AplConfig, prox: Optional[ProxSetup], inner: InnerOracle,
                        psi: PsiTemplate, X) -> SolveResult:
    """APL outer loop with support-function cuts of ``Psi o phi``."""
    prox = prox if prox is not None else default_prox(X)
    counter = _InnerCounter(inner)

    def cut_at(z):
        return support_cut(z, counter, psi).block()

    def value_at(x):
        return psi(counter.values(x), x)

    return run_outer(
        "apl-composite", p0, cfg, X, counter,
        lambda: composite_initial_bounds(counter, psi, X, p0),
        lambda p, lb, ub, ctx, s: level_gap(p, lb, ub, cfg, prox, X, cut_at, value_at,
                                            ctx=ctx, phase_index=s))


def identity_inner(oracle) -> InnerOracle:
    """View a scalar oracle as a one-component inner map."""
    def fun(x):
        return np.array([_value(oracle, x)])

    def jac(x):
        return np.asarray(oracle(x).subgrad, dtype=float).reshape(1, -1)

    return InnerOracle(fun, jac, 1)
