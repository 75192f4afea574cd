"""Shared domain types: oracles, feasible sets, prox-functions, cuts,
step-size policies and run traces."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, fields
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "as_point", "OracleEval", "FunctionOracle", "CountingOracle",
    "SmoothnessClass", "Box", "Simplex", "FeasibleSet",
    "ProxSetup", "EuclideanProx", "EntropyProx", "default_prox",
    "PieceBlock", "Cut", "StepPolicy", "step_alpha",
    "prox_size_omega", "bregman_radius", "eval_bundle",
    "GapState", "IterRecord", "PhaseRecord", "RunTrace", "TRACE_COLUMNS",
    "SolveResult", "SolveContext", "choose_prox_center",
]

#: coordinates below this are clamped before taking logarithms
LOG_FLOOR = 1e-16


def as_point(x, n: Optional[int] = None) -> np.ndarray:
    """Return `x` as a finite 1-D float array, optionally checking its length."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("point must have at least one coordinate")
    if n is not None and x.size != n:
        raise ValueError(f"dimension mismatch: expected {n}, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point has non-finite coordinates")
    return x


# ---------------------------------------------------------------------------
# oracles

@dataclass(frozen=True)
class OracleEval:
    """One first-order oracle answer: ``f(x)`` and one subgradient."""
    value: float
    subgrad: np.ndarray


class FunctionOracle:
    """Wrap a pair of callables ``fun(x)`` and ``grad(x)`` as an oracle.

    ``grad`` must return one element of the subdifferential; ties are the
    caller's business.
    """

    def __init__(self, fun: Callable, grad: Callable, n: Optional[int] = None):
        self.fun = fun
        self.grad = grad
        self.n = n

    def __call__(self, x) -> OracleEval:
        x = np.asarray(x, dtype=float)
        g = np.asarray(self.grad(x), dtype=float).reshape(-1)
        if g.shape != x.shape:
            raise ValueError("subgradient dimension differs from query dimension")
        return OracleEval(float(self.fun(x)), g)

    def value(self, x) -> float:
        return float(self.fun(np.asarray(x, dtype=float)))


class CountingOracle:
    """Counts first-order and zeroth-order calls made through it."""

    def __init__(self, oracle):
        self.oracle = oracle
        self.calls = 0

    def __call__(self, x) -> OracleEval:
        self.calls += 1
        return self.oracle(x)

    def value(self, x) -> float:
        self.calls += 1
        if hasattr(self.oracle, "value"):
            return float(self.oracle.value(x))
        return float(self.oracle(x).value)


@dataclass(frozen=True)
class SmoothnessClass:
    """Hoelder parameters ``(rho, M)`` of an instance.

    Only the test harness reads these; solvers never do.
    """
    rho: float
    M: float

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if not self.M > 0:
            raise ValueError("M must be positive")


# ---------------------------------------------------------------------------
# feasible sets

class Box:
    """Axis-aligned box ``lower <= x <= upper``."""

    kind = "box"

    def __init__(self, lower, upper):
        lower = np.asarray(lower, dtype=float).reshape(-1)
        upper = np.asarray(upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape or lower.size == 0:
            raise ValueError("lower and upper must be non-empty and of equal length")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("box must be bounded")
        if np.any(lower > upper):
            raise ValueError("box requires lower <= upper componentwise")
        self.lower = lower
        self.upper = upper

    @classmethod
    def cube(cls, n: int, lo: float = 0.0, hi: float = 1.0) -> "Box":
        return cls(np.full(n, lo), np.full(n, hi))

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, x, tol: float = 1e-10) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def project(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def linear_min(self, g, anchor=None) -> np.ndarray:
        """A minimizer of ``<g, x>`` over the box; zero slopes keep `anchor`."""
        g = np.asarray(g, dtype=float)
        x = np.where(g > 0, self.lower, self.upper)
        if anchor is not None:
            x = np.where(g == 0, self.project(anchor), x)
        return x

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def sample(self, rng, size: Optional[int] = None) -> np.ndarray:
        shape = (self.dim,) if size is None else (size, self.dim)
        return self.lower + (self.upper - self.lower) * rng.random(shape)

    def __repr__(self):
        return f"Box(n={self.dim})"


class Simplex:
    """Standard simplex ``{x >= 0, sum(x) = 1}``."""

    kind = "simplex"

    def __init__(self, n: int):
        if int(n) < 1:
            raise ValueError("simplex requires n >= 1")
        self.n = int(n)

    @property
    def dim(self) -> int:
        return self.n

    def contains(self, x, tol: float = 1e-10) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol * max(1, self.n))

    def project(self, x) -> np.ndarray:
        from .geometry import project_simplex
        return project_simplex(x)

    def linear_min(self, g, anchor=None) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        x = np.zeros(self.n)
        x[int(np.argmin(g))] = 1.0
        return x

    def diameter(self) -> float:
        return math.sqrt(2.0) if self.n > 1 else 0.0

    def center(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    def sample(self, rng, size: Optional[int] = None) -> np.ndarray:
        return rng.dirichlet(np.ones(self.n), size=size)

    def __repr__(self):
        return f"Simplex(n={self.n})"


FeasibleSet = (Box, Simplex)


# ---------------------------------------------------------------------------
# prox-functions

class ProxSetup:
    """A distance-generating function ``omega`` with modulus `sigma_omega`
    with respect to the norm named by `norm_tag`."""

    name = "abstract"
    sigma_omega = 1.0
    norm_tag = "euclidean"

    def omega(self, x) -> float:
        raise NotImplementedError

    def omega_grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def bregman(self, x, center) -> float:
        """``omega(x) - omega(c) - <grad omega(c), x - c>``."""
        raise NotImplementedError

    def norm(self, v) -> float:
        v = np.asarray(v, dtype=float)
        if self.norm_tag == "l1":
            return float(np.abs(v).sum())
        return float(np.linalg.norm(v))

    def center_of(self, X) -> np.ndarray:
        """Minimizer of omega over `X`."""
        raise NotImplementedError

    def supports(self, X) -> bool:
        return True


class EuclideanProx(ProxSetup):
    """``omega(x) = ||x||^2 / 2`` with modulus 1 in the Euclidean norm."""

    name = "euclidean"
    sigma_omega = 1.0
    norm_tag = "euclidean"

    def omega(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ x)

    def omega_grad(self, x) -> np.ndarray:
        return np.array(x, dtype=float)

    def bregman(self, x, center) -> float:
        d = np.asarray(x, dtype=float) - np.asarray(center, dtype=float)
        return 0.5 * float(d @ d)

    def center_of(self, X) -> np.ndarray:
        return X.project(np.zeros(X.dim))


class EntropyProx(ProxSetup):
    """``omega(x) = sum x_i log x_i`` on the simplex, modulus 1 in the l1 norm."""

    name = "entropy"
    sigma_omega = 1.0
    norm_tag = "l1"

    def omega(self, x) -> float:
        x = np.asarray(x, dtype=float)
        xp = x[x > 0]
        return float(np.sum(xp * np.log(xp)))

    def omega_grad(self, x) -> np.ndarray:
        return 1.0 + np.log(np.maximum(np.asarray(x, dtype=float), LOG_FLOOR))

    def bregman(self, x, center) -> float:
        x = np.asarray(x, dtype=float)
        c = np.maximum(np.asarray(center, dtype=float), LOG_FLOOR)
        pos = x > 0
        return float(np.sum(x[pos] * (np.log(x[pos]) - np.log(c[pos]))) - x.sum() + c.sum())

    def center_of(self, X) -> np.ndarray:
        return X.center()

    def supports(self, X) -> bool:
        return isinstance(X, Simplex)


def default_prox(X) -> ProxSetup:
    """Entropy on the simplex, half squared Euclidean norm on a box."""
    return EntropyProx() if isinstance(X, Simplex) else EuclideanProx()


def prox_size_omega(prox: ProxSetup, X) -> tuple[float, float]:
    """Return ``(D2, Omega)``: the size of `X` under `prox` and ``2 D2 / sigma``.

    Closed forms cover the shipped pairs.  For the entropy the size is
    measured from the prox-center (the uniform point), which gives ``ln n``.
    Other pairs fall back to a maximum over sampled vertex pairs, which is
    only a lower estimate.
    """
    if not isinstance(X, FeasibleSet):
        raise ValueError("only compact box or simplex sets are supported")
    if isinstance(prox, EuclideanProx):
        if isinstance(X, Box):
            d2 = 0.5 * float(np.sum((X.upper - X.lower) ** 2))
        else:
            d2 = 1.0 if X.n > 1 else 0.0
    elif isinstance(prox, EntropyProx):
        if not isinstance(X, Simplex):
            raise ValueError("entropy prox requires a simplex")
        d2 = math.log(X.n)
    else:
        d2 = _sampled_size(prox, X)
    return d2, 2.0 * d2 / prox.sigma_omega


def _sampled_size(prox, X, samples: int = 256, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    if isinstance(X, Simplex):
        verts = np.eye(X.n)
    elif X.dim <= 10:
        grid = np.array(np.meshgrid(*[[0, 1]] * X.dim)).reshape(X.dim, -1).T
        verts = X.lower + grid * (X.upper - X.lower)
    else:
        bits = rng.integers(0, 2, size=(samples, X.dim))
        verts = X.lower + bits * (X.upper - X.lower)
    best = 0.0
    for a in verts:
        for b in verts:
            best = max(best, prox.bregman(a, b))
    return best


def bregman_radius(prox: ProxSetup, X, center) -> float:
    """``sup_{x in X} d(x)`` for the Bregman distance centered at `center`."""
    c = np.asarray(center, dtype=float)
    if isinstance(prox, EuclideanProx):
        if isinstance(X, Box):
            far = np.maximum((c - X.lower) ** 2, (X.upper - c) ** 2)
            return 0.5 * float(far.sum())
        return 0.5 * float(c @ c + 1.0 - 2.0 * c.min())
    if isinstance(prox, EntropyProx):
        return float(-np.log(max(c.min(), LOG_FLOOR)))
    raise ValueError("no closed form for this prox-function")


# ---------------------------------------------------------------------------
# cuts

@dataclass(frozen=True)
class PieceBlock:
    """Pointwise maximum of pieces ``<a_i, x> + c_i + tau_i ||x||_1``.

    A scalar cutting plane is a block with one piece and ``tau = 0``.  Used as
    a constraint, a block means *all* pieces are ``<= 0``.
    """
    slopes: np.ndarray
    offsets: np.ndarray
    l1: np.ndarray

    @classmethod
    def affine(cls, slope, offset: float) -> "PieceBlock":
        slope = np.asarray(slope, dtype=float).reshape(1, -1)
        return cls(slope, np.array([float(offset)]), np.zeros(1))

    @property
    def size(self) -> int:
        return self.offsets.size

    @property
    def dim(self) -> int:
        return self.slopes.shape[1]

    def values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.slopes @ x + self.offsets
        if np.any(self.l1):
            out = out + self.l1 * np.abs(x).sum()
        return out

    def __call__(self, x) -> float:
        return float(np.max(self.values(x)))

    def shifted(self, level: float) -> "PieceBlock":
        """The block minus `level`, so ``block <= level`` reads ``shifted <= 0``."""
        return PieceBlock(self.slopes, self.offsets - level, self.l1)

    @staticmethod
    def stack(blocks: Sequence["PieceBlock"]) -> "PieceBlock":
        return PieceBlock(np.vstack([b.slopes for b in blocks]),
                          np.concatenate([b.offsets for b in blocks]),
                          np.concatenate([b.l1 for b in blocks]))


@dataclass(frozen=True)
class Cut:
    """Cutting plane ``h(z, x) = value + <slope, x - z>`` anchored at ``z``."""
    anchor: np.ndarray
    value: float
    slope: np.ndarray

    @classmethod
    def from_oracle(cls, z, ev: OracleEval) -> "Cut":
        return cls(np.array(z, dtype=float), float(ev.value), np.array(ev.subgrad, dtype=float))

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != self.slope.shape:
            raise ValueError("dimension mismatch between cut and point")
        return self.value + float(self.slope @ (x - self.anchor))

    def block(self) -> PieceBlock:
        return PieceBlock.affine(self.slope, self.value - float(self.slope @ self.anchor))


def eval_bundle(cuts: Sequence[Cut], x) -> float:
    """Cutting-plane model: the maximum of the cuts at `x`."""
    if len(cuts) == 0:
        raise ValueError("bundle needs at least one cut")
    x = np.asarray(x, dtype=float)
    return max(c(x) for c in cuts)


# ---------------------------------------------------------------------------
# step-size policies

class StepPolicy:
    """Stateful generator of the weights ``alpha_k``.

    ``polynomial``: ``alpha_k = 2 / (lam * (k + shift))``.  ``shift = 1`` with
    ``lam = 1`` gives ``2/(k+1)`` used by the level methods with a fixed
    level; ``shift = 2`` gives ``2/(lam (k+2))`` used by ABL.

    ``recursive``: ``alpha_1 = gamma_1 = 1`` and
    ``gamma_k = alpha_k**2 = (1 - lam alpha_k) gamma_{k-1}``.

    The object also tracks ``gamma_k = prod_{i>=2} (1 - lam alpha_i)``.
    Call :meth:`reset` at the start of every gap-reduction call.
    """

    def __init__(self, kind: str = "polynomial", lam: float = 1.0, shift: int = 1):
        if kind not in ("polynomial", "recursive"):
            raise ValueError(f"unknown step policy {kind!r}")
        if not 0 < lam <= 1:
            raise ValueError("lam must lie in (0, 1]")
        self.kind = kind
        self.lam = float(lam)
        self.shift = int(shift)
        self.reset()

    @classmethod
    def for_apl(cls, kind: str = "polynomial") -> "StepPolicy":
        return cls(kind, 1.0, shift=1)

    @classmethod
    def for_abl(cls, kind: str = "polynomial", lam: float = 0.75) -> "StepPolicy":
        return cls(kind, lam, shift=2)

    def reset(self) -> None:
        self.k = 0
        self.gamma = 1.0
        self._alphas: list[float] = []

    def copy(self) -> "StepPolicy":
        return StepPolicy(self.kind, self.lam, self.shift)

    def next(self) -> float:
        """Advance to the next ``k`` and return ``alpha_k``."""
        k = self.k + 1
        if self.kind == "polynomial":
            a = 2.0 / (self.lam * (k + self.shift))
            gamma = 1.0 if k == 1 else (1.0 - self.lam * a) * self.gamma
        elif k == 1:
            a, gamma = 1.0, 1.0
        else:
            lg = self.lam * self.gamma
            a = 0.5 * (-lg + math.sqrt(lg * lg + 4.0 * self.gamma))
            gamma = a * a
        if not 0.0 < a <= 1.0:
            raise ValueError(f"step weight {a} outside (0, 1]")
        self.k = k
        self.gamma = gamma
        self._alphas.append(a)
        return a

    def alpha(self, k: int) -> float:
        """``alpha_k``; advances the internal state up to `k` if needed."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if k <= self.k:
            return self._alphas[k - 1]
        a = None
        while self.k < k:
            a = self.next()
        return a

    @property
    def alpha1(self) -> float:
        if self.kind == "recursive":
            return 1.0
        return 2.0 / (self.lam * (1 + self.shift))


def step_alpha(policy: StepPolicy, k: int) -> float:
    """``alpha_k`` of `policy`."""
    return policy.alpha(k)


# ---------------------------------------------------------------------------
# state and traces

@dataclass
class GapState:
    """Mutable state of one gap-reduction call."""
    ub: float
    lb: float
    level: float
    prox_center: np.ndarray
    ub_point: np.ndarray
    iter: int = 0

    @property
    def gap(self) -> float:
        return self.ub - self.lb


TRACE_COLUMNS = ("iter", "phase", "ub", "lb", "gap", "oracle_calls",
                 "subproblem_iters", "wall_ms")


@dataclass
class IterRecord:
    iter: int
    phase: int
    ub: float
    lb: float
    gap: float
    oracle_calls: int
    subproblem_iters: int
    wall_ms: float


@dataclass
class PhaseRecord:
    """One call of a gap-reduction procedure.

    `diagnostics` holds one dict per inner iteration with the quantities the
    invariant checks need (weights, levels, prox-step lengths, Bregman
    distances).
    """
    phase_index: int
    significant: bool = True
    Q_estimate: Optional[float] = None
    ub_start: float = math.nan
    lb_start: float = math.nan
    ub_end: float = math.nan
    lb_end: float = math.nan
    iterations: int = 0
    exit_step: str = ""
    capped: bool = False
    level: float = math.nan
    eta: Optional[float] = None
    diagnostics: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def delta_start(self) -> float:
        return self.ub_start - self.lb_start

    @property
    def delta_end(self) -> float:
        return self.ub_end - self.lb_end


class RunTrace:
    """Per-iteration and per-phase records of one solver run."""

    def __init__(self, method: str = ""):
        self.method = method
        self.records: list[IterRecord] = []
        self.phases: list[PhaseRecord] = []
        self.meta: dict = {}
        self._t0 = time.perf_counter()

    def elapsed_ms(self) -> float:
        return 1000.0 * (time.perf_counter() - self._t0)

    def log(self, iter: int, phase: int, ub: float, lb: float,
            oracle_calls: int, subproblem_iters: int) -> IterRecord:
        if self.records and iter < self.records[-1].iter:
            raise ValueError("trace records must be ordered by iteration")
        rec = IterRecord(int(iter), int(phase), float(ub), float(lb), float(ub) - float(lb),
                         int(oracle_calls), int(subproblem_iters), self.elapsed_ms())
        self.records.append(rec)
        return rec

    def __len__(self):
        return len(self.records)

    @property
    def last(self) -> IterRecord:
        return self.records[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def validate(self) -> None:
        """Raise if the structural invariants of the trace are broken."""
        prev = -1
        for r in self.records:
            if r.iter < prev:
                raise ValueError("records out of order")
            prev = r.iter
            if r.gap != r.ub - r.lb:
                raise ValueError(f"gap column inconsistent at iteration {r.iter}")

    def to_csv(self, path=None, wall_time: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = TRACE_COLUMNS if wall_time else TRACE_COLUMNS[:-1]
        w.writerow(cols)
        for r in self.records:
            w.writerow([repr(getattr(r, c)) if isinstance(getattr(r, c), float) else getattr(r, c)
                        for c in cols])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str, method: str = "") -> "RunTrace":
        tr = cls(method)
        rows = list(csv.DictReader(io.StringIO(text)))
        for row in rows:
            vals = {}
            for f_ in fields(IterRecord):
                raw = row.get(f_.name, "0")
                vals[f_.name] = int(raw) if f_.type in ("int", int) else float(raw)
            tr.records.append(IterRecord(**vals))
        tr.validate()
        return tr


@dataclass
class SolveResult:
    """Outcome of an outer loop.  Unpacks as ``(x, lb, trace)``."""
    x: np.ndarray
    ub: float
    lb: float
    trace: RunTrace
    status: str = "converged"

    @property
    def gap(self) -> float:
        return self.ub - self.lb

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def __iter__(self):
        return iter((self.x, self.lb, self.trace))


class SolveContext:
    """Bookkeeping shared by the phases of one run: the counting oracle,
    the trace and a global iteration counter."""

    def __init__(self, method: str, counter=None, trace: Optional[RunTrace] = None):
        self.trace = trace if trace is not None else RunTrace(method)
        self.counter = counter
        self.iteration = 0

    @property
    def calls(self) -> int:
        return self.counter.calls if self.counter is not None else 0

    def log(self, phase: int, ub: float, lb: float, sub_iters: int = 0, advance: bool = True):
        if advance:
            self.iteration += 1
        return self.trace.log(self.iteration, phase, ub, lb, self.calls, sub_iters)


def choose_prox_center(prox: ProxSetup, X, p, rule="p") -> np.ndarray:
    """Prox-center ``x_0`` of a gap-reduction call.

    ``rule='p'`` uses the search point itself, falling back to the minimizer
    of omega when the gradient of omega is unbounded at `p` (entropy at a
    point with a zero coordinate).  ``rule='omega'`` always uses that
    minimizer; an array is used as given.
    """
    if not isinstance(rule, str):
        return as_point(rule, X.dim)
    if rule == "omega":
        return prox.center_of(X)
    if rule != "p":
        raise ValueError(f"unknown prox-center rule {rule!r}")
    p = np.asarray(p, dtype=float)
    if isinstance(prox, EntropyProx) and np.min(p) <= LOG_FLOOR:
        return prox.center_of(X)
    return p.copy()
