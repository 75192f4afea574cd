"""Seeded instance families with known structure and, where available, known
optimal values."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

import numpy as np

from ..composite import InnerOracle, PsiTemplate, identity_inner
from ..core import (Box, FunctionOracle, ProxSetup, Simplex, SmoothnessClass, default_prox)
from ..geometry import _soft
from ..usl import SaddleOracle, SaddleProblem

FAMILIES = ("hoelder", "l1_regression", "minimax_quadratics", "max_eigenvalue", "lovasz_tiny")
MAX_LOVASZ_NODES = 12


@dataclass
class InstanceSpec:
    """Serializable description of an instance.

    `params` holds the family parameters; `smoothness` (a dict with ``rho``
    and ``M``) overrides the family's own Hoelder data when given.
    """
    family: str
    params: dict = field(default_factory=dict)
    known_optimum: Optional[float] = None
    smoothness: Optional[dict] = None
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(self.seed)
        if isinstance(self.smoothness, SmoothnessClass):
            self.smoothness = {"rho": self.smoothness.rho, "M": self.smoothness.M}

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "InstanceSpec":
        extra = set(d) - {"family", "params", "known_optimum", "smoothness", "seed"}
        if extra:
            raise ValueError(f"unknown spec fields: {sorted(extra)}")
        if "family" not in d:
            raise ValueError("spec needs a family")
        return cls(d["family"], dict(d.get("params") or {}), d.get("known_optimum"),
                   d.get("smoothness"), int(d.get("seed", 0)))

    @classmethod
    def from_json(cls, text: str) -> "InstanceSpec":
        return cls.from_dict(json.loads(text))


@dataclass
class Instance:
    """A generated problem: feasible set, oracle, start point and the
    metadata only the harness uses."""
    name: str
    X: Any
    oracle: Any
    p0: np.ndarray
    f_star: Optional[float] = None
    smoothness: Optional[SmoothnessClass] = None
    smoothness_l1: Optional[SmoothnessClass] = None
    prox: Optional[ProxSetup] = None
    saddle: Optional[SaddleProblem] = None
    inner: Optional[InnerOracle] = None
    psi: Optional[PsiTemplate] = None
    spec: Optional[InstanceSpec] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.prox is None:
            self.prox = default_prox(self.X)
        if self.inner is None:
            self.inner, self.psi = identity_inner(self.oracle), PsiTemplate.identity()

    @property
    def D_X(self) -> float:
        return self.X.diameter()

    def hoelder(self, norm_tag: str = "euclidean") -> Optional[SmoothnessClass]:
        """Hoelder data with respect to the Euclidean or the l1 norm on x."""
        if norm_tag == "l1" and self.smoothness_l1 is not None:
            return self.smoothness_l1
        if norm_tag == "l1" and self.smoothness is not None:
            # ||g||_inf <= ||g||_2 and ||x||_1 >= ||x||_2 keep the Euclidean data valid
            return self.smoothness
        return self.smoothness


def _rng(spec: InstanceSpec) -> np.random.Generator:
    return np.random.default_rng(spec.seed)


def hoelder_M(rho: float) -> float:
    """Hoelder constant of ``u -> ||u||^(rho-1) u`` (the gradient of
    ``||u||^(1+rho)/(1+rho)``) in the Euclidean norm."""
    return 2.0 ** (1.0 - rho)


def _hoelder(spec: InstanceSpec) -> Instance:
    p = spec.params
    rho = float(p.get("rho", 0.0))
    n = int(p.get("n", 10))
    lo, hi = p.get("box", (0.0, 1.0))
    X = Box.cube(n, float(lo), float(hi))
    if p.get("x_star") is not None:
        xs = np.array(p["x_star"], dtype=float)
    else:
        xs = lo + (hi - lo) * _rng(spec).uniform(0.2, 0.8, n)
    if xs.shape != (n,) or not X.contains(xs):
        raise ValueError("x_star must be a point of the box")

    def fun(x):
        return float(np.linalg.norm(x - xs)) ** (1 + rho) / (1 + rho)

    def grad(x):
        d = x - xs
        r = float(np.linalg.norm(d))
        # zero subgradient at the minimizer
        return np.zeros(n) if r == 0.0 else r ** (rho - 1.0) * d

    return Instance(f"hoelder(rho={rho:g},n={n})", X, FunctionOracle(fun, grad, n), X.center(),
                    0.0, SmoothnessClass(rho, hoelder_M(rho)), meta={"x_star": xs})


def _l1_regression(spec: InstanceSpec) -> Instance:
    """``0.5 ||x - a||^2 + reg ||x||_1`` on ``[-1, 1]^n``."""
    p = spec.params
    n = int(p.get("n", 10))
    reg = float(p.get("reg", 0.5))
    a = np.array(p["a"], dtype=float) if p.get("a") is not None else 1.5 * _rng(spec).standard_normal(n)
    X = Box.cube(n, -1.0, 1.0)
    x_opt = np.clip(_soft(a, reg), -1.0, 1.0)

    def fun(x):
        return 0.5 * float((x - a) @ (x - a)) + reg * float(np.abs(x).sum())

    def grad(x):
        return (x - a) + reg * np.sign(x)

    inner = InnerOracle(lambda x: np.array([0.5 * float((x - a) @ (x - a))]),
                        lambda x: (x - a).reshape(1, -1), 1)
    M = X.diameter() + 2.0 * reg * math.sqrt(n)
    return Instance(f"l1_regression(n={n},reg={reg:g})", X, FunctionOracle(fun, grad, n),
                    X.center(), fun(x_opt), SmoothnessClass(0.0, M),
                    inner=inner, psi=PsiTemplate.linear_plus_l1(reg),
                    meta={"x_opt": x_opt, "a": a})


def _minimax(spec: InstanceSpec) -> Instance:
    """``max_i ||x - a_i||^2`` on the unit box."""
    p = spec.params
    n = int(p.get("n", 2))
    m = int(p.get("m", 2))
    if p.get("centers") is not None:
        C = np.array(p["centers"], dtype=float).reshape(m, n)
    else:
        C = _rng(spec).uniform(0.1, 0.9, (m, n))
    X = Box.cube(n)

    def phi(x):
        d = x[None, :] - C
        return np.einsum("ij,ij->i", d, d)

    def jac(x):
        return 2.0 * (x[None, :] - C)

    def fun(x):
        return float(phi(x).max())

    def grad(x):
        # lowest index among the active pieces
        return jac(x)[int(np.argmax(phi(x)))]

    f_star = None
    if m == 1:
        f_star = 0.0
    elif m == 2:
        f_star = float(np.sum((C[0] - C[1]) ** 2)) / 4.0
    return Instance(f"minimax_quadratics(n={n},m={m})", X, FunctionOracle(fun, grad, n), X.center(),
                    f_star, SmoothnessClass(0.0, 4.0 * X.diameter()),
                    inner=InnerOracle(phi, jac, m), psi=PsiTemplate.max_of(m),
                    meta={"centers": C})


def random_symmetric(rng, m: int, density: float) -> np.ndarray:
    S = rng.standard_normal((m, m))
    if density < 1.0:
        S = S * (rng.uniform(size=(m, m)) < density)
    return 0.5 * (S + S.T)


def _saddle_instance(name, prob: SaddleProblem, X, p0, f_star, meta) -> Instance:
    # |u'A_i u - v'A_i v| <= 2 ||A_i||_2 for unit u, v
    per = np.array([np.max(np.abs(np.linalg.eigvalsh(Ai))) for Ai in prob.A])
    M2 = 2.0 * float(np.sqrt(np.sum(per ** 2)))
    M1 = 2.0 * float(per.max(initial=0.0))
    return Instance(name, X, SaddleOracle(prob), p0, f_star,
                    SmoothnessClass(0.0, max(M2, 1e-12)), SmoothnessClass(0.0, max(M1, 1e-12)),
                    saddle=prob, meta=meta)


def _max_eigenvalue(spec: InstanceSpec) -> Instance:
    """``min lambda_1(A0 + sum x_i A_i)`` over the simplex."""
    p = spec.params
    n = int(p.get("n", 10))
    m = int(p.get("m", 20))
    density = float(p.get("density", 1.0))
    if not 0.0 < density <= 1.0:
        raise ValueError("density must lie in (0, 1]")
    rng = _rng(spec)
    A0 = random_symmetric(rng, m, density)
    A = np.stack([random_symmetric(rng, m, density) for _ in range(n)])
    prob = SaddleProblem("spectahedron", A, A0)
    X = Simplex(n)
    return _saddle_instance(f"max_eigenvalue(n={n},m={m})", prob, X, X.center(), None, {})


def random_graph(rng, nodes: int, target_edges: int) -> list:
    """Random spanning tree plus random extra edges until there are
    `target_edges` (at most the complete graph)."""
    edges = set()
    for v in range(1, nodes):
        u = int(rng.integers(0, v))
        edges.add((u, v))
    target = min(max(target_edges, nodes - 1), nodes * (nodes - 1) // 2)
    while len(edges) < target:
        i, j = rng.choice(nodes, 2, replace=False)
        edges.add((int(min(i, j)), int(max(i, j))))
    return sorted(edges)


def lovasz_operator(nodes: int, edges) -> tuple[np.ndarray, np.ndarray]:
    """Constant matrix ``d`` (ones off the edge set) and the edge basis."""
    d = np.ones((nodes, nodes))
    A = np.zeros((len(edges), nodes, nodes))
    for k, (i, j) in enumerate(edges):
        d[i, j] = d[j, i] = 0.0
        A[k, i, j] = A[k, j, i] = 1.0
    return d, A


def lovasz_box(v: float, n_edges: int) -> Box:
    """``|x_e| <= v - 1``; the half-width never drops below 1/2 so the box
    keeps an interior (any box containing the optimal x is valid)."""
    r = max(v - 1.0, 0.5)
    return Box(-r * np.ones(n_edges), r * np.ones(n_edges))


def _lovasz(spec: InstanceSpec) -> Instance:
    p = spec.params
    nodes = int(p.get("nodes", 5))
    if not 1 <= nodes <= MAX_LOVASZ_NODES:
        raise ValueError(f"lovasz_tiny supports 1..{MAX_LOVASZ_NODES} nodes")
    if p.get("edges") is not None:
        edges = sorted({(min(int(i), int(j)), max(int(i), int(j))) for i, j in p["edges"]})
        if any(i == j or not 0 <= i < nodes or not 0 <= j < nodes for i, j in edges):
            raise ValueError("edges must join distinct nodes in range")
    else:
        edges = random_graph(_rng(spec), nodes, int(p.get("target_edges", 2 * nodes)))
    if not edges:
        raise ValueError("the graph needs at least one edge")
    d, A = lovasz_operator(nodes, edges)
    prob = SaddleProblem("spectahedron", A, d)
    v0 = float(np.linalg.eigvalsh(d)[-1])
    X = lovasz_box(v0, len(edges))
    inst = _saddle_instance(f"lovasz_tiny(nodes={nodes},edges={len(edges)})", prob, X,
                            np.zeros(len(edges)), None,
                            {"edges": edges, "v0": v0, "shrink": bool(p.get("shrink", False))})
    inst.smoothness = SmoothnessClass(0.0, 2.0 * math.sqrt(2.0))
    return inst


_BUILDERS = {"hoelder": _hoelder, "l1_regression": _l1_regression,
             "minimax_quadratics": _minimax, "max_eigenvalue": _max_eigenvalue,
             "lovasz_tiny": _lovasz}


def build_instance(spec: InstanceSpec) -> Instance:
    """Generate the instance described by `spec` (deterministic in the seed)."""
    inst = _BUILDERS[spec.family](spec)
    inst.spec = spec
    if spec.known_optimum is not None:
        inst.f_star = float(spec.known_optimum)
    if spec.smoothness is not None:
        s = spec.smoothness
        inst.smoothness = SmoothnessClass(float(s["rho"]), float(s["M"]))
        inst.smoothness_l1 = None
    return inst


def custom_instance(name: str, X, fun, grad, p0=None, f_star=None,
                    smoothness: Optional[SmoothnessClass] = None) -> Instance:
    """Wrap ad-hoc callables as an instance (for tests and demos)."""
    p0 = X.center() if p0 is None else np.asarray(p0, dtype=float)
    return Instance(name, X, FunctionOracle(fun, grad, X.dim), p0, f_star, smoothness)
