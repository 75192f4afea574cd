import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levelopt.core import Box, Cut, EntropyProx, EuclideanProx, PieceBlock, Simplex
from levelopt.geometry import (LocalizerSet, center_halfspace, entropy_prox_map,
                               minimize_over, project_box, project_simplex, prox_project,
                               solve_lower_bound, solve_prox_step)

from oracles import (brute_min, candidates, entropy_objective, euclid_objective,
                     linear_objective, random_subproblem)


# projections ------------------------------------------------------------------

def test_project_box_examples():
    np.testing.assert_array_equal(project_box([2, -1], [0, 0], [1, 1]), [1, 0])
    np.testing.assert_array_equal(project_box([0.3, 0.4], [0, 0], [1, 1]), [0.3, 0.4])
    np.testing.assert_array_equal(project_box([0.5, 3], [0, 0], [1, 1]), [0.5, 1])
    with pytest.raises(ValueError):
        project_box([0.0], [1.0], [0.0])


def test_project_simplex_examples():
    np.testing.assert_allclose(project_simplex([0.2, 0.3, 0.5]), [0.2, 0.3, 0.5])
    np.testing.assert_allclose(project_simplex([2, 0, 0]), [1, 0, 0])
    np.testing.assert_allclose(project_simplex([1, 1, 0]), [0.5, 0.5, 0])


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=3))
@settings(max_examples=40, deadline=None)
def test_project_simplex_matches_grid(v):
    v = np.array(v)
    kind = "simplex" if v.size == 3 else None
    p = project_simplex(v)
    assert p.min() >= 0 and p.sum() == pytest.approx(1.0)
    if kind:
        best, _ = brute_min("simplex", np.zeros((0, 3)), np.zeros(0), euclid_objective(v))
        assert 0.5 * np.sum((p - v) ** 2) <= best + 1e-9
        assert 0.5 * np.sum((p - v) ** 2) >= best - 1e-5
    else:
        t = np.linspace(0, 1, 1001)
        grid = np.column_stack([t, 1 - t])
        best = np.min(np.sum((grid - v) ** 2, axis=1))
        assert np.sum((p - v) ** 2) <= best + 1e-9


def test_entropy_prox_map_examples():
    np.testing.assert_allclose(entropy_prox_map([5.0, 5.0, 5.0]), np.full(3, 1 / 3))
    np.testing.assert_allclose(entropy_prox_map([0.0, 1000.0]), [1.0, 0.0], atol=1e-10)
    np.testing.assert_allclose(entropy_prox_map([0.0, np.log(2)]), [2 / 3, 1 / 3])
    t = np.linspace(1e-6, 1 - 1e-6, 100001)
    obj = np.log(2) * (1 - t) + t * np.log(t) + (1 - t) * np.log(1 - t)
    assert t[np.argmin(obj)] == pytest.approx(2 / 3, abs=1e-5)


# lower-bound LP ----------------------------------------------------------------

def test_lower_bound_interval():
    loc = LocalizerSet(Box([0.0], [1.0]))
    rep = solve_lower_bound(loc, Cut(np.zeros(1), 0.0, np.ones(1)))
    assert rep.optimal and rep.optimal_value == pytest.approx(0.0)
    np.testing.assert_allclose(rep.minimizer, [0.0])


def test_lower_bound_detects_empty_localizer():
    blocks = [PieceBlock.affine([1.0], 1.0),        # x <= -1
              PieceBlock.affine([-1.0], 0.0)]       # x >= 0
    loc = LocalizerSet(Box([0.0], [1.0]), blocks)
    assert solve_lower_bound(loc, Cut(np.zeros(1), 0.0, np.ones(1))).status == "infeasible"


def test_lower_bound_simplex_with_halfspace():
    loc = LocalizerSet(Simplex(3), [PieceBlock.affine([1.0, 0, 0], -0.2)])
    rep = solve_lower_bound(loc, Cut(np.zeros(3), 0.0, np.array([-1.0, 0, 0])))
    assert rep.optimal_value == pytest.approx(-0.2, abs=1e-9)
    assert rep.minimizer[0] == pytest.approx(0.2, abs=1e-9)
    A = np.array([[1.0, 0, 0]])
    best, _ = brute_min("simplex", A, np.array([-0.2]), linear_objective([-1.0, 0, 0]))
    assert rep.optimal_value == pytest.approx(best, abs=1e-9)


def test_lower_bound_multi_piece_and_l1():
    X = Box.cube(2, -1, 1)
    blk = PieceBlock(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.zeros(2), np.zeros(2))
    assert minimize_over(X, blk).optimal_value == pytest.approx(0.0, abs=1e-10)
    l1 = PieceBlock(np.array([[0.5, 0.5]]), np.array([0.0]), np.array([1.0]))
    assert minimize_over(X, l1).optimal_value == pytest.approx(0.0, abs=1e-10)
    assert minimize_over(Simplex(2), l1).optimal_value == pytest.approx(1.5, abs=1e-10)


def test_adding_cuts_never_lowers_the_bound():
    rng = np.random.default_rng(3)
    X = Box.cube(3)
    obj = PieceBlock.affine(rng.standard_normal(3), 0.0)
    anchor = rng.uniform(size=3)
    loc = LocalizerSet(X)
    prev = minimize_over(X, obj).optimal_value
    for _ in range(6):
        a = rng.standard_normal(3)
        loc = loc.with_cut(PieceBlock.affine(a, -float(a @ anchor)))
        val = solve_lower_bound(loc, obj).optimal_value
        assert val >= prev - 1e-10
        prev = val


# localizer ---------------------------------------------------------------------

def test_localizer_fifo_pruning_and_membership():
    loc = LocalizerSet(Box.cube(1), bundle_limit=2)
    for k in range(4):
        loc = loc.with_cut(PieceBlock.affine([1.0], -1.0 + 0.1 * k))
    assert len(loc.blocks) == 2
    assert loc.contains(np.array([0.7]))
    assert not loc.contains(np.array([0.71]))
    with pytest.raises(ValueError):
        LocalizerSet(Box.cube(1), [PieceBlock.affine([1.0], 0.0)] * 3, bundle_limit=2)


def test_center_halfspace_contains_level_set_side():
    prox = EuclideanProx()
    x0, xk = np.zeros(2), np.array([0.5, 0.5])
    h = center_halfspace(prox, x0, xk)
    assert h(np.array([1.0, 1.0])) <= 0 and h(np.zeros(2)) > 0
    assert center_halfspace(prox, x0, x0) is None


# prox step ---------------------------------------------------------------------

def test_prox_step_unconstrained_returns_center():
    X = Box.cube(2)
    c = np.array([0.3, 0.6])
    level = Cut(np.zeros(2), 0.0, np.zeros(2))
    rep = solve_prox_step(LocalizerSet(X), EuclideanProx(), c, level, 1.0)
    np.testing.assert_allclose(rep.minimizer, c)
    assert rep.optimal_value == 0.0


def test_prox_step_halfplane_kkt():
    X = Box.cube(2)
    level = Cut(np.zeros(2), 0.0, np.array([-1.0, -1.0]))   # -x1 - x2 <= -1
    rep = solve_prox_step(LocalizerSet(X), EuclideanProx(), np.zeros(2), level, -1.0)
    np.testing.assert_allclose(rep.minimizer, [0.5, 0.5], atol=1e-8)
    best, _ = brute_min("box", np.array([[-1.0, -1.0]]), np.array([1.0]),
                        euclid_objective(np.zeros(2)))
    assert rep.optimal_value == pytest.approx(best, abs=1e-6)


def test_entropy_prox_step_inactive_level():
    S = Simplex(3)
    u = np.full(3, 1 / 3)
    level = Cut(u, 0.0, np.array([1.0, 0.0, 0.0]))
    rep = solve_prox_step(LocalizerSet(S), EntropyProx(), u, level, 5.0)
    np.testing.assert_allclose(rep.minimizer, u, atol=1e-12)


def test_prox_step_reports_infeasible():
    X = Box.cube(1)
    rep = prox_project(X, EuclideanProx(), np.array([0.5]),
                       [PieceBlock.affine([1.0], 2.0)])       # x <= -2
    assert rep.status == "infeasible"


def test_prox_step_duplicate_rows():
    X = Box.cube(2)
    blk = PieceBlock.affine([-1.0, -1.0], 1.0)
    rep = prox_project(X, EuclideanProx(), np.zeros(2), [blk, blk])
    assert rep.converged
    np.testing.assert_allclose(rep.minimizer, [0.5, 0.5], atol=1e-8)
    assert rep.multipliers.shape == (2,)


@pytest.mark.parametrize("kind,proxname", [("box", "euclidean"), ("simplex", "euclidean"),
                                           ("simplex", "entropy")])
def test_prox_step_matches_brute_force(kind, proxname):
    rng = np.random.default_rng({"box": 11, "simplex": 12}[kind] + len(proxname))
    X = Box.cube(2) if kind == "box" else Simplex(3)
    prox = EuclideanProx() if proxname == "euclidean" else EntropyProx()
    for _ in range(15):
        A, c, center, _ = random_subproblem(rng, kind)
        rep = prox_project(X, prox, center, [PieceBlock(A, c, np.zeros(len(c)))])
        P = candidates(kind, A, c)
        obj = euclid_objective(center) if proxname == "euclidean" else entropy_objective(center)
        assert rep.optimal_value == pytest.approx(float(obj(P).min()), abs=1e-5)
        assert np.all(A @ rep.minimizer + c <= 1e-8)


@given(st.integers(0, 2 ** 31), st.sampled_from(["box", "simplex"]))
@settings(max_examples=25, deadline=None)
def test_prox_step_variational_inequality(seed, kind):
    rng = np.random.default_rng(seed)
    X = Box.cube(2) if kind == "box" else Simplex(3)
    prox = EuclideanProx() if kind == "box" else EntropyProx()
    A, c, center, _ = random_subproblem(rng, kind)
    rep = prox_project(X, prox, center, [PieceBlock(A, c, np.zeros(len(c)))])
    xk = rep.minimizer
    g = prox.omega_grad(xk) - prox.omega_grad(center)
    P = candidates(kind, A, c, h=2e-2)
    assert np.min((P - xk) @ g) >= -1e-6


@pytest.mark.parametrize("proxname", ["euclidean", "entropy"])
def test_prox_step_on_set_without_interior(proxname):
    # x1 + x2 <= 0.6 and x1 + x2 >= 0.6: a segment, so no Slater point and
    # the dual supremum is not attained
    if proxname == "euclidean":
        X, prox, center = Box.cube(2), EuclideanProx(), np.array([1.0, 0.9])
        A = np.array([[1.0, 1.0], [-1.0, -1.0]])
        expect = np.array([0.35, 0.25])
    else:
        X, prox, center = Simplex(3), EntropyProx(), np.array([0.5, 0.3, 0.2])
        A = np.array([[1.0, 1.0, 0.0], [-1.0, -1.0, 0.0]])
        expect = np.array([0.375, 0.225, 0.4])
    rep = prox_project(X, prox, center, [PieceBlock(A, np.array([-0.6, 0.6]), np.zeros(2))])
    assert rep.optimal
    np.testing.assert_allclose(rep.minimizer, expect, atol=1e-6)
    assert rep.feasibility <= 1e-8
