import numpy as np
import pytest

from regionalized import SingularSystemError, SizeError, UnboundedProblemError, build_poset
from regionalized.functor import Cofunctor
from regionalized.gbp import RegionGraphProblem
from regionalized.instances import random_cofunctor, random_quadratic
from regionalized.loss import FreeEnergy, Quadratic
from regionalized.oracle import (
    brute_force_min,
    exact_gibbs,
    exact_marginals,
    finite_diff_grad,
    kkt_solve_quadratic,
)
from regionalized.poset import antichain, chain


def vee(a_lo):
    """Two tops over one bottom, all 1-dimensional with identity maps."""
    p = build_poset([("lo", "h1"), ("lo", "h2")], ["h1", "h2", "lo"])
    f = Cofunctor(p, [1, 1, 1], {("h1", "lo"): [[1.0]], ("h2", "lo"): [[1.0]]})
    L = Quadratic([[[1.0]], [[2.0]], [[a_lo]]], [[1.0], [0.0], [0.0]])
    return f, L


class TestEnumeration:
    def test_gibbs(self, rng):
        H = rng.normal(size=12)
        d = exact_gibbs(H, beta=2.0)
        np.testing.assert_allclose(d.p.sum(), 1.0, atol=1e-14)
        np.testing.assert_allclose(d.p, np.exp(-2 * H) / d.Z, rtol=1e-12)

    def test_gibbs_cap(self):
        with pytest.raises(SizeError, match="cap"):
            exact_gibbs(np.zeros(11), cap=10)

    def test_marginals_row_major(self):
        p = RegionGraphProblem({1: 2, 2: 3}, [(1, 2), (2,), (1,)])
        joint = np.arange(6, dtype=float).reshape(2, 3)
        joint /= joint.sum()
        H = -np.log(np.maximum(joint.ravel(), 1e-300))
        m = exact_marginals(exact_gibbs(H), p)
        np.testing.assert_allclose(m[1], joint.sum(axis=0), atol=1e-12)
        np.testing.assert_allclose(m[2], joint.sum(axis=1), atol=1e-12)


class TestFiniteDifferences:
    def test_quadratic_exact(self, rng):
        A = rng.normal(size=(4, 4))
        fun = lambda x: float(x @ A @ x)
        x = rng.normal(size=4)
        np.testing.assert_allclose(finite_diff_grad(fun, x), (A + A.T) @ x, rtol=1e-7)


class TestKKT:
    def test_chain_reduces_to_top(self, rng):
        # on a chain only the top element counts and it is unconstrained
        p = chain(["c", "b", "a"])
        f = Cofunctor(p, [2, 2, 2], {("a", "b"): rng.normal(size=(2, 2)), ("b", "c"): rng.normal(size=(2, 2))})
        L = random_quadratic(rng, f)
        x, _ = kkt_solve_quadratic(f, L)
        top = p.idx("a")
        np.testing.assert_allclose(x[top], np.linalg.solve(L.A[top], L.b[top]), atol=1e-12)
        np.testing.assert_allclose(f.delta_matrix @ np.concatenate(x), 0.0, atol=1e-12)

    def test_multipliers_satisfy_lagrangian(self, rng):
        f = random_cofunctor(rng, n=6)
        L = random_quadratic(rng, f)
        try:
            x, nu = kkt_solve_quadratic(f, L)
        except SingularSystemError:
            pytest.skip("drew a singular instance")
        c = f.poset.counting
        g = np.concatenate([ci * (A @ xa - b) for ci, A, xa, b in zip(c, L.A, x, L.b)])
        np.testing.assert_allclose(g + f.delta_matrix.T @ nu, 0.0, atol=1e-8)

    def test_singular(self):
        f, L = vee(3.0)  # reduced Hessian 1 + 2 - 3 = 0
        with pytest.raises(SingularSystemError):
            kkt_solve_quadratic(f, L)


class TestBruteForce:
    def test_matches_kkt_on_convex_problem(self, rng):
        f, L = vee(1.5)
        x, _ = kkt_solve_quadratic(f, L)
        res = brute_force_min(f, L)
        np.testing.assert_allclose(np.concatenate(res.x), np.concatenate(x), atol=1e-8)

    def test_unbounded(self):
        f, L = vee(5.0)
        with pytest.raises(UnboundedProblemError):
            brute_force_min(f, L, restarts=3)

    def test_size_cap(self):
        f = Cofunctor(antichain("pqr"), [8, 8, 8], {})
        with pytest.raises(SizeError, match="20"):
            brute_force_min(f, FreeEnergy([np.zeros(8)] * 3))

    def test_simplex_gibbs(self, rng):
        H = rng.normal(size=4)
        f = Cofunctor(antichain(["s"]), [4], {})
        res = brute_force_min(f, FreeEnergy([H]), simplex=True)
        np.testing.assert_allclose(res.x[0], np.exp(-H) / np.exp(-H).sum(), atol=1e-8)
        assert res.value == pytest.approx(-np.log(np.exp(-H).sum()), abs=1e-10)

    def test_reproducible(self, rng):
        f, L = vee(1.0)
        a = brute_force_min(f, L, seed=3)
        b = brute_force_min(f, L, seed=3)
        assert a.value == b.value and a.info == b.info
