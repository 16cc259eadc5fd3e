import numpy as np
import pytest

from regionalized import DomainError, ShapeError, UnknownElementError
from regionalized.functor import validate_cofunctor
import regionalized.gbp as gbp_module
from regionalized.gbp import (
    RegionGraphProblem,
    belief_state,
    gbp_equivalence_check,
    gbp_increment,
    gbp_solve,
    gbp_step,
    marginalization_cofunctor,
    region_free_energy,
    region_key,
)
from regionalized.instances import random_region_problem
from regionalized.oracle import brute_force_min, exact_gibbs, exact_marginals
from regionalized.solver import SolverConfig


def gibbs(H):
    w = np.exp(-(H - H.min()))
    return w / w.sum()


class TestProblem:
    def test_region_key(self):
        assert region_key((3, 1, 2)) == "1,2,3"
        assert region_key(()) == ""

    def test_undeclared_variable(self):
        with pytest.raises(UnknownElementError):
            RegionGraphProblem({1: 2}, [(1, 2)])

    def test_hamiltonian_length(self):
        with pytest.raises(ShapeError):
            RegionGraphProblem({1: 2, 2: 3}, [(1, 2)], [np.zeros(5)])

    def test_inclusion_order(self):
        p = RegionGraphProblem({1: 2, 2: 2, 3: 2}, [(1, 2), (2,), (2, 3)])
        assert p.poset.is_below((2,), (2, 3))
        assert not p.poset.is_below((1, 2), (2, 3))


class TestMarginalization:
    def test_two_by_four(self):
        p = RegionGraphProblem({1: 2, 2: 2}, [(1, 2), (1,)])
        M = p.cofunctor.maps[0, 1]
        np.testing.assert_array_equal(M, [[1, 1, 0, 0], [0, 0, 1, 1]])

    def test_composition_exact(self):
        p = RegionGraphProblem({1: 2, 2: 3, 3: 2}, [(1, 2, 3), (1, 2), (1,)])
        f = marginalization_cofunctor(p)
        a, b, c = (p.poset.idx(r) for r in [(1, 2, 3), (1, 2), (1,)])
        np.testing.assert_array_equal(f.maps[b, c] @ f.maps[a, b], f.maps[a, c])
        assert validate_cofunctor(f, 0.0) == []

    def test_mass_identity(self):
        p = random_region_problem(np.random.default_rng(0), "three_level", cards=3)
        for M in p.cofunctor.maps.values():
            np.testing.assert_array_equal(M.sum(axis=0), 1.0)

    def test_matches_joint_marginal(self, rng):
        p = RegionGraphProblem({1: 2, 2: 3, 3: 2}, [(1, 2, 3), (1, 3)])
        q = rng.random(12)
        np.testing.assert_allclose(p.cofunctor.maps[0, 1] @ q, q.reshape(2, 3, 2).sum(axis=1).ravel())


class TestFreeEnergy:
    def test_single_region_gibbs(self, rng):
        H = rng.normal(size=6)
        p = RegionGraphProblem({1: 2, 2: 3}, [(1, 2)], [H])
        assert region_free_energy(p, [gibbs(H)]) == pytest.approx(-np.log(np.exp(-H).sum()), abs=1e-12)

    def test_powerset_exact(self, rng):
        p = random_region_problem(rng, "powerset3", cards=3, scale=2.0, top_only=True)
        top = p.regions.index((1, 2, 3))
        d = exact_gibbs(p.hamiltonians[top])
        assert region_free_energy(p, exact_marginals(d, p)) == pytest.approx(-d.log_Z, abs=1e-9)

    def test_uniform_singletons(self):
        p = RegionGraphProblem({1: 2, 2: 3, 3: 5}, [(1,), (2,), (3,)])
        q = [np.full(n, 1.0 / n) for n in p.sizes]
        assert region_free_energy(p, q) == pytest.approx(-np.log(30.0), abs=1e-12)

    def test_nonpositive(self):
        p = RegionGraphProblem({1: 2}, [(1,)])
        with pytest.raises(DomainError):
            region_free_energy(p, [np.array([1.0, 0.0])])


class TestStep:
    def test_single_region_is_gibbs(self, rng):
        H = rng.normal(size=4)
        p = RegionGraphProblem({1: 4}, [(1,)], [H])
        s = gbp_step(p, belief_state(p))
        np.testing.assert_allclose(s.beliefs(p)[0], gibbs(H), atol=1e-14)

    def test_zero_energy_fix_point(self):
        p = random_region_problem(np.random.default_rng(1), "three_level", scale=0.0)
        s = gbp_step(p, belief_state(p))
        np.testing.assert_allclose(s.increment, 0.0, atol=1e-14)
        for b, n in zip(s.beliefs(p), p.sizes):
            np.testing.assert_allclose(b, 1.0 / n, atol=1e-15)

    def test_normalized(self, rng):
        p = random_region_problem(rng, "loop", cards=3)
        s = belief_state(p)
        for _ in range(5):
            s = gbp_step(p, s)
            for b in s.beliefs(p):
                assert abs(b.sum() - 1.0) <= 1e-12

    def test_large_energies_stay_finite(self, rng):
        p = random_region_problem(rng, "three_level", cards=3, scale=30.0)
        s = belief_state(p)
        for _ in range(50):
            s = gbp_step(p, s)
        assert np.all(np.isfinite(s.log_messages)) and np.all(np.isfinite(s.log_beliefs))


class TestSolve:
    def test_two_region_exact(self, rng):
        p = random_region_problem(rng, "two_region", cards={1: 3, 2: 2}, top_only=True)
        rep = gbp_solve(p, SolverConfig(method="gbp"))
        assert rep.converged
        m = exact_marginals(exact_gibbs(p.hamiltonians[0]), p)
        for a, b in zip(rep.x_star, m):
            np.testing.assert_allclose(a, b, atol=1e-6)

    def test_diamond_matches_projected_gradient(self, rng):
        p = random_region_problem(rng, "diamond")
        rep = gbp_solve(p, SolverConfig(method="gbp"))
        assert rep.converged and rep.constraint_norm <= 1e-6 and rep.stationarity <= 1e-6
        ref = brute_force_min(p.cofunctor, p.losses, simplex=True)
        np.testing.assert_allclose(np.concatenate(rep.x_star), np.concatenate(ref.x), atol=1e-6)

    def test_powerset_matches_enumeration(self, rng):
        p = random_region_problem(rng, "powerset2", cards=3, top_only=True)
        rep = gbp_solve(p, SolverConfig(method="gbp"))
        m = exact_marginals(exact_gibbs(p.hamiltonians[p.regions.index((1, 2))]), p)
        for a, b in zip(rep.x_star, m):
            np.testing.assert_allclose(a, b, atol=1e-6)

    def test_zero_energy_converges_at_once(self):
        p = random_region_problem(np.random.default_rng(2), "diamond", scale=0.0)
        rep = gbp_solve(p, SolverConfig(method="gbp"))
        assert rep.converged and rep.iterations == 1
        assert rep.trace[0].message_delta == 0.0


class TestEquivalence:
    def test_trivial(self):
        p = random_region_problem(np.random.default_rng(3), "diamond", scale=0.0)
        assert gbp_equivalence_check(p, np.zeros(p.pair_dim)) <= 1e-15

    @pytest.mark.parametrize("shape", ["diamond", "three_level", "loop"])
    def test_random_states(self, rng, shape):
        p = random_region_problem(rng, shape, cards=2)
        for _ in range(5):
            assert gbp_equivalence_check(p, 0.3 * rng.normal(size=p.pair_dim)) <= 1e-9

    def test_detects_mismatch(self, rng, monkeypatch):
        # sanity check of the check itself: a wrong increment is caught
        p = random_region_problem(rng, "diamond")
        l = 0.3 * rng.normal(size=p.pair_dim)
        monkeypatch.setattr(gbp_module, "gbp_increment", lambda p_, s: 2.0 * gbp_increment(p_, s))
        assert gbp_equivalence_check(p, l) > 1e-3


class TestRestarts:
    @pytest.mark.parametrize("shape", ["loop", "three_level", "powerset3"])
    def test_random_starts_agree(self, rng, shape):
        # no uniqueness is claimed in general; on these instances every
        # start lands on the same fix point
        p = random_region_problem(rng, shape, cards=2, scale=3.0)
        xs = []
        for seed in range(5):
            lam0 = np.random.default_rng(seed).normal(scale=2.0, size=p.pair_dim)
            rep = gbp_solve(p, SolverConfig(method="gbp", max_iters=5000), lam0=lam0)
            assert rep.converged
            xs.append(np.concatenate(rep.x_star))
        for x in xs[1:]:
            np.testing.assert_allclose(x, xs[0], atol=1e-7)
