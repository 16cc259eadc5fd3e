import numpy as np
import pytest

from regionalized import FunctorialityError, ShapeError, ValidationError, build_poset, chain
from regionalized.channels import (
    KernelNetwork,
    channel_solve,
    channel_state,
    channel_step,
    conditional_expectation,
    network_from_regions,
    pushforward_cofunctor,
)
from regionalized.functor import validate_cofunctor
from regionalized.gbp import belief_state, gbp_solve, gbp_step
from regionalized.instances import random_hamiltonians, random_kernel_network, random_region_problem
from regionalized.loss import FreeEnergy
from regionalized.oracle import brute_force_min
from regionalized.solver import SolverConfig


def bsc(flip):
    return np.array([[1 - flip, flip], [flip, 1 - flip]])


class TestNetwork:
    def test_column_sum_violation_names_pair_and_column(self):
        K = bsc(0.1)
        K[:, 1] *= 0.9
        with pytest.raises(ValidationError) as exc:
            KernelNetwork(chain(["lo", "hi"]), [2, 2], {("hi", "lo"): K})
        v = exc.value.violations[0]
        assert (v.upper, v.lower, v.column) == ("hi", "lo", 1)
        assert v.column_sum == pytest.approx(0.9)
        assert "column 1" in str(exc.value)

    def test_negative_entry(self):
        K = np.array([[1.2, 0.0], [-0.2, 1.0]])
        with pytest.raises(ValidationError):
            KernelNetwork(chain(["lo", "hi"]), [2, 2], {("hi", "lo"): K})

    def test_inconsistent_composition(self, rng):
        p = chain(["c", "b", "a"])
        kernels = {("a", "b"): bsc(0.1), ("b", "c"): bsc(0.2), ("a", "c"): bsc(0.3)}
        with pytest.raises(FunctorialityError):
            KernelNetwork(p, [2, 2, 2], kernels)

    def test_positivity_flag(self, rng):
        assert random_kernel_network(rng, "chain").strictly_positive
        p = random_region_problem(rng, "diamond")
        assert not network_from_regions(p).strictly_positive

    def test_composed_chain_is_functorial(self, rng):
        k = random_kernel_network(rng, "chain")
        assert validate_cofunctor(pushforward_cofunctor(k), 1e-10) == []

    def test_diamond_routes_agree(self, rng):
        k = random_kernel_network(rng, "diamond")
        P = k.poset
        a, b1, b2, c = (P.idx(e) for e in ("a", "b1", "b2", "c"))
        np.testing.assert_allclose(k.kernel(b1, c) @ k.kernel(a, b1), k.kernel(b2, c) @ k.kernel(a, b2), atol=1e-14)


class TestPushforward:
    def test_deterministic_equals_marginalization(self, rng):
        p = random_region_problem(rng, "three_level", cards=3)
        k = network_from_regions(p)
        for pr, M in p.cofunctor.maps.items():
            np.testing.assert_array_equal(pushforward_cofunctor(k).maps[pr], M)

    def test_uniform_output(self, rng):
        K = np.full((3, 4), 1 / 3)
        k = KernelNetwork(chain(["lo", "hi"]), [3, 4], {("hi", "lo"): K})
        p = rng.random(4)
        p /= p.sum()
        np.testing.assert_allclose(pushforward_cofunctor(k).maps[1, 0] @ p, 1 / 3)

    def test_probability_preserved(self, rng):
        k = random_kernel_network(rng, "diamond")
        for M in k.kernels.values():
            p = rng.random(M.shape[1])
            p /= p.sum()
            q = M @ p
            assert np.all(q >= 0) and abs(q.sum() - 1) <= 1e-12


class TestConditionalExpectation:
    def test_constant_function(self, rng):
        k = random_kernel_network(rng, "chain")
        np.testing.assert_allclose(conditional_expectation(k, ("a", "c"), np.ones(k.state_spaces[2])), 1.0, atol=1e-14)

    def test_adjoint(self, rng):
        k = random_kernel_network(rng, "chain")
        f = rng.normal(size=k.state_spaces[1])
        p = rng.random(k.state_spaces[0])
        K = k.kernel(0, 1)
        assert f @ (K @ p) == pytest.approx(conditional_expectation(k, ("a", "b"), f) @ p, abs=1e-12)

    def test_projection_is_cylindrical_extension(self):
        p = random_region_problem(np.random.default_rng(0), "two_region", cards=2)
        k = network_from_regions(p)
        out = conditional_expectation(k, ((1, 2), (1,)), np.array([5.0, 7.0]))
        np.testing.assert_array_equal(out, [5, 5, 7, 7])

    def test_errors(self, rng):
        k = random_kernel_network(rng, "chain")
        with pytest.raises(ShapeError):
            conditional_expectation(k, ("c", "a"), np.ones(k.state_spaces[0]))
        with pytest.raises(ShapeError):
            conditional_expectation(k, ("a", "b"), np.ones(99))


class TestStep:
    @pytest.mark.parametrize("shape", ["diamond", "three_level"])
    def test_reduces_to_gbp(self, rng, shape):
        p = random_region_problem(rng, shape)
        k = network_from_regions(p)
        lam = 0.5 * rng.normal(size=p.pair_dim)
        g = gbp_step(p, belief_state(p, lam))
        for variant in ("log", "literal"):
            c = channel_step(k, p.hamiltonians, channel_state(k, p.hamiltonians, lam, variant))
            np.testing.assert_allclose(c.increment, g.increment, atol=1e-9)
            np.testing.assert_allclose(c.log_messages, g.log_messages, atol=1e-9)

    def test_symmetric_fix_point(self):
        K = np.full((2, 2), 0.5)
        k = KernelNetwork(chain(["lo", "hi"]), [2, 2], {("hi", "lo"): K})
        s = channel_step(k, [np.zeros(2), np.zeros(2)], channel_state(k, [np.zeros(2), np.zeros(2)]))
        np.testing.assert_allclose(s.increment, 0.0, atol=1e-15)
        np.testing.assert_allclose(np.exp(s.log_beliefs), 0.5)

    def test_unknown_variant(self, rng):
        k = random_kernel_network(rng, "chain")
        with pytest.raises(ValueError):
            channel_state(k, random_hamiltonians(rng, k.state_spaces), variant="exp")


class TestSolve:
    def test_binary_symmetric_channel(self, rng):
        k = KernelNetwork(chain(["lo", "hi"]), [2, 2], {("hi", "lo"): bsc(0.1)})
        H = [np.zeros(2), rng.uniform(-3, 3, size=2)]
        rep = channel_solve(k, H, SolverConfig(method="channel"))
        assert rep.converged
        lo, hi = rep.x_star
        np.testing.assert_allclose(bsc(0.1) @ hi, lo, atol=1e-7)

    def test_single_element(self, rng):
        H = rng.normal(size=3)
        k = KernelNetwork(build_poset([], ["s"]), [3], {})
        rep = channel_solve(k, [H])
        np.testing.assert_allclose(rep.x_star[0], np.exp(-H) / np.exp(-H).sum(), atol=1e-12)

    def test_deterministic_network_equals_gbp(self, rng):
        p = random_region_problem(rng, "loop")
        r1 = gbp_solve(p, SolverConfig(method="gbp"))
        r2 = channel_solve(network_from_regions(p), p.hamiltonians, SolverConfig(method="channel"))
        np.testing.assert_allclose(np.concatenate(r1.x_star), np.concatenate(r2.x_star), atol=1e-6)

    @pytest.mark.parametrize("shape", ["chain", "vee", "diamond"])
    def test_noisy_matches_oracle(self, rng, shape):
        k = random_kernel_network(rng, shape)
        H = random_hamiltonians(rng, k.state_spaces)
        rep = channel_solve(k, H, SolverConfig(method="channel"))
        assert rep.converged and rep.constraint_norm <= 1e-6 and rep.stationarity <= 1e-6
        ref = brute_force_min(k.cofunctor, FreeEnergy(H), simplex=True)
        np.testing.assert_allclose(np.concatenate(rep.x_star), np.concatenate(ref.x), atol=1e-5)

    def test_literal_variant_misses_critical_point(self):
        # two noisy channels into one bottom: the product-of-expectations
        # update settles on consistent beliefs that are not stationary
        rng = np.random.default_rng(0)
        k = random_kernel_network(rng, "vee")
        H = random_hamiltonians(rng, k.state_spaces)
        lit = channel_solve(k, H, SolverConfig(method="channel", max_iters=3000), variant="literal")
        good = channel_solve(k, H, SolverConfig(method="channel"))
        assert good.converged
        assert not lit.converged and lit.stationarity > 1e-3
