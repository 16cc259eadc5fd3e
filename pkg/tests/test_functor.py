import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from regionalized import FunctorialityError, ShapeError, chain
from regionalized.functor import (
    Cofunctor,
    delta,
    dual_d,
    limit_basis,
    mobius_dual,
    stationarity_residual,
    validate_cofunctor,
    zeta_dual,
)
from regionalized.instances import random_cofunctor
from regionalized.poset import antichain, build_poset


def three_chain(rng, d=(2, 3, 2)):
    p = chain(["c", "b", "a"])
    Fab = rng.normal(size=(d[1], d[2]))
    Fbc = rng.normal(size=(d[0], d[1]))
    return Cofunctor(p, list(d), {("a", "b"): Fab, ("b", "c"): Fbc}), Fab, Fbc


class TestConstruction:
    def test_missing_pair_filled_by_composition(self, rng):
        f, Fab, Fbc = three_chain(rng)
        np.testing.assert_allclose(f.maps[f.poset.idx("a"), f.poset.idx("c")], Fbc @ Fab)

    def test_wrong_shape(self, rng):
        p = chain(["lo", "hi"])
        with pytest.raises(ShapeError, match="expected \\(2, 3\\)"):
            Cofunctor(p, [2, 3], {("hi", "lo"): np.zeros((3, 2))})

    def test_map_against_order(self):
        p = chain(["lo", "hi"])
        with pytest.raises(ShapeError):
            Cofunctor(p, [1, 1], {("lo", "hi"): [[1.0]]})

    def test_broken_composition_reported(self, rng):
        p = chain(["c", "b", "a"])
        maps = {("a", "b"): np.eye(2), ("b", "c"): np.eye(2), ("a", "c"): 2 * np.eye(2)}
        with pytest.raises(FunctorialityError) as exc:
            Cofunctor(p, [2, 2, 2], maps)
        v = exc.value.violations[0]
        assert (v.upper, v.middle, v.lower) == ("a", "b", "c")
        assert v.error == pytest.approx(1.0)

    def test_validate_lists_nothing_for_genuine_functor(self, rng):
        f = random_cofunctor(rng, n=7)
        assert validate_cofunctor(f, 1e-9) == []

    def test_as_section_accepts_blocks(self, rng):
        f, *_ = three_chain(rng)
        blocks = [np.arange(d, dtype=float) for d in f.dims]
        np.testing.assert_array_equal(f.split(f.as_section(blocks))[1], blocks[1])
        with pytest.raises(ShapeError):
            f.as_section(np.zeros(3))


class TestOperators:
    def test_delta_by_hand(self, rng):
        f, Fab, Fbc = three_chain(rng)
        v = [rng.normal(size=d) for d in f.dims]
        out = f.split_pairs(delta(f, v))
        a, b, c = (f.poset.idx(e) for e in "abc")
        np.testing.assert_allclose(out[a, b], Fab @ v[a] - v[b])
        np.testing.assert_allclose(out[b, c], Fbc @ v[b] - v[c])
        np.testing.assert_allclose(out[a, c], Fbc @ Fab @ v[a] - v[c])

    def test_limit_is_kernel_of_delta(self, rng):
        f = random_cofunctor(rng, n=6)
        B = limit_basis(f)
        np.testing.assert_allclose(f.delta_matrix @ B, 0.0, atol=1e-10)
        np.testing.assert_allclose(B.T @ B, np.eye(B.shape[1]), atol=1e-12)
        # and nothing is missing: rank + nullity = total dimension
        assert np.linalg.matrix_rank(f.delta_matrix) + B.shape[1] == f.total_dim

    def test_antichain_has_no_constraints(self):
        f = Cofunctor(antichain("xy"), [2, 3], {})
        assert f.pair_dim == 0
        assert limit_basis(f).shape == (5, 5)

    def test_mobius_weighted_equals_counting_on_limit(self, rng):
        # B^T mobius_dual = B^T diag(c) on lim F
        f = random_cofunctor(rng, n=7)
        B = f.limit_basis
        C = np.diag(np.repeat(f.poset.counting.astype(float), f.dims))
        np.testing.assert_allclose(B.T @ f.mobius_dual_matrix, B.T @ C, atol=1e-10)

    @given(st.integers(0, 2**32 - 1))
    def test_adjoint_and_inverse(self, seed):
        rng = np.random.default_rng(seed)
        f = random_cofunctor(rng)
        l = rng.normal(size=f.pair_dim)
        v = rng.normal(size=f.total_dim)
        assert np.isclose(dual_d(f, l) @ v, l @ delta(f, v), atol=1e-10 * (1 + np.abs(l).sum() * np.abs(v).sum()))
        y = rng.normal(size=f.total_dim)
        np.testing.assert_allclose(mobius_dual(f, zeta_dual(f, y)), y, atol=1e-10)
        np.testing.assert_allclose(zeta_dual(f, mobius_dual(f, y)), y, atol=1e-10)


class TestStationarity:
    def test_zero_on_annihilator(self, rng):
        # y = zeta_dual(d l) has mobius_dual(y) = d l, which kills lim F
        f = random_cofunctor(rng, n=6)
        y = zeta_dual(f, dual_d(f, rng.normal(size=f.pair_dim)))
        assert stationarity_residual(f, y) < 1e-10

    def test_positive_off_annihilator(self, rng):
        f = random_cofunctor(rng, n=6)
        B = f.limit_basis
        # a differential that pairs nontrivially with lim F
        y = zeta_dual(f, B[:, 0])
        assert stationarity_residual(f, y) == pytest.approx(1.0)

    def test_custom_basis(self, rng):
        p = build_poset([], ["s"])
        f = Cofunctor(p, [3], {})
        y = np.array([1.0, 1.0, 1.0])
        tangent = np.linalg.svd(np.ones((1, 3)))[2][1:].T
        assert stationarity_residual(f, y, tangent) < 1e-14
        assert stationarity_residual(f, y) == pytest.approx(np.sqrt(3))
