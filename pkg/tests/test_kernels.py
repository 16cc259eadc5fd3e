import numpy as np
import pytest
from scipy.special import logsumexp

from regionalized import _kernels, _pykernels
from regionalized.poset import powerset, random_poset

try:
    from regionalized import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = [_pykernels] + ([_ckernels] if _ckernels is not None else [])


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
class TestBackends:
    def test_closure(self, impl, rng):
        rel = (rng.random((15, 15)) < 0.1).astype(np.uint8)
        rel = np.triu(rel, 1)
        out = np.asarray(impl.transitive_closure(rel.copy()), dtype=bool)
        ref = np.eye(15, dtype=bool) | rel.astype(bool)
        for _ in range(15):
            ref = ref | ((ref.astype(int) @ ref.astype(int)) > 0)
        np.testing.assert_array_equal(out | np.eye(15, dtype=bool), ref)

    def test_mobius_inverts_zeta(self, impl, rng):
        p = random_poset(40, 0.2, rng)
        leq = np.ascontiguousarray(p.leq, dtype=np.uint8)
        mu = np.asarray(impl.mobius_matrix(leq, np.ascontiguousarray(p.order, dtype=np.intp)))
        np.testing.assert_array_equal(p.leq.astype(np.int64) @ mu, np.eye(40, dtype=np.int64))

    def test_segment_logsumexp(self, impl, rng):
        v = rng.normal(size=20) * 50
        starts = np.array([0, 3, 3, 11, 20], dtype=np.intp)
        out = np.asarray(impl.segment_logsumexp(v, starts))
        assert np.isneginf(out[1])
        np.testing.assert_allclose(out[[0, 2, 3]], [logsumexp(v[0:3]), logsumexp(v[3:11]), logsumexp(v[11:20])], rtol=1e-13)

    def test_scatter_logsumexp(self, impl, rng):
        v = rng.normal(size=30) * 100
        dst = rng.integers(0, 6, size=30).astype(np.intp)
        dst[dst == 5] = 4  # leave slot 5 empty
        out = np.asarray(impl.scatter_logsumexp(v, dst, 6))
        for k in range(5):
            sel = dst == k
            if sel.any():
                np.testing.assert_allclose(out[k], logsumexp(v[sel]), rtol=1e-13)
        assert np.isneginf(out[5])


@pytest.mark.skipif(_ckernels is None, reason="extension not built")
def test_backends_agree(rng):
    p = random_poset(50, 0.15, rng)
    leq = np.ascontiguousarray(p.leq, dtype=np.uint8)
    order = np.ascontiguousarray(p.order, dtype=np.intp)
    np.testing.assert_array_equal(_ckernels.mobius_matrix(leq, order), _pykernels.mobius_matrix(leq, order))
    v = rng.normal(size=200)
    dst = rng.integers(0, 40, size=200).astype(np.intp)
    np.testing.assert_allclose(_ckernels.scatter_logsumexp(v, dst, 40), _pykernels.scatter_logsumexp(v, dst, 40), rtol=1e-14)


def test_backend_name():
    assert _kernels.BACKEND in ("cython", "python")


def test_bigint_fallback():
    # used only when int64 would overflow; it must agree where both work
    p = powerset(range(5))
    leq = np.ascontiguousarray(p.leq, dtype=np.uint8)
    order = np.ascontiguousarray(p.order, dtype=np.intp)
    big = _kernels._mobius_bigint(leq, order)
    assert big.dtype == object
    np.testing.assert_array_equal(big.astype(np.int64), p.mobius)
