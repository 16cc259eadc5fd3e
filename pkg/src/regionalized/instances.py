"""Random problem generators shared by tests, benchmarks and examples.

Cofunctors are built so that functoriality holds by construction: every
element ``a`` carries a set of coordinates ``S_a`` of one ambient space
(shrinking downwards), a change of basis ``T_a`` is applied on top, and
``F^a_b = T_b P_{S_a -> S_b} T_a^{-1}``. Kernel networks are composed from
random strictly positive stochastic matrices with the same idea.
"""

from __future__ import annotations

import numpy as np

from regionalized.channels import KernelNetwork
from regionalized.functor import Cofunctor
from regionalized.gbp import RegionGraphProblem
from regionalized.loss import Quadratic
from regionalized.poset import Poset, build_poset, random_poset

REGION_SHAPES = {
    "two_region": [(1, 2), (1,)],
    "diamond": [(1, 2), (2, 3), (2,)],
    "three_level": [(1, 2, 3), (1, 2), (2, 3), (2,)],
    "powerset2": [(), (1,), (2,), (1, 2)],
    "powerset3": [(), (1,), (2,), (3,), (1, 2), (1, 3), (2, 3), (1, 2, 3)],
    "loop": [(1, 2), (2, 3), (1, 3), (1,), (2,), (3,)],
}


def _well_conditioned(rng, d):
    q1, _ = np.linalg.qr(rng.normal(size=(d, d)))
    q2, _ = np.linalg.qr(rng.normal(size=(d, d)))
    return q1 @ np.diag(rng.uniform(0.5, 2.0, size=d)) @ q2


def random_cofunctor(
    rng: np.random.Generator,
    n: int | None = None,
    max_dim: int = 4,
    density: float = 0.35,
    poset: Poset | None = None,
) -> Cofunctor:
    """Random functorial cofunctor with ``dims <= max_dim`` on a random poset."""
    if poset is None:
        n = int(rng.integers(2, 9)) if n is None else n
        poset = random_poset(n, density, rng)
    ambient = max_dim + 2
    coords: dict[int, np.ndarray] = {}
    for a in poset.order[::-1]:
        above = [c for c in poset.up(a) if c != a]
        allowed = np.arange(ambient)
        for c in above:
            allowed = np.intersect1d(allowed, coords[c])
        rest = allowed[allowed != 0]
        k = int(rng.integers(0, min(max_dim, rest.size + 1)))
        coords[a] = np.sort(np.concatenate([[0], rng.choice(rest, size=k, replace=False)]))
    T = {a: _well_conditioned(rng, coords[a].size) for a in range(len(poset))}
    maps = {}
    for a, b in poset.strict_pairs():
        P = (coords[b][:, None] == coords[a][None, :]).astype(np.float64)
        maps[poset.elements[a], poset.elements[b]] = T[b] @ P @ np.linalg.inv(T[a])
    dims = [coords[a].size for a in range(len(poset))]
    return Cofunctor(poset, dims, maps, tol=1e-9)


def random_spd(rng, d, low=0.5):
    X = rng.normal(size=(d, d))
    A = X @ X.T / d + low * np.eye(d)
    return 0.5 * (A + A.T)


def random_quadratic(rng, f: Cofunctor) -> Quadratic:
    return Quadratic([random_spd(rng, d) for d in f.dims], [rng.normal(size=d) for d in f.dims])


def reduced_hessian(f: Cofunctor, L: Quadratic) -> np.ndarray:
    """``B^T blockdiag(c(a) A_a) B`` on an orthonormal basis ``B`` of ``lim F``."""
    B = f.limit_basis
    c = f.poset.counting.astype(np.float64)
    blocks = np.zeros((f.total_dim, f.total_dim))
    for a in range(len(f.dims)):
        sl = slice(f.offsets[a], f.offsets[a + 1])
        blocks[sl, sl] = c[a] * L.A[a]
    return B.T @ blocks @ B


def random_quadratic_instance(rng, min_sv: float = 0.05, max_tries: int = 200, **kw):
    """Cofunctor and quadratic losses whose constrained problem is well posed.

    Instances whose reduced Hessian has a singular value below ``min_sv``
    (possible because counting coefficients may be zero or negative) are
    drawn again.
    """
    for _ in range(max_tries):
        f = random_cofunctor(rng, **kw)
        L = random_quadratic(rng, f)
        H = reduced_hessian(f, L)
        if H.size == 0 or np.linalg.svd(H, compute_uv=False)[-1] >= min_sv:
            return f, L
    raise RuntimeError("could not draw a well-posed quadratic instance")


def random_region_problem(rng, shape="diamond", cards=2, scale=1.0, top_only=False):
    """Region problem with Hamiltonians drawn uniformly from ``[-scale, scale]``.

    Args:
        shape: key of ``REGION_SHAPES`` or an explicit list of regions.
        cards: cardinality shared by all variables, or a mapping.
        top_only: put energy only on maximal regions.
    """
    regions = REGION_SHAPES[shape] if isinstance(shape, str) else shape
    variables = sorted({v for r in regions for v in r})
    if isinstance(cards, int):
        cards = {v: cards for v in variables}
    p = RegionGraphProblem({v: cards[v] for v in variables}, regions)
    maximal = {i for i in range(len(p.regions)) if p.poset.up(i).size == 1}
    H = [
        rng.uniform(-scale, scale, size=n) if (not top_only or i in maximal) else np.zeros(n)
        for i, n in enumerate(p.sizes)
    ]
    return p.with_hamiltonians(H)


def random_stochastic(rng, rows, cols, floor=0.05):
    K = rng.uniform(floor, 1.0, size=(rows, cols))
    return K / K.sum(axis=0)


def random_doubly_stochastic(rng, n):
    """Strictly positive mixture of the identity, a permutation and the uniform kernel."""
    w = rng.dirichlet([2.0, 2.0, 2.0])
    return w[0] * np.eye(n) + w[1] * np.eye(n)[rng.permutation(n)] + w[2] * np.full((n, n), 1.0 / n)


def random_kernel_network(rng, shape="chain", max_states=4):
    """Strictly positive kernel network.

    Shapes:
        ``chain``: ``c < b < a`` with ``K^a_c = K^b_c K^a_b``.
        ``vee``: one bottom ``b`` below two tops ``a1``, ``a2``. Each top
            refines ``b`` by a latent coordinate and its kernel applies a
            doubly stochastic noise after forgetting it, so uniform beliefs
            are always feasible. (Independent random kernels often have
            images meeting only on the boundary of the simplex, where no
            positive critical point exists.)
        ``diamond``: ``c < b1, b2 < a``. Both middle elements refine ``c``
            by a latent coordinate, ``F(b_i) = F(c) x S_i``; both lower
            kernels are a shared noise ``N`` applied after forgetting the
            latent part, and the upper kernels agree on their ``F(c)``
            marginal, so the two routes from ``a`` to ``c`` coincide.
    """
    size = lambda: int(rng.integers(2, max_states + 1))
    if shape == "chain":
        da, db, dc = size(), size(), size()
        P = build_poset([("c", "b"), ("b", "a")], ["a", "b", "c"])
        kernels = {
            ("a", "b"): random_stochastic(rng, db, da),
            ("b", "c"): random_stochastic(rng, dc, db),
        }
        return KernelNetwork(P, {"a": da, "b": db, "c": dc}, kernels)
    if shape == "vee":
        db = 2
        s1, s2 = (int(rng.integers(1, max_states // db + 1)) for _ in range(2))
        P = build_poset([("b", "a1"), ("b", "a2")], ["a1", "a2", "b"])
        kernels = {
            (top, "b"): random_doubly_stochastic(rng, db) @ np.kron(np.eye(db), np.ones((1, s)))
            for top, s in (("a1", s1), ("a2", s2))
        }
        return KernelNetwork(P, {"a1": db * s1, "a2": db * s2, "b": db}, kernels)
    if shape == "diamond":
        nc, ns = 2, max(1, max_states // 2)
        nb = nc * ns
        da = size()
        P = build_poset([("c", "b1"), ("c", "b2"), ("b1", "a"), ("b2", "a")], ["a", "b1", "b2", "c"])
        marg = np.kron(np.eye(nc), np.ones((1, ns)))  # (c, s) -> c, row-major in (c, s)
        N = random_stochastic(rng, nc, nc)
        K1 = random_stochastic(rng, nb, da)
        J = marg @ K1
        R = random_stochastic(rng, ns, nc * da).reshape(ns, nc, da)
        K2 = (J[:, None, :] * R.transpose(1, 0, 2)).reshape(nb, da)
        kernels = {("a", "b1"): K1, ("a", "b2"): K2, ("b1", "c"): N @ marg, ("b2", "c"): N @ marg}
        return KernelNetwork(P, {"a": da, "b1": nb, "b2": nb, "c": nc}, kernels)
    raise ValueError(f"unknown network shape {shape!r}")


def random_hamiltonians(rng, dims, scale=3.0):
    return [rng.uniform(-scale, scale, size=int(d)) for d in dims]
