"""Cofunctors from a finite poset to finite-dimensional real vector spaces.

A cofunctor ``F`` assigns a dimension ``dims[a]`` to every element and a
matrix ``F^a_b`` of shape ``(dims[b], dims[a])`` to every strict pair
``b < a``. Vectors over the direct sum are stored flat, element blocks in
element order (``SectionVector`` and ``DualVector``); pair-indexed data is
stored flat in ``Poset.strict_pairs()`` order (``PairField``).

The dense operators built here are:

* ``delta``: ``delta(v)(a, b) = F^a_b v_a - v_b``; its kernel is ``lim F``.
* ``dual_d``: the transpose of ``delta``,
  ``d l(a) = sum_{b<a} (F^a_b)^T l_{a->b} - sum_{b>a} l_{b->a}``.
* ``zeta_dual`` / ``mobius_dual``: ``sum_{b<=a} [mu(a,b)] (F^a_b)^T y_b``,
  mutually inverse.
"""

from __future__ import annotations

from functools import cached_property
from typing import Mapping, NamedTuple

import numpy as np

from regionalized.errors import FunctorialityError, ShapeError
from regionalized.poset import Poset

FUNCTOR_TOL = 1e-12
NULLSPACE_RTOL = 1e-10


class Violation(NamedTuple):
    upper: object
    middle: object
    lower: object
    error: float


class Cofunctor:
    """Cofunctor ``F: poset -> Vect_f`` with dense maps.

    Args:
        poset: the underlying poset.
        dims: dimension per element, as a sequence in element order or a
            mapping ``element -> int``.
        maps: mapping ``(upper, lower) -> matrix`` keyed by element
            identifiers. Strict pairs that are missing are filled by
            composing declared maps through intermediate elements.
        validate: if true, raise :class:`FunctorialityError` when some chain
            ``c < b < a`` violates ``F^b_c F^a_b = F^a_c`` beyond ``tol``.
        tol: functoriality tolerance.
    """

    def __init__(self, poset: Poset, dims, maps: Mapping, *, validate=True, tol=FUNCTOR_TOL):
        self.poset = poset
        if isinstance(dims, Mapping):
            dims = [dims[e] for e in poset.elements]
        self.dims = np.asarray(dims, dtype=np.intp)
        if self.dims.shape != (len(poset),):
            raise ShapeError(f"expected {len(poset)} dimensions, got {self.dims.shape}")
        if (self.dims <= 0).any():
            raise ShapeError("dimensions must be positive")
        self.offsets = np.concatenate([[0], np.cumsum(self.dims)]).astype(np.intp)
        self.pairs = poset.strict_pairs()
        self.pair_index = {pr: k for k, pr in enumerate(self.pairs)}
        lowers = np.array([b for _, b in self.pairs], dtype=np.intp)
        self.pair_offsets = np.concatenate([[0], np.cumsum(self.dims[lowers])]).astype(np.intp)

        self.maps: dict[tuple[int, int], np.ndarray] = {}
        for (upper, lower), mat in maps.items():
            a, b = poset.idx(upper), poset.idx(lower)
            if a == b or not poset.leq[a, b]:
                raise ShapeError(f"map {upper!r}->{lower!r} does not follow a strict order pair")
            mat = np.array(mat, dtype=np.float64, ndmin=2)
            want = (int(self.dims[b]), int(self.dims[a]))
            if mat.shape != want:
                raise ShapeError(
                    f"map {upper!r}->{lower!r} has shape {mat.shape}, expected {want}"
                )
            mat.setflags(write=False)
            self.maps[a, b] = mat
        self._complete()
        self.tol = tol
        if validate:
            bad = validate_cofunctor(self, tol)
            if bad:
                v = bad[0]
                raise FunctorialityError(
                    f"{len(bad)} chain(s) break functoriality, e.g. "
                    f"{v.lower!r} < {v.middle!r} < {v.upper!r} (error {v.error:.3g})",
                    bad,
                )

    def _complete(self):
        missing = [pr for pr in self.pairs if pr not in self.maps]
        while missing:
            progress = False
            for a, b in missing:
                for c in self.poset.down(a):
                    if (a, c) in self.maps and (c, b) in self.maps:
                        self.maps[a, b] = self.maps[c, b] @ self.maps[a, c]
                        progress = True
                        break
            missing = [pr for pr in self.pairs if pr not in self.maps]
            if not progress and missing:
                a, b = missing[0]
                e = self.poset.elements
                raise ShapeError(f"no map given or composable for {e[a]!r}->{e[b]!r}")

    # -- layout helpers ---------------------------------------------------

    @property
    def total_dim(self) -> int:
        return int(self.offsets[-1])

    @property
    def pair_dim(self) -> int:
        return int(self.pair_offsets[-1])

    def block(self, v, i):
        return v[self.offsets[i]:self.offsets[i + 1]]

    def pair_block(self, l, k):
        return l[self.pair_offsets[k]:self.pair_offsets[k + 1]]

    def split(self, v) -> list[np.ndarray]:
        v = self.as_section(v)
        return [v[self.offsets[i]:self.offsets[i + 1]] for i in range(len(self.dims))]

    def split_pairs(self, l) -> dict[tuple[int, int], np.ndarray]:
        l = self.as_pairfield(l)
        return {pr: self.pair_block(l, k) for k, pr in enumerate(self.pairs)}

    def as_section(self, v) -> np.ndarray:
        """Coerce a flat array, per-element sequence or mapping to a flat vector."""
        if isinstance(v, Mapping):
            v = [v[e] for e in self.poset.elements]
        if isinstance(v, (list, tuple)):
            if len(v) != len(self.dims):
                raise ShapeError(f"expected {len(self.dims)} blocks, got {len(v)}")
            for i, blk in enumerate(v):
                if np.shape(blk) != (self.dims[i],):
                    raise ShapeError(f"block {i} has shape {np.shape(blk)}, expected ({self.dims[i]},)")
            v = np.concatenate([np.asarray(b, dtype=np.float64) for b in v]) if v else np.zeros(0)
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.total_dim,):
            raise ShapeError(f"section has shape {v.shape}, expected ({self.total_dim},)")
        return v

    def as_pairfield(self, l) -> np.ndarray:
        if isinstance(l, Mapping):
            l = np.concatenate([np.asarray(l[pr], dtype=np.float64) for pr in self.pairs]) if self.pairs else np.zeros(0)
        l = np.asarray(l, dtype=np.float64)
        if l.shape != (self.pair_dim,):
            raise ShapeError(f"pair field has shape {l.shape}, expected ({self.pair_dim},)")
        return l

    def map(self, a: int, b: int) -> np.ndarray:
        """``F^a_b`` by index; identity when ``a == b``."""
        if a == b:
            return np.eye(self.dims[a])
        return self.maps[a, b]

    # -- dense operators --------------------------------------------------

    @cached_property
    def delta_matrix(self) -> np.ndarray:
        D = np.zeros((self.pair_dim, self.total_dim))
        for k, (a, b) in enumerate(self.pairs):
            rows = slice(self.pair_offsets[k], self.pair_offsets[k + 1])
            D[rows, self.offsets[a]:self.offsets[a + 1]] = self.maps[a, b]
            D[rows, self.offsets[b]:self.offsets[b + 1]] -= np.eye(self.dims[b])
        D.setflags(write=False)
        return D

    def _weighted_dual(self, weight) -> np.ndarray:
        Z = np.zeros((self.total_dim, self.total_dim))
        for a in range(len(self.dims)):
            rows = slice(self.offsets[a], self.offsets[a + 1])
            for b in self.poset.down(a):
                w = weight(a, b)
                if w:
                    Z[rows, self.offsets[b]:self.offsets[b + 1]] = w * self.map(a, b).T
        Z.setflags(write=False)
        return Z

    @cached_property
    def zeta_dual_matrix(self) -> np.ndarray:
        return self._weighted_dual(lambda a, b: 1.0)

    @cached_property
    def mobius_dual_matrix(self) -> np.ndarray:
        mu = self.poset.mobius
        return self._weighted_dual(lambda a, b: float(mu[a, b]))

    @cached_property
    def limit_basis(self) -> np.ndarray:
        return _nullspace(self.delta_matrix, self.total_dim)

    @cached_property
    def normalized_limit_basis(self) -> np.ndarray:
        """Basis of ``ker delta`` intersected with the zero-sum tangent space."""
        S = np.zeros((len(self.dims), self.total_dim))
        for i in range(len(self.dims)):
            S[i, self.offsets[i]:self.offsets[i + 1]] = 1.0
        return _nullspace(np.vstack([self.delta_matrix, S]), self.total_dim)


def _nullspace(A, n):
    if A.shape[0] == 0:
        B = np.eye(n)
    else:
        _, s, vt = np.linalg.svd(A, full_matrices=True)
        smax = s[0] if s.size else 0.0
        rank = int(np.sum(s > NULLSPACE_RTOL * smax)) if smax > 0 else 0
        B = vt[rank:].T.copy()
    B.setflags(write=False)
    return B


def validate_cofunctor(f: Cofunctor, tol: float | None = None) -> list[Violation]:
    """Chains ``c < b < a`` with ``max|F^b_c F^a_b - F^a_c| > tol``."""
    tol = f.tol if tol is None else tol
    out = []
    e = f.poset.elements
    for a, b in f.pairs:
        for c in f.poset.down(b):
            if c == b:
                continue
            err = float(np.max(np.abs(f.maps[b, c] @ f.maps[a, b] - f.maps[a, c]), initial=0.0))
            if err > tol:
                out.append(Violation(e[a], e[b], e[c], err))
    return out


def delta(f: Cofunctor, v) -> np.ndarray:
    return f.delta_matrix @ f.as_section(v)


def dual_d(f: Cofunctor, l) -> np.ndarray:
    return f.delta_matrix.T @ f.as_pairfield(l)


def zeta_dual(f: Cofunctor, y) -> np.ndarray:
    return f.zeta_dual_matrix @ f.as_section(y)


def mobius_dual(f: Cofunctor, y) -> np.ndarray:
    return f.mobius_dual_matrix @ f.as_section(y)


def limit_basis(f: Cofunctor) -> np.ndarray:
    """Orthonormal basis of ``lim F = ker delta`` as columns (``N x k``)."""
    return f.limit_basis


def stationarity_residual(f: Cofunctor, y, basis: np.ndarray | None = None) -> float:
    """Norm of ``mobius_dual(y)`` restricted to ``basis`` (default ``lim F``).

    ``y`` is a loss differential. The value vanishes exactly when the point
    it was taken at is a critical point of the regionalized loss over the
    subspace spanned by ``basis``.
    """
    B = f.limit_basis if basis is None else basis
    if B.shape[1] == 0:
        return 0.0
    return float(np.linalg.norm(B.T @ mobius_dual(f, y)))
