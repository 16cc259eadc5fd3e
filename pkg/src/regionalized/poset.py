"""Finite posets with exact zeta/Möbius matrices and counting coefficients.

Conventions: elements are addressed by their position in the declared
element list. ``leq[a, b]`` is true iff ``b <= a``, so the zeta matrix is
``Z[a, b] = 1 iff b <= a`` and the Möbius matrix ``M = Z^-1`` stores
``mu(a, b)`` at ``M[a, b]``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Hashable, Iterable, Sequence

import numpy as np

from regionalized import _kernels
from regionalized.errors import CycleError, NotComparableError, UnknownElementError


@dataclass(frozen=True, eq=False)
class Poset:
    elements: tuple
    leq: np.ndarray
    mobius: np.ndarray
    counting: np.ndarray
    order: np.ndarray
    index: dict = field(repr=False)

    def __len__(self):
        return len(self.elements)

    def __eq__(self, other):
        if not isinstance(other, Poset):
            return NotImplemented
        return self.elements == other.elements and np.array_equal(self.leq, other.leq)

    __hash__ = None

    def idx(self, element) -> int:
        try:
            return self.index[element]
        except KeyError:
            raise UnknownElementError(f"unknown element {element!r}") from None

    def is_below(self, b, a) -> bool:
        """True iff ``b <= a`` (elements, not indices)."""
        return bool(self.leq[self.idx(a), self.idx(b)])

    def down(self, i: int) -> np.ndarray:
        """Indices ``b`` with ``b <= i``."""
        return np.flatnonzero(self.leq[i])

    def up(self, i: int) -> np.ndarray:
        """Indices ``a`` with ``i <= a``."""
        return np.flatnonzero(self.leq[:, i])

    def strict_pairs(self) -> list[tuple[int, int]]:
        """All index pairs ``(a, b)`` with ``b < a``, sorted by ``(a, b)``."""
        strict = self.leq.copy()
        np.fill_diagonal(strict, False)
        return [(int(a), int(b)) for a, b in zip(*np.nonzero(strict))]

    def covers(self) -> list[tuple[int, int]]:
        """Covering pairs ``(a, b)``: ``b < a`` with nothing strictly between."""
        out = []
        for a, b in self.strict_pairs():
            between = self.leq[a] & self.leq[:, b]
            if between.sum() == 2:
                out.append((a, b))
        return out

    def zeta_matrix(self) -> np.ndarray:
        return self.leq.astype(np.int64)

    def opposite(self) -> "Poset":
        pairs = [(self.elements[a], self.elements[b]) for a, b in self.strict_pairs()]
        return build_poset(pairs, self.elements)


def _find_path(adj, src, dst):
    prev = {src: None}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            break
        for v in adj[u]:
            if v not in prev:
                prev[v] = u
                queue.append(v)
    path, u = [], dst
    while u is not None:
        path.append(u)
        u = prev.get(u)
    return path[::-1]


def build_poset(pairs: Iterable[tuple[Hashable, Hashable]], elements: Sequence[Hashable]) -> Poset:
    """Build a poset from ``(lower, upper)`` relation pairs.

    The pairs need not be covers; the reflexive-transitive closure is taken.

    Raises:
        UnknownElementError: a pair references an undeclared element.
        CycleError: the closure relates two distinct elements both ways.
        ValueError: duplicate element identifiers.
    """
    elements = tuple(elements)
    index = {e: i for i, e in enumerate(elements)}
    if len(index) != len(elements):
        raise ValueError("element identifiers must be unique")
    n = len(elements)
    rel = np.zeros((n, n), dtype=np.uint8)
    adj = [[] for _ in range(n)]
    for lower, upper in pairs:
        for e in (lower, upper):
            if e not in index:
                raise UnknownElementError(f"relation references undeclared element {e!r}")
        lo, hi = index[lower], index[upper]
        rel[hi, lo] = 1
        adj[lo].append(hi)
    leq = _kernels.transitive_closure(rel).astype(bool)

    both = leq & leq.T
    np.fill_diagonal(both, False)
    if both.any():
        a, b = (int(i) for i in np.argwhere(both)[0])
        # leq[a, b] means b <= a: walk b -> a then back a -> b
        cycle = _find_path(adj, b, a) + _find_path(adj, a, b)[1:]
        names = [elements[i] for i in cycle]
        raise CycleError(
            "order relation is cyclic: " + " <= ".join(map(str, names)), cycle=names
        )

    order = np.argsort(leq.sum(axis=1), kind="stable").astype(np.intp)
    mobius = _kernels.mobius_matrix(leq, order)
    counting = _column_sums(mobius)
    return Poset(elements, leq, mobius, counting, order, index)


def _column_sums(mobius):
    # c(a) = sum_{b >= a} mu(b, a); mu(b, a) is zero unless a <= b
    sums = mobius.sum(axis=0)
    if sums.dtype == object:
        return sums
    return sums.astype(np.int64)


def mobius_value(p: Poset, a, b) -> int:
    """Return ``mu(a, b)`` for elements with ``b <= a``."""
    ia, ib = p.idx(a), p.idx(b)
    if not p.leq[ia, ib]:
        raise NotComparableError(f"{b!r} is not below {a!r}")
    return int(p.mobius[ia, ib])


def counting_coefficients(p: Poset) -> np.ndarray:
    """``c(a) = sum_{b >= a} mu(b, a)`` for every element, in element order."""
    return p.counting.copy()


# -- common constructions -------------------------------------------------

def chain(elements: Sequence[Hashable]) -> Poset:
    """Total order ``elements[0] < elements[1] < ...``."""
    return build_poset(list(zip(elements[:-1], elements[1:])), elements)


def antichain(elements: Sequence[Hashable]) -> Poset:
    return build_poset([], elements)


def subsets_poset(sets: Sequence[Iterable]) -> Poset:
    """Poset of the given sets ordered by inclusion.

    Elements are tuples of sorted members.
    """
    keys = [tuple(sorted(s)) for s in sets]
    frozen = [frozenset(k) for k in keys]
    pairs = [
        (keys[j], keys[i])
        for i in range(len(keys))
        for j in range(len(keys))
        if frozen[j] < frozen[i]
    ]
    return build_poset(pairs, keys)


def powerset(items: Sequence[Hashable]) -> Poset:
    items = sorted(items)
    sets = [c for r in range(len(items) + 1) for c in combinations(items, r)]
    return subsets_poset(sets)


def random_poset(n: int, density: float, rng: np.random.Generator) -> Poset:
    """Closure of a random DAG on ``n`` elements (edges follow a random permutation)."""
    perm = rng.permutation(n)
    pairs = [
        (int(perm[i]), int(perm[j]))
        for i in range(n)
        for j in range(i + 1, n)
        if rng.random() < density
    ]
    return build_poset(pairs, list(range(n)))
