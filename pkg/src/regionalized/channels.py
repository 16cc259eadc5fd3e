"""Noisy channel networks: cofunctors into column-stochastic kernels.

A kernel ``K^a_b`` is a ``|F(b)| x |F(a)|`` matrix whose column ``w``
holds the distribution ``K(. | w)``. It pushes densities forward
(``p -> K p``), and its transpose takes conditional expectations of
functions (``f -> K^T f``).

Message passing mirrors :mod:`regionalized.gbp`, with marginalization
replaced by the pushforward. Bottom-up messages come in two flavours:

* ``variant="log"`` (default): the log-message is transported by the
  conditional expectation, ``ln n_{b->a} = K^T nu_{b->a}``. This is the
  generic update of :mod:`regionalized.solver` for the pushforward
  cofunctor, so its fix points are critical points of the region free
  energy.
* ``variant="literal"``: the message itself is transported,
  ``n_{b->a} = prod_c K^T m_{c->b}``. For 0/1 kernels both coincide; for
  noisy kernels the literal form has different fix points, which in
  general fail the stationarity certificate.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, NamedTuple

import numpy as np
from scipy.special import logsumexp

from regionalized import _kernels
from regionalized.errors import NumericalOverflowError, ShapeError, ValidationError
from regionalized.functor import Cofunctor
from regionalized.gbp import LOG_FLOOR, BeliefState, RegionGraphProblem, _iterate
from regionalized.poset import Poset
from regionalized.solver import SolverConfig, SolveReport

STOCHASTIC_TOL = 1e-12
KERNEL_FUNCTOR_TOL = 1e-10
VARIANTS = ("log", "literal")


class ColumnViolation(NamedTuple):
    upper: object
    lower: object
    column: int
    column_sum: float

    def __str__(self):
        return f"kernel {self.upper}->{self.lower}, column {self.column}: sums to {self.column_sum:.12g}"


class KernelNetwork:
    """Finite state spaces on a poset joined by stochastic kernels.

    Args:
        poset: network elements.
        state_spaces: ``|F(a)|`` per element (sequence or mapping).
        kernels: ``(upper, lower) -> K`` keyed by element identifiers.
            Pairs left out are filled by composition.

    Raises:
        ValidationError: negative entries or a column not summing to one;
            ``violations`` holds one :class:`ColumnViolation` per bad column.
        FunctorialityError: ``K^b_c K^a_b != K^a_c`` beyond 1e-10.
    """

    def __init__(self, poset: Poset, state_spaces, kernels: Mapping):
        self.poset = poset
        bad = []
        for (upper, lower), K in kernels.items():
            K = np.asarray(K, dtype=np.float64)
            if K.ndim != 2:
                raise ShapeError(f"kernel {upper!r}->{lower!r} must be a matrix")
            if (K < 0).any():
                j = np.argwhere(K < 0)[0][1]
                bad.append(ColumnViolation(upper, lower, int(j), float(K[:, j].sum())))
                continue
            sums = K.sum(axis=0)
            for j in np.flatnonzero(np.abs(sums - 1.0) > STOCHASTIC_TOL):
                bad.append(ColumnViolation(upper, lower, int(j), float(sums[j])))
        if bad:
            raise ValidationError(
                f"{len(bad)} kernel column(s) are not probability vectors; first: {bad[0]}", bad
            )
        self.cofunctor = Cofunctor(poset, state_spaces, kernels, tol=KERNEL_FUNCTOR_TOL)
        self.state_spaces = self.cofunctor.dims
        self.strictly_positive = all(bool((K > 0).all()) for K in self.cofunctor.maps.values())

    @property
    def kernels(self) -> dict:
        return self.cofunctor.maps

    def kernel(self, a: int, b: int) -> np.ndarray:
        return self.cofunctor.map(a, b)

    @cached_property
    def _plan(self):
        return _ChannelPlan(self)


def pushforward_cofunctor(k: KernelNetwork) -> Cofunctor:
    """The cofunctor ``p -> K p`` on densities (already validated)."""
    return k.cofunctor


def conditional_expectation(k: KernelNetwork, pair, f_b) -> np.ndarray:
    """``(K^a_b)^T f_b`` for ``pair = (a, b)`` given as element identifiers."""
    a, b = (k.poset.idx(e) for e in pair)
    if not k.poset.leq[a, b]:
        raise ShapeError(f"{pair[1]!r} is not below {pair[0]!r}")
    f_b = np.asarray(f_b, dtype=np.float64)
    if f_b.shape != (k.state_spaces[b],):
        raise ShapeError(f"function has shape {f_b.shape}, expected ({k.state_spaces[b]},)")
    return k.kernel(a, b).T @ f_b


def network_from_regions(p: RegionGraphProblem) -> KernelNetwork:
    """Deterministic kernel network whose kernels are the marginalizations of ``p``."""
    f = p.cofunctor
    e = p.poset.elements
    return KernelNetwork(p.poset, f.dims, {(e[a], e[b]): m for (a, b), m in f.maps.items()})


class _ChannelPlan:
    """Index arrays for one network, shared by every step."""

    def __init__(self, k: KernelNetwork):
        f = k.cofunctor
        P = k.poset
        self.f = f
        self.offsets = f.offsets
        self.sizes = f.dims
        # (a, b, [pair slots c->b with c > b and c not <= a])
        self.incoming = []
        for a in range(len(P)):
            for b in P.down(a):
                ks = [f.pair_index[c, b] for c in P.up(b) if c != b and not P.leq[a, c]]
                if ks:
                    self.incoming.append((a, b, ks))
        src, dst, logw, lower = [], [], [], []
        for k_, (a, b) in enumerate(f.pairs):
            K = f.maps[a, b]
            rows, cols = np.nonzero(K)
            src.append(f.offsets[a] + cols)
            dst.append(f.pair_offsets[k_] + rows)
            logw.append(np.log(K[rows, cols]))
            lower.append(f.offsets[b] + np.arange(f.dims[b]))
        cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)
        self.push_src = cat(src, np.intp)
        self.push_dst = cat(dst, np.intp)
        self.push_logw = cat(logw, np.float64)
        self.lower = cat(lower, np.intp)


@dataclass
class ChannelBeliefState(BeliefState):
    variant: str = "log"


def _log_beliefs(k: KernelNetwork, H, lam, variant):
    plan = k._plan
    f = plan.f
    raw = np.concatenate(H) * -1.0 if len(H) else np.zeros(0)
    for a, b, ks in plan.incoming:
        sl = slice(f.offsets[a], f.offsets[a + 1])
        if variant == "log" or a == b:
            nu = sum(f.pair_block(lam, kk) for kk in ks)
            raw[sl] += nu if a == b else f.maps[a, b].T @ nu
        else:
            with np.errstate(divide="ignore"):
                logK = np.log(f.maps[a, b])
            for kk in ks:
                # ln sum_w m(w) K(w | w1) for each w1
                msg = np.maximum(logsumexp(f.pair_block(lam, kk)[:, None] + logK, axis=0), LOG_FLOOR)
                raw[sl] += msg
    log_z = _kernels.segment_logsumexp(raw, f.offsets)
    if not (np.all(np.isfinite(raw)) and np.all(np.isfinite(log_z))):
        raise NumericalOverflowError("non-finite log-belief")
    return raw - np.repeat(log_z, f.dims), log_z


def _check_hamiltonians(k, hamiltonians):
    if isinstance(hamiltonians, Mapping):
        hamiltonians = [hamiltonians[e] for e in k.poset.elements]
    H = [np.asarray(h, dtype=np.float64).ravel() for h in hamiltonians]
    if len(H) != len(k.poset) or any(h.size != d for h, d in zip(H, k.state_spaces)):
        raise ShapeError("hamiltonians must match the network's state spaces")
    return H


def channel_state(k: KernelNetwork, hamiltonians, lam=None, variant="log", t=0) -> ChannelBeliefState:
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    H = _check_hamiltonians(k, hamiltonians)
    f = k.cofunctor
    lam = np.zeros(f.pair_dim) if lam is None else f.as_pairfield(lam).copy()
    logb, log_z = _log_beliefs(k, H, lam, variant)
    return ChannelBeliefState(lam, logb, log_z, None, t, variant)


def channel_increment(k: KernelNetwork, s: BeliefState) -> np.ndarray:
    """``ln (K^a_b b_a) - ln b_b`` for every pair."""
    plan = k._plan
    vals = plan.push_logw + s.log_beliefs[plan.push_src]
    push = _kernels.scatter_logsumexp(vals, plan.push_dst, k.cofunctor.pair_dim)
    return np.maximum(push, LOG_FLOOR) - s.log_beliefs[plan.lower]


def channel_step(
    k: KernelNetwork, hamiltonians, s: ChannelBeliefState, damping: float = 0.5
) -> ChannelBeliefState:
    """Synchronous damped update of every top-down log-message."""
    inc = channel_increment(k, s)
    new = channel_state(k, hamiltonians, s.log_messages + damping * inc, s.variant, s.t + 1)
    new.increment = inc
    return new


def channel_solve(
    k: KernelNetwork,
    hamiltonians,
    cfg: SolverConfig | None = None,
    lam0=None,
    variant: str = "log",
) -> SolveReport:
    """Iterate :func:`channel_step`; certificates as in :func:`regionalized.gbp.gbp_solve`."""
    cfg = cfg or SolverConfig(method="channel")
    H = _check_hamiltonians(k, hamiltonians)
    state = channel_state(k, H, lam0, variant)
    step = lambda s: channel_step(k, H, s, cfg.damping)
    return _iterate(step, state, cfg, k.cofunctor, np.concatenate(H), "channel")
