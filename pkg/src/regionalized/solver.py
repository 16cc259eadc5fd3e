"""Message passing on Lagrange multipliers for regionalized losses.

Multipliers ``l`` live on strict pairs (a ``PairField``). Every candidate
point is ``x(l) = g(zeta_dual(dual_d(l)))``; at a root of
``R(l) = delta(x(l))`` the point ``x(l)`` lies in ``lim F`` and is a
critical point of the regionalized loss. Two ways of finding roots are
provided:

* ``generic_step``: ``l <- l + s * damping * R(l)``. With ``sense="max"``
  (``s = +1``) and ``damping = 1`` this is the update for maximisation
  problems verbatim; ``sense="min"`` flips the sign, which is the stable
  direction for convex losses (free energies, positive-definite
  quadratics). The fix points are the same.
* ``newton_step``: a Gauss-Newton/least-squares step on ``R``.

``solve`` only reports convergence when the multipliers have stalled *and*
both certificates (constraint residual and stationarity residual) pass.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from regionalized.errors import NumericalOverflowError, SingularSystemError
from regionalized.functor import Cofunctor, stationarity_residual
from regionalized.loss import LocalLossFamily, regionalized_value

log = logging.getLogger(__name__)

METHODS = ("generic", "newton", "gbp", "channel")


@dataclass
class SolverConfig:
    max_iters: int = 10_000
    tol_message: float = 1e-9
    tol_residual: float = 1e-7
    damping: float = 0.5
    seed: int = 0
    method: str = "generic"
    sense: str = "min"
    init: str = "zero"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not (self.tol_message > 0 and self.tol_residual > 0):
            raise ValueError("tolerances must be positive")
        if not 0.0 <= self.damping <= 1.0:
            raise ValueError("damping must lie in [0, 1]")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        if self.init not in ("zero", "random"):
            raise ValueError("init must be 'zero' or 'random'")


@dataclass
class MessageState:
    l: np.ndarray
    t: int = 0
    history: list = field(default_factory=list)


class TraceRow(NamedTuple):
    iteration: int
    message_delta: float
    constraint_norm: float
    stationarity: float
    f_R: float


@dataclass
class SolveReport:
    x_star: list
    l_star: np.ndarray
    converged: bool
    iterations: int
    final_residuals: tuple
    trace: list
    method: str = "generic"

    @property
    def message_delta(self):
        return self.final_residuals[0]

    @property
    def constraint_norm(self):
        return self.final_residuals[1]

    @property
    def stationarity(self):
        return self.final_residuals[2]


def _dual_point(f: Cofunctor, l) -> np.ndarray:
    return f.zeta_dual_matrix @ (f.delta_matrix.T @ l)


def current_point(f: Cofunctor, L: LocalLossFamily, l) -> np.ndarray:
    """``x_a = g_a(zeta_dual(dual_d(l))(a))`` as a flat section."""
    l = f.as_pairfield(l)
    y = _dual_point(f, l)
    return np.concatenate(
        [L.inverse_grad(a, f.block(y, a)) for a in range(len(f.dims))]
    ) if len(f.dims) else np.zeros(0)


def _checked_point(f, L, l):
    with np.errstate(over="ignore", invalid="ignore"):
        x = current_point(f, L, l)
    if not np.all(np.isfinite(x)):
        raise NumericalOverflowError("candidate point has non-finite coordinates")
    return x


def loss_differential(f: Cofunctor, L: LocalLossFamily, x) -> np.ndarray:
    x = f.as_section(x)
    return np.concatenate([L.grad(a, f.block(x, a)) for a in range(len(f.dims))])


def generic_step(f: Cofunctor, L: LocalLossFamily, s: MessageState, cfg: SolverConfig) -> MessageState:
    """One synchronous update of every multiplier from the time-``t`` snapshot."""
    x = _checked_point(f, L, s.l)
    sign = 1.0 if cfg.sense == "max" else -1.0
    return MessageState(s.l + sign * cfg.damping * (f.delta_matrix @ x), s.t + 1, s.history)


def constraint_map_jacobian(f: Cofunctor, L: LocalLossFamily, l) -> np.ndarray:
    """Jacobian of ``R(l) = delta(g(zeta_dual(dual_d(l))))``."""
    y = _dual_point(f, l)
    n = f.total_dim
    G = np.zeros((n, n))
    for a in range(len(f.dims)):
        sl = slice(f.offsets[a], f.offsets[a + 1])
        G[sl, sl] = L.inverse_grad_jacobian(a, y[sl])
    return f.delta_matrix @ G @ f.zeta_dual_matrix @ f.delta_matrix.T


def newton_step(f: Cofunctor, L: LocalLossFamily, s: MessageState, cfg: SolverConfig) -> MessageState:
    """Least-squares Newton step on ``R(l)`` with backtracking on ``|R|``.

    The Jacobian is rank deficient (multipliers are only defined modulo
    ``ker dual_d``), so the minimum-norm least-squares step is taken.
    """
    D = f.delta_matrix
    R = D @ _checked_point(f, L, s.l)
    r0 = np.linalg.norm(R)
    if r0 == 0.0:
        return MessageState(s.l.copy(), s.t + 1, s.history)
    J = constraint_map_jacobian(f, L, s.l)
    try:
        step = np.linalg.lstsq(J, R, rcond=None)[0]
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"Newton least-squares solve failed: {exc}") from exc
    t = 1.0
    best = s.l - step
    for _ in range(40):
        cand = s.l - t * step
        with np.errstate(over="ignore", invalid="ignore"):
            x = current_point(f, L, cand)
        if np.all(np.isfinite(x)) and np.linalg.norm(D @ x) < r0:
            best = cand
            break
        t *= 0.5
    else:
        best = s.l - t * step
    return MessageState(best, s.t + 1, s.history)


def initial_messages(f: Cofunctor, cfg: SolverConfig) -> np.ndarray:
    if cfg.init == "random":
        return 0.1 * np.random.default_rng(cfg.seed).normal(size=f.pair_dim)
    return np.zeros(f.pair_dim)


def certificates(f: Cofunctor, L: LocalLossFamily, x, basis=None) -> tuple[float, float]:
    """(``|delta(x)|_inf``, stationarity residual of ``d_x f``)."""
    x = f.as_section(x)
    cons = float(np.max(np.abs(f.delta_matrix @ x), initial=0.0))
    stat = stationarity_residual(f, loss_differential(f, L, x), basis)
    return cons, stat


def solve(
    f: Cofunctor,
    L: LocalLossFamily,
    l0=None,
    cfg: SolverConfig | None = None,
) -> SolveReport:
    """Iterate ``generic_step`` or ``newton_step`` until certified or out of budget."""
    cfg = cfg or SolverConfig()
    L.check_dims(f.dims)
    if cfg.method not in ("generic", "newton"):
        raise ValueError(f"solve() runs 'generic' or 'newton', not {cfg.method!r}")
    step = newton_step if cfg.method == "newton" else generic_step
    l = initial_messages(f, cfg) if l0 is None else f.as_pairfield(l0).copy()
    state = MessageState(l)
    trace = []
    converged = False
    delta_l = cons = stat = np.inf
    for it in range(1, cfg.max_iters + 1):
        new = step(f, L, state, cfg)
        delta_l = float(np.max(np.abs(new.l - state.l), initial=0.0))
        state = new
        x = _checked_point(f, L, state.l)
        cons, stat = certificates(f, L, x)
        with np.errstate(over="ignore", invalid="ignore"):
            value = regionalized_value(L, f.poset, f.split(x))
        trace.append(TraceRow(it, delta_l, cons, stat, value))
        if delta_l <= cfg.tol_message and cons <= cfg.tol_residual and stat <= cfg.tol_residual:
            converged = True
            break
    log.debug("solve(%s): converged=%s after %d iterations", cfg.method, converged, len(trace))
    x = _checked_point(f, L, state.l)
    return SolveReport(
        x_star=f.split(x),
        l_star=state.l,
        converged=converged,
        iterations=len(trace),
        final_residuals=(delta_l, cons, stat),
        trace=trace,
        method=cfg.method,
    )
