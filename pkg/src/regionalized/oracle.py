"""Brute-force ground truth for checking the message-passing solvers.

Nothing here goes through the operators of :mod:`regionalized.functor` or
the solvers: the constraint matrix is rebuilt from the raw maps, its
nullspace comes from :func:`scipy.linalg.null_space`, and the counting
numbers come from a floating-point inverse of the zeta matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.special import logsumexp

from regionalized.errors import (
    DomainError,
    SingularSystemError,
    SizeError,
    UnboundedProblemError,
)
from regionalized.loss import FreeEnergy, LocalLossFamily, Quadratic

GIBBS_CAP = 10**6
BASIS_CAP = 20

RESTARTS = 20
MAX_STEPS = 50_000
INITIAL_STEP = 0.1
GRAD_TOL = 1e-11


@dataclass(frozen=True)
class ExactDistribution:
    p: np.ndarray
    Z: float
    log_Z: float


def exact_gibbs(H, beta: float = 1.0, cap: int = GIBBS_CAP) -> ExactDistribution:
    """Gibbs distribution ``exp(-beta H) / Z`` over an enumerated space."""
    H = np.asarray(H, dtype=np.float64).ravel()
    if H.size > cap:
        raise SizeError(f"configuration space has {H.size} states; cap is {cap}")
    logits = -beta * H
    log_Z = float(logsumexp(logits))
    return ExactDistribution(np.exp(logits - log_Z), float(np.exp(log_Z)), log_Z)


def exact_marginals(d: ExactDistribution, problem) -> list[np.ndarray]:
    """Marginals of a joint over ``problem.variables`` on each region.

    The joint is indexed row-major over the variables in sorted order, the
    same convention as region vectors.
    """
    names = sorted(problem.variables)
    cards = [problem.variables[v] for v in names]
    joint = d.p.reshape(cards)
    out = []
    for region in problem.regions:
        keep = [names.index(v) for v in sorted(region)]
        drop = tuple(i for i in range(len(names)) if i not in keep)
        out.append(joint.sum(axis=drop).ravel())
    return out


def finite_diff_grad(fun: Callable, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        try:
            g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
        except DomainError as exc:
            raise DomainError(f"finite difference step left the domain at coordinate {i}") from exc
    return g


# -- constrained problems -------------------------------------------------

def _counting(poset) -> np.ndarray:
    Z = poset.leq.astype(np.float64)
    M = np.rint(np.linalg.inv(Z))
    return M.sum(axis=0)


def _constraint_matrix(f) -> np.ndarray:
    offs = np.concatenate([[0], np.cumsum(f.dims)])
    rows = []
    for (a, b), mat in sorted(f.maps.items()):
        blk = np.zeros((f.dims[b], offs[-1]))
        blk[:, offs[a]:offs[a + 1]] += mat
        blk[:, offs[b]:offs[b + 1]] -= np.eye(f.dims[b])
        rows.append(blk)
    return np.vstack(rows) if rows else np.zeros((0, offs[-1]))


def _blocks(f, x):
    offs = np.concatenate([[0], np.cumsum(f.dims)])
    return [x[offs[i]:offs[i + 1]].copy() for i in range(len(f.dims))]


class _Objective:
    """``sum_a c(a) f_a`` evaluated on stacks of flat points (one per row)."""

    def __init__(self, f, L: LocalLossFamily, c):
        self.f, self.L, self.c = f, L, c
        offs = np.concatenate([[0], np.cumsum(f.dims)])
        self.offs = offs
        w = np.repeat(c, f.dims)
        self.w = w
        if isinstance(L, FreeEnergy):
            self.kind = "free_energy"
            self.H = L.beta * np.concatenate(L.hamiltonians)
        elif isinstance(L, Quadratic):
            self.kind = "quadratic"
            self.Q = scipy.linalg.block_diag(*[ci * A for ci, A in zip(c, L.A)])
            self.cb = w * np.concatenate(L.b)
        else:
            self.kind = "custom"

    def feasible(self, X):
        if self.kind == "free_energy":
            return np.all(X > 0, axis=1)
        return np.all(np.isfinite(X), axis=1)

    def value(self, X):
        if self.kind == "free_energy":
            with np.errstate(divide="ignore", invalid="ignore"):
                return (X * self.H + X * np.log(X)) @ self.w
        if self.kind == "quadratic":
            return 0.5 * np.einsum("ri,ij,rj->r", X, self.Q, X) - X @ self.cb
        return np.array([self._custom_value(x) for x in X])

    def grad(self, X):
        if self.kind == "free_energy":
            return self.w * (self.H + np.log(X) + 1.0)
        if self.kind == "quadratic":
            return X @ self.Q - self.cb
        return np.array([self._custom_grad(x) for x in X])

    def _custom_value(self, x):
        o = self.offs
        return sum(ci * self.L.value(a, x[o[a]:o[a + 1]]) for a, ci in enumerate(self.c))

    def _custom_grad(self, x):
        o = self.offs
        return np.concatenate(
            [ci * self.L.grad(a, x[o[a]:o[a + 1]]) for a, ci in enumerate(self.c)]
        )


class MinResult(NamedTuple):
    x: list
    value: float
    info: dict


def _interior_point(x0, T):
    """Maximise ``min_i (x0 + T s)_i`` over a box; returns (s, margin)."""
    k = T.shape[1]
    if k == 0:
        return np.zeros(0), float(x0.min(initial=np.inf))
    # variables (s, t): maximise t subject to -(T s) + t <= x0
    cost = np.zeros(k + 1)
    cost[-1] = -1.0
    A_ub = np.hstack([-T, np.ones((T.shape[0], 1))])
    bounds = [(-100.0, 100.0)] * k + [(None, 1.0)]
    res = scipy.optimize.linprog(cost, A_ub=A_ub, b_ub=x0, bounds=bounds, method="highs")
    if not res.success:
        raise DomainError(f"could not locate an interior point: {res.message}")
    return res.x[:k], float(res.x[-1])


def brute_force_min(
    f,
    L: LocalLossFamily,
    simplex: bool = False,
    seed: int = 0,
    restarts: int = RESTARTS,
    max_steps: int = MAX_STEPS,
    initial_step: float = INITIAL_STEP,
    grad_tol: float = GRAD_TOL,
) -> MinResult:
    """Minimise ``sum_a c(a) f_a`` over ``lim F`` by projected gradient descent.

    Descent runs in orthonormal coordinates of the feasible affine set
    (``lim F``, intersected with ``sum(x_a) = 1`` for every element when
    ``simplex`` is true). A step is halved until it stays in the loss
    domain and decreases the value; accepted steps double the step size.
    All restarts advance together; the best one wins.

    Raises:
        SizeError: the feasible set has more than ``BASIS_CAP`` dimensions.
        UnboundedProblemError: some restart diverged to ``-inf``.
    """
    L.check_dims(f.dims)
    D = _constraint_matrix(f)
    n = int(np.sum(f.dims))
    rhs = np.zeros(D.shape[0])
    if simplex:
        S = np.zeros((len(f.dims), n))
        offs = np.concatenate([[0], np.cumsum(f.dims)])
        for i in range(len(f.dims)):
            S[i, offs[i]:offs[i + 1]] = 1.0
        D = np.vstack([D, S])
        rhs = np.concatenate([rhs, np.ones(len(f.dims))])
    T = scipy.linalg.null_space(D, rcond=1e-10) if D.shape[0] else np.eye(n)
    if T.shape[1] > BASIS_CAP:
        raise SizeError(f"feasible set has dimension {T.shape[1]}; cap is {BASIS_CAP}")
    x0 = np.linalg.lstsq(D, rhs, rcond=None)[0] if D.shape[0] else np.zeros(n)
    k = T.shape[1]

    obj = _Objective(f, L, _counting(f.poset))
    rng = np.random.default_rng(seed)
    if obj.kind == "free_energy":
        s_c, margin = _interior_point(x0, T)
        if margin <= 0:
            raise DomainError("feasible set has no strictly positive point")
        starts = [s_c]
        for _ in range(restarts - 1):
            u = rng.normal(size=k)
            slope = T @ u
            neg = slope < 0
            room = (x0 + T @ s_c - margin / 2)[neg] / -slope[neg]
            alpha = room.min(initial=1.0)
            starts.append(s_c + rng.random() * alpha * u)
        S_ = np.array(starts).reshape(restarts, k)
    else:
        S_ = rng.normal(size=(restarts, k))

    X = x0 + S_ @ T.T
    vals = obj.value(X)
    step = np.full(restarts, initial_step)
    active = np.ones(restarts, dtype=bool)
    gnorm = np.full(restarts, np.inf)
    steps = 0
    for steps in range(1, max_steps + 1):
        G = obj.grad(X[active]) @ T
        gnorm[active] = np.linalg.norm(G, axis=1)
        idx = np.flatnonzero(active)
        done = gnorm[idx] <= grad_tol
        active[idx[done]] = False
        idx, G = idx[~done], G[~done]
        if idx.size == 0:
            break
        trial_S = S_[idx] - step[idx, None] * G
        trial_X = x0 + trial_S @ T.T
        ok = obj.feasible(trial_X)
        trial_v = np.full(idx.size, np.inf)
        if ok.any():
            trial_v[ok] = obj.value(trial_X[ok])
        accept = ok & (trial_v < vals[idx])
        acc = idx[accept]
        S_[acc], X[acc], vals[acc] = trial_S[accept], trial_X[accept], trial_v[accept]
        step[acc] *= 2.0
        step[idx[~accept]] *= 0.5
        if np.any(vals < -1e12):
            raise UnboundedProblemError("loss decreased without bound on the feasible set")
        # a step size this small means no further decrease is representable
        active &= step > 1e-30
        if not active.any():
            break

    best = int(np.argmin(vals))
    info = {
        "seed": seed,
        "restarts": restarts,
        "steps": steps,
        "grad_norm": float(gnorm[best]),
        "best_restart": best,
    }
    return MinResult(_blocks(f, X[best]), float(vals[best]), info)


def kkt_solve_quadratic(f, L: Quadratic):
    """Closed-form critical point of ``sum_a c(a) f_a`` over ``lim F``.

    Solves the reduced system ``T^T Q T t = T^T c b`` in nullspace
    coordinates ``x = T t`` (``Q = blockdiag(c(a) A_a)``), which remains
    well posed when some ``c(a)`` vanish. Multipliers ``nu`` satisfy
    ``Q x - c b + D^T nu = 0`` in least squares.

    Returns:
        (x blocks, nu)

    Raises:
        SingularSystemError: the reduced Hessian is singular.
    """
    L.check_dims(f.dims)
    D = _constraint_matrix(f)
    n = int(np.sum(f.dims))
    T = scipy.linalg.null_space(D, rcond=1e-10) if D.shape[0] else np.eye(n)
    c = _counting(f.poset)
    Q = scipy.linalg.block_diag(*[ci * A for ci, A in zip(c, L.A)])
    cb = np.repeat(c, f.dims) * np.concatenate(L.b)
    Hr = T.T @ Q @ T
    gr = T.T @ cb
    if Hr.size:
        sv = np.linalg.svd(Hr, compute_uv=False)
        if sv[-1] <= 1e-12 * max(1.0, sv[0]):
            raise SingularSystemError(
                f"reduced KKT matrix is singular (smallest singular value {sv[-1]:.3g})"
            )
        t = np.linalg.solve(Hr, gr)
    else:
        t = np.zeros(0)
    x = T @ t
    nu = (
        np.linalg.lstsq(D.T, -(Q @ x - cb), rcond=None)[0]
        if D.shape[0]
        else np.zeros(0)
    )
    return _blocks(f, x), nu
