"""Local loss families ``f_a`` with gradients and inverse gradients.

Every family is indexed by element position ``a`` (an integer) and acts on
plain 1-d arrays. ``inverse_grad`` is the map ``g_a`` with
``grad(a, x) = y  <=>  x = inverse_grad(a, y)``.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Callable, Sequence

import numpy as np

from regionalized.errors import DomainError, MissingInverseError, ShapeError
from regionalized.poset import Poset

SYMMETRY_TOL = 1e-12


class LocalLossFamily(ABC):
    """Collection of differentiable local losses, one per poset element."""

    name = "custom"

    @abstractmethod
    def __len__(self): ...

    @abstractmethod
    def value(self, a: int, x) -> float: ...

    @abstractmethod
    def grad(self, a: int, x) -> np.ndarray: ...

    def inverse_grad(self, a: int, y) -> np.ndarray:
        raise MissingInverseError(f"{type(self).__name__} has no inverse gradient")

    def inverse_grad_jacobian(self, a: int, y) -> np.ndarray:
        """Derivative of ``inverse_grad(a, .)`` at ``y`` (central differences by default)."""
        y = np.asarray(y, dtype=np.float64)
        h = 1e-6
        cols = []
        for i in range(y.size):
            e = np.zeros_like(y)
            e[i] = h
            cols.append((self.inverse_grad(a, y + e) - self.inverse_grad(a, y - e)) / (2 * h))
        return np.column_stack(cols) if cols else np.zeros((0, 0))

    def check_dims(self, dims: Sequence[int]):
        if len(self) != len(dims):
            raise ShapeError(f"loss family has {len(self)} elements, functor has {len(dims)}")


class FreeEnergy(LocalLossFamily):
    """``f_a(q) = beta <q, H_a> + sum_i q_i ln q_i`` on the open positive orthant."""

    name = "free_energy"

    def __init__(self, hamiltonians: Sequence, beta: float = 1.0):
        if not beta > 0:
            raise ValueError("beta must be positive")
        self.hamiltonians = [np.asarray(h, dtype=np.float64).ravel() for h in hamiltonians]
        self.beta = float(beta)

    def __len__(self):
        return len(self.hamiltonians)

    def check_dims(self, dims):
        super().check_dims(dims)
        for a, (h, d) in enumerate(zip(self.hamiltonians, dims)):
            if h.size != d:
                raise ShapeError(f"hamiltonian {a} has length {h.size}, expected {d}")

    def _positive(self, a, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.hamiltonians[a].shape:
            raise ShapeError(f"point has shape {x.shape}, expected {self.hamiltonians[a].shape}")
        if not np.all(x > 0):
            raise DomainError(f"free energy of element {a} needs strictly positive coordinates")
        return x

    def value(self, a, x):
        x = self._positive(a, x)
        return float(self.beta * x @ self.hamiltonians[a] + x @ np.log(x))

    def grad(self, a, x):
        x = self._positive(a, x)
        return self.beta * self.hamiltonians[a] + np.log(x) + 1.0

    def inverse_grad(self, a, y):
        return np.exp(np.asarray(y, dtype=np.float64) - self.beta * self.hamiltonians[a] - 1.0)

    def inverse_grad_jacobian(self, a, y):
        return np.diag(self.inverse_grad(a, y))


class Quadratic(LocalLossFamily):
    """``f_a(x) = x^T A_a x / 2 - <b_a, x>`` with symmetric positive-definite ``A_a``."""

    name = "quadratic"

    def __init__(self, A: Sequence, b: Sequence):
        self.A = [np.atleast_2d(np.asarray(m, dtype=np.float64)) for m in A]
        self.b = [np.asarray(v, dtype=np.float64).ravel() for v in b]
        if len(self.A) != len(self.b):
            raise ShapeError("A and b must have one entry per element")
        self.A_inv = []
        for a, (m, v) in enumerate(zip(self.A, self.b)):
            if m.shape != (v.size, v.size):
                raise ShapeError(f"A[{a}] has shape {m.shape}, b[{a}] has length {v.size}")
            if np.max(np.abs(m - m.T), initial=0.0) > SYMMETRY_TOL:
                raise ValueError(f"A[{a}] is not symmetric")
            if v.size and np.linalg.eigvalsh(m)[0] <= 0:
                raise ValueError(f"A[{a}] is not positive definite")
            self.A_inv.append(np.linalg.inv(m))

    def __len__(self):
        return len(self.A)

    def check_dims(self, dims):
        super().check_dims(dims)
        for a, (v, d) in enumerate(zip(self.b, dims)):
            if v.size != d:
                raise ShapeError(f"b[{a}] has length {v.size}, expected {d}")

    def value(self, a, x):
        x = np.asarray(x, dtype=np.float64)
        return float(0.5 * x @ self.A[a] @ x - self.b[a] @ x)

    def grad(self, a, x):
        return self.A[a] @ np.asarray(x, dtype=np.float64) - self.b[a]

    def inverse_grad(self, a, y):
        return self.A_inv[a] @ (np.asarray(y, dtype=np.float64) + self.b[a])

    def inverse_grad_jacobian(self, a, y):
        return self.A_inv[a]


class Custom(LocalLossFamily):
    """Losses given as callables; ``inverses`` is optional."""

    def __init__(
        self,
        values: Sequence[Callable],
        grads: Sequence[Callable],
        inverses: Sequence[Callable] | None = None,
        inverse_jacobians: Sequence[Callable] | None = None,
    ):
        self.values = list(values)
        self.grads = list(grads)
        self.inverses = None if inverses is None else list(inverses)
        self.inverse_jacobians = None if inverse_jacobians is None else list(inverse_jacobians)

    def __len__(self):
        return len(self.values)

    def value(self, a, x):
        return float(self.values[a](np.asarray(x, dtype=np.float64)))

    def grad(self, a, x):
        return np.asarray(self.grads[a](np.asarray(x, dtype=np.float64)), dtype=np.float64)

    def inverse_grad(self, a, y):
        if self.inverses is None:
            raise MissingInverseError("custom loss family was built without inverse gradients")
        return np.asarray(self.inverses[a](np.asarray(y, dtype=np.float64)), dtype=np.float64)

    def inverse_grad_jacobian(self, a, y):
        if self.inverse_jacobians is not None:
            return np.atleast_2d(self.inverse_jacobians[a](np.asarray(y, dtype=np.float64)))
        return super().inverse_grad_jacobian(a, y)


def value(L: LocalLossFamily, a: int, x) -> float:
    return L.value(a, x)


def grad(L: LocalLossFamily, a: int, x) -> np.ndarray:
    return L.grad(a, x)


def inverse_grad(L: LocalLossFamily, a: int, y) -> np.ndarray:
    return L.inverse_grad(a, y)


def regionalized_value(L: LocalLossFamily, p: Poset, x: Sequence) -> float:
    """``f_R(x) = sum_a c(a) f_a(x_a)``; ``x`` holds one block per element."""
    if len(x) != len(p):
        raise ShapeError(f"expected {len(p)} blocks, got {len(x)}")
    return float(sum(int(c) * L.value(a, xa) for a, (c, xa) in enumerate(zip(p.counting, x))))
