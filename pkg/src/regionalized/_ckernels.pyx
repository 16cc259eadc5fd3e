# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Semantics mirror :mod:`regionalized._pykernels`."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()

# |partial sums| stay below this so a single addition cannot wrap int64
cdef long long _LIMIT = 1LL << 61


def transitive_closure(const unsigned char[:, :] rel):
    cdef Py_ssize_t n = rel.shape[0]
    cdef Py_ssize_t i, j, k
    out = np.array(rel, dtype=np.uint8, copy=True)
    cdef unsigned char[:, :] r = out
    for i in range(n):
        r[i, i] = 1
    for k in range(n):
        for i in range(n):
            if r[i, k]:
                for j in range(n):
                    if r[k, j]:
                        r[i, j] = 1
    return out


def mobius_matrix(const unsigned char[:, :] leq, const Py_ssize_t[:] order):
    """Interval recursion mu(a,a)=1, sum_{b<=c<=a} mu(a,c)=0, in int64.

    Raises OverflowError when a partial sum leaves +-2**61; callers then
    switch to arbitrary-precision integers.
    """
    cdef Py_ssize_t n = leq.shape[0]
    cdef Py_ssize_t ia, ib, ic, a, b, c
    cdef long long s
    out = np.zeros((n, n), dtype=np.int64)
    cdef long long[:, :] mu = out
    for ia in range(n):
        a = order[ia]
        mu[a, a] = 1
        # walk b downward through the linear extension
        for ib in range(ia - 1, -1, -1):
            b = order[ib]
            if not leq[a, b]:
                continue
            s = 0
            for ic in range(ib + 1, ia + 1):
                c = order[ic]
                if leq[a, c] and leq[c, b]:
                    s += mu[a, c]
                    if s > _LIMIT or s < -_LIMIT:
                        raise OverflowError("Mobius value exceeds int64 range")
            mu[a, b] = -s
    return out


def segment_logsumexp(const double[:] values, const Py_ssize_t[:] starts):
    cdef Py_ssize_t m = starts.shape[0] - 1
    cdef Py_ssize_t s, i
    cdef double mx, acc
    out = np.empty(m, dtype=np.float64)
    cdef double[:] o = out
    for s in range(m):
        mx = -INFINITY
        for i in range(starts[s], starts[s + 1]):
            if values[i] > mx:
                mx = values[i]
        if mx == -INFINITY:
            o[s] = -INFINITY
            continue
        acc = 0.0
        for i in range(starts[s], starts[s + 1]):
            acc += exp(values[i] - mx)
        o[s] = mx + log(acc)
    return out


def scatter_logsumexp(const double[:] values, const Py_ssize_t[:] dst, Py_ssize_t n_out):
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t i, j
    mx_arr = np.full(n_out, -INFINITY, dtype=np.float64)
    acc_arr = np.zeros(n_out, dtype=np.float64)
    cdef double[:] mx = mx_arr
    cdef double[:] acc = acc_arr
    for i in range(n):
        j = dst[i]
        if values[i] > mx[j]:
            mx[j] = values[i]
    for i in range(n):
        j = dst[i]
        if mx[j] > -INFINITY:
            acc[j] += exp(values[i] - mx[j])
    for j in range(n_out):
        if mx[j] > -INFINITY:
            mx[j] = mx[j] + log(acc[j])
    return mx_arr
