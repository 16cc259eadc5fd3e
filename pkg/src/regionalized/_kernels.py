"""Backend selection for the hot loops.

The Cython extension ``_ckernels`` is used when it was built; otherwise the
numpy implementation in ``_pykernels`` is loaded. Setting the environment
variable ``REGIONALIZED_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from regionalized import _pykernels

if os.environ.get("REGIONALIZED_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from regionalized import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

transitive_closure = _impl.transitive_closure
_mobius_int64 = _impl.mobius_matrix
segment_logsumexp = _impl.segment_logsumexp
scatter_logsumexp = _impl.scatter_logsumexp


def mobius_matrix(leq, order):
    """Exact Möbius matrix; int64 when it fits, Python ints otherwise."""
    leq = np.ascontiguousarray(leq, dtype=np.uint8)
    order = np.ascontiguousarray(order, dtype=np.intp)
    try:
        return _mobius_int64(leq, order)
    except OverflowError:
        return _mobius_bigint(leq, order)


def _mobius_bigint(leq, order):
    n = leq.shape[0]
    mu = [[0] * n for _ in range(n)]
    for ia, a in enumerate(order):
        row = mu[a]
        row[a] = 1
        for ib in range(ia - 1, -1, -1):
            b = order[ib]
            if not leq[a, b]:
                continue
            s = 0
            for ic in range(ib + 1, ia + 1):
                c = order[ic]
                if leq[a, c] and leq[c, b]:
                    s += row[c]
            row[b] = -s
    return np.array(mu, dtype=object)
