"""Pure numpy fallbacks for the compiled kernels in ``_ckernels.pyx``."""

from __future__ import annotations

import numpy as np

_LIMIT = 1 << 61


def transitive_closure(rel):
    r = np.array(rel, dtype=bool, copy=True)
    np.fill_diagonal(r, True)
    for k in range(r.shape[0]):
        rows = r[:, k]
        r[rows] |= r[k]
    return r.astype(np.uint8)


def mobius_matrix(leq, order):
    leq = np.asarray(leq, dtype=bool)
    order = np.asarray(order, dtype=np.intp)
    n = leq.shape[0]
    mu = np.zeros((n, n), dtype=np.int64)
    pos = np.empty(n, dtype=np.intp)
    pos[order] = np.arange(n)
    for a in order:
        row = mu[a]
        row[a] = 1
        below = np.flatnonzero(leq[a])
        below = below[np.argsort(-pos[below])]
        for b in below[1:]:
            # elements c with b < c <= a
            mask = leq[a] & leq[:, b]
            mask[b] = False
            s = int(row[mask].sum())
            if abs(s) > _LIMIT:
                raise OverflowError("Mobius value exceeds int64 range")
            row[b] = -s
    return mu


def segment_logsumexp(values, starts):
    values = np.asarray(values, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.intp)
    out = np.full(len(starts) - 1, -np.inf)
    for s in range(len(starts) - 1):
        seg = values[starts[s]:starts[s + 1]]
        if seg.size == 0:
            continue
        mx = seg.max()
        if mx == -np.inf:
            continue
        out[s] = mx + np.log(np.exp(seg - mx).sum())
    return out


def scatter_logsumexp(values, dst, n_out):
    values = np.asarray(values, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.intp)
    mx = np.full(n_out, -np.inf)
    np.maximum.at(mx, dst, values)
    finite = mx > -np.inf
    shift = np.where(finite, mx, 0.0)
    acc = np.zeros(n_out)
    np.add.at(acc, dst, np.exp(values - shift[dst]))
    with np.errstate(divide="ignore"):
        return np.where(finite, shift + np.log(acc), -np.inf)
