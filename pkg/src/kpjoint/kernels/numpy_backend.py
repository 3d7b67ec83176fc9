"""Pure-numpy implementations of the hot kernels.

These are the reference implementations; ``kpjoint.kernels._fastcore`` is a
compiled drop-in replacement built at install time. Both operate on
C-contiguous float64 arrays and agree to floating-point roundoff (summation
order may differ, so cross-backend results are close but not bit-equal).
"""

import numpy as np

NAME = "python"


def gather_windows(h, k):
    """Stack the k-token sliding windows of an (n, d) matrix.

    Returns an (n-k+1, k*d) matrix whose row i is the concatenation of
    rows i..i+k-1 of ``h``. Returns zero rows when n < k.
    """
    n, d = h.shape
    m = n - k + 1
    if m <= 0:
        return np.zeros((0, k * d), dtype=np.float64)
    return np.concatenate([h[j : m + j] for j in range(k)], axis=1)


def scatter_windows(dxw, k, n, d):
    """Adjoint of gather_windows: accumulate window gradients onto rows.

    ``dxw`` has shape (n-k+1, k*d); the result has shape (n, d).
    """
    out = np.zeros((n, d), dtype=np.float64)
    m = dxw.shape[0]
    for j in range(k):
        out[j : m + j] += dxw[:, j * d : (j + 1) * d]
    return out


def segment_max(values, group_ids, n_groups):
    """Per-group maximum and first index attaining it.

    ``group_ids`` maps each element of ``values`` to a group in
    [0, n_groups); every group must be non-empty.
    """
    gmax = np.full(n_groups, -np.inf, dtype=np.float64)
    np.maximum.at(gmax, group_ids, values)
    hits = values == gmax[group_ids]
    argmax = np.full(n_groups, len(values), dtype=np.int64)
    np.minimum.at(argmax, group_ids[hits], np.nonzero(hits)[0])
    return gmax, argmax


def hinge_terms(pos, neg, margin):
    """Hinge terms over the full (positive, negative) cross product.

    Returns (loss_sum, dpos, dneg) where loss_sum is the sum of
    max(0, margin - p + q) over all pairs and dpos/dneg are the
    per-score gradients of that sum (counts of active pairs, signed).
    """
    margins = margin - pos[:, None] + neg[None, :]
    active = margins > 0.0
    loss_sum = float(np.sum(margins, where=active, initial=0.0))
    dpos = -active.sum(axis=1).astype(np.float64)
    dneg = active.sum(axis=0).astype(np.float64)
    return loss_sum, dpos, dneg


def embedding_scatter_add(table_grad, ids, dh):
    """Accumulate per-token gradients ``dh`` into embedding-table rows."""
    np.add.at(table_grad, ids, dh)
