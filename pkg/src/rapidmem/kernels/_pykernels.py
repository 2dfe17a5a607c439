"""Pure numpy versions of the hot kernels.

Semantics match ``_ckernels.pyx`` exactly, including the order in which
implicit alerts are applied, so both back ends return identical arrays.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def cut_detection_batch(orders, alert_subject, alert_slot, slot_observer, H, L):
    """Replay alert delivery orders through the cut-detection aggregation rule.

    Args:
        orders: int array (nodes, m); row i is the order node i receives alerts in.
        alert_subject: int array (m,), failed-subject index (0..F-1) of each alert.
        alert_slot: int array (m,), ring slot (0..K-1) of each alert.
        slot_observer: int array (F, K); failed-subject index of the observer at
            that slot, or -1 when the observer is healthy. Only slots with a
            failed observer can receive implicit alerts.
        H, L: high and low watermarks.

    Returns:
        (included, step): per node, the number of subjects in its proposal and
        the delivery index at which it was announced; both -1 if the node never
        proposed.
    """
    orders = np.ascontiguousarray(orders, dtype=np.int64)
    subj = np.asarray(alert_subject, dtype=np.int64)
    slot = np.asarray(alert_slot, dtype=np.int64)
    sobs = np.asarray(slot_observer, dtype=np.int64)
    nodes, m = orders.shape
    F, K = sobs.shape
    M = np.zeros((nodes, F, K), dtype=bool)
    tally = np.zeros((nodes, F), dtype=np.int64)
    included = np.full(nodes, -1, dtype=np.int64)
    step = np.full(nodes, -1, dtype=np.int64)
    active = np.ones(nodes, dtype=bool)
    links = [(s, r, int(sobs[s, r])) for s in range(F) for r in range(K) if sobs[s, r] >= 0]
    rows = np.arange(nodes)

    for j in range(m):
        idx = rows[active]
        if idx.size == 0:
            break
        a = orders[idx, j]
        s, r = subj[a], slot[a]
        new = ~M[idx, s, r]
        M[idx, s, r] = True
        tally[idx, s] += new
        if links:
            changed = True
            while changed:
                changed = False
                for ls, lr, g in links:
                    t = tally[idx, ls]
                    cand = (t >= L) & (t < H) & ~M[idx, ls, lr] & (tally[idx, g] >= L)
                    if cand.any():
                        hit = idx[cand]
                        M[hit, ls, lr] = True
                        tally[hit, ls] += 1
                        changed = True
        t = tally[idx]
        stable = t >= H
        unstable = (t >= L) & ~stable
        fire = stable.any(axis=1) & ~unstable.any(axis=1)
        if fire.any():
            hit = idx[fire]
            included[hit] = stable[fire].sum(axis=1)
            step[hit] = j
            active[hit] = False
    return included, step


def neighbor_sum(nbrs, X):
    """Y[i] = sum over j of X[nbrs[i, j]] (adjacency operator of a multigraph)."""
    X = np.asarray(X, dtype=np.float64)
    return X[np.asarray(nbrs)].sum(axis=1)
