# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; see _pykernels for the contract."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

BACKEND = "cython"


def cut_detection_batch(orders, alert_subject, alert_slot, slot_observer, long H, long L):
    cdef cnp.int64_t[:, ::1] o = np.ascontiguousarray(orders, dtype=np.int64)
    cdef cnp.int64_t[::1] subj = np.ascontiguousarray(alert_subject, dtype=np.int64)
    cdef cnp.int64_t[::1] slot = np.ascontiguousarray(alert_slot, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] sobs = np.ascontiguousarray(slot_observer, dtype=np.int64)
    cdef Py_ssize_t nodes = o.shape[0], m = o.shape[1]
    cdef Py_ssize_t F = sobs.shape[0], K = sobs.shape[1]
    included_arr = np.full(nodes, -1, dtype=np.int64)
    step_arr = np.full(nodes, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] included = included_arr
    cdef cnp.int64_t[::1] step = step_arr
    cdef char* M = <char*> malloc(F * K * sizeof(char) + 1)
    cdef long* tally = <long*> malloc(F * sizeof(long) + sizeof(long))
    cdef bint has_links = False
    cdef Py_ssize_t i, j, s, r, a, g, n_stable, n_unstable, cnt
    cdef long t, old
    cdef bint changed
    if M == NULL or tally == NULL:
        free(M)
        free(tally)
        raise MemoryError()
    for s in range(F):
        for r in range(K):
            if sobs[s, r] >= 0:
                has_links = True
    try:
        for i in range(nodes):
            for s in range(F * K):
                M[s] = 0
            for s in range(F):
                tally[s] = 0
            n_stable = 0
            n_unstable = 0
            for j in range(m):
                a = o[i, j]
                s = subj[a]
                r = slot[a]
                if M[s * K + r] == 0:
                    M[s * K + r] = 1
                    old = tally[s]
                    tally[s] = old + 1
                    if old + 1 == L and old + 1 < H:
                        n_unstable += 1
                    if old + 1 == H:
                        n_stable += 1
                        if old >= L:
                            n_unstable -= 1
                if has_links and n_unstable > 0:
                    changed = True
                    while changed:
                        changed = False
                        for s in range(F):
                            for r in range(K):
                                g = sobs[s, r]
                                if g < 0:
                                    continue
                                t = tally[s]
                                if t >= L and t < H and M[s * K + r] == 0 and tally[g] >= L:
                                    M[s * K + r] = 1
                                    tally[s] = t + 1
                                    if t + 1 == H:
                                        n_stable += 1
                                        n_unstable -= 1
                                    changed = True
                if n_stable > 0 and n_unstable == 0:
                    cnt = 0
                    for s in range(F):
                        if tally[s] >= H:
                            cnt += 1
                    included[i] = cnt
                    step[i] = j
                    break
    finally:
        free(M)
        free(tally)
    return included_arr, step_arr


def neighbor_sum(nbrs, X):
    cdef cnp.int64_t[:, ::1] nb = np.ascontiguousarray(nbrs, dtype=np.int64)
    Xa = np.ascontiguousarray(X, dtype=np.float64)
    squeeze = Xa.ndim == 1
    if squeeze:
        Xa = Xa.reshape(-1, 1)
    cdef double[:, ::1] x = Xa
    cdef Py_ssize_t n = nb.shape[0], d = nb.shape[1], p = x.shape[1]
    out = np.zeros((n, p), dtype=np.float64)
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j, k, v
    for i in range(n):
        for j in range(d):
            v = nb[i, j]
            for k in range(p):
                y[i, k] += x[v, k]
    return out[:, 0] if squeeze else out
