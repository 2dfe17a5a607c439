"""Reference implementations that share no code with the package.

Each one solves the same question as a production routine by a different
route (exact enumeration, dense linear algebra, vectorized hashing).
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from math import comb

import numpy as np

FNV_OFFSET = np.uint64(0xCBF29CE484222325)
FNV_PRIME = np.uint64(0x100000001B3)


def fnv1a64_rows(data: np.ndarray) -> np.ndarray:
    """FNV-1a 64 over each row of a (rows, bytes) uint8 array."""
    h = np.full(data.shape[0], FNV_OFFSET, dtype=np.uint64)
    for j in range(data.shape[1]):
        h ^= data[:, j].astype(np.uint64)
        h *= FNV_PRIME
    return h


def config_id_rows(prev: np.ndarray, members: np.ndarray) -> np.ndarray:
    """Config ids for many histories; ``members`` is (rows, m, 16) uint8 big-endian."""
    prev_bytes = prev.astype(">u8").view(np.uint8).reshape(-1, 8)
    data = np.concatenate([prev_bytes, members.reshape(members.shape[0], -1)], axis=1)
    return fnv1a64_rows(data)


def conflict_probability_two(K: int, H: int, L: int) -> Fraction:
    """Exact chance that a process proposes only one of two failed processes.

    Observers are disjoint, so delivery order is a uniform lattice path from
    (0, 0) to (K, K). Counts paths whose first firing state has exactly one
    subject at or above H.
    """
    def fires(a: int, b: int) -> bool:
        stable = a >= H or b >= H
        unstable = L <= a < H or L <= b < H
        return stable and not unstable

    ways = {(0, 0): 1}
    bad = 0
    for s in range(2 * K + 1):
        for a in range(max(0, s - K), min(K, s) + 1):
            b = s - a
            w = ways.pop((a, b), 0)
            if not w:
                continue
            if fires(a, b):
                if (a >= H) != (b >= H):
                    bad += w * comb(2 * K - s, K - a)
                continue
            if a < K:
                ways[(a + 1, b)] = ways.get((a + 1, b), 0) + w
            if b < K:
                ways[(a, b + 1)] = ways.get((a, b + 1), 0) + w
    return Fraction(bad, comb(2 * K, K))


def all_interleavings(K: int) -> np.ndarray:
    """Every delivery order of K alerts about subject 0 and K about subject 1."""
    m = 2 * K
    rows = []
    for pos in itertools.combinations(range(m), K):
        row = np.empty(m, dtype=np.int64)
        mask = np.zeros(m, dtype=bool)
        mask[list(pos)] = True
        row[mask] = np.arange(K)
        row[~mask] = np.arange(K, m)
        rows.append(row)
    return np.array(rows)


def dense_adjacency(nbrs: np.ndarray) -> np.ndarray:
    n = nbrs.shape[0]
    A = np.zeros((n, n))
    for i in range(n):
        for j in nbrs[i]:
            A[i, j] += 1.0
    return A


def dense_lambda2(nbrs: np.ndarray) -> tuple[float, float]:
    """(second largest, smallest) adjacency eigenvalues by a dense solver."""
    w = np.linalg.eigvalsh(dense_adjacency(nbrs))
    return float(w[-2]), float(w[0])


# ---- consensus -----------------------------------------------------------------

def subsets(n: int, min_size: int):
    for k in range(min_size, n + 1):
        yield from itertools.combinations(range(n), k)


def chosen_values(votes: tuple, fq: int) -> set:
    """Values voted by some set of at least ``fq`` voters (i.e. fast-chosen)."""
    n = len(votes)
    out = set()
    for v in set(votes) - {None}:
        if sum(1 for x in votes if x == v) >= fq:
            out.add(v)
    return out


def possibly_chosen(votes: tuple, Q: tuple, fq: int) -> set:
    """Values that could have been fast-chosen given only the votes seen in Q.

    Brute force over every voter set R of size at least ``fq``: v is possible
    if every member of R inside Q voted v (members outside Q are unknown).
    """
    n = len(votes)
    seen = {votes[i] for i in Q} - {None}
    out = set()
    for v in seen:
        for R in subsets(n, fq):
            if all(votes[i] == v for i in R if i in Q):
                out.add(v)
                break
    return out
