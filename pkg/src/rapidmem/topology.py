"""K-ring expander overlay over a configuration.

Ring ``r`` orders the members by ``splitmix64(fnv1a64(id) ^ splitmix64(r))``
(ties broken by NodeId), so the rings depend only on the membership set:
adding or removing one process splices it in or out of each ring and leaves
every other edge alone. In ring ``r`` the predecessor of ``s`` is its
observer and the successor is its subject.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import kernels
from .core import (MASK64, Configuration, InvariantError, NodeId, ProtocolParams,
                   node_hash, splitmix64)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 finalizer; matches :func:`core.splitmix64`."""
    z = np.asarray(x, dtype=np.uint64) + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def ring_orders(hashes: np.ndarray, K: int) -> np.ndarray:
    """Return a (K, n) array; row r lists member indices in ring-r order.

    ``hashes`` are per-member 64-bit hashes in NodeId order, so the index is
    the NodeId tie-break.
    """
    hashes = np.asarray(hashes, dtype=np.uint64)
    idx = np.arange(hashes.size)
    out = np.empty((K, hashes.size), dtype=np.int64)
    for r in range(K):
        keys = splitmix64_array(hashes ^ np.uint64(splitmix64(r)))
        out[r] = np.lexsort((idx, keys))
    return out


def neighbors_from_rings(rings: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Observer and subject index arrays, each (n, K), from ring orders."""
    K, n = rings.shape
    obs = np.empty((n, K), dtype=np.int64)
    sub = np.empty((n, K), dtype=np.int64)
    for r in range(K):
        order = rings[r]
        pos = np.empty(n, dtype=np.int64)
        pos[order] = np.arange(n)
        obs[:, r] = order[(pos - 1) % n]
        sub[:, r] = order[(pos + 1) % n]
    return obs, sub


@dataclass(frozen=True, eq=False)
class KRingTopology:
    config_id: int
    K: int
    members: tuple[NodeId, ...]
    rings: np.ndarray
    observer_idx: np.ndarray
    subject_idx: np.ndarray

    @property
    def n(self) -> int:
        return len(self.members)

    def index(self, node: int) -> int:
        i = self._index.get(node)
        if i is None:
            raise InvariantError(f"{node!r} is not in the topology")
        return i

    @property
    def _index(self) -> dict:
        cache = self.__dict__.get("_idx")
        if cache is None:
            cache = {m: i for i, m in enumerate(self.members)}
            object.__setattr__(self, "_idx", cache)
        return cache

    def __contains__(self, node: object) -> bool:
        return node in self._index

    def edges(self) -> list[tuple[NodeId, NodeId, int]]:
        """All directed monitoring edges as (observer, subject, ring)."""
        out = []
        for r in range(self.K):
            order = self.rings[r]
            n = len(order)
            for p in range(n):
                out.append((self.members[order[p]], self.members[order[(p + 1) % n]], r))
        return out

    def neighbor_array(self) -> np.ndarray:
        """(n, 2K) undirected multigraph adjacency: observers then subjects."""
        return np.concatenate([self.observer_idx, self.subject_idx], axis=1)


_TOPO_CACHE: "OrderedDict[int, KRingTopology]" = OrderedDict()
_HASH_CACHE: "OrderedDict[int, np.ndarray]" = OrderedDict()
_TEMP_CACHE: "OrderedDict[tuple[int, int], tuple[NodeId, ...]]" = OrderedDict()


def _lru_put(cache: OrderedDict, key, value, limit: int) -> None:
    cache[key] = value
    if len(cache) > limit:
        cache.popitem(last=False)


def member_hashes(cfg: Configuration) -> np.ndarray:
    arr = _HASH_CACHE.get(cfg.id)
    if arr is None or arr.size != len(cfg):
        arr = np.fromiter((node_hash(m) for m in cfg.member_ids), dtype=np.uint64,
                          count=len(cfg))
        _lru_put(_HASH_CACHE, cfg.id, arr, 128)
    return arr


def build(cfg: Configuration) -> KRingTopology:
    """Deterministic K-ring topology for ``cfg`` (a pure function of it)."""
    cached = _TOPO_CACHE.get(cfg.id)
    if cached is not None and cached.members == cfg.member_ids and cached.K == cfg.params.K:
        return cached
    K = cfg.params.K
    rings = ring_orders(member_hashes(cfg), K)
    obs, sub = neighbors_from_rings(rings)
    for a in (rings, obs, sub):
        a.setflags(write=False)
    topo = KRingTopology(cfg.id, K, cfg.member_ids, rings, obs, sub)
    _lru_put(_TOPO_CACHE, cfg.id, topo, 64)
    return topo


def observers_of(t: KRingTopology, s: int) -> list[NodeId]:
    """Element r is the predecessor of ``s`` in ring r."""
    i = t.index(s)
    return [t.members[j] for j in t.observer_idx[i]]


def subjects_of(t: KRingTopology, o: int) -> list[NodeId]:
    """Element r is the successor of ``o`` in ring r."""
    i = t.index(o)
    return [t.members[j] for j in t.subject_idx[i]]


def temporary_observers(cfg: Configuration, joiner: int) -> list[NodeId]:
    """K members that vouch for ``joiner`` while ``cfg`` is current.

    Members are ranked by ``splitmix64(fnv(member) ^ splitmix64(cfg.id ^ fnv(joiner)))``
    and the first K are taken, wrapping around when the configuration has
    fewer than K members.
    """
    if joiner in cfg:
        raise InvariantError(f"{joiner!r} is already a member")
    key = (cfg.id, int(joiner))
    cached = _TEMP_CACHE.get(key)
    if cached is None:
        salt = splitmix64((cfg.id ^ node_hash(joiner)) & MASK64)
        keys = splitmix64_array(member_hashes(cfg) ^ np.uint64(salt))
        order = np.lexsort((np.arange(len(cfg)), keys))
        K = cfg.params.K
        ids = cfg.member_ids
        cached = tuple(ids[order[r % len(order)]] for r in range(K))
        _lru_put(_TEMP_CACHE, key, cached, 1 << 15)
    return list(cached)


@dataclass(frozen=True)
class SpectralReport:
    n: int
    d: int
    lambda2: float
    ratio: float
    iterations: int
    residual: float
    converged: bool
    lambda_abs: float
    ratio_abs: float

    CSV_HEADER = ("n", "d", "lambda2", "ratio", "iterations", "residual",
                  "converged", "lambda_abs", "ratio_abs")

    def row(self) -> list:
        return [self.n, self.d, f"{self.lambda2:.10g}", f"{self.ratio:.10g}", self.iterations,
                f"{self.residual:.3e}", int(self.converged), f"{self.lambda_abs:.10g}",
                f"{self.ratio_abs:.10g}"]


def _top_of_shifted(nbrs: np.ndarray, d: int, sign: float, tol: float, max_iter: int,
                    seed: int) -> tuple[float, int, float]:
    """Largest eigenvalue of ``d*I + sign*A`` on the complement of the all-ones vector.

    Block power iteration with a Rayleigh-Ritz step; the shift makes the
    operator positive semidefinite, so its top eigenvalue is the one we want.
    """
    n = nbrs.shape[0]
    p = max(1, min(8, n - 1))
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    X -= X.mean(axis=0)
    X, _ = np.linalg.qr(X)
    theta, res = 0.0, np.inf
    it = 0
    for it in range(1, max_iter + 1):
        Y = d * X + sign * kernels.neighbor_sum(nbrs, X)
        Y -= Y.mean(axis=0)
        T = X.T @ Y
        w, V = np.linalg.eigh((T + T.T) / 2)
        theta = float(w[-1])
        x = X @ V[:, -1]
        bx = Y @ V[:, -1]
        res = float(np.linalg.norm(bx - theta * x))
        if res <= tol:
            break
        X, _ = np.linalg.qr(Y)
    return theta, it, res


def spectral_gap_of_neighbors(nbrs: np.ndarray, tol: float = 1e-8, max_iter: int = 20000,
                              seed: int = 0) -> SpectralReport:
    """Second eigenvalue of a d-regular multigraph given as an (n, d) neighbor array."""
    nbrs = np.ascontiguousarray(nbrs, dtype=np.int64)
    n, d = nbrs.shape
    if n < 3:
        raise ValueError("spectral analysis needs at least 3 vertices")
    top, it1, res1 = _top_of_shifted(nbrs, d, +1.0, tol, max_iter, seed)
    bottom, it2, res2 = _top_of_shifted(nbrs, d, -1.0, tol, max_iter, seed + 1)
    lam2 = top - d
    lam_min = d - bottom
    lam_abs = max(abs(lam2), abs(lam_min))
    residual = max(res1, res2)
    return SpectralReport(n=n, d=d, lambda2=lam2, ratio=lam2 / d,
                          iterations=max(it1, it2), residual=residual,
                          converged=residual <= tol, lambda_abs=lam_abs,
                          ratio_abs=lam_abs / d)


def spectral_gap(t: KRingTopology, tol: float = 1e-8, max_iter: int = 20000,
                 seed: int = 0) -> SpectralReport:
    """Spectral report for the 2K-regular monitoring multigraph of ``t``."""
    return spectral_gap_of_neighbors(t.neighbor_array(), tol, max_iter, seed)


def detectability_margin(n: int, f: int, params: ProtocolParams, ratio: float) -> float:
    """``(1 - L/K - ratio) - f/n``; the detection condition holds iff this is > 0."""
    if not 0 <= f < n:
        raise ValueError("need 0 <= f < n")
    exact = 1 - Fraction(params.L, params.K) - Fraction(repr(float(ratio))) - Fraction(f, n)
    return float(exact)
