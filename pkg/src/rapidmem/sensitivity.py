"""Almost-everywhere agreement experiments for the cut-detection thresholds.

``sensitivity_sweep`` fails F random processes of a random K-ring overlay,
delivers their observers' alerts to every other process in an independent
uniform order, and counts processes whose first proposal leaves out some
failed process. All (H, L) pairs of one repetition share the same delivery
orders.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .topology import neighbors_from_rings, ring_orders

SWEEP_HEADER = ("H", "L", "F", "reps", "processes", "conflicts", "no_proposal",
                "conflict_pct")


@dataclass(frozen=True)
class SweepRow:
    H: int
    L: int
    F: int
    reps: int
    processes: int
    conflicts: int
    no_proposal: int

    @property
    def rate(self) -> float:
        return self.conflicts / self.processes if self.processes else 0.0

    @property
    def pct(self) -> float:
        return 100.0 * self.rate

    def row(self) -> list:
        return [self.H, self.L, self.F, self.reps, self.processes, self.conflicts,
                self.no_proposal, f"{self.pct:.4f}"]


def failure_alerts(obs: np.ndarray, failed: np.ndarray):
    """Alerts produced by the healthy observers of ``failed``.

    Returns ``(alert_subject, alert_slot, slot_observer)`` in the layout
    :func:`kernels.cut_detection_batch` expects.
    """
    F = len(failed)
    K = obs.shape[1]
    pos = {int(v): g for g, v in enumerate(failed)}
    slot_observer = np.full((F, K), -1, dtype=np.int64)
    subj, slot = [], []
    for g, s in enumerate(failed):
        for r in range(K):
            o = int(obs[s, r])
            if o in pos:
                slot_observer[g, r] = pos[o]
            else:
                subj.append(g)
                slot.append(r)
    return np.array(subj, dtype=np.int64), np.array(slot, dtype=np.int64), slot_observer


def random_orders(rng: np.random.Generator, nodes: int, m: int) -> np.ndarray:
    return np.argsort(rng.random((nodes, m)), axis=1, kind="stable")


def sensitivity_sweep(n: int, K: int, H_set: Iterable[int], L_set: Iterable[int],
                      F_set: Iterable[int], reps: int, seed: int = 0,
                      pairs: Optional[Sequence[tuple[int, int]]] = None) -> list[SweepRow]:
    """Conflict counts for every (H, L, F) with ``L <= H <= K``."""
    if pairs is None:
        pairs = [(H, L) for H in H_set for L in L_set if 1 <= L <= H <= K]
    pairs = list(pairs)
    F_list = list(F_set)
    acc = {(H, L, F): [0, 0, 0] for F in F_list for H, L in pairs}
    for F in F_list:
        if not 1 <= F < n:
            raise ValueError("need 1 <= F < n")
        for rep in range(reps):
            rng = np.random.default_rng([seed, F, rep])
            hashes = rng.integers(0, 2 ** 64, size=n, dtype=np.uint64)
            obs, _ = neighbors_from_rings(ring_orders(hashes, K))
            failed = rng.choice(n, size=F, replace=False)
            subj, slot, sobs = failure_alerts(obs, failed)
            receivers = n - F
            orders = random_orders(rng, receivers, len(subj))
            for H, L in pairs:
                included, _ = kernels.cut_detection_batch(orders, subj, slot, sobs, H, L)
                a = acc[(H, L, F)]
                a[0] += receivers
                a[1] += int(np.count_nonzero((included >= 0) & (included < F)))
                a[2] += int(np.count_nonzero(included < 0))
    return [SweepRow(H, L, F, reps, *acc[(H, L, F)]) for F in F_list for H, L in pairs]


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow(r.row())
    return buf.getvalue()


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def conflict_bound(K: int, delta: float, t: int) -> float:
    """Asymptotic upper bound (not exact) on the chance a process proposes early.

    ``C(t, 2) * 2 ** (-2 * (1 - H2(delta)) * K)`` with the lower-order term
    in the exponent dropped; meaningful for ``L = delta*K`` and
    ``H = (1 - delta)*K``.
    """
    if not 0.0 < delta < 0.5:
        raise ValueError("delta must satisfy 0 < delta < 1/2")
    if K < 1 or t < 2:
        raise ValueError("need K >= 1 and t >= 2")
    return math.comb(t, 2) * 2.0 ** (-2.0 * (1.0 - binary_entropy(delta)) * K)


def bound_thresholds(K: int, delta: float) -> tuple[int, int]:
    """Integer (H, L) for a grid point; requires ``delta*K`` to be whole."""
    L = round(delta * K)
    if not math.isclose(L, delta * K, abs_tol=1e-9):
        raise ValueError("delta*K must be an integer")
    return K - L, L


def bound_monte_carlo(K: int, delta: float, t: int, samples: int,
                      seed: int = 0) -> tuple[float, float]:
    """Empirical conflict rate and its standard error with disjoint observers."""
    H, L = bound_thresholds(K, delta)
    subj = np.repeat(np.arange(t, dtype=np.int64), K)
    slot = np.tile(np.arange(K, dtype=np.int64), t)
    sobs = np.full((t, K), -1, dtype=np.int64)
    rng = np.random.default_rng([seed, K, t, L])
    conflicts = 0
    done = 0
    chunk = 20000
    while done < samples:
        m = min(chunk, samples - done)
        included, _ = kernels.cut_detection_batch(random_orders(rng, m, t * K), subj, slot,
                                                  sobs, H, L)
        conflicts += int(np.count_nonzero((included >= 0) & (included < t)))
        done += m
    p = conflicts / samples
    return p, math.sqrt(max(p * (1 - p), 0.0) / samples)
