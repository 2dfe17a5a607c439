"""Multi-process cut detection.

Each process tallies irrevocable alerts per subject and per ring slot. A
subject with at least H slots reported is STABLE, one with at least L is
UNSTABLE, anything below is noise. A proposal is announced only once some
subject is STABLE and none is UNSTABLE, and it names every STABLE subject.
"""

from __future__ import annotations

import enum
from typing import Callable, Iterable, Optional

from .core import (Alert, AlertKind, Configuration, CutProposal, InvariantError, Member,
                   NodeId, SubjectKey)
from .topology import KRingTopology, build, temporary_observers


class ReportMode(enum.IntEnum):
    NOISE = 0
    UNSTABLE = 1
    STABLE = 2


Gate = Callable[[CutProposal, int], bool]
Listener = Callable[..., None]


class CutDetectionState:
    """Per-configuration alert tallies; single writer."""

    def __init__(self, cfg: Configuration, topology: KRingTopology | None = None, *,
                 gate: Gate | None = None, listener: Listener | None = None):
        self.cfg = cfg
        self.params = cfg.params
        self.config_id = cfg.id
        self.topology = topology if topology is not None else build(cfg)
        self.gate = gate
        self.listener = listener
        # subject key -> {ring slot: observer}
        self.reports: dict[SubjectKey, dict[int, NodeId]] = {}
        self.joiners: dict[SubjectKey, Member] = {}
        self.first_unstable_tick: dict[SubjectKey, int] = {}
        self.unstable: dict[SubjectKey, None] = {}
        self.stable: dict[SubjectKey, None] = {}
        self.proposed = False
        self.proposal: Optional[CutProposal] = None
        self.stale_alerts = 0
        self.rejected_alerts = 0
        self.implicit_out: list[Alert] = []
        self._observers: dict[SubjectKey, tuple[NodeId, ...]] = {}
        self._hot_removals = 0

    def tally(self, key: SubjectKey) -> int:
        return len(self.reports.get(key, ()))

    def mode_of(self, key: SubjectKey) -> ReportMode:
        t = self.tally(key)
        if t >= self.params.H:
            return ReportMode.STABLE
        if t >= self.params.L:
            return ReportMode.UNSTABLE
        return ReportMode.NOISE

    def reset(self, cfg: Configuration) -> "CutDetectionState":
        """Fresh state for the next configuration; nothing carries over."""
        return CutDetectionState(cfg, gate=self.gate, listener=self.listener)

    def slot_observers(self, key: SubjectKey) -> tuple[NodeId, ...]:
        """Designated observer of each ring slot of a subject (cached)."""
        obs = self._observers.get(key)
        if obs is None:
            if isinstance(key, tuple):
                obs = tuple(temporary_observers(self.cfg, key[0]))
            else:
                t = self.topology
                obs = tuple(t.members[j] for j in t.observer_idx[t.index(key)])
            self._observers[key] = obs
        return obs

    def designated_observer(self, alert: Alert) -> NodeId:
        return self.slot_observers(alert.subject_key)[alert.ring_index]

    def _valid(self, alert: Alert) -> bool:
        if alert.config_id != self.config_id:
            self.stale_alerts += 1
            return False
        ok = 0 <= alert.ring_index < self.params.K
        if ok:
            if alert.kind is AlertKind.REMOVE:
                ok = alert.subject in self.cfg
            else:
                ok = alert.subject.id not in self.cfg
        if ok:
            ok = self.designated_observer(alert) == alert.observer
        if not ok:
            self.rejected_alerts += 1
        return ok

    def _emit(self, event: str, **fields) -> None:
        if self.listener is not None:
            self.listener(event, config_id=self.config_id, **fields)

    def _record(self, alert: Alert, now: int) -> bool:
        key = alert.subject_key
        slots = self.reports.get(key)
        if slots is None:
            slots = self.reports[key] = {}
            if alert.kind is AlertKind.JOIN:
                self.joiners[key] = alert.subject
        if alert.ring_index in slots:
            return False
        before = self.mode_of(key)
        slots[alert.ring_index] = alert.observer
        after = self.mode_of(key)
        self._emit("alert-ingested", alert=alert, tally=len(slots))
        if after is not before:
            if before is ReportMode.NOISE and key not in self.joiners:
                self._hot_removals += 1
            if after is ReportMode.UNSTABLE:
                self.unstable[key] = None
                self.first_unstable_tick.setdefault(key, now)
            elif after is ReportMode.STABLE:
                self.unstable.pop(key, None)
                self.stable[key] = None
            self._emit("mode-changed", subject=key, mode=after)
        return True

    def ingest(self, alert: Alert, now: int) -> Optional[CutProposal]:
        """Record one alert, apply implicit alerts, then try to propose."""
        if self._valid(alert):
            self._record(alert, now)
        return self.evaluate(now)

    def ingest_batch(self, alerts: Iterable[Alert], now: int) -> Optional[CutProposal]:
        """Record a batch and evaluate the aggregation rule once at the end."""
        for alert in alerts:
            if self._valid(alert):
                self._record(alert, now)
        return self.evaluate(now)

    def apply_implicit_alerts(self, now: int) -> list[Alert]:
        """Fill in alerts from observers that are themselves at least UNSTABLE.

        An observer that has reached the unstable band is presumed faulty and
        will not report; its missing alert about an UNSTABLE subject is applied
        locally so the subject cannot block the aggregation rule forever.
        """
        out: list[Alert] = []
        if not self._hot_removals:
            # only a REMOVE subject at or above L can act as an implicit observer
            return out
        L = self.params.L
        reports = self.reports
        changed = True
        while changed and self.unstable:
            changed = False
            for key in list(self.unstable):
                slots = reports[key]
                kind = AlertKind.JOIN if key in self.joiners else AlertKind.REMOVE
                subject = self.joiners[key] if kind is AlertKind.JOIN else key
                for r, o in enumerate(self.slot_observers(key)):
                    if key not in self.unstable:
                        break
                    if r in slots:
                        continue
                    rep = reports.get(o)
                    if rep is not None and len(rep) >= L:
                        alert = Alert(o, subject, kind, self.config_id, r)
                        self._record(alert, now)
                        out.append(alert)
                        changed = True
        self.implicit_out.extend(out)
        return out

    def reinforce(self, me: NodeId, now: int) -> list[Alert]:
        """Echo alerts about subjects stuck UNSTABLE past the reinforcement timeout.

        Returns the alerts ``me`` should broadcast for the slots where it is the
        designated observer and has not reported yet; they are not recorded here.
        """
        out = []
        for key in self.unstable:
            since = self.first_unstable_tick.get(key, now)
            if now - since < self.params.reinforcement_timeout:
                continue
            slots = self.reports[key]
            kind = AlertKind.JOIN if key in self.joiners else AlertKind.REMOVE
            subject = self.joiners[key] if kind is AlertKind.JOIN else key
            for r, o in enumerate(self.slot_observers(key)):
                if r not in slots and o == me:
                    out.append(Alert(me, subject, kind, self.config_id, r))
        return out

    def _stable_cut(self) -> Optional[CutProposal]:
        if not self.stable or self.unstable:
            return None
        removals = frozenset(k for k in self.stable if k not in self.joiners)
        joins = frozenset(self.joiners[k] for k in self.stable if k in self.joiners)
        return CutProposal(self.config_id, removals, joins)

    def evaluate(self, now: int) -> Optional[CutProposal]:
        """Apply implicit alerts, then the aggregation rule; at most one proposal."""
        if self.proposed:
            return None
        if self.unstable:
            self.apply_implicit_alerts(now)
        cut = self._stable_cut()
        if cut is None or cut.size_after(len(self.cfg)) == 0:
            # a configuration cannot be empty; such a cut is never announced
            return None
        if self.gate is not None and not self.gate(cut, now):
            return None
        self.proposed = True
        self.proposal = cut
        self._emit("proposal-emitted", proposal=cut)
        return cut

    def quiescent_proposal(self) -> Optional[CutProposal]:
        """The cut the aggregation rule yields on the current tallies."""
        return self._stable_cut()

    def settle(self, now: int) -> Optional[CutProposal]:
        """Run implicit alerts to a fixpoint and return the quiescent cut.

        Unlike :meth:`evaluate` this ignores the ``proposed`` flag, so it is
        a pure function of the set of alerts received, not their order.
        """
        if self.unstable:
            self.apply_implicit_alerts(now)
        return self._stable_cut()

    def check_invariants(self) -> None:
        K = self.params.K
        for key, slots in self.reports.items():
            if not 0 <= len(slots) <= K:
                raise InvariantError(f"tally out of range for {key!r}")
            mode = self.mode_of(key)
            if (key in self.stable) != (mode is ReportMode.STABLE):
                raise InvariantError("stable index out of sync")
            if (key in self.unstable) != (mode is ReportMode.UNSTABLE):
                raise InvariantError("unstable index out of sync")
