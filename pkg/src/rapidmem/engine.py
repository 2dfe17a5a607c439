"""Per-node protocol runtime.

A :class:`Node` is a deterministic state machine driven by
``step(now, inbox) -> outbox``. The simulator calls it for every node on one
thread; the asyncio transport calls it from each node's own loop.
"""

from __future__ import annotations

import enum
import math
import random
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Optional, Protocol, Sequence

from .consensus import ALL, GOSSIP, ProtocolError, ViewChange
from .core import (Alert, AlertKind, Configuration, CutProposal, Endpoint, InvariantError,
                   Member, NodeId, ProtocolParams, apply_cut)
from .cutdetect import CutDetectionState
from .messages import (Accept, Accepted, AlertBatch, Envelope, FastVote, JoinConfirm,
                       JoinReq, JoinResp, JoinStatus, Leave, Learn, Nack, PreJoin,
                       PreJoinResp, Prepare, Probe, ProbeAck, Promise, Sync, SyncReq)
from .topology import build, observers_of, temporary_observers


class Verdict(enum.Enum):
    HEALTHY = "HEALTHY"
    FAULTY = "FAULTY"


class EdgeMonitor(Protocol):
    def record(self, ok: bool) -> None: ...

    def verdict(self) -> Verdict: ...


class DefaultProbeDetector:
    """FAULTY once the window is full and enough of it failed."""

    def __init__(self, window: int = 10, threshold: Fraction = Fraction(2, 5)):
        self.window = window
        self.threshold = Fraction(threshold)
        self.outcomes: deque[bool] = deque(maxlen=window)
        self.failures = 0

    def record(self, ok: bool) -> None:
        if len(self.outcomes) == self.window and not self.outcomes[0]:
            self.failures -= 1
        self.outcomes.append(ok)
        if not ok:
            self.failures += 1

    def verdict(self) -> Verdict:
        if len(self.outcomes) < self.window:
            return Verdict.HEALTHY
        t = self.threshold
        if self.failures * t.denominator >= t.numerator * self.window:
            return Verdict.FAULTY
        return Verdict.HEALTHY


class Mode(enum.Enum):
    DECENTRALIZED = "decentralized"
    CENTRALIZED_MEMBER = "centralized-member"
    CENTRALIZED_AUX = "centralized-aux"


class Status(enum.Enum):
    IDLE = "IDLE"
    JOINING = "JOINING"
    MEMBER = "MEMBER"
    AUX = "AUX"
    DEPARTED = "DEPARTED"


@dataclass(frozen=True)
class EngineSettings:
    probe_interval: int = 1
    probe_timeout: int = 4
    gossip_fanout: Optional[int] = None
    batch_max: int = 64
    bootstrap_min: int = 3
    bootstrap_wait: int = 5
    prejoin_timeout: int = 5
    join_timeout: int = 40
    recovery_stagger: int = 2
    recovery_timeout: int = 10
    poll_interval: int = 5
    sync_cooldown: int = 2
    implicit_local_only: bool = False

    def fanout(self, n: int) -> int:
        if self.gossip_fanout is not None:
            return self.gossip_fanout
        return math.ceil(math.log2(max(n, 2))) + 2


@dataclass(frozen=True)
class ViewChangeEvent:
    configuration: Configuration
    cut: Optional[CutProposal]
    previous_id: Optional[int]

    @property
    def joined(self) -> tuple[Member, ...]:
        return tuple(self.cut.sorted_joins()) if self.cut else ()

    @property
    def removed(self) -> tuple[NodeId, ...]:
        return tuple(self.cut.sorted_removals()) if self.cut else ()


class _JoinPhase(enum.Enum):
    PRE = "PRE"
    WAIT = "WAIT"


class Node:
    """One process: monitoring, alert gossip, cut detection, consensus, joins."""

    def __init__(self, me: Member, params: ProtocolParams | None = None,
                 settings: EngineSettings | None = None, *, seed: int = 0,
                 mode: Mode = Mode.DECENTRALIZED, aux: Sequence[Member] = (),
                 detector_factory: Callable[[ProtocolParams], EdgeMonitor] | None = None):
        self.me = me
        self.params = params or ProtocolParams()
        self.settings = settings or EngineSettings()
        self.mode = mode
        self.aux = tuple(sorted(aux, key=lambda m: m.id))
        self.rng = random.Random(seed)
        self.detector_factory = detector_factory or (
            lambda p: DefaultProbeDetector(p.consecutive_probe_window,
                                           p.probe_failure_fraction))
        self.status = Status.IDLE
        self.cfg: Optional[Configuration] = None
        self.cd: Optional[CutDetectionState] = None
        self.vc: Optional[ViewChange] = None
        self.history: dict[int, tuple[CutProposal, int]] = {}
        self.installed: list[int] = []
        self.proposals: dict[int, CutProposal] = {}
        self.classic_rounds = 0
        self.protocol_errors = 0
        self._view_cbs: list[Callable[[ViewChangeEvent], None]] = []
        self._depart_cbs: list[Callable[[Configuration], None]] = []
        self._out: list[Envelope] = []
        self._local: deque = deque()
        self._now = 0
        # monitoring
        self.monitors: dict[NodeId, EdgeMonitor] = {}
        self._slots: dict[NodeId, list[int]] = {}
        self._pending_probes: deque[tuple[int, int]] = deque()
        self._outstanding: dict[int, NodeId] = {}
        self._seq = 0
        self._alerted: set[NodeId] = set()
        self._forced_faulty: set[NodeId] = set()
        self._leaving = False
        # alert dissemination
        self._outbox: list[Alert] = []
        self._forward: list[Alert] = []
        self._seen: set[Alert] = set()
        self._emitted: set[Alert] = set()
        self._peers: list[Endpoint] = []
        self._fanout = 1
        self._voter_eps: dict[NodeId, Endpoint] = {}
        self._gate_since: Optional[int] = None
        self._sync_sent: dict[tuple[Endpoint, int], int] = {}
        self._next_poll = 0
        # join state (as joiner and as temporary observer)
        self._seed: Optional[Endpoint] = None
        self._join_phase: Optional[_JoinPhase] = None
        self._join_deadline = 0
        self._join_cfg: Optional[int] = None
        self._join_attempts = 0
        self.pending_joiners: dict[NodeId, Member] = {}

    # ---- application API -------------------------------------------------

    def on_view_change(self, cb: Callable[[ViewChangeEvent], None]) -> None:
        self._view_cbs.append(cb)

    def on_departure(self, cb: Callable[[Configuration], None]) -> None:
        self._depart_cbs.append(cb)

    @property
    def size(self) -> Optional[int]:
        if self.status is Status.MEMBER and self.cfg is not None:
            return len(self.cfg)
        return None

    def metadata_of(self, node: int) -> dict[str, str]:
        if self.cfg is None:
            raise InvariantError("no configuration installed")
        return self.cfg.member(node).meta

    def bootstrap(self, cfg: Configuration, now: int = 0) -> None:
        """Start as a member (or auxiliary node) of a known configuration."""
        self._now = now
        if self.mode is Mode.CENTRALIZED_AUX:
            self.status = Status.AUX
        else:
            if self.me.id not in cfg:
                raise InvariantError("bootstrap configuration must contain this node")
            self.status = Status.MEMBER
        self.params = cfg.params
        self._enter(cfg, None, None)

    def join(self, seed: Endpoint, now: int = 0) -> None:
        """Begin the join handshake through ``seed``; completes inside ``step``."""
        self._now = now
        self.status = Status.JOINING
        self._seed = seed
        self._join_attempts = 0
        self._send_prejoin(now)

    def rejoin(self, new_id: int, now: int, seed: Endpoint | None = None) -> None:
        """Come back as a fresh incarnation after being removed.

        Without an explicit ``seed`` the original seed is reused, or else a
        member of the configuration that removed this node.
        """
        if seed is None:
            seed = self._seed
        if seed is None and self.cfg is not None:
            others = [m.endpoint for m in self.cfg.members if m.endpoint != self.me.endpoint]
            seed = others[0] if others else None
        if seed is None:
            raise InvariantError("rejoin needs a seed endpoint")
        self._seed = seed
        self.me = Member(NodeId(new_id), self.me.endpoint, self.me.metadata)
        self.cfg = self.cd = self.vc = None
        self.history = {}
        self.installed = []
        self.monitors.clear()
        self._slots.clear()
        self._outstanding.clear()
        self._pending_probes.clear()
        self._leaving = False
        self.join(self._seed, now)

    def leave(self) -> None:
        """Ask this node's observers to report it; removal follows the normal path."""
        if self.status is not Status.MEMBER:
            return
        self._leaving = True
        topo = build(self.cfg)
        for obs in sorted(set(observers_of(topo, self.me.id))):
            if obs != self.me.id:
                self._send(self.cfg.member(obs).endpoint, Leave(self.cfg.id, self.me.id))

    # ---- main transition -------------------------------------------------

    def step(self, now: int, inbox: Iterable[Envelope] = ()) -> list[Envelope]:
        self._now = now
        for env in inbox:
            self._dispatch(env.src, env.msg)
        self._drain_local()
        if self.status in (Status.MEMBER, Status.AUX):
            self._tick(now)
        elif self.status is Status.JOINING:
            self._join_tick(now)
        self._drain_local()
        out, self._out = self._out, []
        return out

    def _drain_local(self) -> None:
        while self._local:
            msg = self._local.popleft()
            self._dispatch(self.me.endpoint, msg)

    def _send(self, dst: Endpoint, msg: object) -> None:
        if dst == self.me.endpoint:
            self._local.append(msg)
        else:
            self._out.append(Envelope(self.me.endpoint, dst, msg))

    def _gossip(self, msg: object) -> None:
        peers = self._peers
        if not peers:
            return
        k = min(self._fanout, len(peers))
        for dst in self.rng.sample(peers, k):
            self._out.append(Envelope(self.me.endpoint, dst, msg))

    def _route(self, outs) -> None:
        for dest, msg in outs:
            if dest == GOSSIP:
                self._gossip(msg)
            elif dest == ALL:
                for ep in self._voter_eps.values():
                    self._send(ep, msg)
            else:
                ep = self._voter_eps.get(dest)
                if ep is not None:
                    self._send(ep, msg)
        self._check_decision()

    # ---- configuration hand-off ------------------------------------------

    def _enter(self, cfg: Configuration, cut: Optional[CutProposal],
               prev: Optional[int]) -> None:
        self.cfg = cfg
        self.installed.append(cfg.id)
        topo = build(cfg)
        aux_mode = self.status is Status.AUX
        decentralized = self.mode is Mode.DECENTRALIZED
        if decentralized or aux_mode:
            self.cd = CutDetectionState(cfg, topo, gate=self._gate)
            voters = self.aux if aux_mode else cfg.members
            self._voter_eps = {m.id: m.endpoint for m in voters}
            self.vc = ViewChange(cfg.id, [m.id for m in voters], self.me.id,
                                 fast_round_timeout=cfg.params.fast_round_timeout,
                                 recovery_stagger=self.settings.recovery_stagger,
                                 recovery_timeout=self.settings.recovery_timeout)
        else:
            self.cd = None
            self.vc = None
            self._voter_eps = {}
        if aux_mode:
            self._peers = [m.endpoint for m in self.aux if m.id != self.me.id]
        else:
            self._peers = [m.endpoint for m in cfg.members if m.id != self.me.id]
        self._fanout = self.settings.fanout(len(cfg))
        self._outbox = []
        self._forward = []
        self._seen = set()
        self._emitted = set()
        self._alerted = set()
        self._gate_since = None
        self._sync_sent.clear()
        if self.status is Status.MEMBER:
            self._rebuild_monitors(topo)
        for cb in self._view_cbs:
            cb(ViewChangeEvent(cfg, cut, prev))

    def _rebuild_monitors(self, topo) -> None:
        i = topo.index(self.me.id)
        slots: dict[NodeId, list[int]] = {}
        for r, j in enumerate(topo.subject_idx[i]):
            s = topo.members[j]
            if s != self.me.id:
                slots.setdefault(s, []).append(r)
        old = self.monitors
        self.monitors = {s: old.get(s) or self.detector_factory(self.params) for s in slots}
        self._slots = slots
        self._forced_faulty &= set(slots)

    def _install(self, new_cfg: Configuration, cut: CutProposal) -> None:
        old = self.cfg
        self.history[old.id] = (cut, new_cfg.id)
        if self.vc is not None:
            self.classic_rounds += self.vc.classic_rounds
        if self.status is Status.MEMBER and self.me.id not in new_cfg:
            self.status = Status.DEPARTED
            self.cfg = new_cfg
            self.cd = self.vc = None
            self.monitors.clear()
            self._outstanding.clear()
            self._pending_probes.clear()
            for cb in self._depart_cbs:
                cb(new_cfg)
            return
        self._enter(new_cfg, cut, old.id)
        if self.status is Status.AUX:
            notify = {m.endpoint for m in old.members} | {m.endpoint for m in new_cfg.members}
            for ep in sorted(notify):
                self._send(ep, Sync(old.id, (cut,)))
        pending, self.pending_joiners = self.pending_joiners, {}
        for jid, joiner in pending.items():
            if jid in new_cfg:
                self._send(joiner.endpoint, JoinConfirm(new_cfg))
            else:
                self._send(joiner.endpoint, JoinResp(JoinStatus.CONFIG_CHANGED, new_cfg.id))

    def _check_decision(self) -> None:
        vc = self.vc
        if vc is None or vc.decided is None:
            return
        for fv in vc.drain_votes():
            self._spread(fv)
        cut = vc.decided
        self._install(apply_cut(self.cfg, cut), cut)

    def _chain_from(self, cid: int) -> tuple[CutProposal, ...]:
        cuts = []
        while cid in self.history:
            cut, cid = self.history[cid]
            cuts.append(cut)
        return tuple(cuts)

    def _mismatch(self, src: Endpoint, cid: int) -> None:
        """Help a peer on an older configuration catch up, or ask to be caught up."""
        if self.cfg is None or cid == self.cfg.id or src == self.me.endpoint:
            return
        behind = cid in self.history
        key = (src, 1 if behind else 0)
        last = self._sync_sent.get(key)
        if last is not None and self._now - last < self.settings.sync_cooldown:
            return
        self._sync_sent[key] = self._now
        if behind:
            self._send(src, Sync(cid, self._chain_from(cid)))
        elif self.status in (Status.MEMBER, Status.AUX):
            self._send(src, SyncReq(self.cfg.id))

    def _current(self, src: Endpoint, cid: int) -> bool:
        if self.cfg is not None and cid == self.cfg.id:
            return True
        self._mismatch(src, cid)
        return False

    def _gate(self, cut: CutProposal, now: int) -> bool:
        n = len(self.cfg)
        floor = self.settings.bootstrap_min
        if n >= floor or cut.size_after(n) >= floor:
            return True
        if self._gate_since is None:
            self._gate_since = now
        return now - self._gate_since >= self.settings.bootstrap_wait

    # ---- tick ---------------------------------------------------------------

    def _tick(self, now: int) -> None:
        member = self.status is Status.MEMBER
        if member:
            self._expire_probes(now)
            self._check_verdicts()
            if now % self.settings.probe_interval == 0:
                self._send_probes(now)
        cd = self.cd
        if cd is not None:
            if member and self.mode is Mode.DECENTRALIZED:
                for a in cd.reinforce(self.me.id, now):
                    self._queue_alert(a)
            self._maybe_propose(cd.evaluate(now), now)
            if self.cd is not cd:
                return
        if (now % self.params.batching_window == 0
                or len(self._outbox) >= self.settings.batch_max):
            self._flush_alerts(now)
            if self.cfg is None or self.status is Status.DEPARTED:
                return
        vc = self.vc
        if vc is not None:
            for fv in vc.drain_votes():
                self._spread(fv)
            self._route(vc.tick(now))
        if self.mode is Mode.CENTRALIZED_MEMBER and member and now >= self._next_poll:
            self._next_poll = now + self.settings.poll_interval
            if self.aux:
                target = self.aux[(now // self.settings.poll_interval) % len(self.aux)]
                self._send(target.endpoint, SyncReq(self.cfg.id))

    def _spread(self, msg) -> None:
        # the auxiliary ensemble is small, so it talks all-to-all
        if self.status is Status.AUX:
            for ep in self._peers:
                self._send(ep, msg)
        else:
            self._gossip(msg)

    def _expire_probes(self, now: int) -> None:
        q = self._pending_probes
        while q and q[0][0] <= now:
            _, seq = q.popleft()
            subject = self._outstanding.pop(seq, None)
            mon = self.monitors.get(subject) if subject is not None else None
            if mon is not None:
                mon.record(False)

    def _check_verdicts(self) -> None:
        cid = self.cfg.id
        for s, mon in self.monitors.items():
            if s in self._alerted:
                continue
            if s in self._forced_faulty or mon.verdict() is Verdict.FAULTY:
                self._alerted.add(s)
                for r in self._slots[s]:
                    self._queue_alert(Alert(self.me.id, s, AlertKind.REMOVE, cid, r))

    def _send_probes(self, now: int) -> None:
        deadline = now + self.settings.probe_timeout
        for s in self.monitors:
            self._seq += 1
            self._outstanding[self._seq] = s
            self._pending_probes.append((deadline, self._seq))
            self._send(self.cfg.member(s).endpoint, Probe(self.cfg.id, self._seq))

    def _queue_alert(self, alert: Alert) -> None:
        if alert not in self._emitted:
            self._emitted.add(alert)
            self._outbox.append(alert)

    def _flush_alerts(self, now: int) -> None:
        own, self._outbox = self._outbox, []
        if self.mode is Mode.CENTRALIZED_MEMBER:
            if own:
                batch = AlertBatch(self.cfg.id, tuple(own))
                for m in self.aux:
                    self._send(m.endpoint, batch)
            return
        cd = self.cd
        if cd is None:
            return
        fresh = [a for a in own if a not in self._seen]
        self._seen.update(fresh)
        proposal = cd.ingest_batch(fresh, now) if fresh else None
        self._forward.extend(fresh)
        self._take_implicit(cd)
        forward, self._forward = self._forward, []
        if forward and self.status is Status.MEMBER:
            for i in range(0, len(forward), self.settings.batch_max):
                self._gossip(AlertBatch(self.cfg.id, tuple(forward[i:i + self.settings.batch_max])))
        self._maybe_propose(proposal, now)

    def _take_implicit(self, cd: CutDetectionState) -> None:
        implicit, cd.implicit_out = cd.implicit_out, []
        if self.settings.implicit_local_only:
            return
        for a in implicit:
            if a not in self._seen:
                self._seen.add(a)
                self._forward.append(a)

    def _maybe_propose(self, proposal: Optional[CutProposal], now: int) -> None:
        if proposal is None or self.vc is None:
            return
        self.proposals[self.cfg.id] = proposal
        self._route(self.vc.propose(proposal, now))

    # ---- joiner side --------------------------------------------------------

    def _send_prejoin(self, now: int) -> None:
        self._join_phase = _JoinPhase.PRE
        self._join_deadline = now + self.settings.prejoin_timeout
        self._join_attempts += 1
        self._send(self._seed, PreJoin(self.me))

    def _join_tick(self, now: int) -> None:
        if now >= self._join_deadline:
            self._send_prejoin(now)

    def _admitted(self, cfg: Configuration) -> None:
        self.status = Status.MEMBER
        self.params = cfg.params
        self._join_phase = None
        self._enter(cfg, None, None)

    # ---- dispatch -----------------------------------------------------------

    def _dispatch(self, src: Endpoint, msg: object) -> None:
        if self.status is Status.DEPARTED or self.status is Status.IDLE:
            return
        handler = _HANDLERS.get(type(msg))
        if handler is None:
            self.protocol_errors += 1
            return
        try:
            handler(self, src, msg)
        except ProtocolError:
            self.protocol_errors += 1

    def _on_probe(self, src: Endpoint, msg: Probe) -> None:
        if self.status is not Status.MEMBER:
            return
        self._send(src, ProbeAck(self.cfg.id, msg.seq))
        self._current(src, msg.config_id)

    def _on_probe_ack(self, src: Endpoint, msg: ProbeAck) -> None:
        if self.status is not Status.MEMBER:
            return
        subject = self._outstanding.pop(msg.seq, None)
        mon = self.monitors.get(subject) if subject is not None else None
        if mon is not None:
            mon.record(True)
        self._current(src, msg.config_id)

    def _on_alert_batch(self, src: Endpoint, msg: AlertBatch) -> None:
        if self.mode is Mode.CENTRALIZED_MEMBER or self.cd is None:
            return
        if not self._current(src, msg.config_id):
            return
        fresh = [a for a in msg.alerts if a not in self._seen]
        if not fresh:
            return
        self._seen.update(fresh)
        cd = self.cd
        proposal = cd.ingest_batch(fresh, self._now)
        if self.status is Status.MEMBER:
            self._forward.extend(fresh)
        self._take_implicit(cd)
        self._maybe_propose(proposal, self._now)

    def _vc_handler(self, src: Endpoint, msg, fn) -> None:
        if self.vc is None or not self._current(src, msg.config_id):
            return
        self._route(fn(self.vc, msg))

    def _on_fast_vote(self, src, msg: FastVote) -> None:
        self._vc_handler(src, msg, ViewChange.on_fast_vote)

    def _on_prepare(self, src, msg: Prepare) -> None:
        self._vc_handler(src, msg, ViewChange.on_prepare)

    def _on_promise(self, src, msg: Promise) -> None:
        self._vc_handler(src, msg, ViewChange.on_promise)

    def _on_nack(self, src, msg: Nack) -> None:
        self._vc_handler(src, msg, ViewChange.on_nack)

    def _on_accept(self, src, msg: Accept) -> None:
        self._vc_handler(src, msg, ViewChange.on_accept)

    def _on_accepted(self, src, msg: Accepted) -> None:
        self._vc_handler(src, msg, ViewChange.on_accepted)

    def _on_learn(self, src, msg: Learn) -> None:
        self._vc_handler(src, msg, ViewChange.on_learn)

    def _on_sync_req(self, src: Endpoint, msg: SyncReq) -> None:
        if self.cfg is None or self.status is Status.JOINING:
            return
        if msg.config_id in self.history:
            self._mismatch(src, msg.config_id)

    def _on_sync(self, src: Endpoint, msg: Sync) -> None:
        if self.status not in (Status.MEMBER, Status.AUX) or msg.from_config_id != self.cfg.id:
            return
        for cut in msg.cuts:
            if self.status is Status.DEPARTED or cut.config_id != self.cfg.id:
                break
            if self.vc is not None and self.vc.decided not in (None, cut):
                raise InvariantError("sync conflicts with a local decision")
            self._install(apply_cut(self.cfg, cut), cut)

    def _on_leave(self, src: Endpoint, msg: Leave) -> None:
        if self.status is Status.MEMBER and self._current(src, msg.config_id):
            if msg.node in self.monitors:
                self._forced_faulty.add(msg.node)

    def _on_prejoin(self, src: Endpoint, msg: PreJoin) -> None:
        cfg = self.cfg
        if cfg is None or self.status not in (Status.MEMBER, Status.AUX):
            self._send(src, PreJoinResp(JoinStatus.NOT_READY, 0))
            return
        joiner = msg.joiner
        if joiner.id in cfg:
            self._send(src, JoinConfirm(cfg))
            return
        if cfg.member_at(joiner.endpoint) is not None:
            self._send(src, PreJoinResp(JoinStatus.ENDPOINT_IN_USE, cfg.id))
            return
        obs = temporary_observers(cfg, joiner.id)
        self._send(src, PreJoinResp(JoinStatus.OK, cfg.id,
                                    tuple(cfg.member(o).endpoint for o in obs)))

    def _on_prejoin_resp(self, src: Endpoint, msg: PreJoinResp) -> None:
        if self.status is not Status.JOINING or self._join_phase is not _JoinPhase.PRE:
            return
        if msg.status is not JoinStatus.OK:
            return
        rings: dict[Endpoint, list[int]] = {}
        for r, ep in enumerate(msg.observers):
            rings.setdefault(ep, []).append(r)
        self._join_phase = _JoinPhase.WAIT
        self._join_cfg = msg.config_id
        self._join_deadline = self._now + self.settings.join_timeout
        for ep, rs in rings.items():
            self._send(ep, JoinReq(self.me, msg.config_id, tuple(rs)))

    def _on_join_req(self, src: Endpoint, msg: JoinReq) -> None:
        cfg = self.cfg
        if cfg is None or self.status is not Status.MEMBER:
            self._send(src, JoinResp(JoinStatus.NOT_READY, 0))
            return
        joiner = msg.joiner
        if joiner.id in cfg:
            self._send(src, JoinConfirm(cfg))
            return
        if msg.config_id != cfg.id:
            self._send(src, JoinResp(JoinStatus.CONFIG_CHANGED, cfg.id))
            return
        if cfg.member_at(joiner.endpoint) is not None:
            self._send(src, JoinResp(JoinStatus.ENDPOINT_IN_USE, cfg.id))
            return
        obs = temporary_observers(cfg, joiner.id)
        for r in msg.rings:
            if 0 <= r < len(obs) and obs[r] == self.me.id:
                self._queue_alert(Alert(self.me.id, joiner, AlertKind.JOIN, cfg.id, r))
        self.pending_joiners[joiner.id] = joiner

    def _on_join_resp(self, src: Endpoint, msg: JoinResp) -> None:
        if self.status is not Status.JOINING:
            return
        if msg.status is JoinStatus.CONFIG_CHANGED and self._join_phase is _JoinPhase.WAIT \
                and msg.config_id != self._join_cfg:
            self._send_prejoin(self._now)

    def _on_join_confirm(self, src: Endpoint, msg: JoinConfirm) -> None:
        if self.status is Status.JOINING and self.me.id in msg.configuration:
            self._admitted(msg.configuration)


_HANDLERS: dict[type, Callable] = {
    Probe: Node._on_probe,
    ProbeAck: Node._on_probe_ack,
    AlertBatch: Node._on_alert_batch,
    FastVote: Node._on_fast_vote,
    Prepare: Node._on_prepare,
    Promise: Node._on_promise,
    Nack: Node._on_nack,
    Accept: Node._on_accept,
    Accepted: Node._on_accepted,
    Learn: Node._on_learn,
    SyncReq: Node._on_sync_req,
    Sync: Node._on_sync,
    Leave: Node._on_leave,
    PreJoin: Node._on_prejoin,
    PreJoinResp: Node._on_prejoin_resp,
    JoinReq: Node._on_join_req,
    JoinResp: Node._on_join_resp,
    JoinConfirm: Node._on_join_confirm,
}
