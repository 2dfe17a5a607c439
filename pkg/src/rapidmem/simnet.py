"""Deterministic discrete-event network and scenario runner.

Time is an integer tick. Messages sent during tick ``t`` are delivered at
``t + delay`` (delay >= 1), and within a tick delivery order is send order.
Nodes are stepped in slot order every tick, so a run is a pure function of
the :class:`Scenario`.
"""

from __future__ import annotations

import csv
import io
import json
import random
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any, Iterable, Optional

from .core import (MASK64, Configuration, Endpoint, InvariantError, Member, NodeId,
                   ProtocolParams, splitmix64)
from .engine import EngineSettings, Mode, Node, Status, ViewChangeEvent

SCENARIO_VERSION = 1
TIMESERIES_HEADER = ("tick", "node", "size")


class SimulationInvariantError(InvariantError):
    pass


# ---- scenario --------------------------------------------------------------

@dataclass(frozen=True)
class Crash:
    tick: int
    nodes: tuple[int, ...]


@dataclass(frozen=True)
class JoinWave:
    tick: int
    nodes: tuple[int, ...]
    spread: int = 0


@dataclass(frozen=True)
class LinkFault:
    """Drop probabilities for the listed nodes during ``[tick, end)``.

    ``ingress`` applies to messages the node receives, ``egress`` to messages it sends.
    """
    tick: int
    nodes: tuple[int, ...]
    ingress: float = 0.0
    egress: float = 0.0
    end: Optional[int] = None


@dataclass(frozen=True)
class FlipFlop:
    """Alternate ``on`` ticks of loss with ``off`` ticks of clean links."""
    tick: int
    nodes: tuple[int, ...]
    on: int = 20
    off: int = 20
    direction: str = "ingress"
    drop: float = 1.0
    end: Optional[int] = None


@dataclass(frozen=True)
class Partition:
    """Cut ``side`` off from every other node during ``[tick, end)``."""
    tick: int
    side: tuple[int, ...]
    end: Optional[int] = None

    @cached_property
    def side_set(self) -> frozenset[int]:
        return frozenset(self.side)


@dataclass(frozen=True)
class LeaveEvent:
    tick: int
    nodes: tuple[int, ...]


EVENT_TYPES = {"crash": Crash, "join_wave": JoinWave, "link": LinkFault,
               "flip_flop": FlipFlop, "partition": Partition, "leave": LeaveEvent}
_EVENT_NAMES = {v: k for k, v in EVENT_TYPES.items()}


def _params_to_dict(p: ProtocolParams) -> dict:
    d = asdict(p)
    d["probe_failure_fraction"] = str(p.probe_failure_fraction)
    return d


def _params_from_dict(d: dict) -> ProtocolParams:
    d = dict(d)
    d["probe_failure_fraction"] = Fraction(d["probe_failure_fraction"])
    return ProtocolParams(**d)


@dataclass(frozen=True)
class Scenario:
    n: int
    params: ProtocolParams = field(default_factory=ProtocolParams)
    seed: int = 0
    duration: int = 200
    mode: str = "decentralized"
    aux_count: int = 0
    extra_slots: int = 0
    delay: tuple[int, int] = (1, 1)
    events: tuple[Any, ...] = ()
    auto_rejoin: bool = False
    settings: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n < 1 or self.extra_slots < 0 or self.duration < 1:
            raise ValueError("need n >= 1, extra_slots >= 0, duration >= 1")
        if self.mode not in ("decentralized", "centralized"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "centralized" and self.aux_count < 1:
            raise ValueError("centralized mode needs aux_count >= 1")
        lo, hi = self.delay
        if not 1 <= lo <= hi:
            raise ValueError("delay must satisfy 1 <= min <= max")
        total = self.slots
        for ev in self.events:
            nodes = getattr(ev, "nodes", None) or getattr(ev, "side", ())
            if any(not 0 <= i < total for i in nodes):
                raise ValueError(f"event {ev!r} names a node outside 0..{total - 1}")
            for attr in ("ingress", "egress", "drop"):
                v = getattr(ev, attr, 0.0)
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"{attr} must be a probability")
        EngineSettings(**self.settings)

    @property
    def slots(self) -> int:
        return self.n + self.extra_slots

    def to_dict(self) -> dict:
        events = []
        for ev in self.events:
            d = asdict(ev)
            for k, v in d.items():
                if isinstance(v, tuple):
                    d[k] = list(v)
            d["type"] = _EVENT_NAMES[type(ev)]
            events.append(d)
        return {"version": SCENARIO_VERSION, "n": self.n, "params": _params_to_dict(self.params),
                "seed": self.seed, "duration": self.duration, "mode": self.mode,
                "aux_count": self.aux_count, "extra_slots": self.extra_slots,
                "delay": list(self.delay), "events": events, "auto_rejoin": self.auto_rejoin,
                "settings": dict(sorted(self.settings.items()))}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if d.get("version") != SCENARIO_VERSION:
            raise ValueError(f"unsupported scenario version {d.get('version')!r}")
        events = []
        for e in d.get("events", []):
            e = dict(e)
            kind = EVENT_TYPES[e.pop("type")]
            for k, v in e.items():
                if isinstance(v, list):
                    e[k] = tuple(v)
            events.append(kind(**e))
        return cls(n=d["n"], params=_params_from_dict(d["params"]), seed=d["seed"],
                   duration=d["duration"], mode=d["mode"], aux_count=d["aux_count"],
                   extra_slots=d["extra_slots"], delay=tuple(d["delay"]), events=tuple(events),
                   auto_rejoin=d["auto_rejoin"], settings=dict(d.get("settings", {})))

    @classmethod
    def loads(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


# ---- report ------------------------------------------------------------------

@dataclass
class RunReport:
    scenario: Scenario
    timeseries: list[tuple[int, int, int]]
    size_sequences: dict[int, list[int]]
    decided: dict[str, list[int]]
    final_sizes: dict[int, Optional[int]]
    unique_sizes: int
    decisions: int
    conflicts: int
    classic_rounds: int
    messages: dict[str, int]
    dropped: int
    correct: list[int]
    faulty: list[int]
    removed_correct: list[int]
    removed_faulty: list[int]
    last_change_tick: int
    protocol_errors: int
    agreement: str = "OK"

    def summary(self) -> dict:
        return {
            "agreement": self.agreement,
            "unique_sizes": self.unique_sizes,
            "decisions": self.decisions,
            "conflicts": self.conflicts,
            "classic_rounds": self.classic_rounds,
            "messages": dict(sorted(self.messages.items())),
            "dropped": self.dropped,
            "final_sizes": {str(k): v for k, v in sorted(self.final_sizes.items())},
            "size_sequences": {str(k): v for k, v in sorted(self.size_sequences.items())},
            "decided": {str(k): [f"{c:016x}" for c in v] for k, v in sorted(self.decided.items())},
            "correct": self.correct,
            "faulty": self.faulty,
            "removed_correct": self.removed_correct,
            "removed_faulty": self.removed_faulty,
            "last_change_tick": self.last_change_tick,
            "protocol_errors": self.protocol_errors,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2) + "\n"

    def timeseries_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TIMESERIES_HEADER)
        w.writerows(self.timeseries)
        return buf.getvalue()

    def to_bytes(self) -> bytes:
        return (self.scenario.dumps() + self.summary_json() + self.timeseries_csv()).encode()

    def line(self) -> str:
        return f"unique_sizes={self.unique_sizes}, agreement={self.agreement}"


# ---- runtime -----------------------------------------------------------------

def endpoint_for(i: int) -> Endpoint:
    return Endpoint(f"10.0.{i // 250}.{i % 250 + 1}", 7946)


class _Links:
    """Per-ordered-pair counter-based random streams for loss and delay."""

    def __init__(self, seed: int, delay: tuple[int, int]):
        self.key = splitmix64(seed & MASK64)
        self.delay = delay
        self.counters: dict[tuple[int, int], int] = defaultdict(int)

    def uniform(self, src: int, dst: int) -> float:
        c = self.counters[(src, dst)]
        self.counters[(src, dst)] = c + 1
        pair = splitmix64(self.key ^ ((src << 32) | dst))
        return splitmix64(pair ^ splitmix64(c)) / 2.0 ** 64

    def sample_delay(self, src: int, dst: int) -> int:
        lo, hi = self.delay
        if lo == hi:
            return lo
        return lo + int(self.uniform(src, dst) * (hi - lo + 1))


class Simulation:
    def __init__(self, sc: Scenario):
        self.sc = sc
        self.settings = EngineSettings(**sc.settings)
        self.links = _Links(sc.seed, sc.delay)
        rng = random.Random(sc.seed)
        total = sc.slots
        self.ids = [NodeId(rng.getrandbits(128)) for _ in range(total)]
        self.endpoints = [endpoint_for(i) for i in range(total)]
        self.slot_of = {ep: i for i, ep in enumerate(self.endpoints)}
        self.id_rng = random.Random(splitmix64(sc.seed ^ 0x5EED))
        self.alive = [True] * total
        self.crashed: set[int] = set()
        self.faulty: set[int] = set()
        self.queue: dict[int, list] = defaultdict(list)
        self.messages: Counter = Counter()
        self.dropped = 0
        self.registry: dict[int, int] = {}
        self.delivered: set[tuple[int, int]] = set()
        self.sequences: dict[str, list[int]] = defaultdict(list)
        self.incarnation: dict[int, int] = defaultdict(int)
        self.timeseries: list[tuple[int, int, int]] = []
        self.last_size: dict[int, Optional[int]] = {}
        self.size_seq: dict[int, list[int]] = defaultdict(list)
        self.reported_sizes: set[int] = set()
        self.last_change = 0
        self.removed_ids: set[int] = set()
        self.rejoin_at: dict[int, list[int]] = defaultdict(list)
        self.now = 0
        self._build_nodes()

    def _build_nodes(self) -> None:
        sc = self.sc
        members = [Member(self.ids[i], self.endpoints[i]) for i in range(sc.n)]
        self.aux_slots: list[int] = []
        if sc.mode == "centralized":
            self.aux_slots = list(range(sc.aux_count))
        aux_members = [members[i] for i in self.aux_slots]
        self.nodes: list[Node] = []
        for i in range(sc.slots):
            me = Member(self.ids[i], self.endpoints[i])
            if sc.mode == "decentralized":
                mode = Mode.DECENTRALIZED
            elif i in self.aux_slots:
                mode = Mode.CENTRALIZED_AUX
            else:
                mode = Mode.CENTRALIZED_MEMBER
            node = Node(me, sc.params, self.settings, seed=splitmix64(sc.seed ^ (i + 1)),
                        mode=mode, aux=aux_members)
            node.on_view_change(lambda ev, i=i: self._on_view(i, ev))
            node.on_departure(lambda cfg, i=i: self._on_departure(i, cfg))
            self.nodes.append(node)
        cluster = [m for i, m in enumerate(members) if i not in self.aux_slots]
        cfg = Configuration.initial(cluster, sc.params)
        for i in range(sc.n):
            self.nodes[i].bootstrap(cfg, 0)

    def _fail(self, msg: str) -> None:
        raise SimulationInvariantError(f"tick {self.now}: {msg}")

    def _on_view(self, i: int, ev: ViewChangeEvent) -> None:
        node = self.nodes[i]
        key = (int(node.me.id), ev.configuration.id)
        if key in self.delivered:
            self._fail(f"callback fired twice at slot {i} for {ev.configuration.id:016x}")
        self.delivered.add(key)
        if ev.previous_id is not None:
            known = self.registry.setdefault(ev.previous_id, ev.configuration.id)
            if known != ev.configuration.id:
                self._fail(f"agreement breach after {ev.previous_id:016x}: "
                           f"{known:016x} vs {ev.configuration.id:016x} at slot {i}")
            self.removed_ids.update(int(r) for r in ev.removed)
        if node.mode is not Mode.CENTRALIZED_AUX:
            if ev.previous_id is None:
                self.incarnation[i] += 1
            inc = self.incarnation[i]
            key = str(i) if inc == 1 else f"{i}.{inc - 1}"
            self.sequences[key].append(ev.configuration.id)

    def _on_departure(self, i: int, cfg: Configuration) -> None:
        node = self.nodes[i]
        prev = node.installed[-1] if node.installed else None
        if prev is not None:
            known = self.registry.setdefault(prev, cfg.id)
            if known != cfg.id:
                self._fail(f"agreement breach on departure at slot {i}")
        self.removed_ids.add(int(node.me.id))
        if self.sc.auto_rejoin and self.alive[i]:
            self.rejoin_at[self.now + 10].append(i)

    # link model
    def _drop_prob(self, src: int, dst: int, t: int) -> float:
        keep = 1.0
        for ev in self._active_link_events:
            kind = type(ev)
            if kind is Partition:
                a, b = src in ev.side_set, dst in ev.side_set
                if a != b:
                    return 1.0
            elif kind is LinkFault:
                if src in ev.nodes:
                    keep *= 1.0 - ev.egress
                if dst in ev.nodes:
                    keep *= 1.0 - ev.ingress
            elif kind is FlipFlop:
                phase = (t - ev.tick) % (ev.on + ev.off)
                if phase < ev.on:
                    if ev.direction in ("ingress", "both") and dst in ev.nodes:
                        keep *= 1.0 - ev.drop
                    if ev.direction in ("egress", "both") and src in ev.nodes:
                        keep *= 1.0 - ev.drop
        return 1.0 - keep

    def _deliver(self, env, t: int) -> None:
        src = self.slot_of[env.src]
        dst = self.slot_of.get(env.dst)
        self.messages[type(env.msg).__name__] += 1
        if dst is None:
            self.dropped += 1
            return
        p = self._drop_prob(src, dst, t) if self._active_link_events else 0.0
        if p > 0.0 and (p >= 1.0 or self.links.uniform(src, dst) < p):
            self.dropped += 1
            return
        self.queue[t + self.links.sample_delay(src, dst)].append((dst, env))

    def _apply_events(self, t: int) -> None:
        for ev in self._events_at.get(t, ()):
            kind = type(ev)
            if kind is Crash:
                for i in ev.nodes:
                    self.alive[i] = False
                    self.crashed.add(i)
            elif kind is JoinWave:
                for k, i in enumerate(ev.nodes):
                    offset = (k * ev.spread) // max(1, len(ev.nodes))
                    self._join_at[t + offset].append(i)
            elif kind is LeaveEvent:
                for i in ev.nodes:
                    self.nodes[i].leave()
            else:
                if kind in (LinkFault, FlipFlop):
                    self.faulty.update(ev.nodes)
                self._link_events.append(ev)
        for i in self._join_at.pop(t, ()):
            self.nodes[i].join(self.endpoints[0], t)
        for i in self.rejoin_at.pop(t, ()):
            node = self.nodes[i]
            if node.status is Status.DEPARTED:
                node.rejoin(self.id_rng.getrandbits(128), t)
        self._active_link_events = [
            ev for ev in self._link_events
            if ev.tick <= t and (ev.end is None or t < ev.end)]

    def _record_sizes(self, t: int) -> None:
        for i, node in enumerate(self.nodes):
            if not self.alive[i]:
                continue
            size = node.size
            if size is not None and size != self.last_size.get(i):
                self.timeseries.append((t, i, size))
                self.size_seq[i].append(size)
                self.reported_sizes.add(size)
                self.last_change = t
            self.last_size[i] = size

    def run(self) -> RunReport:
        sc = self.sc
        self._events_at: dict[int, list] = defaultdict(list)
        for ev in sc.events:
            self._events_at[ev.tick].append(ev)
        self._join_at: dict[int, list[int]] = defaultdict(list)
        self._link_events: list = []
        self._active_link_events: list = []
        for t in range(sc.duration + 1):
            self.now = t
            self._apply_events(t)
            inboxes: dict[int, list] = defaultdict(list)
            for dst, env in self.queue.pop(t, ()):
                inboxes[dst].append(env)
            for i, node in enumerate(self.nodes):
                if not self.alive[i]:
                    continue
                inbox = inboxes.get(i, ())
                if node.status is Status.IDLE and not inbox:
                    continue
                for env in node.step(t, inbox):
                    self._deliver(env, t)
            self._record_sizes(t)
        return self._report()

    def _report(self) -> RunReport:
        sc = self.sc
        decided_cuts: dict[int, int] = {}
        for node in self.nodes:
            for cid, nxt in node.history.items():
                decided_cuts[cid] = node.history[cid][0].digest
        conflicts = 0
        for node in self.nodes:
            for cid, prop in node.proposals.items():
                d = decided_cuts.get(cid)
                if d is not None and prop.digest != d:
                    conflicts += 1
        classic = sum(n.classic_rounds + (n.vc.classic_rounds if n.vc is not None else 0)
                      for n in self.nodes)
        id_to_slot = {int(i): s for s, i in enumerate(self.ids)}
        faulty = sorted(self.faulty | self.crashed)
        correct = [i for i in range(sc.slots) if i not in self.faulty and i not in self.crashed
                   and i not in self.aux_slots and self.nodes[i].installed]
        correct_set = set(correct)
        removed_slots = sorted({id_to_slot[r] for r in self.removed_ids if r in id_to_slot})
        final = {i: self.nodes[i].size for i in correct}
        return RunReport(
            scenario=sc,
            timeseries=self.timeseries,
            size_sequences={i: self.size_seq[i] for i in correct},
            decided={k: v for k, v in sorted(self.sequences.items())
                     if int(k.split(".")[0]) in correct_set},
            final_sizes=final,
            unique_sizes=len(self.reported_sizes),
            decisions=len(self.registry),
            conflicts=conflicts,
            classic_rounds=classic,
            messages=dict(self.messages),
            dropped=self.dropped,
            correct=correct,
            faulty=faulty,
            removed_correct=[i for i in removed_slots if i in set(correct)],
            removed_faulty=[i for i in removed_slots if i in self.faulty or i in self.crashed],
            last_change_tick=self.last_change,
            protocol_errors=sum(n.protocol_errors for n in self.nodes),
        )


def check_agreement(report: RunReport) -> None:
    """Decided sequences of correct nodes must agree up to prefix alignment."""
    succ: dict[int, int] = {}
    for seq in report.decided.values():
        for a, b in zip(seq, seq[1:]):
            if succ.setdefault(a, b) != b:
                raise SimulationInvariantError(f"divergent successor of {a:016x}")


def run(sc: Scenario) -> RunReport:
    report = Simulation(sc).run()
    check_agreement(report)
    return report


# ---- scenario builders ---------------------------------------------------------

def _pick(rng: random.Random, pool: Iterable[int], k: int) -> tuple[int, ...]:
    return tuple(sorted(rng.sample(sorted(pool), k)))


def crash_scenario(n: int = 100, fail: int = 10, tick: int = 50, duration: int = 150,
                   params: ProtocolParams | None = None, seed: int = 0, **kw) -> Scenario:
    rng = random.Random(seed)
    nodes = _pick(rng, range(kw.get("aux_count", 0), n), fail)
    return Scenario(n=n, params=params or ProtocolParams(), seed=seed, duration=duration,
                    events=(Crash(tick, nodes),), **kw)


def bootstrap_scenario(n: int = 500, tick: int = 1, spread: int = 0, duration: int = 200,
                       params: ProtocolParams | None = None, seed: int = 0, **kw) -> Scenario:
    """One seed plus ``n - 1`` joiners arriving through it."""
    return Scenario(n=1, extra_slots=n - 1, params=params or ProtocolParams(), seed=seed,
                    duration=duration, events=(JoinWave(tick, tuple(range(1, n)), spread),),
                    **kw)


def flip_flop_scenario(n: int = 100, faulty: int = 1, tick: int = 20, on: int = 20,
                       off: int = 20, duration: int = 300, params: ProtocolParams | None = None,
                       seed: int = 0, **kw) -> Scenario:
    rng = random.Random(seed)
    nodes = _pick(rng, range(n), faulty)
    return Scenario(n=n, params=params or ProtocolParams(), seed=seed, duration=duration,
                    events=(FlipFlop(tick, nodes, on, off, "ingress"),), **kw)


def loss_scenario(n: int = 100, faulty: int = 1, tick: int = 20, egress: float = 0.8,
                  ingress: float = 0.0, duration: int = 300,
                  params: ProtocolParams | None = None, seed: int = 0, **kw) -> Scenario:
    rng = random.Random(seed)
    nodes = _pick(rng, range(n), faulty)
    return Scenario(n=n, params=params or ProtocolParams(), seed=seed, duration=duration,
                    events=(LinkFault(tick, nodes, ingress=ingress, egress=egress),), **kw)


def partition_scenario(n: int = 20, side: int = 3, tick: int = 20, end: Optional[int] = 120,
                       duration: int = 250, params: ProtocolParams | None = None,
                       seed: int = 0, **kw) -> Scenario:
    rng = random.Random(seed)
    nodes = _pick(rng, range(n), side)
    return Scenario(n=n, params=params or ProtocolParams(), seed=seed, duration=duration,
                    events=(Partition(tick, nodes, end),), **kw)


def random_adversity_scenario(seed: int, duration: int = 100) -> Scenario:
    """Small cluster under random loss, partitions, crashes (at most n/4) and joins."""
    rng = random.Random(seed)
    n = rng.randint(4, 8)
    K = rng.randint(3, 4)
    H = rng.randint(1, K)
    L = rng.randint(1, H)
    params = ProtocolParams(K=K, H=H, L=L, fast_round_timeout=rng.choice((5, 10, 20)))
    extra = rng.randint(0, 2)
    events: list = []
    crashable = list(range(1, n))
    rng.shuffle(crashable)
    for i in crashable[:rng.randint(0, n // 4)]:
        events.append(Crash(rng.randint(5, duration - 20), (i,)))
    for _ in range(rng.randint(0, 3)):
        start = rng.randint(0, duration - 10)
        nodes = tuple(sorted(rng.sample(range(n + extra), rng.randint(1, 2))))
        events.append(LinkFault(start, nodes, ingress=round(rng.random() * 0.9, 2),
                                egress=round(rng.random() * 0.9, 2),
                                end=start + rng.randint(5, 60)))
    if rng.random() < 0.5:
        start = rng.randint(0, duration - 10)
        side = tuple(sorted(rng.sample(range(n), rng.randint(1, n // 2))))
        events.append(Partition(start, side, end=start + rng.randint(10, 60)))
    if rng.random() < 0.3:
        events.append(FlipFlop(rng.randint(0, 40), (rng.randrange(n),), on=rng.randint(3, 10),
                               off=rng.randint(3, 10), direction=rng.choice(("ingress", "egress", "both"))))
    if extra:
        events.append(JoinWave(rng.randint(0, 30), tuple(range(n, n + extra)), rng.randint(0, 10)))
    events.sort(key=lambda e: e.tick)
    lo = rng.randint(1, 2)
    return Scenario(n=n, params=params, seed=rng.getrandbits(63), duration=duration,
                    extra_slots=extra, delay=(lo, lo + rng.randint(0, 2)), events=tuple(events),
                    auto_rejoin=rng.random() < 0.3)
