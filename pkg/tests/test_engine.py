from collections import Counter, defaultdict
from fractions import Fraction

import pytest

from rapidmem.core import Configuration, Endpoint, Member, NodeId, ProtocolParams
from rapidmem.engine import (DefaultProbeDetector, EngineSettings, Mode, Node, Status,
                             Verdict)
from rapidmem.messages import (Envelope, JoinConfirm, JoinReq, JoinResp, JoinStatus, PreJoin,
                               PreJoinResp)
from rapidmem.simnet import Crash, Partition, Scenario, Simulation, endpoint_for, run
from rapidmem.topology import build, subjects_of


def test_detector_needs_full_window():
    d = DefaultProbeDetector(10, Fraction(2, 5))
    for _ in range(9):
        d.record(False)
    assert d.verdict() is Verdict.HEALTHY
    d.record(True)
    assert d.verdict() is Verdict.FAULTY


@pytest.mark.parametrize("failures,verdict", [(3, Verdict.HEALTHY), (4, Verdict.FAULTY),
                                              (10, Verdict.FAULTY), (0, Verdict.HEALTHY)])
def test_detector_forty_percent_of_ten(failures, verdict):
    d = DefaultProbeDetector()
    for i in range(10):
        d.record(i >= failures)
    assert d.verdict() is verdict


def test_detector_window_slides():
    d = DefaultProbeDetector(10, Fraction(2, 5))
    for _ in range(10):
        d.record(False)
    for _ in range(6):
        d.record(True)
    assert d.verdict() is Verdict.FAULTY
    d.record(True)
    assert d.verdict() is Verdict.HEALTHY and d.failures == 3


@pytest.mark.parametrize("n,f", [(1, 3), (2, 3), (8, 5), (9, 6), (1000, 12)])
def test_default_fanout(n, f):
    assert EngineSettings().fanout(n) == f
    assert EngineSettings(gossip_fanout=2).fanout(n) == 2


class Harness:
    """Lossless one-tick delivery between directly driven nodes."""

    def __init__(self, nodes):
        self.nodes = {nd.me.endpoint: nd for nd in nodes}
        self.pending = []
        self.now = 0
        self.sent = Counter()

    def add(self, node):
        self.nodes[node.me.endpoint] = node

    def run(self, ticks, until=None):
        for _ in range(ticks):
            self.now += 1
            inbox = defaultdict(list)
            for env in self.pending:
                inbox[env.dst].append(env)
            self.pending = []
            for ep, nd in self.nodes.items():
                out = nd.step(self.now, inbox.get(ep, ()))
                for env in out:
                    self.sent[(self.now, ep, type(env.msg).__name__)] += 1
                self.pending += out
            if until is not None and until():
                return True
        return until() if until else True


def member(i, **meta):
    return Member.create(1000 + 7919 * i, endpoint_for(i), meta)


def cluster(n, params, **kw):
    ms = [member(i, slot=str(i)) for i in range(n)]
    cfg = Configuration.initial(ms, params)
    nodes = []
    for i, m in enumerate(ms):
        nd = Node(m, params, seed=i, **kw)
        nd.bootstrap(cfg)
        nodes.append(nd)
    return cfg, nodes


def test_join_through_seed_and_metadata():
    params = ProtocolParams(K=4, H=3, L=1)
    cfg, nodes = cluster(4, params)
    h = Harness(nodes)
    events = []
    nodes[1].on_view_change(events.append)
    joiners = [Node(member(10 + i, role="new"), params, seed=50 + i) for i in range(2)]
    for j in joiners:
        h.add(j)
        j.join(nodes[0].me.endpoint, h.now)
    assert h.run(200, until=lambda: all(nd.size == 6 for nd in h.nodes.values()))
    joined = {m.id for ev in events for m in ev.joined}
    assert joined == {j.me.id for j in joiners}
    assert nodes[2].metadata_of(joiners[0].me.id) == {"role": "new"}
    assert joiners[1].metadata_of(nodes[3].me.id) == {"slot": "3"}
    assert len({nd.cfg.id for nd in h.nodes.values()}) == 1


def test_leave_removes_node_and_fires_departure():
    params = ProtocolParams(K=4, H=3, L=1)
    cfg, nodes = cluster(6, params)
    h = Harness(nodes)
    gone = []
    nodes[2].on_departure(gone.append)
    h.run(3)
    nodes[2].leave()
    rest = [nd for i, nd in enumerate(nodes) if i != 2]
    assert h.run(100, until=lambda: all(nd.size == 5 for nd in rest))
    assert nodes[2].status is Status.DEPARTED and len(gone) == 1
    assert nodes[2].me.id not in gone[0]


class Paranoid:
    """Flags every subject as faulty after three observations."""

    def __init__(self):
        self.seen = 0

    def record(self, ok):
        self.seen += 1

    def verdict(self):
        return Verdict.FAULTY if self.seen >= 3 else Verdict.HEALTHY


def test_pluggable_edge_monitor_drives_removals():
    params = ProtocolParams(K=3, H=1, L=1)
    ms = [member(i) for i in range(8)]
    cfg = Configuration.initial(ms, params)
    nodes = []
    for i, m in enumerate(ms):
        factory = (lambda p: Paranoid()) if i == 0 else None
        nd = Node(m, params, seed=i, detector_factory=factory)
        nd.bootstrap(cfg)
        nodes.append(nd)
    assert all(isinstance(mon, Paranoid) for mon in nodes[0].monitors.values())
    expected = set(subjects_of(build(cfg), ms[0].id)) - {ms[0].id}
    events = []
    nodes[0].on_view_change(events.append)
    h = Harness(nodes)
    h.run(60, until=lambda: bool(events))
    assert set(events[0].removed) == expected


def test_probe_budget_per_tick():
    params = ProtocolParams(K=5, H=4, L=2)
    _, nodes = cluster(12, params)
    h = Harness(nodes)
    h.run(20)
    probes = Counter()
    acks = Counter()
    for (t, ep, kind), c in h.sent.items():
        if kind == "Probe":
            probes[(t, ep)] += c
        elif kind == "ProbeAck":
            acks[(t, ep)] += c
    assert probes and max(probes.values()) <= params.K
    assert max(probes[k] + acks[k] for k in set(probes) | set(acks)) <= 2 * params.K


def test_stale_join_retries_with_fresh_prejoin():
    params = ProtocolParams(K=3, H=3, L=1)
    cfg, _ = cluster(3, params)
    j = Node(member(9), params)
    seed_ep = cfg.members[0].endpoint
    j.join(seed_ep, 0)
    (env,) = j.step(0)
    assert isinstance(env.msg, PreJoin) and env.dst == seed_ep
    obs = tuple(m.endpoint for m in cfg.members)
    out = j.step(1, [Envelope(seed_ep, j.me.endpoint, PreJoinResp(JoinStatus.OK, cfg.id, obs))])
    assert {e.dst for e in out} == set(obs) and all(isinstance(e.msg, JoinReq) for e in out)
    out = j.step(2, [Envelope(obs[1], j.me.endpoint,
                                   JoinResp(JoinStatus.CONFIG_CHANGED, cfg.id + 1))])
    assert [type(e.msg) for e in out] == [PreJoin] and j._join_attempts == 2
    grown = Configuration(cfg.id + 5, tuple(sorted(cfg.members + (j.me,), key=lambda m: m.id)),
                          params)
    j.step(3, [Envelope(obs[0], j.me.endpoint, JoinConfirm(grown))])
    assert j.status is Status.MEMBER and j.size == 4


def test_member_answers_stale_join_request():
    params = ProtocolParams(K=3, H=3, L=1)
    cfg, nodes = cluster(3, params)
    j = member(9)
    out = nodes[0].step(1, [Envelope(
        j.endpoint, nodes[0].me.endpoint, JoinReq(j, cfg.id ^ 1, (0,)))])
    resp = [e.msg for e in out if isinstance(e.msg, JoinResp)]
    assert resp == [JoinResp(JoinStatus.CONFIG_CHANGED, cfg.id)]


def test_prejoin_answers_not_ready_when_idle():
    idle = Node(member(1))
    idle.status = Status.JOINING
    out = idle.step(1, [Envelope(
        endpoint_for(5), idle.me.endpoint, PreJoin(member(5)))])
    assert [e.msg.status for e in out if isinstance(e.msg, PreJoinResp)] == [JoinStatus.NOT_READY]


def test_bootstrap_requires_membership():
    cfg, _ = cluster(3, ProtocolParams(K=3, H=3, L=1))
    with pytest.raises(Exception):
        Node(member(42)).bootstrap(cfg)


# ---- centralized mode --------------------------------------------------------

def centralized(events, duration=150):
    return Scenario(n=23, params=ProtocolParams(K=5, H=4, L=2), seed=3, duration=duration,
                    mode="centralized", aux_count=3, events=events)


def test_centralized_single_crash_one_decision():
    report = run(centralized((Crash(30, (9,)),)))
    assert report.decisions == 1 and report.agreement == "OK"
    assert set(report.final_sizes.values()) == {19}
    changes = {t for t, slot, size in report.timeseries if size == 19}
    assert len(changes) == 1


def test_centralized_minority_aux_never_decides():
    sim = Simulation(centralized((Partition(20, (0,)), Crash(30, (9,))), duration=200))
    report = sim.run()
    assert report.decisions == 1
    assert sim.nodes[0].history == {} and len(sim.nodes[0].installed) == 1
    assert all(sim.nodes[a].history for a in (1, 2))
    assert report.classic_rounds > 0
    members_ok = [i for i in range(3, 23) if i != 9]
    assert all(sim.nodes[i].size == 19 for i in members_ok)
