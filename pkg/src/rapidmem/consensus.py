"""Leaderless view-change consensus.

The fast path counts identical cut proposals with gossiped vote bitmaps and
decides once more than three quarters of the voters back one proposal. If
that cannot happen (conflicting proposals or a timeout), classic Paxos runs
among the same voters, with the coordinator's value constrained by the
fast-round votes it sees.
"""

from __future__ import annotations

import enum
from collections import Counter
from typing import Iterable, Optional, Sequence

from .core import CutProposal, InvariantError, NodeId, RapidError
from .messages import (FAST_BALLOT, ZERO_BALLOT, Accept, Accepted, Ballot, FastVote, Learn,
                       Nack, Prepare, Promise)

GOSSIP = "gossip"
ALL = "all"


class ProtocolError(RapidError):
    pass


def fast_quorum(n: int) -> int:
    """Smallest count strictly larger than three quarters of ``n``."""
    return 3 * n // 4 + 1


def majority(n: int) -> int:
    return n // 2 + 1


def candidate_threshold(q: int, n: int) -> int:
    """Minimum votes, within a quorum of size ``q``, of a possibly fast-chosen value."""
    return q + fast_quorum(n) - n


def choose_recovery_value(promises: Sequence[tuple[Ballot, Optional[CutProposal]]], n: int,
                          own: Optional[CutProposal]) -> Optional[CutProposal]:
    """Value a recovery coordinator must propose after collecting ``promises``.

    Each promise is ``(accepted_ballot, accepted_value)``. If the highest
    accepted ballot is a classic one its value wins. If it is the fast round,
    a value voted by at least ``|Q| + fast_quorum(n) - n`` members of Q may
    already be chosen and must be kept; otherwise the coordinator is free and
    uses its own proposal.
    """
    accepted = [(b, v) for b, v in promises if v is not None]
    if not accepted:
        return own
    top = max(b for b, _ in accepted)
    at_top = [v for b, v in accepted if b == top]
    if top != FAST_BALLOT:
        return at_top[0]
    counts = Counter(v.digest for v in at_top)
    by_digest = {v.digest: v for v in at_top}
    threshold = candidate_threshold(len(promises), n)
    candidates = [d for d, c in counts.items() if c >= threshold]
    if len(candidates) > 1:
        raise InvariantError("more than one recovery candidate")
    if candidates:
        return by_digest[candidates[0]]
    if own is not None:
        return own
    best = max(counts.items(), key=lambda kv: (kv[1], -kv[0]))[0]
    return by_digest[best]


class VoteState:
    """Per-proposal vote bitmaps for one configuration (a grow-only CRDT)."""

    def __init__(self, config_id: int, voters: Sequence[NodeId]):
        self.config_id = config_id
        self.voters = tuple(voters)
        self.n = len(self.voters)
        self.index = {v: i for i, v in enumerate(self.voters)}
        self.votes: dict[int, int] = {}
        self.proposals: dict[int, CutProposal] = {}
        self.my_vote: Optional[int] = None
        self.decided: Optional[CutProposal] = None
        self.fast_deadline: Optional[int] = None

    def start_fast_round(self, me: NodeId, proposal: CutProposal, now: int,
                         timeout: int) -> FastVote:
        if self.my_vote is not None:
            raise ProtocolError("already voted in this configuration")
        if proposal.config_id != self.config_id:
            raise ProtocolError("proposal for a different configuration")
        bit = 1 << self.index[me]
        d = proposal.digest
        self.my_vote = d
        self.fast_deadline = now + timeout
        self.merge(proposal, bit)
        return FastVote(self.config_id, proposal, self.votes[d], self.n)

    def merge(self, proposal: CutProposal, bitmap: int, n: int | None = None) -> bool:
        """OR a remote bitmap into ours; returns True when local state changed."""
        if n is not None and n != self.n:
            raise ProtocolError(f"bitmap length {n} != {self.n}")
        if bitmap < 0 or bitmap >> self.n:
            raise ProtocolError("bitmap has bits beyond the voter set")
        if proposal.config_id != self.config_id:
            raise ProtocolError("proposal for a different configuration")
        d = proposal.digest
        known = self.proposals.get(d)
        if known is None:
            self.proposals[d] = proposal
        elif known != proposal:
            raise ProtocolError("proposal digest collision")
        cur = self.votes.get(d, 0)
        merged = cur | bitmap
        if merged == cur:
            return False
        others = 0
        for od, ob in self.votes.items():
            if od != d:
                others |= ob
        if merged & others:
            raise ProtocolError("a voter appears in two proposals' bitmaps")
        self.votes[d] = merged
        if self.decided is None and merged.bit_count() >= fast_quorum(self.n):
            self.decided = proposal
        return True

    def count(self, digest: int) -> int:
        return self.votes.get(digest, 0).bit_count()

    def voted(self) -> int:
        union = 0
        for b in self.votes.values():
            union |= b
        return union.bit_count()

    def fast_path_possible(self) -> bool:
        best = max((b.bit_count() for b in self.votes.values()), default=0)
        return best + (self.n - self.voted()) >= fast_quorum(self.n)


class Phase(enum.Enum):
    IDLE = "IDLE"
    PREPARING = "PREPARING"
    ACCEPTING = "ACCEPTING"
    DECIDED = "DECIDED"


class PaxosState:
    def __init__(self) -> None:
        self.rank: Ballot = ZERO_BALLOT
        self.promised: Ballot = ZERO_BALLOT
        self.accepted_ballot: Ballot = ZERO_BALLOT
        self.accepted: Optional[CutProposal] = None
        self.phase = Phase.IDLE

    def promise(self, b: Ballot) -> None:
        if b < self.promised:
            raise InvariantError("promised ballot must not decrease")
        self.promised = b

    def accept(self, b: Ballot, value: CutProposal) -> None:
        self.promise(b)
        self.accepted_ballot = b
        self.accepted = value


Out = tuple[object, object]


class ViewChange:
    """Fast Paxos instance deciding one cut for one configuration.

    Handlers return ``(destination, message)`` pairs; a destination is a voter
    NodeId, :data:`ALL` (every voter, including this one) or :data:`GOSSIP`.
    """

    def __init__(self, config_id: int, voters: Sequence[NodeId], me: Optional[NodeId], *,
                 fast_round_timeout: int = 20, recovery_stagger: int = 2,
                 recovery_timeout: int = 10):
        self.config_id = config_id
        self.votes = VoteState(config_id, voters)
        self.paxos = PaxosState()
        self.me = me
        self.rank_index = self.votes.index.get(me, 0) if me is not None else 0
        self.is_voter = me in self.votes.index
        self.fast_round_timeout = fast_round_timeout
        self.recovery_stagger = recovery_stagger
        self.recovery_timeout = recovery_timeout
        self.own: Optional[CutProposal] = None
        self.round_seen = 1
        self.promises: dict[NodeId, tuple[Ballot, Optional[CutProposal]]] = {}
        self.accepts: set[NodeId] = set()
        self.value: Optional[CutProposal] = None
        self.next_recovery_at: Optional[int] = None
        self.classic_rounds = 0
        self.dirty: dict[int, None] = {}

    @property
    def n(self) -> int:
        return self.votes.n

    @property
    def decided(self) -> Optional[CutProposal]:
        return self.votes.decided

    def _decide(self, value: CutProposal) -> None:
        if self.votes.decided is None:
            self.votes.decided = value
        elif self.votes.decided != value:
            raise InvariantError("conflicting decisions in one configuration")
        self.paxos.phase = Phase.DECIDED

    def propose(self, proposal: CutProposal, now: int) -> list[Out]:
        """Cast this node's fast-round vote for its cut-detection result."""
        if self.own is not None:
            raise ProtocolError("already proposed in this configuration")
        self.own = proposal
        if not self.is_voter or self.paxos.promised > FAST_BALLOT:
            return []
        self.votes.start_fast_round(self.me, proposal, now, self.fast_round_timeout)
        self.paxos.accept(FAST_BALLOT, proposal)
        self.dirty[proposal.digest] = None
        return []

    def on_fast_vote(self, msg: FastVote) -> list[Out]:
        if self.votes.merge(msg.proposal, msg.bitmap, msg.n):
            self.dirty[msg.proposal.digest] = None
        if self.decided is not None:
            self.paxos.phase = Phase.DECIDED
        return []

    def drain_votes(self) -> list[FastVote]:
        out = [FastVote(self.config_id, self.votes.proposals[d], self.votes.votes[d], self.n)
               for d in self.dirty]
        self.dirty.clear()
        return out

    def all_votes(self) -> list[FastVote]:
        return [FastVote(self.config_id, self.votes.proposals[d], b, self.n)
                for d, b in self.votes.votes.items()]

    def tick(self, now: int) -> list[Out]:
        if self.decided is not None or not self.is_voter:
            return []
        if self.next_recovery_at is None:
            timed_out = (self.votes.fast_deadline is not None
                         and now >= self.votes.fast_deadline)
            hopeless = self.votes.votes and not self.votes.fast_path_possible()
            if timed_out or hopeless:
                self.next_recovery_at = now + self.rank_index * self.recovery_stagger
        if self.next_recovery_at is not None and now >= self.next_recovery_at:
            return self._start_round(now)
        return []

    def _start_round(self, now: int) -> list[Out]:
        self.round_seen = max(self.round_seen, self.paxos.promised.round) + 1
        ballot = Ballot(self.round_seen, self.me)
        self.paxos.rank = ballot
        self.paxos.phase = Phase.PREPARING
        self.promises = {}
        self.accepts = set()
        self.value = None
        self.classic_rounds += 1
        self.next_recovery_at = (now + self.recovery_timeout
                                 + self.rank_index * self.recovery_stagger)
        return [(ALL, Prepare(self.config_id, ballot))]

    def on_prepare(self, msg: Prepare) -> list[Out]:
        b = msg.ballot
        self.round_seen = max(self.round_seen, b.round)
        if b > self.paxos.promised:
            self.paxos.promise(b)
            return [(NodeId(b.node), Promise(self.config_id, b, self.me,
                                             self.paxos.accepted_ballot, self.paxos.accepted))]
        return [(NodeId(b.node), Nack(self.config_id, b, self.paxos.promised))]

    def on_promise(self, msg: Promise) -> list[Out]:
        if (msg.ballot != self.paxos.rank or self.paxos.phase is not Phase.PREPARING
                or msg.sender not in self.votes.index):
            return []
        self.promises[msg.sender] = (msg.accepted_ballot, msg.accepted)
        if len(self.promises) < majority(self.n):
            return []
        own = self.own
        if own is None and self.votes.votes:
            d = max(self.votes.votes, key=lambda k: (self.votes.count(k), -k))
            own = self.votes.proposals[d]
        value = choose_recovery_value(list(self.promises.values()), self.n, own)
        if value is None:
            self.paxos.phase = Phase.IDLE
            return []
        self.value = value
        self.paxos.phase = Phase.ACCEPTING
        return [(ALL, Accept(self.config_id, self.paxos.rank, value))]

    def on_nack(self, msg: Nack) -> list[Out]:
        self.round_seen = max(self.round_seen, msg.promised.round)
        if msg.ballot == self.paxos.rank and self.paxos.phase in (Phase.PREPARING,
                                                                   Phase.ACCEPTING):
            self.paxos.phase = Phase.IDLE
        return []

    def on_accept(self, msg: Accept) -> list[Out]:
        b = msg.ballot
        self.round_seen = max(self.round_seen, b.round)
        if b >= self.paxos.promised:
            self.paxos.accept(b, msg.proposal)
            return [(NodeId(b.node), Accepted(self.config_id, b, self.me))]
        return [(NodeId(b.node), Nack(self.config_id, b, self.paxos.promised))]

    def on_accepted(self, msg: Accepted) -> list[Out]:
        if (msg.ballot != self.paxos.rank or self.paxos.phase is not Phase.ACCEPTING
                or msg.sender not in self.votes.index):
            return []
        self.accepts.add(msg.sender)
        if len(self.accepts) < majority(self.n):
            return []
        self._decide(self.value)
        return [(ALL, Learn(self.config_id, self.value))]

    def on_learn(self, msg: Learn) -> list[Out]:
        self._decide(msg.proposal)
        return []


def enumerate_ballots(rounds: Iterable[int], nodes: Iterable[int]) -> list[Ballot]:
    return sorted(Ballot(r, n) for r in rounds for n in nodes)
