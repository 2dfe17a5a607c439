"""Wire messages exchanged between nodes.

Every message that belongs to one configuration carries its ``config_id``;
receivers never apply a message to state of a different configuration.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from .core import Alert, Configuration, CutProposal, Endpoint, Member, NodeId


class Ballot(tuple):
    """Paxos ballot ``(round, node)``; compared lexicographically."""

    __slots__ = ()

    def __new__(cls, round: int, node: int) -> "Ballot":
        return tuple.__new__(cls, (round, int(node)))

    @property
    def round(self) -> int:
        return self[0]

    @property
    def node(self) -> int:
        return self[1]

    def __repr__(self) -> str:
        return f"Ballot({self[0]}, {self[1]:x})"


ZERO_BALLOT = Ballot(0, 0)
FAST_BALLOT = Ballot(1, 0)


class JoinStatus(enum.Enum):
    OK = "OK"
    CONFIG_CHANGED = "CONFIG_CHANGED"
    ENDPOINT_IN_USE = "ENDPOINT_IN_USE"
    NOT_READY = "NOT_READY"


@dataclass(frozen=True, slots=True)
class Probe:
    config_id: int
    seq: int


@dataclass(frozen=True, slots=True)
class ProbeAck:
    config_id: int
    seq: int


@dataclass(frozen=True, slots=True)
class PreJoin:
    joiner: Member


@dataclass(frozen=True, slots=True)
class PreJoinResp:
    status: JoinStatus
    config_id: int
    observers: tuple[Endpoint, ...] = ()


@dataclass(frozen=True, slots=True)
class JoinReq:
    joiner: Member
    config_id: int
    rings: tuple[int, ...]


@dataclass(frozen=True, slots=True)
class JoinResp:
    status: JoinStatus
    config_id: int


@dataclass(frozen=True, slots=True)
class JoinConfirm:
    configuration: Configuration


@dataclass(frozen=True, slots=True)
class AlertBatch:
    config_id: int
    alerts: tuple[Alert, ...]


@dataclass(frozen=True, slots=True)
class FastVote:
    config_id: int
    proposal: CutProposal
    bitmap: int
    n: int


@dataclass(frozen=True, slots=True)
class Prepare:
    config_id: int
    ballot: Ballot


@dataclass(frozen=True, slots=True)
class Promise:
    config_id: int
    ballot: Ballot
    sender: NodeId
    accepted_ballot: Ballot
    accepted: Optional[CutProposal]


@dataclass(frozen=True, slots=True)
class Nack:
    config_id: int
    ballot: Ballot
    promised: Ballot


@dataclass(frozen=True, slots=True)
class Accept:
    config_id: int
    ballot: Ballot
    proposal: CutProposal


@dataclass(frozen=True, slots=True)
class Accepted:
    config_id: int
    ballot: Ballot
    sender: NodeId


@dataclass(frozen=True, slots=True)
class Learn:
    config_id: int
    proposal: CutProposal


@dataclass(frozen=True, slots=True)
class SyncReq:
    config_id: int


@dataclass(frozen=True, slots=True)
class Sync:
    from_config_id: int
    cuts: tuple[CutProposal, ...]


@dataclass(frozen=True, slots=True)
class Leave:
    config_id: int
    node: NodeId


Message = (Probe | ProbeAck | PreJoin | PreJoinResp | JoinReq | JoinResp | JoinConfirm
           | AlertBatch | FastVote | Prepare | Promise | Nack | Accept | Accepted | Learn
           | SyncReq | Sync | Leave)

MESSAGE_TYPES = (Probe, ProbeAck, PreJoin, PreJoinResp, JoinReq, JoinResp, JoinConfirm,
                 AlertBatch, FastVote, Prepare, Promise, Nack, Accept, Accepted, Learn,
                 SyncReq, Sync, Leave)

# Join handshake travels over streams on a real transport; the rest are datagrams.
STREAM_TYPES = (PreJoin, PreJoinResp, JoinReq, JoinResp, JoinConfirm)


@dataclass(slots=True)
class Envelope:
    src: Endpoint
    dst: Endpoint
    msg: object
