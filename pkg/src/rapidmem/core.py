"""Domain types shared by every protocol layer.

Everything here is an immutable value. Identifiers are derived with two
small, portable 64-bit functions (FNV-1a and the splitmix64 finalizer) so
that any implementation of the wire schema computes the same ids and rings.
"""

from __future__ import annotations

import enum
import random
import uuid as _uuid
from collections import OrderedDict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Iterable, Mapping, Union

MASK64 = (1 << 64) - 1
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
GENESIS_ID = 0


class RapidError(Exception):
    """Base class for protocol errors."""


class InvariantError(RapidError):
    pass


class StaleProposalError(RapidError):
    pass


def fnv1a64(data: bytes, h: int = FNV_OFFSET) -> int:
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & MASK64
    return h


def splitmix64(x: int) -> int:
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class NodeId(int):
    """128-bit logical identifier, assigned fresh on every join attempt."""

    __slots__ = ()

    def __new__(cls, value: int) -> "NodeId":
        if not 0 <= value < (1 << 128):
            raise ValueError(f"NodeId out of 128-bit range: {value}")
        return super().__new__(cls, value)

    @classmethod
    def random(cls, rng: random.Random | None = None) -> "NodeId":
        if rng is None:
            return cls(_uuid.uuid4().int)
        return cls(rng.getrandbits(128))

    @classmethod
    def from_hex(cls, text: str) -> "NodeId":
        return cls(int(text, 16))

    @property
    def hex(self) -> str:
        return format(int(self), "032x")

    def to_bytes16(self) -> bytes:
        return int(self).to_bytes(16, "big")

    def __repr__(self) -> str:
        return f"NodeId({self.hex[:8]})"

    __str__ = __repr__


@lru_cache(maxsize=1 << 16)
def node_hash(node: int) -> int:
    return fnv1a64(int(node).to_bytes(16, "big"))


@dataclass(frozen=True, order=True)
class Endpoint:
    host: str
    port: int

    def __post_init__(self) -> None:
        if not self.host:
            raise ValueError("Endpoint host must be nonempty")
        if not 1 <= self.port <= 65535:
            raise ValueError(f"Endpoint port out of range: {self.port}")

    @classmethod
    def parse(cls, text: str) -> "Endpoint":
        host, _, port = text.rpartition(":")
        return cls(host, int(port))

    def __str__(self) -> str:
        return f"{self.host}:{self.port}"


@dataclass(frozen=True)
class Member:
    id: NodeId
    endpoint: Endpoint
    metadata: tuple[tuple[str, str], ...] = ()

    @classmethod
    def create(cls, id: int, endpoint: Endpoint,
               metadata: Mapping[str, str] | None = None) -> "Member":
        items = tuple(sorted((metadata or {}).items()))
        return cls(NodeId(id), endpoint, items)

    def __post_init__(self) -> None:
        keys = [k for k, _ in self.metadata]
        if len(keys) != len(set(keys)):
            raise ValueError("metadata keys must be unique")

    @property
    def meta(self) -> dict[str, str]:
        return dict(self.metadata)

    @property
    def key(self) -> tuple[NodeId, Endpoint]:
        """Tally key used for JOIN alerts about this process."""
        return (self.id, self.endpoint)


@dataclass(frozen=True)
class ProtocolParams:
    K: int = 10
    H: int = 9
    L: int = 3
    reinforcement_timeout: int = 10
    fast_round_timeout: int = 20
    batching_window: int = 1
    consecutive_probe_window: int = 10
    probe_failure_fraction: Fraction = Fraction(2, 5)

    def __post_init__(self) -> None:
        if not 1 <= self.L <= self.H <= self.K:
            raise ValueError(
                f"thresholds must satisfy 1 <= L <= H <= K (got K={self.K}, H={self.H}, L={self.L})")
        for name in ("reinforcement_timeout", "fast_round_timeout",
                     "batching_window", "consecutive_probe_window"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        frac = Fraction(self.probe_failure_fraction)
        object.__setattr__(self, "probe_failure_fraction", frac)
        if not 0 < frac <= 1:
            raise ValueError("probe_failure_fraction must be in (0, 1]")


def derive_config_id(prev: int, members: Iterable[int]) -> int:
    """FNV-1a over the previous id (8 bytes BE) and each NodeId (16 bytes BE)."""
    ids = list(members)
    if not ids:
        raise InvariantError("configuration must have at least one member")
    h = fnv1a64(int(prev).to_bytes(8, "big"))
    for nid in ids:
        h = fnv1a64(int(nid).to_bytes(16, "big"), h)
    return h


@dataclass(frozen=True, eq=False)
class Configuration:
    id: int
    members: tuple[Member, ...]
    params: ProtocolParams = field(default_factory=ProtocolParams)

    def __post_init__(self) -> None:
        if not self.members:
            raise InvariantError("configuration must have at least one member")
        ids = [m.id for m in self.members]
        if any(a >= b for a, b in zip(ids, ids[1:])):
            raise InvariantError("members must be sorted by NodeId without duplicates")
        if len({m.endpoint for m in self.members}) != len(ids):
            raise InvariantError("duplicate endpoint in configuration")

    @classmethod
    def initial(cls, members: Iterable[Member], params: ProtocolParams | None = None,
                prev: int = GENESIS_ID) -> "Configuration":
        ordered = tuple(sorted(members, key=lambda m: m.id))
        return cls(derive_config_id(prev, [m.id for m in ordered]), ordered,
                   params or ProtocolParams())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.id == other.id and self.members == other.members and self.params == other.params

    def __hash__(self) -> int:
        return hash((self.id, len(self.members)))

    def __len__(self) -> int:
        return len(self.members)

    @cached_property
    def member_ids(self) -> tuple[NodeId, ...]:
        return tuple(m.id for m in self.members)

    @cached_property
    def _index(self) -> dict[NodeId, int]:
        return {m.id: i for i, m in enumerate(self.members)}

    @cached_property
    def _by_endpoint(self) -> dict[Endpoint, Member]:
        return {m.endpoint: m for m in self.members}

    def index_of(self, node: int) -> int:
        try:
            return self._index[node]
        except KeyError:
            raise InvariantError(f"{node!r} is not a member") from None

    def __contains__(self, node: object) -> bool:
        return node in self._index

    def member(self, node: int) -> Member:
        return self.members[self.index_of(node)]

    def member_at(self, endpoint: Endpoint) -> Member | None:
        return self._by_endpoint.get(endpoint)


class AlertKind(enum.Enum):
    REMOVE = "REMOVE"
    JOIN = "JOIN"


SubjectKey = Union[NodeId, tuple]


@dataclass(frozen=True)
class Alert:
    observer: NodeId
    subject: Union[NodeId, Member]
    kind: AlertKind
    config_id: int
    ring_index: int

    def __post_init__(self) -> None:
        if self.kind is AlertKind.JOIN and not isinstance(self.subject, Member):
            raise InvariantError("JOIN alerts carry the joiner's Member record")
        if self.kind is AlertKind.REMOVE and isinstance(self.subject, Member):
            raise InvariantError("REMOVE alerts carry a NodeId subject")
        # alerts live in duplicate-suppression sets, so hash once
        object.__setattr__(self, "_hash", hash((int(self.observer), self.subject_id,
                                                 self.config_id, self.ring_index)))

    def __hash__(self) -> int:
        return self._hash

    @property
    def subject_key(self) -> SubjectKey:
        if self.kind is AlertKind.JOIN:
            return self.subject.key
        return self.subject

    @property
    def subject_id(self) -> NodeId:
        return self.subject.id if isinstance(self.subject, Member) else self.subject


@dataclass(frozen=True)
class CutProposal:
    config_id: int
    removals: frozenset[NodeId] = frozenset()
    joins: frozenset[Member] = frozenset()

    def __post_init__(self) -> None:
        if not self.removals and not self.joins:
            raise InvariantError("a cut must remove or add at least one process")
        if {j.id for j in self.joins} & set(self.removals):
            raise InvariantError("a process cannot be both joined and removed")

    def sorted_removals(self) -> list[NodeId]:
        return sorted(self.removals)

    def sorted_joins(self) -> list[Member]:
        return sorted(self.joins, key=lambda m: (m.id, m.endpoint))

    @cached_property
    def digest(self) -> int:
        """64-bit hash of the canonical serialization."""
        from .codec import canonical_bytes
        return fnv1a64(canonical_bytes(self))

    def validate_against(self, cfg: Configuration) -> None:
        if self.config_id != cfg.id:
            raise StaleProposalError(
                f"cut is for configuration {self.config_id:016x}, current is {cfg.id:016x}")
        for r in self.removals:
            if r not in cfg:
                raise InvariantError(f"removal of non-member {r!r}")
        for j in self.joins:
            if j.id in cfg:
                raise InvariantError(f"join of existing member {j.id!r}")

    def size_after(self, n: int) -> int:
        return n - len(self.removals) + len(self.joins)


_CUT_CACHE: "OrderedDict[tuple[int, CutProposal], Configuration]" = OrderedDict()
_CUT_CACHE_SIZE = 256


def apply_cut(cfg: Configuration, cut: CutProposal) -> Configuration:
    """Return the configuration that follows ``cfg`` once ``cut`` is decided."""
    cut.validate_against(cfg)
    key = (cfg.id, cut)
    cached = _CUT_CACHE.get(key)
    if cached is not None and cached.params == cfg.params:
        return cached
    kept = [m for m in cfg.members if m.id not in cut.removals]
    members = tuple(sorted(kept + list(cut.joins), key=lambda m: m.id))
    if not members:
        raise InvariantError("a cut cannot remove every member")
    new = Configuration(derive_config_id(cfg.id, [m.id for m in members]), members, cfg.params)
    _CUT_CACHE[key] = new
    if len(_CUT_CACHE) > _CUT_CACHE_SIZE:
        _CUT_CACHE.popitem(last=False)
    return new
