"""Canonical structured-text encoding (schema version 1, see docs/schema.md).

Every value becomes a JSON object tagged with ``"type"``; the byte form is
UTF-8 JSON with sorted keys and no insignificant whitespace, so equal values
always serialize to identical bytes.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from fractions import Fraction
from typing import Any, Callable

from . import messages as m
from .core import (Alert, AlertKind, Configuration, CutProposal, Endpoint, Member,
                   NodeId, ProtocolParams)

SCHEMA_VERSION = 1
_LEN = struct.Struct(">I")


class CodecError(ValueError):
    pass


def _cid(v: int) -> str:
    return format(v, "016x")


def _nid(v: int) -> str:
    return format(int(v), "032x")


def _ballot(b: m.Ballot) -> list:
    return [b.round, _nid(b.node)]


def encode(value: Any) -> Any:
    enc = _ENCODERS.get(type(value))
    if enc is None:
        raise CodecError(f"no encoding for {type(value).__name__}")
    return enc(value)


def _enc_endpoint(e: Endpoint) -> dict:
    return {"type": "Endpoint", "host": e.host, "port": e.port}


def _enc_member(x: Member) -> dict:
    return {"type": "Member", "id": _nid(x.id), "endpoint": _enc_endpoint(x.endpoint),
            "metadata": dict(x.metadata)}


def _enc_params(p: ProtocolParams) -> dict:
    return {"type": "ProtocolParams", "K": p.K, "H": p.H, "L": p.L,
            "reinforcement_timeout": p.reinforcement_timeout,
            "fast_round_timeout": p.fast_round_timeout,
            "batching_window": p.batching_window,
            "consecutive_probe_window": p.consecutive_probe_window,
            "probe_failure_fraction": str(p.probe_failure_fraction)}


def _enc_config(c: Configuration) -> dict:
    return {"type": "Configuration", "id": _cid(c.id),
            "members": [_enc_member(x) for x in c.members], "params": _enc_params(c.params)}


def _enc_alert(a: Alert) -> dict:
    subject = _enc_member(a.subject) if isinstance(a.subject, Member) else _nid(a.subject)
    return {"type": "Alert", "observer": _nid(a.observer), "subject": subject,
            "kind": a.kind.value, "config_id": _cid(a.config_id), "ring_index": a.ring_index}


def _enc_cut(c: CutProposal) -> dict:
    return {"type": "CutProposal", "config_id": _cid(c.config_id),
            "removals": [_nid(r) for r in c.sorted_removals()],
            "joins": [_enc_member(j) for j in c.sorted_joins()]}


def _enc_opt_cut(c: CutProposal | None) -> dict | None:
    return None if c is None else _enc_cut(c)


# Per-field converters for wire messages, keyed by field name.
_FIELD_ENC: dict[str, Callable[[Any], Any]] = {
    "config_id": _cid, "from_config_id": _cid,
    "seq": int, "n": int,
    "joiner": _enc_member, "sender": _nid, "node": _nid,
    "status": lambda s: s.value,
    "observers": lambda xs: [_enc_endpoint(e) for e in xs],
    "rings": list,
    "configuration": _enc_config,
    "alerts": lambda xs: [_enc_alert(a) for a in xs],
    "proposal": _enc_cut, "accepted": _enc_opt_cut,
    "cuts": lambda xs: [_enc_cut(c) for c in xs],
    "bitmap": lambda b: format(b, "x"),
    "ballot": _ballot, "accepted_ballot": _ballot, "promised": _ballot,
}


def _enc_message(msg: Any) -> dict:
    out = {"type": type(msg).__name__}
    for f in dataclasses.fields(msg):
        out[f.name] = _FIELD_ENC[f.name](getattr(msg, f.name))
    return out


_ENCODERS: dict[type, Callable[[Any], Any]] = {
    Endpoint: _enc_endpoint, Member: _enc_member, ProtocolParams: _enc_params,
    Configuration: _enc_config, Alert: _enc_alert, CutProposal: _enc_cut,
    NodeId: _nid,
}
for _t in m.MESSAGE_TYPES:
    _ENCODERS[_t] = _enc_message


def _dec_endpoint(o: dict) -> Endpoint:
    return Endpoint(o["host"], int(o["port"]))


def _dec_member(o: dict) -> Member:
    return Member.create(int(o["id"], 16), _dec_endpoint(o["endpoint"]), o.get("metadata") or {})


def _dec_params(o: dict) -> ProtocolParams:
    return ProtocolParams(
        K=o["K"], H=o["H"], L=o["L"],
        reinforcement_timeout=o["reinforcement_timeout"],
        fast_round_timeout=o["fast_round_timeout"],
        batching_window=o["batching_window"],
        consecutive_probe_window=o["consecutive_probe_window"],
        probe_failure_fraction=Fraction(o["probe_failure_fraction"]))


def _dec_config(o: dict) -> Configuration:
    return Configuration(int(o["id"], 16), tuple(_dec_member(x) for x in o["members"]),
                         _dec_params(o["params"]))


def _dec_alert(o: dict) -> Alert:
    subj = o["subject"]
    subject = _dec_member(subj) if isinstance(subj, dict) else NodeId(int(subj, 16))
    return Alert(NodeId(int(o["observer"], 16)), subject, AlertKind(o["kind"]),
                 int(o["config_id"], 16), int(o["ring_index"]))


def _dec_cut(o: dict) -> CutProposal:
    return CutProposal(int(o["config_id"], 16),
                       frozenset(NodeId(int(r, 16)) for r in o["removals"]),
                       frozenset(_dec_member(j) for j in o["joins"]))


def _dec_ballot(o: list) -> m.Ballot:
    return m.Ballot(int(o[0]), int(o[1], 16))


_FIELD_DEC: dict[str, Callable[[Any], Any]] = {
    "config_id": lambda s: int(s, 16), "from_config_id": lambda s: int(s, 16),
    "seq": int, "n": int,
    "joiner": _dec_member, "sender": lambda s: NodeId(int(s, 16)),
    "node": lambda s: NodeId(int(s, 16)),
    "status": m.JoinStatus,
    "observers": lambda xs: tuple(_dec_endpoint(e) for e in xs),
    "rings": tuple,
    "configuration": _dec_config,
    "alerts": lambda xs: tuple(_dec_alert(a) for a in xs),
    "proposal": _dec_cut, "accepted": lambda o: None if o is None else _dec_cut(o),
    "cuts": lambda xs: tuple(_dec_cut(c) for c in xs),
    "bitmap": lambda s: int(s, 16),
    "ballot": _dec_ballot, "accepted_ballot": _dec_ballot, "promised": _dec_ballot,
}

_DECODERS: dict[str, Callable[[dict], Any]] = {
    "Endpoint": _dec_endpoint, "Member": _dec_member, "ProtocolParams": _dec_params,
    "Configuration": _dec_config, "Alert": _dec_alert, "CutProposal": _dec_cut,
}
_MSG_BY_NAME = {t.__name__: t for t in m.MESSAGE_TYPES}


def decode(obj: Any) -> Any:
    if not isinstance(obj, dict) or "type" not in obj:
        raise CodecError("expected a tagged object")
    tag = obj["type"]
    if tag in _DECODERS:
        return _DECODERS[tag](obj)
    cls = _MSG_BY_NAME.get(tag)
    if cls is None:
        raise CodecError(f"unknown type tag {tag!r}")
    kwargs = {f.name: _FIELD_DEC[f.name](obj[f.name]) for f in dataclasses.fields(cls)}
    return cls(**kwargs)


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(value: Any) -> bytes:
    return dumps(encode(value)).encode("utf-8")


def from_bytes(data: bytes) -> Any:
    return decode(json.loads(data.decode("utf-8")))


def encode_envelope(src: Endpoint, msg: Any) -> bytes:
    body = dumps({"v": SCHEMA_VERSION, "src": _enc_endpoint(src), "msg": encode(msg)})
    return body.encode("utf-8")


def decode_envelope(data: bytes) -> tuple[Endpoint, Any]:
    obj = json.loads(data.decode("utf-8"))
    if obj.get("v") != SCHEMA_VERSION:
        raise CodecError(f"unsupported schema version {obj.get('v')!r}")
    return _dec_endpoint(obj["src"]), decode(obj["msg"])


def frame(payload: bytes) -> bytes:
    """4-byte big-endian length prefix followed by the payload."""
    return _LEN.pack(len(payload)) + payload


def unframe(buf: bytes) -> tuple[list[bytes], bytes]:
    """Split complete frames off ``buf``; returns (frames, remainder)."""
    frames = []
    while len(buf) >= 4:
        (size,) = _LEN.unpack_from(buf)
        if len(buf) < 4 + size:
            break
        frames.append(buf[4:4 + size])
        buf = buf[4 + size:]
    return frames, buf
