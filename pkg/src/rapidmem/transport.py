"""Asyncio transport for running real nodes on loopback addresses.

Gossip, probes and votes go over UDP datagrams; the join handshake uses TCP
streams. Both carry the same frame: a 4-byte big-endian length followed by
the canonical encoding of the envelope.
"""

from __future__ import annotations

import asyncio
import logging
import random
from typing import Callable, Mapping, Optional

from . import codec
from .core import Configuration, Endpoint, Member, NodeId, ProtocolParams
from .engine import EngineSettings, Node, Status, ViewChangeEvent
from .messages import STREAM_TYPES, Envelope

log = logging.getLogger(__name__)


class _Datagrams(asyncio.DatagramProtocol):
    def __init__(self, owner: "Agent"):
        self.owner = owner

    def datagram_received(self, data: bytes, addr) -> None:
        frames, _ = codec.unframe(data)
        for f in frames:
            self.owner._receive(f)


class Agent:
    """A membership participant bound to ``listen`` on the local host."""

    def __init__(self, listen: Endpoint, *, params: ProtocolParams | None = None,
                 settings: EngineSettings | None = None, tick: float = 0.02,
                 metadata: Mapping[str, str] | None = None, node_id: int | None = None,
                 rng_seed: int | None = None):
        rng = random.Random(rng_seed)
        nid = NodeId(node_id if node_id is not None else rng.getrandbits(128))
        self.me = Member.create(nid, listen, metadata)
        self.params = params or ProtocolParams()
        self.node = Node(self.me, self.params, settings, seed=rng.getrandbits(64))
        self.tick = tick
        self.now = 0
        self._inbox: list[Envelope] = []
        self._udp: Optional[asyncio.DatagramTransport] = None
        self._tcp: Optional[asyncio.base_events.Server] = None
        self._task: Optional[asyncio.Task] = None
        self._streams: dict[Endpoint, asyncio.StreamWriter] = {}
        self._first_view: Optional[asyncio.Future] = None
        self.node.on_view_change(self._on_view)

    # ---- public API --------------------------------------------------------

    def on_view_change(self, cb: Callable[[ViewChangeEvent], None]) -> None:
        self.node.on_view_change(cb)

    @property
    def configuration(self) -> Optional[Configuration]:
        return self.node.cfg if self.node.status is Status.MEMBER else None

    def metadata(self, node: int) -> dict[str, str]:
        return self.node.metadata_of(node)

    async def start(self, seed: Endpoint | None = None) -> None:
        """Bind sockets; with no seed, bootstrap a one-member cluster."""
        loop = asyncio.get_running_loop()
        ep = self.me.endpoint
        self._udp, _ = await loop.create_datagram_endpoint(
            lambda: _Datagrams(self), local_addr=(ep.host, ep.port))
        self._tcp = await asyncio.start_server(self._serve_stream, ep.host, ep.port)
        self._first_view = loop.create_future()
        if seed is None or seed == ep:
            self.node.bootstrap(Configuration.initial([self.me], self.params))
        else:
            self.node.join(seed, self.now)
        self._task = asyncio.create_task(self._run())

    async def join(self, seed: Endpoint, timeout: float = 30.0) -> ViewChangeEvent:
        """Start and wait for the first configuration that contains this node."""
        await self.start(seed)
        return await asyncio.wait_for(asyncio.shield(self._first_view), timeout)

    def leave(self) -> None:
        self.node.leave()

    async def stop(self) -> None:
        if self._task is not None:
            self._task.cancel()
            try:
                await self._task
            except asyncio.CancelledError:
                pass
        for w in self._streams.values():
            w.close()
        self._streams.clear()
        if self._udp is not None:
            self._udp.close()
        if self._tcp is not None:
            self._tcp.close()
            await self._tcp.wait_closed()

    # ---- internals ---------------------------------------------------------

    def _on_view(self, ev: ViewChangeEvent) -> None:
        if self._first_view is not None and not self._first_view.done():
            self._first_view.set_result(ev)

    def _receive(self, payload: bytes) -> None:
        try:
            src, msg = codec.decode_envelope(payload)
        except (ValueError, KeyError, TypeError) as exc:
            log.warning("dropping malformed frame: %s", exc)
            return
        self._inbox.append(Envelope(src, self.me.endpoint, msg))

    async def _serve_stream(self, reader: asyncio.StreamReader,
                            writer: asyncio.StreamWriter) -> None:
        buf = b""
        try:
            while True:
                chunk = await reader.read(65536)
                if not chunk:
                    break
                frames, buf = codec.unframe(buf + chunk)
                for f in frames:
                    self._receive(f)
        finally:
            writer.close()

    async def _run(self) -> None:
        while True:
            await asyncio.sleep(self.tick)
            self.now += 1
            inbox, self._inbox = self._inbox, []
            for env in self.node.step(self.now, inbox):
                await self._transmit(env)

    async def _transmit(self, env: Envelope) -> None:
        data = codec.frame(codec.encode_envelope(self.me.endpoint, env.msg))
        if isinstance(env.msg, STREAM_TYPES):
            try:
                w = self._streams.get(env.dst)
                if w is None or w.is_closing():
                    _, w = await asyncio.open_connection(env.dst.host, env.dst.port)
                    self._streams[env.dst] = w
                w.write(data)
                await w.drain()
            except OSError as exc:
                self._streams.pop(env.dst, None)
                log.debug("stream to %s failed: %s", env.dst, exc)
        elif self._udp is not None:
            self._udp.sendto(data, (env.dst.host, env.dst.port))
