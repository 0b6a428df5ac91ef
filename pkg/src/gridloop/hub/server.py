"""asyncio TCP front-end for the hub (real-time mode)."""
from __future__ import annotations

import asyncio
import logging

from .core import Hub
from .protocol import MAX_FRAME_BYTES, Command, Frame, encode_frame

log = logging.getLogger(__name__)


class HubServer:
    """Serves one :class:`Hub` to many socket clients.

    Every frame is handled synchronously on the event loop, so all state
    mutations are serialized.
    """

    def __init__(self, hub: Hub | None = None):
        self.t0 = 0.0
        self.hub = hub or Hub(clock=self._clock)
        self._server: asyncio.AbstractServer | None = None

    def _clock(self) -> int:
        return int((asyncio.get_running_loop().time() - self.t0) * 1e6)

    async def start(self, host: str = "127.0.0.1", port: int = 0, t0: float | None = None) -> tuple[str, int]:
        loop = asyncio.get_running_loop()
        self.t0 = loop.time() if t0 is None else t0
        self._server = await asyncio.start_server(self._serve, host, port, limit=2**16)
        addr = self._server.sockets[0].getsockname()
        log.info("hub listening on %s:%s", addr[0], addr[1])
        return addr[0], addr[1]

    async def serve_forever(self) -> None:
        assert self._server is not None
        async with self._server:
            await self._server.serve_forever()

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    async def _serve(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        conn = self.hub.connect(f"{peer[0]}:{peer[1]}" if peer else "", deliver=lambda f: writer.write(encode_frame(f)))
        try:
            while True:
                try:
                    line = await reader.readline()
                except (ValueError, asyncio.LimitOverrunError):
                    conn.deliver(Frame(Command.ERR, reason="malformed"))
                    continue
                if not line:
                    break
                if len(line) > MAX_FRAME_BYTES or not line.endswith(b"\n"):
                    conn.deliver(Frame(Command.ERR, reason="malformed"))
                    continue
                self.hub.handle_bytes(conn, line)
                await writer.drain()
        except ConnectionError:
            pass
        finally:
            self.hub.disconnect(conn)
            writer.close()
