"""asyncio stream transport for the navigation link (one session per connection)."""
from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass
from typing import Callable

from ..geometry import RigidTransform
from .codec import FrameDecoder, GainUpdate, TargetUpdate, encode_frame
from .session import HEARTBEAT_PERIOD_S, POSE_RATE_HZ, ControllerSession, NavSender

log = logging.getLogger(__name__)


def parse_address(text: str, default_host="127.0.0.1") -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or default_host, int(port)


@dataclass
class NavStream:
    """What the navigation process publishes.

    ``source(t)`` gives the patient-tracker pose at stream time t, or None
    when it is occluded.  ``silent`` intervals send nothing at all, which is
    how tests inject link dropouts.
    """
    source: Callable[[float], RigidTransform | None]
    duration: float
    target: RigidTransform | None = None
    gains: object = None
    pose_rate: float = POSE_RATE_HZ
    heartbeat_period: float = HEARTBEAT_PERIOD_S
    silent: tuple = ()


async def stream_nav(writer: asyncio.StreamWriter, stream: NavStream, sender: NavSender | None = None):
    sender = sender or NavSender()
    loop = asyncio.get_running_loop()
    if stream.gains is not None:
        writer.write(encode_frame(GainUpdate.from_gains(stream.gains)))
    if stream.target is not None:
        writer.write(encode_frame(TargetUpdate(stream.target.to_pose7())))
    t0 = loop.time()
    frame = 0
    next_hb = 0.0
    sent = 0
    while True:
        t = frame / stream.pose_rate
        if t > stream.duration:
            break
        delay = t0 + t - loop.time()
        if delay > 0:
            await asyncio.sleep(delay)
        if not any(a <= t < b for a, b in stream.silent):
            if t >= next_hb:
                writer.write(sender.heartbeat())
            writer.write(sender.pose(int(t * 1e9), stream.source(t)))
            sent += 1
            await writer.drain()
        while next_hb <= t:
            next_hb += stream.heartbeat_period
        frame += 1
    return sent


async def serve_nav(host: str, port: int, stream: NavStream, ready: asyncio.Future | None = None,
                    connections: int = 1):
    """Accept ``connections`` clients, stream to each, then shut down."""
    done = asyncio.Event()
    served = 0

    async def handle(reader, writer):
        nonlocal served
        try:
            sent = await stream_nav(writer, stream)
            log.info("streamed %d pose frames", sent)
        except ConnectionError as exc:
            log.info("client disconnected: %s", exc)
        finally:
            writer.close()
            served += 1
            if served >= connections:
                done.set()

    server = await asyncio.start_server(handle, host, port)
    if ready is not None:
        ready.set_result(server.sockets[0].getsockname()[1])
    async with server:
        await done.wait()


async def _pump(reader: asyncio.StreamReader, session: ControllerSession, decoder: FrameDecoder, clock):
    while True:
        data = await reader.read(4096)
        if not data:
            return
        now = clock()
        for msg in decoder.feed(data):
            session.receive(msg, now)


async def run_session(host: str, port: int, tick: Callable[[ControllerSession, float], bool | None],
                      rate: float = 500.0, timeout: float = 30.0) -> ControllerSession:
    """Connect, keep ``session`` up to date, and call ``tick(session, now)`` at ``rate``.

    Stops when tick returns True, the stream ends, or ``timeout`` elapses.
    """
    loop = asyncio.get_running_loop()
    reader, writer = await asyncio.open_connection(host, port)
    t0 = loop.time()

    def clock():
        return loop.time() - t0

    session = ControllerSession(start=0.0)
    decoder = FrameDecoder()
    pump = asyncio.create_task(_pump(reader, session, decoder, clock))
    try:
        k = 0
        while not pump.done() and clock() < timeout:
            delay = t0 + k / rate - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
            if tick(session, clock()):
                break
            k += 1
    finally:
        pump.cancel()
        writer.close()
        try:
            await pump
        except (asyncio.CancelledError, ConnectionError):
            pass
    session.decode_errors = dict(decoder.errors)
    return session
