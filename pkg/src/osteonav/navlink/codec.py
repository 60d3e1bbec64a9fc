"""Binary framing for the navigation <-> controller link.

Frame layout (big-endian)::

    4E 56 | version u8 | type u8 | length u16 | payload | crc32 u32

The CRC covers type, length and payload.
"""
from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidMessage, OversizePayload, ProtocolError

MAGIC = b"\x4e\x56"
VERSION = 1
MAX_PAYLOAD = 512
HEADER_SIZE = 6
CRC_SIZE = 4
OVERHEAD = HEADER_SIZE + CRC_SIZE

_POSE = struct.Struct(">7d")
_STAMP = struct.Struct(">BIQ")
_U32 = struct.Struct(">I")
_U16 = struct.Struct(">H")


def _pose_tuple(pose) -> tuple:
    p = tuple(float(x) for x in pose)
    if len(p) != 7:
        raise InvalidMessage("pose needs 7 values (tx, ty, tz, qw, qx, qy, qz)")
    if not all(math.isfinite(x) for x in p):
        raise InvalidMessage("pose values must be finite")
    if abs(math.sqrt(sum(x * x for x in p[3:])) - 1.0) > 1e-6:
        raise InvalidMessage("quaternion is not unit length")
    return p


def _check_uint(value, bits, name):
    if not isinstance(value, (int, np.integer)) or not 0 <= value < (1 << bits):
        raise InvalidMessage(f"{name} must fit in u{bits}")
    return int(value)


@dataclass(frozen=True)
class TrackerPose:
    id: int
    seq: int
    t_ns: int
    pose: tuple

    TYPE = 1

    def __post_init__(self):
        object.__setattr__(self, "id", _check_uint(self.id, 8, "id"))
        object.__setattr__(self, "seq", _check_uint(self.seq, 32, "seq"))
        object.__setattr__(self, "t_ns", _check_uint(self.t_ns, 64, "t_ns"))
        object.__setattr__(self, "pose", _pose_tuple(self.pose))

    def payload(self) -> bytes:
        return _STAMP.pack(self.id, self.seq, self.t_ns) + _POSE.pack(*self.pose)

    @classmethod
    def parse(cls, b):
        return cls(*_STAMP.unpack_from(b), _POSE.unpack_from(b, _STAMP.size))

    SIZE = _STAMP.size + _POSE.size


@dataclass(frozen=True)
class TrackerOccluded:
    id: int
    seq: int
    t_ns: int

    TYPE = 2
    SIZE = _STAMP.size

    def __post_init__(self):
        object.__setattr__(self, "id", _check_uint(self.id, 8, "id"))
        object.__setattr__(self, "seq", _check_uint(self.seq, 32, "seq"))
        object.__setattr__(self, "t_ns", _check_uint(self.t_ns, 64, "t_ns"))

    def payload(self) -> bytes:
        return _STAMP.pack(self.id, self.seq, self.t_ns)

    @classmethod
    def parse(cls, b):
        return cls(*_STAMP.unpack(b))


@dataclass(frozen=True)
class TargetUpdate:
    """Drill target expressed in the patient-tracker frame."""
    pose: tuple

    TYPE = 3
    SIZE = _POSE.size

    def __post_init__(self):
        object.__setattr__(self, "pose", _pose_tuple(self.pose))

    def payload(self) -> bytes:
        return _POSE.pack(*self.pose)

    @classmethod
    def parse(cls, b):
        return cls(_POSE.unpack(b))


@dataclass(frozen=True)
class GainUpdate:
    """admittance, then K, B and K_rot as row-major 3x3 blocks (28 values)."""
    values: tuple

    TYPE = 4
    SIZE = 28 * 8

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        if len(v) != 28 or not all(math.isfinite(x) for x in v):
            raise InvalidMessage("gain update needs 28 finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_gains(cls, gains) -> GainUpdate:
        return cls((gains.admittance, *gains.k.ravel(), *gains.b.ravel(), *gains.k_rot.ravel()))

    def to_gains(self):
        from ..control import ControllerGains
        v = np.asarray(self.values)
        return ControllerGains(v[0], v[1:10].reshape(3, 3), v[10:19].reshape(3, 3), v[19:28].reshape(3, 3))

    def payload(self) -> bytes:
        return struct.pack(">28d", *self.values)

    @classmethod
    def parse(cls, b):
        return cls(struct.unpack(">28d", b))


@dataclass(frozen=True)
class Heartbeat:
    seq: int

    TYPE = 5
    SIZE = _U32.size

    def __post_init__(self):
        object.__setattr__(self, "seq", _check_uint(self.seq, 32, "seq"))

    def payload(self) -> bytes:
        return _U32.pack(self.seq)

    @classmethod
    def parse(cls, b):
        return cls(*_U32.unpack(b))


@dataclass(frozen=True)
class Error:
    code: int
    text: str = ""

    TYPE = 6
    SIZE = None  # variable

    def __post_init__(self):
        object.__setattr__(self, "code", _check_uint(self.code, 16, "code"))
        if not isinstance(self.text, str):
            raise InvalidMessage("error text must be a string")

    def payload(self) -> bytes:
        return _U16.pack(self.code) + self.text.encode("utf-8")

    @classmethod
    def parse(cls, b):
        if len(b) < 2:
            raise ValueError("short error payload")
        return cls(_U16.unpack_from(b)[0], bytes(b[2:]).decode("utf-8"))


MESSAGE_TYPES = {cls.TYPE: cls for cls in (TrackerPose, TrackerOccluded, TargetUpdate,
                                           GainUpdate, Heartbeat, Error)}


class NeedMoreBytes:
    """Returned by :func:`decode_frame` when the buffer holds only part of a frame."""
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NeedMoreBytes"


NEED_MORE = NeedMoreBytes()


def encode_frame(msg) -> bytes:
    if type(msg) not in MESSAGE_TYPES.values():
        raise InvalidMessage(f"not a navlink message: {msg!r}")
    payload = msg.payload()
    if len(payload) > MAX_PAYLOAD:
        raise OversizePayload(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    body = bytes([msg.TYPE]) + _U16.pack(len(payload)) + payload
    return MAGIC + bytes([VERSION]) + body + _U32.pack(zlib.crc32(body))


def _resync(buf, start=1) -> int:
    """Bytes to drop so the buffer starts at the next candidate magic."""
    i = bytes(buf).find(MAGIC, start)
    if i >= 0:
        return i
    # keep a trailing first magic byte, it may start the next frame
    return len(buf) - 1 if buf[-1:] == MAGIC[:1] else len(buf)


def decode_frame(buf):
    """Decode one frame from the start of ``buf``.

    Returns ``(message, consumed)`` or ``(NEED_MORE, 0)``; raises
    :class:`ProtocolError` whose ``skip`` tells the caller how many bytes to
    discard before trying again.
    """
    buf = memoryview(bytes(buf))
    n = len(buf)
    if n == 0:
        return NEED_MORE, 0
    if buf[0] != MAGIC[0] or (n >= 2 and buf[1] != MAGIC[1]):
        raise ProtocolError("BadMagic", _resync(buf, 0 if buf[0] != MAGIC[0] else 1))
    if n < HEADER_SIZE:
        return NEED_MORE, 0
    if buf[2] != VERSION:
        raise ProtocolError("BadVersion", _resync(buf), f"version {buf[2]}")
    length = _U16.unpack_from(buf, 4)[0]
    if length > MAX_PAYLOAD:
        raise ProtocolError("BadLength", _resync(buf), f"length {length}")
    total = HEADER_SIZE + length + CRC_SIZE
    if n < total:
        return NEED_MORE, 0
    body = buf[3:HEADER_SIZE + length]
    if zlib.crc32(body) != _U32.unpack_from(buf, HEADER_SIZE + length)[0]:
        raise ProtocolError("BadChecksum", _resync(buf))
    cls = MESSAGE_TYPES.get(buf[3])
    if cls is None:
        # the frame is intact, so skip it whole
        raise ProtocolError("UnknownType", total, f"type {buf[3]}")
    payload = buf[HEADER_SIZE:HEADER_SIZE + length]
    if cls.SIZE is not None and length != cls.SIZE:
        raise ProtocolError("BadLength", total, f"{cls.__name__} payload of {length} bytes")
    try:
        msg = cls.parse(payload)
    except (InvalidMessage, ValueError, struct.error) as exc:
        raise ProtocolError("BadPayload", total, str(exc)) from None
    return msg, total


class FrameDecoder:
    """Streaming decoder: feed arbitrary chunks, get whole messages back.

    Undecodable bytes are skipped and tallied in ``errors`` by kind.
    """

    def __init__(self):
        self._buf = bytearray()
        self.errors: dict[str, int] = {}

    def feed(self, data: bytes) -> list:
        self._buf += data
        out = []
        while self._buf:
            try:
                msg, used = decode_frame(self._buf)
            except ProtocolError as exc:
                self.errors[exc.kind] = self.errors.get(exc.kind, 0) + 1
                del self._buf[:max(exc.skip, 1)]
                continue
            if msg is NEED_MORE:
                break
            del self._buf[:used]
            out.append(msg)
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)

