"""Length-prefixed binary framing between the capture node and the edge node.

Every message starts with a 25-byte big-endian header::

    magic "DRN1" (4) | type (1) | frame_id (u64) | timestamp_us (i64) | payload_len (u32)

followed by ``payload_len`` bytes. Result payloads are exactly 12 bytes:
detector_state (u8), action_detected (u8), two reserved zero bytes, and
processing_time_us (u64). Heartbeats carry no payload.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Union

MAGIC = b"DRN1"
MAX_PAYLOAD = 10 * 1024 * 1024

_HEADER = struct.Struct(">4sBQqI")
_RESULT = struct.Struct(">BBHQ")
HEADER_SIZE = _HEADER.size
RESULT_PAYLOAD_SIZE = _RESULT.size

_U64_MAX = 2**64 - 1
_I64_MIN, _I64_MAX = -(2**63), 2**63 - 1


class ProtocolError(Exception):
    """The byte stream is not a valid message."""


class IncompleteMessage(Exception):
    """More bytes are needed; retry once they arrive."""

    def __init__(self, needed: int):
        self.needed = needed
        super().__init__(f"need {needed} more bytes")


class MessageType(enum.IntEnum):
    FRAME = 1
    KEYPOINTS = 2
    RESULT = 3
    HEARTBEAT = 4


class PayloadKind(enum.Enum):
    ENCODED_FRAME = "encoded_frame"
    KEYPOINTS = "keypoints"


@dataclass(frozen=True)
class FrameMessage:
    frame_id: int
    capture_timestamp_us: int
    payload_kind: PayloadKind
    payload: bytes


@dataclass(frozen=True)
class ResultMessage:
    frame_id: int
    detector_state: int
    action_detected: bool
    processing_time_us: int
    timestamp_us: int = 0  # server clock; informational only


@dataclass(frozen=True)
class Heartbeat:
    seq: int
    timestamp_us: int


Message = Union[FrameMessage, ResultMessage, Heartbeat]


def _check_ids(frame_id: int, timestamp_us: int) -> None:
    if not 0 <= frame_id <= _U64_MAX:
        raise ValueError(f"frame_id {frame_id} does not fit in 64 bits")
    if not _I64_MIN <= timestamp_us <= _I64_MAX:
        raise ValueError(f"timestamp {timestamp_us} does not fit in 64 bits")


def encode_message(msg: Message) -> bytes:
    if isinstance(msg, FrameMessage):
        if len(msg.payload) > MAX_PAYLOAD:
            raise ValueError(f"payload of {len(msg.payload)} bytes exceeds the {MAX_PAYLOAD}-byte cap")
        _check_ids(msg.frame_id, msg.capture_timestamp_us)
        mtype = MessageType.FRAME if msg.payload_kind is PayloadKind.ENCODED_FRAME else MessageType.KEYPOINTS
        return _HEADER.pack(MAGIC, mtype, msg.frame_id, msg.capture_timestamp_us, len(msg.payload)) + bytes(msg.payload)
    if isinstance(msg, ResultMessage):
        _check_ids(msg.frame_id, msg.timestamp_us)
        if msg.detector_state not in (0, 1):
            raise ValueError("detector_state must be 0 or 1")
        if not 0 <= msg.processing_time_us <= _U64_MAX:
            raise ValueError("processing_time_us out of range")
        body = _RESULT.pack(msg.detector_state, int(bool(msg.action_detected)), 0, msg.processing_time_us)
        return _HEADER.pack(MAGIC, MessageType.RESULT, msg.frame_id, msg.timestamp_us, len(body)) + body
    if isinstance(msg, Heartbeat):
        _check_ids(msg.seq, msg.timestamp_us)
        return _HEADER.pack(MAGIC, MessageType.HEARTBEAT, msg.seq, msg.timestamp_us, 0)
    raise TypeError(f"cannot encode {type(msg).__name__}")


def decode_from(buf: bytes) -> tuple[Message, int]:
    """Decode one message from the front of ``buf``; returns (message, bytes consumed)."""
    view = memoryview(buf)
    if len(view) < 4:
        if bytes(view) != MAGIC[: len(view)]:
            raise ProtocolError("bad magic")
        raise IncompleteMessage(HEADER_SIZE - len(view))
    if bytes(view[:4]) != MAGIC:
        raise ProtocolError("bad magic")
    if len(view) < HEADER_SIZE:
        raise IncompleteMessage(HEADER_SIZE - len(view))
    _, mtype, frame_id, ts, length = _HEADER.unpack_from(view)
    try:
        mtype = MessageType(mtype)
    except ValueError:
        raise ProtocolError(f"unknown message type {mtype}") from None
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload length {length} exceeds cap")
    if mtype is MessageType.RESULT and length != RESULT_PAYLOAD_SIZE:
        raise ProtocolError(f"result payload must be {RESULT_PAYLOAD_SIZE} bytes, header says {length}")
    if mtype is MessageType.HEARTBEAT and length != 0:
        raise ProtocolError("heartbeat must not carry a payload")
    end = HEADER_SIZE + length
    if len(view) < end:
        raise IncompleteMessage(end - len(view))
    payload = bytes(view[HEADER_SIZE:end])

    if mtype is MessageType.RESULT:
        state, detected, reserved, proc = _RESULT.unpack(payload)
        if state not in (0, 1) or detected not in (0, 1) or reserved != 0:
            raise ProtocolError("malformed result payload")
        return ResultMessage(frame_id, state, bool(detected), proc, ts), end
    if mtype is MessageType.HEARTBEAT:
        return Heartbeat(frame_id, ts), end
    kind = PayloadKind.ENCODED_FRAME if mtype is MessageType.FRAME else PayloadKind.KEYPOINTS
    return FrameMessage(frame_id, ts, kind, payload), end


def decode_message(buf: bytes) -> Message:
    """Decode exactly one message; trailing bytes are a protocol error."""
    msg, used = decode_from(buf)
    if used != len(buf):
        raise ProtocolError(f"{len(buf) - used} trailing bytes after message")
    return msg


class MessageReader:
    """Accumulates stream bytes and yields complete messages."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Message]:
        self._buf.extend(data)
        out = []
        while self._buf:
            try:
                msg, used = decode_from(bytes(self._buf))
            except IncompleteMessage:
                break
            del self._buf[:used]
            out.append(msg)
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)


def recv_message(sock, reader: MessageReader, queue: list) -> Message:
    """Block until one message is available on ``sock``."""
    while not queue:
        data = sock.recv(65536)
        if not data:
            raise ConnectionError("peer closed the connection")
        queue.extend(reader.feed(data))
    return queue.pop(0)
