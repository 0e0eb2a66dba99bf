"""Local and edge execution paths with per-stage timing.

Both paths process one frame at a time (stop-and-wait). Every wall-clock
interval is measured on the capture node's own clock; the only number taken
from the edge node is its self-reported processing duration.
"""

from __future__ import annotations

import csv
import enum
import logging
import random
import socket
import struct
import subprocess
import threading
import time
from dataclasses import asdict, dataclass, fields
from typing import Callable, Iterator, Optional, Protocol, Sequence

from .delays import ZERO, DelayModel, Timebase
from .detector import MovementDetector
from .pose import BODY_25, KeypointLayout, PoseFrame, parse_keypoint_frame, serialize_keypoint_frame
from .protocol import (
    FrameMessage,
    Heartbeat,
    MessageReader,
    PayloadKind,
    ProtocolError,
    ResultMessage,
    encode_message,
    recv_message,
)

log = logging.getLogger(__name__)

# A 640x480 camera frame of the reference drone encodes to roughly 45 KB.
ENCODED_FRAME_BYTES = 45 * 1024


class EstimatorError(RuntimeError):
    """The pose estimator could not produce keypoints for a frame."""


class EdgeRunError(ConnectionError):
    """The edge run was aborted; ``log`` holds the iterations completed so far."""

    def __init__(self, message: str, log: "IterationLog"):
        super().__init__(message)
        self.log = log


class NoDetectionError(ValueError):
    pass


class Command(enum.Enum):
    TAKEOFF = "TAKEOFF"


@dataclass(frozen=True)
class CommandEvent:
    command: Command
    source_frame_id: int
    issue_timestamp_us: int


@dataclass(frozen=True)
class StageTimings:
    extraction_us: int = 0
    encoding_us: int = 0
    network_us: int = 0
    processing_us: int = 0
    total_us: int = 0

    @property
    def slack_us(self) -> int:
        return self.total_us - (self.extraction_us + self.encoding_us + self.network_us + self.processing_us)


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    frame_id: int
    extraction_us: int
    encoding_us: int
    network_us: int
    processing_us: int
    total_us: int
    detected: bool
    capture_us: int = 0  # stream time the frame was captured
    done_us: int = 0  # stream time the result was available
    state: int = 0  # detector state after this frame
    failed: bool = False

    @property
    def timings(self) -> StageTimings:
        return StageTimings(self.extraction_us, self.encoding_us, self.network_us, self.processing_us, self.total_us)


LOG_FIELDS = tuple(f.name for f in fields(IterationRecord))


class IterationLog:
    """Append-only, thread-safe record of pipeline iterations."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.records: list[IterationRecord] = []
        self.commands: list[CommandEvent] = []
        self.skipped: list[int] = []

    def append(self, record: IterationRecord) -> None:
        with self._lock:
            self.records.append(record)

    def add_command(self, event: CommandEvent) -> None:
        with self._lock:
            self.commands.append(event)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def detections(self) -> list[int]:
        return [r.frame_id for r in self.records if r.detected]

    def write_csv(self, path, extra: Optional[dict] = None, append: bool = False) -> None:
        extra = extra or {}
        names = list(extra) + list(LOG_FIELDS)
        with open(path, "a" if append else "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if not append or fh.tell() == 0:
                writer.writerow(names)
            for r in self.records:
                row = asdict(r)
                row["detected"] = int(r.detected)
                row["failed"] = int(r.failed)
                writer.writerow([*extra.values(), *(row[n] for n in LOG_FIELDS)])


# ---------------------------------------------------------------- sources


class ReplaySource:
    """Yields every frame once, as fast as the consumer pulls."""

    def __init__(self, frames: Sequence[PoseFrame]):
        self.frames = list(frames)
        self.live = False

    def start(self, timebase: Timebase) -> None:
        pass

    def __iter__(self) -> Iterator[PoseFrame]:
        return iter(self.frames)

    def capture_time_us(self, frame: PoseFrame) -> int:
        return frame.capture_timestamp


class LiveSource:
    """A camera: frames appear at their capture timestamps and the consumer
    always gets the newest one, so frames arriving while it is busy are dropped.
    """

    def __init__(self, frames: Sequence[PoseFrame]):
        self.frames = list(frames)
        self.live = True
        self._tb: Optional[Timebase] = None
        self.origin_us = 0.0

    def start(self, timebase: Timebase) -> None:
        self._tb = timebase
        self.origin_us = timebase.now_us()

    def stream_time_us(self) -> float:
        return self._tb.now_us() - self.origin_us

    def __iter__(self) -> Iterator[PoseFrame]:
        if self._tb is None:
            raise RuntimeError("LiveSource.start() must be called first")
        frames = self.frames
        last = -1
        n = len(frames)
        while last < n - 1:
            now = self.stream_time_us()
            newest = last
            while newest + 1 < n and frames[newest + 1].capture_timestamp <= now:
                newest += 1
            if newest == last:
                self._tb.sleep_until_us(self.origin_us + frames[last + 1].capture_timestamp)
                continue
            last = newest
            yield frames[newest]

    def capture_time_us(self, frame: PoseFrame) -> int:
        return frame.capture_timestamp


# ------------------------------------------------------------- providers


class PoseProvider(Protocol):
    def estimate(self, payload: bytes, frame_id: int, t_us: int) -> PoseFrame: ...


class KeypointRecordProvider:
    """Payload is already a keypoint record (the desk-scale path)."""

    def __init__(self, layout: KeypointLayout = BODY_25):
        self.layout = layout

    def estimate(self, payload: bytes, frame_id: int, t_us: int) -> PoseFrame:
        try:
            return parse_keypoint_frame(payload.decode("utf-8"), self.layout)
        except (UnicodeDecodeError, ValueError) as exc:
            raise EstimatorError(str(exc)) from exc


_SYNTH_MAGIC = b"SYNF"


def encode_synthetic_frame(frame: PoseFrame, size: int = ENCODED_FRAME_BYTES) -> bytes:
    """Opaque stand-in for an encoded camera frame, padded to a realistic size.

    The keypoints ride inside so a matching provider can "estimate" them.
    """
    record = serialize_keypoint_frame(frame).encode("utf-8")
    body = _SYNTH_MAGIC + struct.pack(">I", len(record)) + record
    return body + bytes(max(0, size - len(body)))


class SyntheticFrameProvider:
    def __init__(self, layout: KeypointLayout = BODY_25):
        self.layout = layout

    def estimate(self, payload: bytes, frame_id: int, t_us: int) -> PoseFrame:
        if payload[:4] != _SYNTH_MAGIC or len(payload) < 8:
            raise EstimatorError("not a synthetic frame")
        (n,) = struct.unpack(">I", payload[4:8])
        try:
            return parse_keypoint_frame(payload[8 : 8 + n].decode("utf-8"), self.layout)
        except (UnicodeDecodeError, ValueError) as exc:
            raise EstimatorError(str(exc)) from exc


class CommandPoseProvider:
    """Runs an external estimator: frame bytes on stdin, one keypoint record on stdout."""

    def __init__(self, argv: Sequence[str], layout: KeypointLayout = BODY_25, timeout_s: float = 30.0):
        self.argv = list(argv)
        self.layout = layout
        self.timeout_s = timeout_s

    def estimate(self, payload: bytes, frame_id: int, t_us: int) -> PoseFrame:
        try:
            proc = subprocess.run(self.argv, input=payload, capture_output=True, timeout=self.timeout_s, check=True)
            frame = parse_keypoint_frame(proc.stdout.decode("utf-8").strip(), self.layout)
        except (OSError, subprocess.SubprocessError, UnicodeDecodeError, ValueError) as exc:
            raise EstimatorError(f"estimator command failed: {exc}") from exc
        # The estimator does not know the stream bookkeeping; keep the sender's.
        return PoseFrame(frame_id, t_us, frame.keypoints)


class DefaultProvider:
    """Dispatches on payload kind: keypoint records or synthetic encoded frames."""

    def __init__(self, layout: KeypointLayout = BODY_25, frame_provider: Optional[PoseProvider] = None):
        self.keypoints = KeypointRecordProvider(layout)
        self.frames = frame_provider or SyntheticFrameProvider(layout)

    def estimate_kind(self, kind: PayloadKind, payload: bytes, frame_id: int, t_us: int) -> PoseFrame:
        provider = self.keypoints if kind is PayloadKind.KEYPOINTS else self.frames
        return provider.estimate(payload, frame_id, t_us)


# ------------------------------------------------------------ local path

Estimator = Callable[[PoseFrame], PoseFrame]
Sink = Callable[[CommandEvent], None]


def _us(start: float, end: float) -> int:
    return max(0, round(end - start))


def run_local(
    source,
    detector: MovementDetector,
    sink: Optional[Sink] = None,
    delays: DelayModel = ZERO,
    timebase: Optional[Timebase] = None,
    estimator: Optional[Estimator] = None,
    rng: Optional[random.Random] = None,
    stop_after_command: bool = False,
) -> IterationLog:
    """Scenario 1: estimation and detection on the capture node itself.

    With ``stop_after_command`` the run ends at the first TAKEOFF.
    """
    tb = timebase or Timebase()
    rng = rng or random.Random(0)
    out = IterationLog()
    source.start(tb)
    prev_detected = False
    for i, frame in enumerate(source):
        t0 = tb.now_us()
        tb.sleep_us(delays.extraction.sample(rng))
        t1 = tb.now_us()
        try:
            pose = estimator(frame) if estimator else frame
        except EstimatorError as exc:
            log.warning("frame %d skipped: %s", frame.frame_id, exc)
            out.skipped.append(frame.frame_id)
            continue
        outcome = detector.process_pose(pose)
        tb.sleep_us(delays.processing.sample(rng))
        t2 = tb.now_us()
        done = _stream_done(source, frame, t0, t2)
        if outcome.detected and not prev_detected:
            event = CommandEvent(Command.TAKEOFF, frame.frame_id, done)
            out.add_command(event)
            if sink:
                sink(event)
        prev_detected = outcome.detected
        t3 = tb.now_us()
        out.append(IterationRecord(
            iter=i, frame_id=frame.frame_id, extraction_us=_us(t0, t1), encoding_us=0, network_us=0,
            processing_us=_us(t1, t2), total_us=_us(t0, t3), detected=outcome.detected,
            capture_us=frame.capture_timestamp, done_us=done, state=int(outcome.state_after),
        ))
        if stop_after_command and out.commands:
            break
    return out


def _stream_done(source, frame: PoseFrame, t_begin: float, t_end: float) -> int:
    """Stream time at which this frame's result became available."""
    if source.live:
        return round(t_end - source.origin_us)
    return frame.capture_timestamp + round(t_end - t_begin)


# ------------------------------------------------------------- edge path


class EdgeConnection:
    """Stop-and-wait client connection to an edge server."""

    def __init__(self, endpoint: tuple[str, int], timeout_s: float = 60.0):
        self.endpoint = endpoint
        self.timeout_s = timeout_s
        self.sock: Optional[socket.socket] = None
        self._reader = MessageReader()
        self._queue: list = []

    def connect(self) -> None:
        self.close()
        self.sock = socket.create_connection(self.endpoint, timeout=self.timeout_s)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._reader = MessageReader()
        self._queue = []

    def close(self) -> None:
        if self.sock is not None:
            try:
                self.sock.close()
            finally:
                self.sock = None

    def send(self, msg) -> None:
        self.sock.sendall(encode_message(msg))

    def recv(self):
        return recv_message(self.sock, self._reader, self._queue)

    def recv_result(self) -> ResultMessage:
        while True:
            msg = self.recv()
            if isinstance(msg, ResultMessage):
                return msg
            if not isinstance(msg, Heartbeat):
                raise ProtocolError(f"unexpected {type(msg).__name__} from server")

    def heartbeat(self, seq: int = 0) -> float:
        """Round-trip a heartbeat; returns the RTT in seconds."""
        t0 = time.perf_counter()
        self.send(Heartbeat(seq, 0))
        while True:
            msg = self.recv()
            if isinstance(msg, Heartbeat) and msg.seq == seq:
                return time.perf_counter() - t0


def parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"endpoint must be host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def run_edge_client(
    source,
    endpoint: tuple[str, int],
    sink: Optional[Sink] = None,
    delays: DelayModel = ZERO,
    timebase: Optional[Timebase] = None,
    payload_kind: PayloadKind = PayloadKind.KEYPOINTS,
    rng: Optional[random.Random] = None,
    retries: int = 3,
    backoff_s: float = 0.05,
    connection: Optional[EdgeConnection] = None,
    stop_after_command: bool = False,
) -> IterationLog:
    """Scenario 2: ship each frame to the edge, act on the returned verdict.

    Only extraction and encoding delays are applied here; network and
    processing delays belong to the edge server.
    """
    tb = timebase or Timebase()
    rng = rng or random.Random(0)
    out = IterationLog()
    conn = connection or EdgeConnection(endpoint)
    own_conn = connection is None
    if conn.sock is None:
        _connect_with_retry(conn, retries, backoff_s, out)

    source.start(tb)
    prev_detected = False
    try:
        for i, frame in enumerate(source):
            t0 = tb.now_us()
            tb.sleep_us(delays.extraction.sample(rng))
            t1 = tb.now_us()
            if payload_kind is PayloadKind.KEYPOINTS:
                payload = serialize_keypoint_frame(frame).encode("utf-8")
            else:
                payload = encode_synthetic_frame(frame)
            msg = FrameMessage(frame.frame_id, frame.capture_timestamp, payload_kind, payload)
            tb.sleep_us(delays.encoding.sample(rng))
            t2 = tb.now_us()
            try:
                conn.send(msg)
                result = conn.recv_result()
                t3 = tb.now_us()
                if result.frame_id != frame.frame_id:
                    raise ProtocolError(f"result for frame {result.frame_id}, expected {frame.frame_id}")
            except (OSError, ConnectionError, ProtocolError) as exc:
                log.warning("iteration %d failed: %s", i, exc)
                t3 = tb.now_us()
                out.append(IterationRecord(i, frame.frame_id, _us(t0, t1), _us(t1, t2), 0, 0, _us(t0, t3),
                                           False, frame.capture_timestamp, 0, 0, failed=True))
                _connect_with_retry(conn, retries, backoff_s, out)
                prev_detected = False
                continue

            detected = result.action_detected
            done = _stream_done(source, frame, t0, t3)
            if detected and not prev_detected:
                event = CommandEvent(Command.TAKEOFF, frame.frame_id, done)
                out.add_command(event)
                if sink:
                    sink(event)
            prev_detected = detected
            rtt = _us(t2, t3)
            processing = result.processing_time_us
            t4 = tb.now_us()
            out.append(IterationRecord(
                iter=i, frame_id=frame.frame_id, extraction_us=_us(t0, t1), encoding_us=_us(t1, t2),
                network_us=max(0, rtt - processing), processing_us=min(processing, rtt), total_us=_us(t0, t4),
                detected=detected, capture_us=frame.capture_timestamp, done_us=done,
                state=result.detector_state,
            ))
            if stop_after_command and out.commands:
                break
    finally:
        if own_conn:
            conn.close()
    return out


def _connect_with_retry(conn: EdgeConnection, retries: int, backoff_s: float, out: IterationLog) -> None:
    last_exc: Optional[BaseException] = None
    for attempt in range(retries):
        try:
            conn.connect()
            return
        except OSError as exc:
            last_exc = exc
            time.sleep(backoff_s * (2**attempt))
    raise EdgeRunError(f"cannot reach edge server at {conn.endpoint}: {last_exc}", out)


# ----------------------------------------------------- recognition time


def measure_recognition_time(
    log_: IterationLog,
    gesture_start_us: Optional[int] = None,
    anchor: str = "gesture_start",
) -> float:
    """Seconds from the gesture's start (or the arming frame) to the first TAKEOFF."""
    records = log_.records
    det = next((k for k, r in enumerate(records) if r.detected), None)
    if det is None:
        raise NoDetectionError("log contains no detection")
    done = records[det].done_us
    if anchor == "gesture_start":
        if gesture_start_us is None:
            raise ValueError("gesture_start anchor needs gesture_start_us")
        start = gesture_start_us
    elif anchor == "arming":
        k = det - 1
        while k >= 0 and not (records[k].state == 1 and (k == 0 or records[k - 1].state == 0)):
            k -= 1
        if k < 0:
            raise NoDetectionError("no arming frame precedes the detection")
        start = records[k].capture_us
    else:
        raise ValueError(f"unknown anchor {anchor!r}")
    return (done - start) / 1e6
