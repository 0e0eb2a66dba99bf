"""Edge node: accepts capture-node connections and runs the detector remotely.

Each connection gets its own detector. An optional delay model emulates the
link (one-way delay before processing and again before the reply) and the
processing cost; the reported processing time covers estimation, detection
and the emulated processing delay, never the emulated link.
"""

from __future__ import annotations

import logging
import random
import socket
import socketserver
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

from .delays import DelayModel, Timebase
from .detector import DetectorConfig, MovementDetector
from .pose import BODY_25, KeypointLayout
from .pipeline import DefaultProvider, EstimatorError
from .protocol import (
    FrameMessage,
    Heartbeat,
    MessageReader,
    ProtocolError,
    ResultMessage,
    encode_message,
)

log = logging.getLogger(__name__)


@dataclass
class ConnectionStats:
    peer: str
    frames: int = 0
    detections: int = 0
    heartbeats: int = 0
    bytes_in: int = 0
    estimator_errors: int = 0
    processing_us_total: int = 0
    closed_reason: str = ""

    @property
    def mean_processing_us(self) -> float:
        return self.processing_us_total / self.frames if self.frames else 0.0

    def summary(self) -> str:
        return (f"{self.peer}: frames={self.frames} detections={self.detections} "
                f"heartbeats={self.heartbeats} bytes_in={self.bytes_in} "
                f"mean_processing_s={self.mean_processing_us / 1e6:.3f} "
                f"estimator_errors={self.estimator_errors} closed={self.closed_reason or 'open'}")


class _Handler(socketserver.BaseRequestHandler):
    server: "_TCPServer"

    def handle(self) -> None:
        edge: EdgeServer = self.server.edge
        sock: socket.socket = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        sock.settimeout(0.5)
        stats, index = edge._register(f"{self.client_address[0]}:{self.client_address[1]}")
        detector = edge.detector_factory()
        reader = MessageReader()
        rng = random.Random(edge.seed * 7919 + index)
        last_id: Optional[int] = None
        try:
            while not edge._stopping.is_set():
                try:
                    data = sock.recv(65536)
                except socket.timeout:
                    continue
                if not data:
                    stats.closed_reason = "peer closed"
                    return
                stats.bytes_in += len(data)
                for msg in reader.feed(data):
                    if isinstance(msg, Heartbeat):
                        stats.heartbeats += 1
                        edge._link_delay(rng)
                        sock.sendall(encode_message(Heartbeat(msg.seq, round(edge.clock_us()))))
                        continue
                    if not isinstance(msg, FrameMessage):
                        raise ProtocolError(f"unexpected {type(msg).__name__} from client")
                    if last_id is not None and msg.frame_id <= last_id:
                        raise ProtocolError(f"frame_id {msg.frame_id} after {last_id}")
                    last_id = msg.frame_id
                    sock.sendall(encode_message(edge._process(detector, msg, stats, rng)))
        except ProtocolError as exc:
            stats.closed_reason = f"protocol error: {exc}"
            log.warning("closing %s: %s", stats.peer, exc)
        except OSError as exc:
            stats.closed_reason = f"socket error: {exc}"


class _TCPServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = False

    def __init__(self, addr, edge: "EdgeServer"):
        self.edge = edge
        super().__init__(addr, _Handler)


class EdgeServer:
    def __init__(
        self,
        bind: tuple[str, int] = ("127.0.0.1", 0),
        config: DetectorConfig = DetectorConfig(),
        layout: KeypointLayout = BODY_25,
        delays: Optional[DelayModel] = None,
        time_scale: float = 1.0,
        provider: Optional[DefaultProvider] = None,
        clock_skew_us: float = 0.0,
        seed: int = 0,
        detector_factory: Optional[Callable[[], MovementDetector]] = None,
    ):
        self.config = config
        self.layout = layout
        self.delays = delays
        self.timebase = Timebase(time_scale)
        self.provider = provider or DefaultProvider(layout)
        self.clock_skew_us = clock_skew_us
        self.seed = seed
        self.detector_factory = detector_factory or (lambda: MovementDetector(config, layout))
        self.connections: list[ConnectionStats] = []
        self._lock = threading.Lock()
        self._stopping = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._server = _TCPServer(bind, self)

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.server_address[:2]
        return host, port

    def clock_us(self) -> float:
        """Server wall clock (optionally skewed); only stamped onto replies."""
        return time.time() * 1e6 + self.clock_skew_us

    def _register(self, peer: str) -> tuple[ConnectionStats, int]:
        stats = ConnectionStats(peer)
        with self._lock:
            self.connections.append(stats)
            return stats, len(self.connections) - 1

    def _link_delay(self, rng: random.Random) -> None:
        if self.delays is not None:
            self.timebase.sleep_us(self.delays.network_one_way.sample(rng))

    def _process(self, detector: MovementDetector, msg: FrameMessage, stats: ConnectionStats,
                 rng: random.Random) -> ResultMessage:
        tb = self.timebase
        self._link_delay(rng)
        t0 = tb.now_us()
        detected = False
        try:
            pose = self.provider.estimate_kind(msg.payload_kind, msg.payload, msg.frame_id, msg.capture_timestamp_us)
        except EstimatorError as exc:
            stats.estimator_errors += 1
            log.warning("%s frame %d: %s", stats.peer, msg.frame_id, exc)
        else:
            detected = detector.process_pose(pose).detected
        if self.delays is not None:
            tb.sleep_us(self.delays.processing.sample(rng))
        processing = max(0, round(tb.now_us() - t0))
        stats.frames += 1
        stats.detections += int(detected)
        stats.processing_us_total += processing
        self._link_delay(rng)
        return ResultMessage(msg.frame_id, int(detector.state.state), detected, processing,
                             round(self.clock_us()))

    def serve_forever(self) -> None:
        self._server.serve_forever(poll_interval=0.1)

    def start(self) -> "EdgeServer":
        self._thread = threading.Thread(target=self.serve_forever, name="edge-server", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stopping.set()
        if self._thread is not None:
            self._server.shutdown()
            self._thread.join(timeout=5)
        self._server.server_close()

    def __enter__(self) -> "EdgeServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def stats_report(self) -> str:
        with self._lock:
            lines = [s.summary() for s in self.connections]
        return "\n".join(lines) if lines else "no connections"
