"""Keypoint data model, keypoint-file parsing, and distance geometry.

Coordinates follow the image convention: x grows rightward, y grows downward.
A keypoint with confidence 0 is "not detected" and its position is ignored.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

DEFAULT_FRAME_SIZE = (640, 480)


class PoseParseError(ValueError):
    """A keypoint record could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class LayoutError(PoseParseError):
    """Keypoint count does not match the declared layout."""


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float


@dataclass(frozen=True)
class Keypoint:
    position: Point2D
    confidence: float

    @property
    def detected(self) -> bool:
        return self.confidence > 0.0


MISSING = Keypoint(Point2D(0.0, 0.0), 0.0)


@dataclass(frozen=True)
class KeypointLayout:
    name: str
    head_index: int
    right_hand_index: int
    right_hip_index: int
    layout_size: int
    left_hand_index: Optional[int] = None

    def __post_init__(self) -> None:
        idx = (self.head_index, self.right_hand_index, self.right_hip_index)
        if len(set(idx)) != 3:
            raise ValueError("head, right hand and right hip indices must be distinct")
        if any(i < 0 or i >= self.layout_size for i in idx):
            raise ValueError("landmark index outside layout")


# OpenPose BODY_25: 0 nose, 4 right wrist, 7 left wrist, 9 right hip.
BODY_25 = KeypointLayout("body25", head_index=0, right_hand_index=4, right_hip_index=9,
                         layout_size=25, left_hand_index=7)
# OpenPose COCO-18: 0 nose, 4 right wrist, 7 left wrist, 8 right hip.
COCO_18 = KeypointLayout("coco18", head_index=0, right_hand_index=4, right_hip_index=8,
                         layout_size=18, left_hand_index=7)

LAYOUTS = {layout.name: layout for layout in (BODY_25, COCO_18)}


@dataclass(frozen=True)
class PoseFrame:
    frame_id: int
    capture_timestamp: int  # microseconds since stream start
    keypoints: tuple[Keypoint, ...]


@dataclass(frozen=True)
class LandmarkTriple:
    head: Keypoint
    right_hand: Keypoint
    right_hip: Keypoint
    valid: bool

    @property
    def body_span(self) -> float:
        """Vertical head-to-hip span |y1 - y3|, the body-relative length unit."""
        return abs(self.right_hip.position.y - self.head.position.y)


def euclidean_distance(p: Point2D, q: Point2D) -> float:
    return math.hypot(q.x - p.x, q.y - p.y)


def extract_landmarks(frame: PoseFrame, layout: KeypointLayout, min_confidence: float = 0.3) -> LandmarkTriple:
    kps = frame.keypoints
    head = kps[layout.head_index]
    hand = kps[layout.right_hand_index]
    hip = kps[layout.right_hip_index]
    valid = all(k.confidence >= min_confidence and k.confidence > 0.0 for k in (head, hand, hip))
    return LandmarkTriple(head=head, right_hand=hand, right_hip=hip, valid=valid)


def _as_number(value, line, field) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise PoseParseError(f"expected a number, got {value!r}", line, field)
    value = float(value)
    if not math.isfinite(value):
        raise PoseParseError("non-finite coordinate", line, field)
    return value


def pose_frame_from_record(
    record: dict,
    layout: KeypointLayout,
    line: Optional[int] = None,
    frame_size: Optional[tuple[int, int]] = None,
) -> PoseFrame:
    if not isinstance(record, dict):
        raise PoseParseError("record must be an object", line)
    for key in ("frame_id", "t_us", "kp"):
        if key not in record:
            raise PoseParseError("missing field", line, key)
    frame_id, t_us, kp = record["frame_id"], record["t_us"], record["kp"]
    if isinstance(frame_id, bool) or not isinstance(frame_id, int):
        raise PoseParseError("frame_id must be an integer", line, "frame_id")
    if isinstance(t_us, bool) or not isinstance(t_us, int):
        raise PoseParseError("t_us must be an integer", line, "t_us")
    if not isinstance(kp, list):
        raise PoseParseError("kp must be an array", line, "kp")
    # Multi-person records carry a list of per-person arrays; the first person is used.
    if kp and isinstance(kp[0], list):
        kp = kp[0]
        if not isinstance(kp, list):
            raise PoseParseError("kp must be an array", line, "kp")
    if len(kp) % 3 != 0:
        raise PoseParseError(f"kp length {len(kp)} is not a multiple of 3", line, "kp")
    count = len(kp) // 3
    if count != layout.layout_size:
        raise LayoutError(f"{count} keypoints, layout {layout.name} expects {layout.layout_size}", line, "kp")

    keypoints = []
    for j in range(count):
        x = _as_number(kp[3 * j], line, f"kp[{3 * j}]")
        y = _as_number(kp[3 * j + 1], line, f"kp[{3 * j + 1}]")
        c = _as_number(kp[3 * j + 2], line, f"kp[{3 * j + 2}]")
        if not 0.0 <= c <= 1.0:
            raise PoseParseError(f"confidence {c} outside [0, 1]", line, f"kp[{3 * j + 2}]")
        if c == 0.0:
            keypoints.append(MISSING)
            continue
        if frame_size is not None:
            w, h = frame_size
            if not (0.0 <= x <= w and 0.0 <= y <= h):
                raise PoseParseError(f"keypoint {j} at ({x}, {y}) outside {w}x{h} frame", line, "kp")
        keypoints.append(Keypoint(Point2D(x, y), c))
    return PoseFrame(frame_id=frame_id, capture_timestamp=t_us, keypoints=tuple(keypoints))


def parse_keypoint_frame(
    text: str,
    layout: KeypointLayout = BODY_25,
    line: Optional[int] = None,
    frame_size: Optional[tuple[int, int]] = None,
) -> PoseFrame:
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PoseParseError(f"malformed record: {exc.msg} at column {exc.colno}", line) from None
    return pose_frame_from_record(record, layout, line=line, frame_size=frame_size)


def frame_to_record(frame: PoseFrame) -> dict:
    kp: list[float] = []
    for k in frame.keypoints:
        kp.extend((k.position.x, k.position.y, k.confidence))
    return {"frame_id": frame.frame_id, "t_us": frame.capture_timestamp, "kp": kp}


def serialize_keypoint_frame(frame: PoseFrame) -> str:
    return json.dumps(frame_to_record(frame), separators=(",", ":"))


def iter_keypoint_file(
    lines: Iterable[str],
    layout: KeypointLayout = BODY_25,
    frame_size: Optional[tuple[int, int]] = None,
) -> Iterator[PoseFrame]:
    """Parse a newline-delimited keypoint stream, enforcing increasing frame ids."""
    last_id: Optional[int] = None
    for lineno, text in enumerate(lines, start=1):
        if not text.strip():
            continue
        frame = parse_keypoint_frame(text, layout, line=lineno, frame_size=frame_size)
        if last_id is not None and frame.frame_id <= last_id:
            raise PoseParseError(f"frame_id {frame.frame_id} does not increase", lineno, "frame_id")
        last_id = frame.frame_id
        yield frame


def read_keypoint_file(path, layout: KeypointLayout = BODY_25, frame_size=None) -> list[PoseFrame]:
    with open(path, encoding="utf-8") as fh:
        return list(iter_keypoint_file(fh, layout, frame_size))


def write_keypoint_file(path, frames: Sequence[PoseFrame]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for frame in frames:
            fh.write(serialize_keypoint_frame(frame))
            fh.write("\n")


def make_frame(frame_id: int, t_us: int, points: dict[int, tuple[float, float, float]], layout: KeypointLayout) -> PoseFrame:
    """Build a frame from a sparse {index: (x, y, conf)} mapping; other joints are missing."""
    kps = [MISSING] * layout.layout_size
    for i, (x, y, c) in points.items():
        kps[i] = Keypoint(Point2D(float(x), float(y)), float(c)) if c > 0 else MISSING
    return PoseFrame(frame_id, t_us, tuple(kps))
