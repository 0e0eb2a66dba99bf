"""Deterministic synthetic pose sequences plus an enumeration oracle.

The generator animates the head, right wrist and right hip (and the left
wrist for ``raise_left``); every other joint holds a static position taken
from a body template. Each negative preset breaks exactly one thing the
detector relies on.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .detector import DetectorConfig
from .pose import (
    BODY_25,
    DEFAULT_FRAME_SIZE,
    LAYOUTS,
    MISSING,
    Keypoint,
    KeypointLayout,
    Point2D,
    PoseFrame,
)

PRESETS = (
    "raise_right",
    "raise_left",
    "raise_abandoned",
    "crouch",
    "lying",
    "wave_below_shoulder",
    "idle",
)
NEGATIVE_PRESETS = tuple(p for p in PRESETS if p != "raise_right")

JOINT_NAMES = {
    "body25": (
        "nose", "neck", "r_shoulder", "r_elbow", "r_wrist", "l_shoulder", "l_elbow", "l_wrist",
        "mid_hip", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle", "r_eye", "l_eye",
        "r_ear", "l_ear", "l_big_toe", "l_small_toe", "l_heel", "r_big_toe", "r_small_toe", "r_heel",
    ),
    "coco18": (
        "nose", "neck", "r_shoulder", "r_elbow", "r_wrist", "l_shoulder", "l_elbow", "l_wrist",
        "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle", "r_eye", "l_eye", "r_ear", "l_ear",
    ),
}

# Standing template in body units: (horizontal offset, vertical offset) from the
# head, where one unit is the head-to-hip span H.
TEMPLATE = {
    "nose": (0.0, 0.0), "neck": (0.0, 0.2),
    "r_shoulder": (-0.15, 0.22), "r_elbow": (-0.2, 0.5), "r_wrist": (-0.13, 1.05),
    "l_shoulder": (0.15, 0.22), "l_elbow": (0.2, 0.5), "l_wrist": (0.2, 1.05),
    "mid_hip": (0.02, 1.0), "r_hip": (-0.03, 1.0), "r_knee": (-0.04, 1.45), "r_ankle": (-0.05, 1.9),
    "l_hip": (0.08, 1.0), "l_knee": (0.09, 1.45), "l_ankle": (0.1, 1.9),
    "r_eye": (-0.03, -0.03), "l_eye": (0.03, -0.03), "r_ear": (-0.06, -0.01), "l_ear": (0.06, -0.01),
    "l_big_toe": (0.14, 1.95), "l_small_toe": (0.16, 1.94), "l_heel": (0.08, 1.93),
    "r_big_toe": (-0.09, 1.95), "r_small_toe": (-0.11, 1.94), "r_heel": (-0.03, 1.93),
}

RAISE_TOP = -0.2  # raised hand ends 0.2 H above the head
WAVE_LEVEL = 0.25  # shoulder height, below the head
ABANDON_FRACTION = 0.6


@dataclass(frozen=True)
class BodyGeometry:
    center_x: float = 320.0
    head_y: float = 100.0
    span: float = 200.0


@dataclass(frozen=True)
class SequenceSpec:
    preset: str = "raise_right"
    fps: float = 30.0
    duration_frames: int = 60
    body: BodyGeometry = field(default_factory=BodyGeometry)
    noise_px: float = 0.0
    seed: int = 0
    layout: str = "body25"
    repeats: int = 1
    lead_in_frames: Optional[int] = None
    motion_frames: Optional[int] = None

    def __post_init__(self) -> None:
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}")
        if self.duration_frames < 1:
            raise ValueError("duration_frames must be >= 1")
        if self.noise_px < 0:
            raise ValueError("noise_px must be >= 0")
        if self.body.span <= 0:
            raise ValueError("body span must be positive")
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.layout not in LAYOUTS:
            raise ValueError(f"unknown layout {self.layout!r}")


@dataclass(frozen=True)
class Annotation:
    expected_detection: bool
    gesture_start_frame: int
    gesture_end_frame: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Annotation":
        data = json.loads(text)
        return cls(bool(data["expected_detection"]), int(data["gesture_start_frame"]),
                   int(data["gesture_end_frame"]))


def ease_in_out(t: float) -> float:
    t = min(max(t, 0.0), 1.0)
    return t * t * (3.0 - 2.0 * t)


def _raise_offset(s: float) -> tuple[float, float]:
    """Right-wrist template offset at raise progress s in [0, 1]."""
    u0, v0 = TEMPLATE["r_wrist"]
    return u0 - 0.1 * math.sin(math.pi * s), v0 + (RAISE_TOP - v0) * s


def _left_raise_offset(s: float) -> tuple[float, float]:
    u0, v0 = TEMPLATE["l_wrist"]
    return u0 + 0.1 * math.sin(math.pi * s), v0 + (RAISE_TOP - v0) * s


@dataclass(frozen=True)
class _Cycle:
    start: int
    lower: int
    lead: int
    motion: int
    length: int


def _cycles(spec: SequenceSpec) -> list[_Cycle]:
    n, r = spec.duration_frames, spec.repeats
    base = n // r
    out = []
    start = 0
    for c in range(r):
        length = base if c < r - 1 else n - start
        lower = max(1, round(0.15 * length)) if c > 0 else 0
        lead = spec.lead_in_frames if spec.lead_in_frames is not None else max(1, round(0.15 * length))
        motion = spec.motion_frames if spec.motion_frames is not None else max(1, round((0.5 if c == 0 else 0.4) * length))
        out.append(_Cycle(start, lower, lead, motion, length))
        start += length
    return out


def _phase(cycle: _Cycle, k: int) -> tuple[str, float]:
    """(phase name, progress in [0, 1]) for global frame k inside this cycle."""
    local = k - cycle.start
    if local < cycle.lower:
        return "lower", (local + 1) / cycle.lower
    local -= cycle.lower
    if local < cycle.lead:
        return "rest", 0.0
    local -= cycle.lead
    if local < cycle.motion:
        return "motion", local / (cycle.motion - 1) if cycle.motion > 1 else 1.0
    return "hold", 1.0


def _hand_offsets(preset: str, phase: str, t: float, hold_t: float) -> tuple[tuple[float, float], tuple[float, float]]:
    """Template offsets of (right wrist, left wrist) for one frame."""
    right_rest, left_rest = TEMPLATE["r_wrist"], TEMPLATE["l_wrist"]
    if preset == "idle":
        return right_rest, left_rest
    if phase == "lower":
        # Coming down from the previous cycle's end pose.
        s = 1.0 - ease_in_out(t)
    elif phase == "rest":
        s = 0.0
    elif phase == "motion":
        s = ease_in_out(t)
    else:
        s = 1.0

    if preset == "raise_left":
        return right_rest, _left_raise_offset(s)
    if preset == "raise_abandoned":
        if phase == "motion":
            s = ABANDON_FRACTION * (ease_in_out(2 * t) if t <= 0.5 else 1.0 - ease_in_out(2 * t - 1))
        elif phase in ("hold", "lower"):
            s = 0.0
        return _raise_offset(s), left_rest
    if preset == "wave_below_shoulder":
        s_top = (right_rest[1] - WAVE_LEVEL) / (right_rest[1] - RAISE_TOP)
        if phase == "lower":
            s = s_top * (1.0 - ease_in_out(t))
        elif phase == "motion" and t < 0.5:
            s = s_top * ease_in_out(2 * t)
        elif phase == "rest":
            s = 0.0
        else:
            s = s_top
        u, v = _raise_offset(s)
        if phase == "hold" or (phase == "motion" and t >= 0.5):
            u = right_rest[0] + 0.15 * math.sin(2 * math.pi * hold_t)
        return (u, v), left_rest
    # raise_right, crouch and lying all perform the full right-arm raise.
    return _raise_offset(s), left_rest


def _place(preset: str, body: BodyGeometry, offsets: dict[str, tuple[float, float]]) -> dict[str, tuple[float, float]]:
    h = body.span
    hip_u, hip_v = TEMPLATE["r_hip"]
    if preset == "lying":
        # Rotate the standing body 90 degrees about the right hip: head to the left.
        hip_x, hip_y = body.center_x + 0.5 * h, body.head_y + 1.4 * h
        out = {}
        for name, (u, v) in offsets.items():
            du, dv = u - hip_u, v - hip_v
            out[name] = (hip_x + dv * h, hip_y - du * h)
        return out
    if preset == "crouch":
        # Upper body leans forward and drops; legs fold but stay anchored at the hip.
        hip_x, hip_y = body.center_x + hip_u * h, body.head_y + hip_v * h
        out = {}
        for name, (u, v) in offsets.items():
            du, dv = u - hip_u, v - hip_v
            if dv < 0:
                out[name] = (hip_x + (du + 0.28 * -dv / 1.0) * h, hip_y + 0.55 * dv * h)
            else:
                out[name] = (hip_x + du * h, hip_y + 0.5 * dv * h)
        return out
    return {name: (body.center_x + u * h, body.head_y + v * h) for name, (u, v) in offsets.items()}


def generate(spec: SequenceSpec) -> tuple[list[PoseFrame], Annotation]:
    layout = LAYOUTS[spec.layout]
    names = JOINT_NAMES[layout.name]
    rng = np.random.default_rng(spec.seed)
    width, height = DEFAULT_FRAME_SIZE
    cycles = _cycles(spec)
    n = spec.duration_frames
    frames = []
    for k in range(n):
        cycle = next(c for c in reversed(cycles) if c.start <= k)
        phase, t = _phase(cycle, k)
        hold_t = (k - cycle.start - cycle.lower - cycle.lead - cycle.motion // 2) / spec.fps
        right, left = _hand_offsets(spec.preset, phase, t, hold_t)
        offsets = dict(TEMPLATE)
        offsets["r_wrist"] = right
        offsets["l_wrist"] = left
        placed = _place(spec.preset, spec.body, offsets)
        jitter = rng.uniform(-spec.noise_px, spec.noise_px, size=(len(names), 2)) if spec.noise_px > 0 else np.zeros((len(names), 2))
        conf = rng.uniform(0.6, 0.95, size=len(names))
        kps = []
        for j, name in enumerate(names):
            x, y = placed[name]
            x, y = float(x + jitter[j, 0]), float(y + jitter[j, 1])
            if not (0.0 <= x <= width and 0.0 <= y <= height):
                kps.append(MISSING)
                continue
            kps.append(Keypoint(Point2D(x, y), round(float(conf[j]), 4)))
        frames.append(PoseFrame(frame_id=k, capture_timestamp=round(k * 1e6 / spec.fps), keypoints=tuple(kps)))

    first = cycles[0]
    if spec.preset == "idle":
        start = end = -1
    else:
        start = first.start + first.lower + first.lead
        end = min(start + first.motion - 1, n - 1)
    return frames, Annotation(spec.preset == "raise_right", start, end)


# --------------------------------------------------------------------------
# Oracle: exhaustive (arm frame, completion frame) search, no state machine.


@dataclass(frozen=True)
class OracleVerdict:
    detected: bool
    arm_frame: Optional[int] = None
    detect_frame: Optional[int] = None


def _landmark_table(frames: Sequence[PoseFrame], layout: KeypointLayout, min_conf: float):
    rows = []
    for f in frames:
        pts = []
        ok = True
        for idx in (layout.head_index, layout.right_hand_index, layout.right_hip_index):
            kp = f.keypoints[idx]
            if kp.confidence <= 0.0 or kp.confidence < min_conf:
                ok = False
            pts.append((kp.position.x, kp.position.y))
        rows.append((ok, pts[0], pts[1], pts[2]))
    return rows


def oracle_scan(frames: Sequence[PoseFrame], config: DetectorConfig = DetectorConfig(),
                layout: KeypointLayout = BODY_25) -> OracleVerdict:
    rows = _landmark_table(frames, layout, config.min_confidence)
    n = len(rows)
    dwell, timeout = config.target_dwell_frames, config.arm_timeout_frames

    for i in range(n):
        ok, (hx, hy), (wx, wy), (px, py) = rows[i]
        if not ok:
            continue
        span = abs(py - hy)
        a1 = math.sqrt((wx - px) ** 2 + (wy - py) ** 2)
        a2 = math.sqrt((hx - wx) ** 2 + (hy - wy) ** 2)
        b2 = config.beta2.resolve(span)
        if not a1 < config.beta1.resolve(span):
            continue
        if not ((a2 < b2) if config.alpha2_mode == "below" else (a2 > b2)):
            continue
        if not abs(hx - px) < config.standing_ratio * span:
            continue
        if span < 1.0:
            continue
        beta = config.beta_margin.resolve(span)
        half_w = abs(px - wx) / 2 + beta
        box = (wx - half_w, wx + half_w, hy - span / 4 - beta, hy + span / 2)

        def inside(m):
            _, _, (x, y), _ = rows[m]
            return box[0] <= x <= box[1] and box[2] <= y <= box[3]

        def target(m):
            return rows[m][0] and inside(m) and rows[m][2][1] <= rows[m][1][1]

        last = min(i + timeout, n - 1)
        # Lowest (numerically smallest) hand y seen inside the box before frame k.
        prefix_min = [wy] * (last - i + 2)
        for k in range(i + 1, last + 1):
            y_prev = prefix_min[k - i - 1]
            if rows[k - 1][0] and k - 1 > i and inside(k - 1):
                y_prev = min(y_prev, rows[k - 1][2][1])
            prefix_min[k - i] = y_prev

        resets = [
            k for k in range(i + 1, last + 1)
            if rows[k][0] and not inside(k) and rows[k][2][1] > prefix_min[k - i] + beta
        ]
        for j in range(i + dwell, last + 1):
            if any(i < k < j for k in resets):
                break
            if all(target(m) for m in range(j - dwell + 1, j + 1)):
                return OracleVerdict(True, i, j)
    return OracleVerdict(False)


def oracle_detect(frames: Sequence[PoseFrame], config: DetectorConfig = DetectorConfig(),
                  layout: KeypointLayout = BODY_25) -> bool:
    return oracle_scan(frames, config, layout).detected


def write_sequence(path, spec: SequenceSpec) -> Annotation:
    """Write the keypoint file at ``path`` and the annotation next to it."""
    from .pose import write_keypoint_file

    frames, annotation = generate(spec)
    write_keypoint_file(path, frames)
    with open(annotation_path(path), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(annotation.to_json() + "\n")
    return annotation


def annotation_path(path) -> str:
    return f"{path}.annotation.json"
