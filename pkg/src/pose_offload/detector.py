"""Right-arm-raise movement detector.

Two persistent states: ``WAITING`` looks for a standing person with the right
arm down; once found, an interest rectangle is built around the expected
raise path and the detector is ``ARMED``. While armed, each frame is checked
against the rectangle until the hand has been held inside it at or above head
height for ``target_dwell_frames`` frames (detection), the raise is abandoned,
or the arm times out.

Vertical comparisons use image coordinates: "higher" means smaller y.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Optional

from .pose import (
    BODY_25,
    LAYOUTS,
    KeypointLayout,
    LandmarkTriple,
    Point2D,
    PoseFrame,
    euclidean_distance,
    extract_landmarks,
)

CONFIG_ENV_VAR = "POSE_OFFLOAD_CONFIG"


class DegeneratePoseError(ValueError):
    """Head and hip are (nearly) at the same height; no box can be built."""


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Threshold:
    """A length threshold in pixels or as a fraction of the body span."""

    value: float
    unit: str = "frac"

    def __post_init__(self) -> None:
        if self.unit not in ("px", "frac"):
            raise ConfigError(f"unknown threshold unit {self.unit!r}")
        if not (math.isfinite(self.value) and self.value > 0):
            raise ConfigError("thresholds must be positive")

    def resolve(self, body_span: float) -> float:
        return self.value * body_span if self.unit == "frac" else self.value

    def __str__(self) -> str:
        return f"{self.value!r} {self.unit}"


@dataclass(frozen=True)
class DetectorConfig:
    beta1: Threshold = Threshold(0.35)
    beta2: Threshold = Threshold(1.6)
    beta_margin: Threshold = Threshold(0.15)
    standing_ratio: float = 0.2
    min_confidence: float = 0.3
    arm_timeout_frames: int = 90
    target_dwell_frames: int = 3
    # "below": arm-down requires alpha2 < beta2; "above": alpha2 > beta2.
    alpha2_mode: str = "below"

    def __post_init__(self) -> None:
        if not self.standing_ratio > 0:
            raise ConfigError("standing_ratio must be positive")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ConfigError("min_confidence must be in [0, 1]")
        if self.target_dwell_frames < 1:
            raise ConfigError("target_dwell_frames must be >= 1")
        if self.arm_timeout_frames <= self.target_dwell_frames:
            raise ConfigError("arm_timeout_frames must exceed target_dwell_frames")
        if self.alpha2_mode not in ("below", "above"):
            raise ConfigError("alpha2_mode must be 'below' or 'above'")

    def with_pixel_thresholds(self, body_span: float) -> "DetectorConfig":
        """Same thresholds expressed in absolute pixels for a given body span."""
        return replace(
            self,
            beta1=Threshold(self.beta1.resolve(body_span), "px"),
            beta2=Threshold(self.beta2.resolve(body_span), "px"),
            beta_margin=Threshold(self.beta_margin.resolve(body_span), "px"),
        )


_THRESHOLD_KEYS = ("beta1", "beta2", "beta_margin")
_FLOAT_KEYS = ("standing_ratio", "min_confidence")
_INT_KEYS = ("arm_timeout_frames", "target_dwell_frames")


def parse_config(text: str) -> tuple[DetectorConfig, KeypointLayout]:
    """Parse a flat ``key = value [unit]`` document.

    Threshold keys take an optional ``px`` or ``frac`` unit (default ``frac``).
    A ``layout`` key selects the keypoint layout (``body25`` or ``coco18``).
    """
    values: dict = {}
    layout = BODY_25
    known = {f.name for f in fields(DetectorConfig)} | {"layout"}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, rhs = (part.strip() for part in line.partition("="))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        parts = rhs.split()
        if not parts:
            raise ConfigError(f"line {lineno}: missing value for {key!r}")
        try:
            if key == "layout":
                if rhs not in LAYOUTS:
                    raise ConfigError(f"line {lineno}: unknown layout {rhs!r}")
                layout = LAYOUTS[rhs]
            elif key == "alpha2_mode":
                values[key] = rhs
            elif key in _THRESHOLD_KEYS:
                unit = parts[1] if len(parts) > 1 else "frac"
                values[key] = Threshold(float(parts[0]), unit)
            elif key in _FLOAT_KEYS:
                values[key] = float(parts[0])
            elif key in _INT_KEYS:
                values[key] = int(parts[0])
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {rhs!r}") from None
    return DetectorConfig(**values), layout


def format_config(config: DetectorConfig, layout: KeypointLayout = BODY_25) -> str:
    lines = [f"layout = {layout.name}"]
    for f in fields(DetectorConfig):
        lines.append(f"{f.name} = {getattr(config, f.name)}")
    return "\n".join(lines) + "\n"


def load_config(path=None) -> tuple[DetectorConfig, KeypointLayout]:
    """Load a config file; falls back to ``$POSE_OFFLOAD_CONFIG``, then defaults."""
    path = path or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return DetectorConfig(), BODY_25
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


@dataclass(frozen=True)
class TargetBox:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def contains(self, p: Point2D) -> bool:
        return self.x_min <= p.x <= self.x_max and self.y_min <= p.y <= self.y_max

    def margin(self, p: Point2D) -> float:
        """Signed distance to the nearest edge: positive inside, negative outside."""
        return min(p.x - self.x_min, self.x_max - p.x, p.y - self.y_min, self.y_max - p.y)


class State(enum.IntEnum):
    WAITING = 0
    ARMED = 1


class Transition(enum.IntEnum):
    RESET = 0
    TRACKING = 1
    DETECTED = 2


@dataclass
class DetectorState:
    state: State = State.WAITING
    box: Optional[TargetBox] = None
    last_hand: Optional[Point2D] = None
    margin_px: float = 0.0
    frames_in_target: int = 0
    frames_since_armed: int = 0
    reason: str = ""

    def reset(self) -> None:
        self.state = State.WAITING
        self.box = None
        self.last_hand = None
        self.margin_px = 0.0
        self.frames_in_target = 0
        self.frames_since_armed = 0


@dataclass(frozen=True)
class Diagnostic:
    frame_id: int
    state_before: int
    alpha1: Optional[float]
    alpha2: Optional[float]
    in_box: Optional[bool]
    event: str
    edge_margin: Optional[float] = None

    HEADER = ("frame_id", "state_before", "alpha1", "alpha2", "in_box", "event")

    def as_row(self) -> list:
        def num(v):
            return "" if v is None else f"{v:.6f}"
        in_box = "" if self.in_box is None else int(self.in_box)
        return [self.frame_id, self.state_before, num(self.alpha1), num(self.alpha2), in_box, self.event]


@dataclass(frozen=True)
class DetectionOutcome:
    detected: bool
    state_after: State
    diagnostics: Diagnostic


def arm_distances(lm: LandmarkTriple) -> tuple[float, float]:
    """(alpha1, alpha2): hand-to-hip and head-to-hand distances."""
    hip, hand, head = lm.right_hip.position, lm.right_hand.position, lm.head.position
    return euclidean_distance(hip, hand), euclidean_distance(head, hand)


def is_standing(lm: LandmarkTriple, config: DetectorConfig) -> bool:
    head, hip = lm.head.position, lm.right_hip.position
    return abs(head.x - hip.x) < config.standing_ratio * abs(hip.y - head.y)


def initial_position(lm: LandmarkTriple, config: DetectorConfig) -> bool:
    if not lm.valid:
        return False
    span = lm.body_span
    alpha1, alpha2 = arm_distances(lm)
    if not alpha1 < config.beta1.resolve(span):
        return False
    beta2 = config.beta2.resolve(span)
    arm_down = alpha2 < beta2 if config.alpha2_mode == "below" else alpha2 > beta2
    return arm_down and is_standing(lm, config)


def calculate_box(lm: LandmarkTriple, config: DetectorConfig) -> TargetBox:
    x1, y1 = lm.right_hip.position.x, lm.right_hip.position.y
    x2 = lm.right_hand.position.x
    y3 = lm.head.position.y
    span = abs(y1 - y3)
    if span < 1.0:
        raise DegeneratePoseError(f"body span {span:.3f} px is below 1 px")
    half_gap = abs(x1 - x2) / 2
    upper = span / 2
    lower = span / 4
    margin = config.beta_margin.resolve(span)
    return TargetBox(
        x_min=x2 - (half_gap + margin),
        x_max=x2 + (half_gap + margin),
        y_min=y3 - lower - margin,
        y_max=y3 + upper,
    )


def trajectory_check(state: DetectorState, lm: LandmarkTriple, config: DetectorConfig) -> Transition:
    """Advance an armed detector by one frame.

    Updates counters and the stored hand position in place; the reset reason,
    if any, is left in ``state.reason``.
    """
    assert state.state is State.ARMED and state.box is not None and state.last_hand is not None
    state.reason = ""
    state.frames_since_armed += 1
    if state.frames_since_armed > config.arm_timeout_frames:
        state.reason = "reset_timeout"
        return Transition.RESET
    if not lm.valid:
        state.frames_in_target = 0
        return Transition.TRACKING

    hand = lm.right_hand.position
    in_box = state.box.contains(hand)
    if in_box and hand.y < state.last_hand.y:
        state.last_hand = hand
    if in_box and hand.y <= lm.head.position.y:
        state.frames_in_target += 1
        if state.frames_in_target >= config.target_dwell_frames:
            return Transition.DETECTED
        return Transition.TRACKING
    state.frames_in_target = 0
    if not in_box and hand.y > state.last_hand.y + state.margin_px:
        state.reason = "reset_dropped"
        return Transition.RESET
    return Transition.TRACKING


@dataclass
class MovementDetector:
    """Single-stream detector; feed frames in frame_id order."""

    config: DetectorConfig = field(default_factory=DetectorConfig)
    layout: KeypointLayout = BODY_25
    state: DetectorState = field(default_factory=DetectorState)

    def process_pose(self, frame: PoseFrame) -> DetectionOutcome:
        cfg, st = self.config, self.state
        lm = extract_landmarks(frame, self.layout, cfg.min_confidence)
        before = st.state
        alpha1 = alpha2 = None
        if lm.valid:
            alpha1, alpha2 = arm_distances(lm)

        if before is State.WAITING:
            if not lm.valid:
                return self._outcome(frame, before, alpha1, alpha2, None, "missing_joints")
            if not initial_position(lm, cfg):
                return self._outcome(frame, before, alpha1, alpha2, None, "")
            try:
                box = calculate_box(lm, cfg)
            except DegeneratePoseError:
                return self._outcome(frame, before, alpha1, alpha2, None, "degenerate_pose")
            st.state = State.ARMED
            st.box = box
            st.last_hand = lm.right_hand.position
            st.margin_px = cfg.beta_margin.resolve(lm.body_span)
            st.frames_in_target = 0
            st.frames_since_armed = 0
            return self._outcome(frame, before, alpha1, alpha2, True, "armed", box.margin(lm.right_hand.position))

        box = st.box
        in_box = edge = None
        if lm.valid:
            hand = lm.right_hand.position
            in_box = box.contains(hand)
            edge = min(box.margin(hand), lm.head.position.y - hand.y)
        result = trajectory_check(st, lm, cfg)
        if result is Transition.DETECTED:
            st.reset()
            return self._outcome(frame, before, alpha1, alpha2, in_box, "detected", edge, detected=True)
        if result is Transition.RESET:
            reason = st.reason
            st.reset()
            return self._outcome(frame, before, alpha1, alpha2, in_box, reason, edge)
        event = "" if lm.valid else "missing_joints"
        return self._outcome(frame, before, alpha1, alpha2, in_box, event, edge)

    def _outcome(self, frame, before, alpha1, alpha2, in_box, event, edge=None, detected=False) -> DetectionOutcome:
        diag = Diagnostic(frame.frame_id, int(before), alpha1, alpha2, in_box, event, edge)
        return DetectionOutcome(detected=detected, state_after=self.state.state, diagnostics=diag)

    def reset(self) -> None:
        self.state.reset()

    def run(self, frames: Iterable[PoseFrame]) -> list[DetectionOutcome]:
        return [self.process_pose(f) for f in frames]


def detection_frame_ids(frames: Iterable[PoseFrame], config: DetectorConfig = DetectorConfig(),
                        layout: KeypointLayout = BODY_25) -> list[int]:
    det = MovementDetector(config, layout)
    return [o.diagnostics.frame_id for o in det.run(frames) if o.detected]
