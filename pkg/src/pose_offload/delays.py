"""Per-stage delay models and a scalable time base.

All durations are expressed in *model* microseconds. A :class:`Timebase`
with ``time_scale`` < 1 sleeps proportionally less and divides measured
wall-clock intervals by the same factor, so reported stage times keep the
model's magnitudes while a run finishes faster.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import asdict, dataclass, field

STAGES = ("extraction", "encoding", "network_one_way", "processing")


@dataclass(frozen=True)
class StageDelay:
    mean_us: float = 0.0
    jitter_us: float = 0.0

    def __post_init__(self) -> None:
        if not self.mean_us >= self.jitter_us >= 0:
            raise ValueError(f"need mean >= jitter >= 0, got mean={self.mean_us} jitter={self.jitter_us}")

    def sample(self, rng: random.Random) -> float:
        if self.jitter_us == 0:
            return self.mean_us
        return self.mean_us + rng.uniform(-self.jitter_us, self.jitter_us)


@dataclass(frozen=True)
class DelayModel:
    extraction: StageDelay = field(default_factory=StageDelay)
    encoding: StageDelay = field(default_factory=StageDelay)
    network_one_way: StageDelay = field(default_factory=StageDelay)
    processing: StageDelay = field(default_factory=StageDelay)
    name: str = "custom"

    @classmethod
    def from_means(cls, name: str = "custom", jitter: float = 0.0, **means_s: float) -> "DelayModel":
        """Build from per-stage means in seconds with a relative jitter."""
        kwargs = {}
        for stage in STAGES:
            mean_us = means_s.get(stage, 0.0) * 1e6
            kwargs[stage] = StageDelay(mean_us, mean_us * jitter)
        return cls(name=name, **kwargs)

    @property
    def per_frame_mean_us(self) -> float:
        return (self.extraction.mean_us + self.encoding.mean_us
                + 2 * self.network_one_way.mean_us + self.processing.mean_us)

    def to_json(self) -> str:
        data = {stage: asdict(getattr(self, stage)) for stage in STAGES}
        data["name"] = self.name
        return json.dumps(data, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DelayModel":
        data = json.loads(text)
        unknown = set(data) - set(STAGES) - {"name"}
        if unknown:
            raise ValueError(f"unknown delay stages: {sorted(unknown)}")
        kwargs = {s: StageDelay(**data[s]) for s in STAGES if s in data}
        return cls(name=data.get("name", "custom"), **kwargs)


ZERO = DelayModel(name="zero")
# Edge-side stage magnitudes of the reference measurement: 0.3 s frame
# extraction, 1 s encoding, 2.2 s round-trip network, 1 s processing.
PAPER_FIG6 = DelayModel.from_means(
    "paper-fig6", jitter=0.1, extraction=0.3, encoding=1.0, network_one_way=1.1, processing=1.0
)
EDGE_GPU = DelayModel.from_means(
    "edge-gpu", jitter=0.1, extraction=0.3, encoding=1.0, network_one_way=1.1, processing=1.0
)
# On-board estimator slow enough that local recognition takes about twice
# as long as the edge path under PAPER_FIG6.
LOCAL_ATOM_VPU = DelayModel.from_means("local-atom-vpu", jitter=0.1, extraction=0.3, processing=8.7)

PRESETS = {m.name: m for m in (ZERO, PAPER_FIG6, EDGE_GPU, LOCAL_ATOM_VPU)}


def load_delay_model(name_or_path: str) -> DelayModel:
    """Resolve a preset name, or read a JSON delay file."""
    if name_or_path in PRESETS:
        return PRESETS[name_or_path]
    try:
        with open(name_or_path, encoding="utf-8") as fh:
            return DelayModel.from_json(fh.read())
    except FileNotFoundError:
        raise ValueError(
            f"unknown delay preset or file {name_or_path!r}; presets: {', '.join(PRESETS)}"
        ) from None


class Timebase:
    """Model-time clock: ``now_us`` advances 1/time_scale faster than wall time."""

    def __init__(self, time_scale: float = 1.0, offset_us: float = 0.0):
        if not time_scale > 0:
            raise ValueError("time_scale must be positive")
        self.time_scale = time_scale
        self.offset_us = offset_us
        self._t0 = time.perf_counter()

    def now_us(self) -> float:
        return (time.perf_counter() - self._t0) * 1e6 / self.time_scale + self.offset_us

    def sleep_us(self, model_us: float) -> None:
        if model_us > 0:
            time.sleep(model_us * self.time_scale / 1e6)

    def sleep_until_us(self, model_us: float) -> None:
        remaining = model_us - self.now_us()
        if remaining > 0:
            self.sleep_us(remaining)
