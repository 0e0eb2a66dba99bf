"""Recognition-time and power campaigns over the local or edge path.

A campaign is ``samples`` independent runs of ``iterations`` successive
recognitions each. Every recognition streams a fresh synthetic arm raise
through a live (frame-dropping) camera source and ends when the TAKEOFF
command is issued. Results form the per-iteration sample matrix and its
column aggregate.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .delays import ZERO, DelayModel, Timebase
from .detector import DetectorConfig, MovementDetector
from .pipeline import (
    EdgeRunError,
    LiveSource,
    NoDetectionError,
    IterationLog,
    measure_recognition_time,
    run_edge_client,
    run_local,
)
from .pose import BODY_25, KeypointLayout, read_keypoint_file
from .protocol import PayloadKind
from .server import EdgeServer
from .synthgen import Annotation, BodyGeometry, SequenceSpec, annotation_path, generate
from .telemetry import (
    DEFAULT_CAPACITY_WH,
    NoDataError,
    SampleMatrix,
    column_aggregate,
    load_power_log,
    summarize_power,
    windowed_mean_power,
    write_aggregate_csv,
    write_matrix_csv,
    write_power_summary,
)

log = logging.getLogger(__name__)

STAGE_COLUMNS = ("extraction_us", "encoding_us", "network_us", "processing_us", "total_us")

# Output file names inside a bench directory.
SUMMARY = "summary.json"
MATRIX_A = "matrix_a.csv"
MATRIX_B = "matrix_b.csv"
ITERATIONS = "iterations.csv"
STAGE_LOG = "stage_log.csv"
FIG5 = "fig5_recognition.csv"
FIG6 = "fig6_stages.csv"
POWER_A = "power_matrix_a.csv"
POWER_B = "power_matrix_b.csv"
POWER_SUMMARY = "power_summary.csv"
FIG7 = "fig7_power.csv"

LEAD_IN_FRAMES = 9  # 0.3 s at 30 fps
MOTION_FRAMES = 30  # 1 s raise


@dataclass
class BenchPlan:
    scenario: str = "local"
    samples: int = 5
    iterations: int = 50
    delay: DelayModel = ZERO
    out: Path = Path("bench_out")
    endpoint: Optional[tuple[str, int]] = None
    power_log: Optional[Path] = None
    time_scale: float = 1.0
    seed: int = 0
    config: DetectorConfig = field(default_factory=lambda: DetectorConfig(target_dwell_frames=1))
    layout: KeypointLayout = BODY_25
    payload_kind: PayloadKind = PayloadKind.KEYPOINTS
    capacity_wh: float = DEFAULT_CAPACITY_WH
    fps: float = 30.0
    noise_frac: float = 0.01
    # Replay this keypoint file (with its annotation sidecar) every iteration
    # instead of generating a fresh gesture.
    input: Optional[Path] = None

    def __post_init__(self) -> None:
        if self.scenario not in ("local", "edge"):
            raise ValueError("scenario must be 'local' or 'edge'")
        if self.samples < 1 or self.iterations < 1:
            raise ValueError("samples and iterations must be >= 1")
        self.out = Path(self.out)

    @property
    def frame_latency_s(self) -> float:
        d = self.delay
        if self.scenario == "local":
            return (d.extraction.mean_us + d.processing.mean_us) / 1e6
        return d.per_frame_mean_us / 1e6


@dataclass
class IterationResult:
    sample: int
    iteration: int
    recognition_s: float
    stages: dict
    frames: int
    window_ms: tuple[float, float]
    log: IterationLog


@dataclass
class BenchResult:
    plan: BenchPlan
    iterations: list[IterationResult]
    recognition: np.ndarray  # samples x iterations, NaN where missing
    partial: bool = False
    error: str = ""
    power: Optional[np.ndarray] = None

    @property
    def matrix(self) -> SampleMatrix:
        return SampleMatrix.from_rows(self.recognition.tolist())


def bench_sequence(plan: BenchPlan, sample: int, iteration: int):
    """Fresh gesture for one recognition, long enough for the slowest pipeline.

    The live camera grabs one frame per pipeline pass, so the hold has to
    outlast ``dwell`` passes after the arming frame, with room for jitter.
    """
    dwell = plan.config.target_dwell_frames
    hold = math.ceil(plan.fps * dwell * plan.frame_latency_s * 1.3) + dwell + 10
    body = BodyGeometry()
    spec = SequenceSpec(
        preset="raise_right",
        fps=plan.fps,
        duration_frames=LEAD_IN_FRAMES + MOTION_FRAMES + hold,
        body=body,
        noise_px=plan.noise_frac * body.span,
        seed=plan.seed * 1_000_003 + sample * 1000 + iteration,
        lead_in_frames=LEAD_IN_FRAMES,
        motion_frames=MOTION_FRAMES,
    )
    return generate(spec)


def load_stream(path, layout: KeypointLayout = BODY_25):
    """A recorded stream plus its annotation; the gesture start is required."""
    frames = read_keypoint_file(path, layout)
    with open(annotation_path(path), encoding="utf-8") as fh:
        ann = Annotation.from_json(fh.read())
    if not 0 <= ann.gesture_start_frame < len(frames):
        raise ValueError(f"{path}: annotation has no gesture start inside the stream")
    return frames, ann


def _stage_means(records) -> dict:
    ok = [r for r in records if not r.failed]
    if not ok:
        return {c: float("nan") for c in STAGE_COLUMNS}
    return {c: float(np.mean([getattr(r, c) for r in ok])) for c in STAGE_COLUMNS}


def run_bench(plan: BenchPlan) -> BenchResult:
    recorded = load_stream(plan.input, plan.layout) if plan.input is not None else None
    tb = Timebase(plan.time_scale)
    server = None
    endpoint = plan.endpoint
    if plan.scenario == "edge" and endpoint is None:
        server = EdgeServer(config=plan.config, layout=plan.layout, delays=plan.delay,
                            time_scale=plan.time_scale, seed=plan.seed).start()
        endpoint = server.address

    rec = np.full((plan.samples, plan.iterations), np.nan)
    results: list[IterationResult] = []
    partial, error = False, ""
    try:
        for s in range(plan.samples):
            for j in range(plan.iterations):
                frames, ann = recorded or bench_sequence(plan, s, j)
                rng = random.Random(plan.seed * 7919 + s * 1000 + j)
                t_begin = tb.now_us()
                source = LiveSource(frames)
                if plan.scenario == "local":
                    detector = MovementDetector(plan.config, plan.layout)
                    it_log = run_local(source, detector, delays=plan.delay, timebase=tb, rng=rng,
                                       stop_after_command=True)
                else:
                    it_log = run_edge_client(source, endpoint, delays=plan.delay, timebase=tb, rng=rng,
                                             payload_kind=plan.payload_kind, stop_after_command=True)
                t_end = tb.now_us()
                start_us = frames[ann.gesture_start_frame].capture_timestamp
                recognition = measure_recognition_time(it_log, start_us)
                rec[s, j] = recognition
                results.append(IterationResult(s, j, recognition, _stage_means(it_log.records), len(it_log),
                                               (t_begin / 1e3, t_end / 1e3), it_log))
    except (EdgeRunError, NoDetectionError, OSError) as exc:
        partial, error = True, f"{type(exc).__name__}: {exc}"
        log.error("bench aborted: %s", error)
    finally:
        if server is not None:
            server.stop()

    result = BenchResult(plan, results, rec, partial, error)
    if plan.power_log is not None:
        result.power = _join_power(plan, results)
    return result


def _join_power(plan: BenchPlan, results: list[IterationResult]) -> np.ndarray:
    samples = load_power_log(plan.power_log)
    power = np.full((plan.samples, plan.iterations), np.nan)
    for r in results:
        try:
            power[r.sample, r.iteration] = windowed_mean_power(samples, *r.window_ms)
        except NoDataError as exc:
            log.warning("no power data for sample %d iteration %d: %s", r.sample, r.iteration, exc)
    return power


def write_bench(result: BenchResult) -> Path:
    plan = result.plan
    out = plan.out
    out.mkdir(parents=True, exist_ok=True)

    stage_log = out / STAGE_LOG
    if stage_log.exists():
        stage_log.unlink()
    for r in result.iterations:
        r.log.write_csv(stage_log, extra={"sample": r.sample + 1}, append=True)

    with open(out / ITERATIONS, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "iteration", "recognition_s", *STAGE_COLUMNS, "frames", "window_start_ms", "window_end_ms"])
        for r in result.iterations:
            w.writerow([r.sample + 1, r.iteration + 1, repr(r.recognition_s),
                        *(repr(r.stages[c]) for c in STAGE_COLUMNS), r.frames, repr(r.window_ms[0]), repr(r.window_ms[1])])

    summary: dict = {
        "scenario": plan.scenario,
        "samples": plan.samples,
        "iterations": plan.iterations,
        "delay": plan.delay.name,
        "time_scale": plan.time_scale,
        "seed": plan.seed,
        "payload_kind": plan.payload_kind.value,
        "partial": result.partial,
        "error": result.error,
        "completed_iterations": len(result.iterations),
    }
    if result.iterations:
        stage_means = {c: float(np.mean([r.stages[c] for r in result.iterations])) for c in STAGE_COLUMNS}
        summary["stage_means_s"] = {c.removesuffix("_us"): v / 1e6 for c, v in stage_means.items()}
        summary["mean_recognition_s"] = float(np.mean([r.recognition_s for r in result.iterations]))
        with open(out / FIG6, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["stage", "mean_s", "share"])
            parts = {c: stage_means[c] for c in STAGE_COLUMNS[:4]}
            denom = sum(parts.values()) or 1.0
            for c, v in parts.items():
                w.writerow([c.removesuffix("_us"), repr(v / 1e6), repr(v / denom)])

    if not result.partial:
        matrix = result.matrix
        write_matrix_csv(out / MATRIX_A, matrix)
        b = column_aggregate(matrix, "mean")
        write_aggregate_csv(out / MATRIX_B, b)
        write_aggregate_csv(out / FIG5, b)
    else:
        _write_partial_matrix(out / MATRIX_A, result.recognition)

    if result.power is not None:
        power = result.power
        if np.all(np.isfinite(power)):
            pm = SampleMatrix.from_rows(power.tolist())
            write_matrix_csv(out / POWER_A, pm)
            pb = column_aggregate(pm, "mean")
            write_aggregate_csv(out / POWER_B, pb)
            write_aggregate_csv(out / FIG7, pb)
            ps = summarize_power(pb, plan.capacity_wh)
            write_power_summary(out / POWER_SUMMARY, ps)
            summary["power"] = {"mean_power_w": ps.mean_power_w, "capacity_wh": ps.capacity_wh,
                                "lifetime_h": ps.lifetime_h}
        else:
            _write_partial_matrix(out / POWER_A, power)
            summary["power"] = None
            summary["power_error"] = "power log does not cover every iteration"

    with open(out / SUMMARY, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return out


def _write_partial_matrix(path: Path, values: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample"] + [f"it{j + 1}" for j in range(values.shape[1])])
        for i, row in enumerate(values, start=1):
            w.writerow([i] + ["" if not np.isfinite(v) else repr(float(v)) for v in row])
