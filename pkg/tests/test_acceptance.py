"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the lines are also
collected in the terminal summary.
"""

import csv
import random
import time

import numpy as np

from pose_offload.cli import EXIT_OK, main
from pose_offload.delays import LOCAL_ATOM_VPU, PAPER_FIG6
from pose_offload.bench import BenchPlan, run_bench
from pose_offload.detector import DetectorConfig, MovementDetector, detection_frame_ids
from pose_offload.pipeline import ReplaySource, run_edge_client, run_local
from pose_offload.pose import Keypoint, Point2D, PoseFrame
from pose_offload.protocol import IncompleteMessage, ProtocolError, decode_message, encode_message
from pose_offload.server import EdgeServer
from pose_offload.synthgen import NEGATIVE_PRESETS, PRESETS, BodyGeometry, SequenceSpec, generate, oracle_detect
from pose_offload.telemetry import SampleMatrix, battery_lifetime, column_aggregate, relative_improvement

from conftest import ACCEPTANCE_LINES
from helpers import near_box_edge, random_message


def verdict(number, title, ok, detail, elapsed, budget):
    ok = ok and elapsed < budget
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}: {detail} ({elapsed:.2f} s, budget {budget:g} s)"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_c01_battery_lifetime():
    t = time.perf_counter()
    local, edge = battery_lifetime(55.5, 11.43), battery_lifetime(55.5, 10.47)
    ok = abs(local - 4.86) <= 0.005 and abs(edge - 5.30) <= 0.005
    verdict(1, "battery lifetime", ok, f"local {local:.4f} h, edge {edge:.4f} h", time.perf_counter() - t, 1)


def test_c02_relative_lifetime():
    t = time.perf_counter()
    pct = relative_improvement(5.30, 4.86)
    verdict(2, "relative lifetime", 8.5 <= pct <= 9.5, f"{pct:.2f}%", time.perf_counter() - t, 1)


def test_c03_stage_decomposition(tmp_path):
    # 25 recognitions of two pipeline passes each = 50 stop-and-wait iterations.
    out = tmp_path / "edge"
    t = time.perf_counter()
    code = main(["bench", "--scenario", "edge", "--self-hosted", "--delay", "paper-fig6", "--samples", "1",
                 "--iterations", "25", "--time-scale", "0.01", "--out", str(out)])
    elapsed = time.perf_counter() - t
    with open(out / "stage_log.csv") as fh:
        rows = list(csv.DictReader(fh))
    mean = {c: np.mean([float(r[f"{c}_us"]) for r in rows]) / 1e6
            for c in ("extraction", "encoding", "network", "processing")}
    target = {"extraction": 0.3, "encoding": 1.0, "network": 2.2, "processing": 1.0}
    ok = code == EXIT_OK and len(rows) >= 50 and all(abs(mean[c] / target[c] - 1) <= 0.15 for c in target)
    detail = f"{len(rows)} iterations; " + ", ".join(f"{c} {mean[c]:.3f} s" for c in target)
    verdict(3, "stage decomposition", ok, detail, elapsed, 5)


def test_c04_edge_local_ratio(tmp_path):
    t = time.perf_counter()
    scale = 0.005
    local = run_bench(BenchPlan("local", 2, 5, LOCAL_ATOM_VPU, tmp_path / "l", time_scale=scale))
    edge = run_bench(BenchPlan("edge", 2, 5, PAPER_FIG6, tmp_path / "e", time_scale=scale))
    elapsed = time.perf_counter() - t
    ratio = float(np.mean(edge.recognition) / np.mean(local.recognition))
    ok = not (local.partial or edge.partial) and abs(ratio / 0.5 - 1) <= 0.15
    detail = (f"edge {np.mean(edge.recognition):.2f} s / local {np.mean(local.recognition):.2f} s "
              f"= {ratio:.3f}")
    verdict(4, "edge vs local recognition", ok, detail, elapsed, 60)


def test_c05_detector_correctness():
    t = time.perf_counter()
    noisy = 0.02 * BodyGeometry().span
    hits0 = sum(bool(detection_frame_ids(generate(SequenceSpec("raise_right", seed=s))[0])) for s in range(200))
    hits = sum(bool(detection_frame_ids(generate(SequenceSpec("raise_right", seed=s, noise_px=noisy))[0]))
               for s in range(200))
    false = {p: sum(bool(detection_frame_ids(generate(SequenceSpec(p, seed=s, noise_px=noisy))[0]))
                    for s in range(200)) for p in NEGATIVE_PRESETS}
    ok = hits0 == 200 and hits >= 190 and all(v <= 2 for v in false.values())
    detail = (f"raise_right {hits0}/200 noiseless, {hits}/200 at 0.02H; false detections "
              + ", ".join(f"{p} {v}" for p, v in false.items()))
    verdict(5, "detector correctness", ok, detail, time.perf_counter() - t, 30)


def test_c06_oracle_equivalence():
    t = time.perf_counter()
    rng = random.Random(2024)
    agree, unexplained = 0, []
    for k in range(1000):
        spec = SequenceSpec(rng.choice(PRESETS), seed=k, noise_px=rng.uniform(0, 6),
                            duration_frames=rng.randint(40, 120),
                            body=BodyGeometry(rng.uniform(250, 390), rng.uniform(60, 140), rng.uniform(150, 260)))
        frames, _ = generate(spec)
        if bool(detection_frame_ids(frames)) == oracle_detect(frames):
            agree += 1
        elif not near_box_edge(frames):
            unexplained.append(k)
    ok = agree >= 990 and not unexplained
    detail = f"{agree}/1000 agree, {1000 - agree - len(unexplained)} boundary, {len(unexplained)} unexplained"
    verdict(6, "oracle equivalence", ok, detail, time.perf_counter() - t, 60)


def test_c07_placement_transparency():
    t = time.perf_counter()
    mismatches = []
    with EdgeServer() as srv:
        for k in range(50):
            preset = "raise_right" if k % 5 else NEGATIVE_PRESETS[k // 5 % len(NEGATIVE_PRESETS)]
            frames, _ = generate(SequenceSpec(preset, seed=k, noise_px=4, duration_frames=150, repeats=2))
            local = run_local(ReplaySource(frames), MovementDetector()).detections
            edge = run_edge_client(ReplaySource(frames), srv.address).detections
            if local != edge:
                mismatches.append(k)
    verdict(7, "placement transparency", not mismatches, f"{50 - len(mismatches)}/50 identical",
            time.perf_counter() - t, 60)


def test_c08_protocol_robustness():
    t = time.perf_counter()
    rng = random.Random(8)
    exact = 0
    valid = []
    for _ in range(10_000):
        msg = random_message(rng)
        data = encode_message(msg)
        valid.append(data)
        exact += decode_message(data) == msg and encode_message(decode_message(data)) == data
    crashes = 0
    for k in range(10_000):
        if k % 2:
            data = rng.randbytes(rng.randrange(64))
        else:
            data = bytearray(rng.choice(valid))
            for _ in range(rng.randint(1, 4)):
                op = rng.randrange(3)
                if op == 0 and data:
                    data[rng.randrange(len(data))] = rng.randrange(256)
                elif op == 1:
                    del data[rng.randrange(len(data) + 1):]
                else:
                    data.extend(rng.randbytes(rng.randrange(8)))
            data = bytes(data)
        try:
            decode_message(data)
        except (ProtocolError, IncompleteMessage):
            pass
        except Exception:  # noqa: BLE001 - any other exception is the failure being counted
            crashes += 1
    ok = exact == 10_000 and crashes == 0
    verdict(8, "protocol robustness", ok, f"{exact}/10000 bit-exact, {crashes} crashes in 10000 fuzz inputs",
            time.perf_counter() - t, 30)


def test_c09_aggregation_identity():
    t = time.perf_counter()
    rng = np.random.default_rng(9)
    exact_ok = float_ok = 0
    for _ in range(1000):
        s, n = int(rng.integers(1, 9)), int(rng.integers(1, 61))
        m = SampleMatrix.from_rows(rng.uniform(0, 20, (s, n)).tolist())
        mean_q, sum_q = column_aggregate(m, "mean", exact=True), column_aggregate(m, "sum", exact=True)
        exact_ok += [q * s for q in mean_q] == sum_q
        float_ok += np.array_equal(column_aggregate(m, "mean"), column_aggregate(m, "sum") / s)
    ok = exact_ok == 1000 and float_ok == 1000
    verdict(9, "aggregation identity", ok, f"exact mean*S == sum on {exact_ok}/1000, float mean == sum/S on {float_ok}/1000",
            time.perf_counter() - t, 5)


def _transform(frames, s, dx, dy):
    return [PoseFrame(f.frame_id, f.capture_timestamp, tuple(
        k if k.confidence == 0 else Keypoint(Point2D(k.position.x * s + dx, k.position.y * s + dy), k.confidence)
        for k in f.keypoints)) for f in frames]


def test_c10_geometry_invariance():
    t = time.perf_counter()
    rng = random.Random(10)
    cfg = DetectorConfig()
    same = 0
    for k in range(100):
        preset = rng.choice(PRESETS)
        frames, _ = generate(SequenceSpec(preset, seed=k, noise_px=3, duration_frames=150, repeats=2))
        base = [(o.diagnostics.frame_id, o.diagnostics.event) for o in MovementDetector(cfg).run(frames)]
        moved = _transform(frames, rng.uniform(0.3, 4.0), rng.uniform(-500, 500), rng.uniform(-500, 500))
        got = [(o.diagnostics.frame_id, o.diagnostics.event) for o in MovementDetector(cfg).run(moved)]
        same += got == base
    verdict(10, "geometry invariance", same == 100, f"{same}/100 transforms preserve the event sequence",
            time.perf_counter() - t, 30)
