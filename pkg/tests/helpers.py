"""Small builders shared by the test modules."""

from pose_offload.pose import BODY_25, KeypointLayout, PoseFrame, make_frame


def pose(head, hand, hip, conf=0.9, frame_id=0, t_us=0, layout: KeypointLayout = BODY_25) -> PoseFrame:
    """A frame with only the three detector landmarks present."""
    if not isinstance(conf, tuple):
        conf = (conf, conf, conf)
    return make_frame(frame_id, t_us, {
        layout.head_index: (*head, conf[0]),
        layout.right_hand_index: (*hand, conf[1]),
        layout.right_hip_index: (*hip, conf[2]),
    }, layout)


def hand_path(head, hip, hands, start_id=0):
    """Frames that keep head and hip fixed while the hand visits ``hands``."""
    return [pose(head, h, hip, frame_id=start_id + k, t_us=(start_id + k) * 33_333) for k, h in enumerate(hands)]


def near_box_edge(frames, config=None, layout: KeypointLayout = BODY_25) -> bool:
    """True if, while armed, the hand came within the margin of a box edge.

    Detector and oracle may legitimately disagree only on such streams.
    """
    from pose_offload.detector import DetectorConfig, MovementDetector
    from pose_offload.pose import extract_landmarks

    config = config or DetectorConfig()
    det = MovementDetector(config, layout)
    for f in frames:
        out = det.process_pose(f)
        d = out.diagnostics
        if d.state_before == 1 and d.edge_margin is not None:
            lm = extract_landmarks(f, layout, config.min_confidence)
            if abs(d.edge_margin) <= config.beta_margin.resolve(lm.body_span):
                return True
    return False


def random_message(rng):
    """A random valid protocol message drawn from ``random.Random`` rng."""
    from pose_offload.protocol import FrameMessage, Heartbeat, PayloadKind, ResultMessage

    kind = rng.randrange(3)
    fid = rng.choice([0, 2**64 - 1, rng.getrandbits(64)])
    ts = rng.randint(-(2**63), 2**63 - 1)
    if kind == 0:
        n = rng.choice([0, 1, rng.randrange(2048)])
        payload = rng.randbytes(n)
        return FrameMessage(fid, ts, rng.choice(list(PayloadKind)), payload)
    if kind == 1:
        return ResultMessage(fid, rng.randrange(2), rng.random() < 0.5, rng.getrandbits(64), ts)
    return Heartbeat(fid, ts)


def write_constant_power_log(path, watts, span_ms=10_000_000, step_ms=1000.0):
    """A power log holding ``watts`` from 0 to ``span_ms``."""
    from pose_offload.telemetry import format_power_line, sample_for_power

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        t = 0.0
        while t <= span_ms:
            fh.write(format_power_line(sample_for_power(watts, t)) + "\n")
            t += step_ms
    return path
