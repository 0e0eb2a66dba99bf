"""Command-line entry point.

Subcommands::

    detect      run the detector over a keypoint file, one line per detection
    serve-edge  run the edge server until interrupted
    bench       local or edge recognition-time campaign
    report      tables and plot-data CSVs from bench directories
    synth       write a synthetic keypoint file and its annotation

Exit status: 0 success, 1 usage error, 2 runtime failure. ``--config``
defaults to ``$POSE_OFFLOAD_CONFIG``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import signal
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .bench import BenchPlan, run_bench, write_bench
from .delays import PRESETS as DELAY_PRESETS, load_delay_model
from .detector import ConfigError, Diagnostic, MovementDetector, load_config
from .pipeline import parse_endpoint
from .pose import LAYOUTS, PoseParseError, read_keypoint_file
from .protocol import PayloadKind
from .report import MissingInputs, report
from .server import EdgeServer
from .synthgen import PRESETS as SYNTH_PRESETS, BodyGeometry, SequenceSpec, write_sequence

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _endpoint(text: str) -> tuple[str, int]:
    try:
        return parse_endpoint(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pose-offload", description="Arm-raise detection with local or edge pose processing.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("detect", help="run the detector over a keypoint file")
    d.add_argument("--input", required=True, type=Path)
    d.add_argument("--config", type=Path, help="detector config (default $POSE_OFFLOAD_CONFIG)")
    d.add_argument("--layout", choices=sorted(LAYOUTS), help="override the config's keypoint layout")
    d.add_argument("--diagnostics", type=Path, help="write per-frame diagnostics CSV here")
    d.set_defaults(func=cmd_detect)

    s = sub.add_parser("serve-edge", help="run the edge server until interrupted")
    s.add_argument("--bind", type=_endpoint, default=("127.0.0.1", 7000), help="host:port (default 127.0.0.1:7000)")
    s.add_argument("--config", type=Path)
    s.add_argument("--delay", default="zero", help=f"preset ({', '.join(DELAY_PRESETS)}) or JSON file")
    s.add_argument("--time-scale", type=_positive_float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_serve_edge)

    b = sub.add_parser("bench", help="recognition-time campaign")
    b.add_argument("--scenario", choices=("local", "edge"), required=True)
    b.add_argument("--samples", type=int, default=5)
    b.add_argument("--iterations", type=int, default=50)
    b.add_argument("--endpoint", type=_endpoint, help="edge server host:port")
    b.add_argument("--self-hosted", action="store_true", help="run a loopback edge server in-process")
    b.add_argument("--delay", default="zero", help=f"preset ({', '.join(DELAY_PRESETS)}) or JSON file")
    b.add_argument("--power-log", type=Path, help="power log to join per iteration")
    b.add_argument("--capacity-wh", type=_positive_float, default=55.5)
    b.add_argument("--out", type=Path, required=True)
    b.add_argument("--time-scale", type=_positive_float, default=1.0,
                   help="wall-clock compression; reported times stay in model seconds")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--config", type=Path)
    b.add_argument("--dwell", type=int, default=1,
                   help="target dwell in processed frames (default 1, see README)")
    b.add_argument("--payload", choices=[k.value for k in PayloadKind], default=PayloadKind.KEYPOINTS.value)
    b.add_argument("--input", type=Path, help="replay this annotated keypoint file instead of fresh gestures")
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("report", help="tables and plot data from bench directories")
    r.add_argument("dirs", nargs="+", type=Path, metavar="dir")
    r.add_argument("--plot-dir", type=Path, help="where to write plot-data CSVs (default: first dir)")
    r.set_defaults(func=cmd_report)

    y = sub.add_parser("synth", help="write a synthetic keypoint file and annotation")
    y.add_argument("--preset", choices=SYNTH_PRESETS, required=True)
    y.add_argument("--frames", type=int, default=60)
    y.add_argument("--fps", type=_positive_float, default=30.0)
    y.add_argument("--noise", type=float, default=0.0, help="uniform jitter amplitude, pixels")
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--layout", choices=sorted(LAYOUTS), default="body25")
    y.add_argument("--repeats", type=int, default=1)
    y.add_argument("--span", type=_positive_float, default=200.0, help="head-to-hip height, pixels")
    y.add_argument("--out", type=Path, required=True)
    y.set_defaults(func=cmd_synth)
    return p


def _config(path: Optional[Path], layout_name: Optional[str] = None):
    config, layout = load_config(path)
    if layout_name:
        layout = LAYOUTS[layout_name]
    return config, layout


def cmd_detect(args) -> int:
    config, layout = _config(args.config, args.layout)
    frames = read_keypoint_file(args.input, layout)
    detector = MovementDetector(config, layout)
    outcomes = detector.run(frames)
    for frame, outcome in zip(frames, outcomes):
        if outcome.detected:
            print(f"{frame.frame_id} {frame.capture_timestamp}")
    if args.diagnostics:
        with open(args.diagnostics, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(Diagnostic.HEADER)
            w.writerows(o.diagnostics.as_row() for o in outcomes)
    return EXIT_OK


def _raise_interrupt(signum, frame):
    raise KeyboardInterrupt


def cmd_serve_edge(args) -> int:
    config, layout = _config(args.config)
    delays = load_delay_model(args.delay)
    try:
        server = EdgeServer(args.bind, config, layout, delays, args.time_scale, seed=args.seed)
    except OSError as exc:
        print(f"pose-offload: cannot bind {args.bind[0]}:{args.bind[1]}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    host, port = server.address
    print(f"listening on {host}:{port} delay={delays.name}", file=sys.stderr, flush=True)
    previous = signal.signal(signal.SIGTERM, _raise_interrupt)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        signal.signal(signal.SIGTERM, previous)
        server.stop()
    print(server.stats_report(), flush=True)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.scenario == "edge" and args.endpoint is None and not args.self_hosted:
        raise UsageError("edge scenario needs --endpoint or --self-hosted")
    if args.scenario == "local" and (args.endpoint is not None or args.self_hosted):
        raise UsageError("--endpoint/--self-hosted only apply to the edge scenario")
    if args.samples < 1 or args.iterations < 1:
        raise UsageError("--samples and --iterations must be >= 1")
    config, layout = _config(args.config)
    try:
        config = replace(config, target_dwell_frames=args.dwell)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    plan = BenchPlan(
        scenario=args.scenario, samples=args.samples, iterations=args.iterations,
        delay=load_delay_model(args.delay), out=args.out,
        endpoint=None if args.self_hosted else args.endpoint,
        power_log=args.power_log, time_scale=args.time_scale, seed=args.seed, config=config, layout=layout,
        payload_kind=PayloadKind(args.payload), capacity_wh=args.capacity_wh, input=args.input,
    )
    result = run_bench(plan)
    out = write_bench(result)
    done = len(result.iterations)
    total = plan.samples * plan.iterations
    line = f"{plan.scenario}: {done}/{total} recognitions -> {out}"
    if done:
        mean = sum(r.recognition_s for r in result.iterations) / done
        line += f", mean recognition {mean:.3f} s"
    print(line)
    if result.partial:
        print(f"pose-offload: bench incomplete: {result.error}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        report(args.dirs, sys.stdout, args.plot_dir)
    except MissingInputs as exc:
        print("pose-offload: missing bench outputs:", file=sys.stderr)
        for path in exc.missing:
            print(f"  {path}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        spec = SequenceSpec(preset=args.preset, fps=args.fps, duration_frames=args.frames,
                            body=BodyGeometry(span=args.span), noise_px=args.noise, seed=args.seed,
                            layout=args.layout, repeats=args.repeats)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ann = write_sequence(args.out, spec)
    print(f"{args.out}: {args.frames} frames, expected_detection={str(ann.expected_detection).lower()}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pose-offload {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, PoseParseError, ConfigError, ValueError) as exc:
        print(f"pose-offload {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
