#!/usr/bin/env python3
"""Local vs edge campaign end to end: power logs, both benches, comparison report.

Defaults run the full 5 x 50 campaign compressed by --time-scale; pass
--time-scale 1 for real-time delays (hours of wall clock).
"""

import argparse
import subprocess
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent


def run(*argv) -> None:
    print("+", " ".join(argv), flush=True)
    subprocess.run(argv, check=True)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--samples", type=int, default=5)
    ap.add_argument("--iterations", type=int, default=50)
    ap.add_argument("--time-scale", default="0.01")
    ap.add_argument("--local-watts", type=float, default=11.43)
    ap.add_argument("--edge-watts", type=float, default=10.47)
    ap.add_argument("--local-power-log", type=Path, help="measured log; otherwise synthesized")
    ap.add_argument("--edge-power-log", type=Path, help="measured log; otherwise synthesized")
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    py = sys.executable
    logs = {}
    for scenario, watts, given in (("local", args.local_watts, args.local_power_log),
                                   ("edge", args.edge_watts, args.edge_power_log)):
        if given is None:
            given = args.out / f"{scenario}_power.log"
            # Long enough for 250 recognitions at roughly 18 s each, in model time.
            run(py, str(HERE / "make_power_log.py"), "--watts", str(watts), "--ripple", "0.3",
                "--duration-s", "36000", "--rate-hz", "2", "--out", str(given))
        logs[scenario] = given

    common = ["--samples", str(args.samples), "--iterations", str(args.iterations), "--time-scale", args.time_scale]
    run(py, "-m", "pose_offload.cli", "bench", "--scenario", "local", "--delay", "local-atom-vpu",
        "--power-log", str(logs["local"]), "--out", str(args.out / "local"), *common)
    run(py, "-m", "pose_offload.cli", "bench", "--scenario", "edge", "--self-hosted", "--delay", "paper-fig6",
        "--power-log", str(logs["edge"]), "--out", str(args.out / "edge"), *common)
    run(py, "-m", "pose_offload.cli", "report", str(args.out / "local"), str(args.out / "edge"),
        "--plot-dir", str(args.out))


if __name__ == "__main__":
    main()
