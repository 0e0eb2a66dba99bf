#!/usr/bin/env python3
"""Synthesize a raw power log (timestamp_ms, divider tap V, current sensor V).

Useful for exercising the bench power join without hardware. Power is a
constant mean with optional uniform ripple.
"""

import argparse
import random

from pose_offload.telemetry import format_power_line, sample_for_power


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--watts", type=float, required=True)
    ap.add_argument("--ripple", type=float, default=0.0, help="uniform half-width, watts")
    ap.add_argument("--duration-s", type=float, default=3600.0)
    ap.add_argument("--rate-hz", type=float, default=10.0)
    ap.add_argument("--tap-volts", type=float, default=2.40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    step = 1000.0 / args.rate_hz
    n = int(args.duration_s * args.rate_hz) + 1
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for k in range(n):
            w = args.watts + (rng.uniform(-args.ripple, args.ripple) if args.ripple else 0.0)
            fh.write(format_power_line(sample_for_power(w, k * step, args.tap_volts)) + "\n")
    print(f"wrote {n} samples to {args.out}")


if __name__ == "__main__":
    main()
