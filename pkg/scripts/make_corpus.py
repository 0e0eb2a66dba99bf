#!/usr/bin/env python3
"""Write a small annotated corpus: every preset at a few seeds and noise levels."""

import argparse
from pathlib import Path

from pose_offload.synthgen import PRESETS, SequenceSpec, write_sequence


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("corpus"))
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--frames", type=int, default=90)
    ap.add_argument("--noise", type=float, nargs="+", default=[0.0, 4.0])
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    count = 0
    for preset in PRESETS:
        for seed in range(args.seeds):
            for noise in args.noise:
                path = args.out / f"{preset}_s{seed}_n{noise:g}.jsonl"
                write_sequence(path, SequenceSpec(preset, duration_frames=args.frames, noise_px=noise, seed=seed))
                count += 1
    print(f"wrote {count} sequences to {args.out}")


if __name__ == "__main__":
    main()
