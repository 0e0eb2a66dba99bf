"""Human-readable tables and plot-data files from one or two bench directories."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, TextIO

import numpy as np

from . import bench
from .telemetry import PowerSummary, read_aggregate_csv, read_power_summary, relative_improvement

REQUIRED = (bench.SUMMARY, bench.MATRIX_A, bench.MATRIX_B, bench.ITERATIONS)
STAGES = ("extraction", "encoding", "network", "processing")

REPORT_STAGES = "report_stages.csv"
REPORT_RECOGNITION = "report_recognition.csv"
REPORT_POWER = "report_power.csv"
REPORT_COMPARISON = "report_comparison.csv"


class MissingInputs(FileNotFoundError):
    def __init__(self, missing: list[Path]):
        self.missing = missing
        super().__init__("missing bench outputs: " + ", ".join(str(p) for p in missing))


@dataclass
class BenchRun:
    path: Path
    summary: dict
    aggregate: np.ndarray
    power: Optional[PowerSummary]

    @property
    def scenario(self) -> str:
        return self.summary.get("scenario", "?")

    @property
    def mean_recognition_s(self) -> float:
        return float(np.mean(self.aggregate))


def missing_inputs(path: Path) -> list[Path]:
    return [path / name for name in REQUIRED if not (path / name).is_file()]


def load_run(path) -> BenchRun:
    path = Path(path)
    missing = missing_inputs(path)
    if missing:
        raise MissingInputs(missing)
    with open(path / bench.SUMMARY, encoding="utf-8") as fh:
        summary = json.load(fh)
    power_file = path / bench.POWER_SUMMARY
    power = read_power_summary(power_file) if power_file.is_file() else None
    return BenchRun(path, summary, read_aggregate_csv(path / bench.MATRIX_B), power)


def _rows_to_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _table(out: TextIO, title: str, header, rows) -> None:
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[k]) for r in cells) for k in range(len(header))]
    out.write(f"\n{title}\n")
    for n, r in enumerate(cells):
        out.write("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n")
        if n == 0:
            out.write("  ".join("-" * w for w in widths) + "\n")


def report(dirs: list, out: TextIO, plot_dir: Optional[Path] = None) -> list[BenchRun]:
    """Print stage, recognition and power tables; write plot-data CSVs.

    Raises :class:`MissingInputs` listing every absent file across ``dirs``.
    """
    paths = [Path(d) for d in dirs]
    missing = [m for p in paths for m in missing_inputs(p)]
    if missing:
        raise MissingInputs(missing)
    runs = [load_run(p) for p in paths]
    plot_dir = Path(plot_dir) if plot_dir is not None else paths[0]
    plot_dir.mkdir(parents=True, exist_ok=True)

    stage_rows = []
    for r in runs:
        means = r.summary.get("stage_means_s", {})
        total = sum(means.get(s, 0.0) for s in STAGES) or 1.0
        for s in STAGES:
            v = means.get(s, 0.0)
            stage_rows.append((r.scenario, s, f"{v:.3f}", f"{100 * v / total:.1f}"))
    _table(out, "Stage decomposition (mean seconds per frame)", ("scenario", "stage", "mean_s", "share_%"), stage_rows)
    _rows_to_csv(plot_dir / REPORT_STAGES, ("scenario", "stage", "mean_s", "share_pct"), stage_rows)

    rec_rows = [(r.scenario, r.summary.get("delay", "?"), r.summary.get("samples"), len(r.aggregate),
                 f"{r.mean_recognition_s:.3f}", f"{float(np.min(r.aggregate)):.3f}", f"{float(np.max(r.aggregate)):.3f}")
                for r in runs]
    _table(out, "Recognition time (seconds)",
           ("scenario", "delay", "samples", "iterations", "mean_s", "min_s", "max_s"), rec_rows)
    curve = [(r.scenario, j, repr(float(v))) for r in runs for j, v in enumerate(r.aggregate, start=1)]
    _rows_to_csv(plot_dir / REPORT_RECOGNITION, ("scenario", "iteration", "mean_recognition_s"), curve)

    power_rows = []
    for r in runs:
        if r.power is None:
            power_rows.append((r.scenario, "no power data", "", ""))
        else:
            p = r.power
            power_rows.append((r.scenario, f"{p.mean_power_w:.2f}", f"{p.capacity_wh:.1f}", f"{p.lifetime_h:.2f}"))
    _table(out, "Power and battery lifetime", ("scenario", "mean_power_w", "capacity_wh", "lifetime_h"), power_rows)
    _rows_to_csv(plot_dir / REPORT_POWER, ("scenario", "mean_power_w", "capacity_wh", "lifetime_h"), power_rows)

    if len(runs) == 2:
        _comparison(runs, out, plot_dir)
    return runs


def _comparison(runs: list[BenchRun], out: TextIO, plot_dir: Path) -> None:
    by = {r.scenario: r for r in runs}
    if set(by) == {"local", "edge"}:
        local, edge = by["local"], by["edge"]
    else:
        local, edge = runs
    ratio = edge.mean_recognition_s / local.mean_recognition_s if local.mean_recognition_s else float("nan")
    rows = [("recognition_ratio_edge_over_local", f"{ratio:.3f}")]
    if local.power is not None and edge.power is not None:
        rows.append(("lifetime_local_h", f"{local.power.lifetime_h:.2f}"))
        rows.append(("lifetime_edge_h", f"{edge.power.lifetime_h:.2f}"))
        rows.append(("relative_lifetime_pct",
                     f"{relative_improvement(edge.power.lifetime_h, local.power.lifetime_h):.2f}"))
    else:
        rows.append(("relative_lifetime_pct", "no power data"))
    _table(out, f"Comparison ({edge.path} vs {local.path})", ("metric", "value"), rows)
    _rows_to_csv(plot_dir / REPORT_COMPARISON, ("metric", "value"), rows)
