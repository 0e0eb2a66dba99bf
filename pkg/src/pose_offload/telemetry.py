"""Power-log ingestion, sample-matrix aggregation and battery-lifetime estimates.

Power log lines are ``<timestamp_ms>,<divider_out_volts>,<acs_out_volts>``:
the raw voltages read at the divider tap and at the Hall-effect current
sensor output. Conversion to battery volts/amps happens here.
"""

from __future__ import annotations

import csv
import math
from fractions import Fraction
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

ANALOG_MAX_V = 5.0
DEFAULT_CAPACITY_WH = 55.5


class PowerLogError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line, self.column = line, column
        where = ", ".join(p for p in (f"line {line}" if line else "", f"column {column}" if column else "") if p)
        super().__init__(f"{where}: {message}" if where else message)


class PowerRangeError(PowerLogError):
    pass


class NoDataError(ValueError):
    pass


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class PowerSample:
    timestamp_ms: float
    divider_out_volts: float
    acs_out_volts: float


@dataclass(frozen=True)
class SensorParams:
    r_top: float = 470_000.0
    r_bottom: float = 120_000.0
    acs_zero_volts: float = 2.5
    acs_sensitivity: float = 0.100  # V/A, 20 A sensor variant

    def __post_init__(self) -> None:
        # r_top may be 0 (no divider); everything else must be positive.
        if self.r_top < 0 or self.r_bottom <= 0 or self.acs_sensitivity <= 0:
            raise ValueError("resistances and sensitivity must be positive")
        if not 0 < self.acs_zero_volts < ANALOG_MAX_V:
            raise ValueError("acs_zero_volts must lie inside the analog range")


def parse_power_line(text: str, line: Optional[int] = None) -> PowerSample:
    parts = text.strip().split(",")
    if len(parts) != 3:
        raise PowerLogError(f"expected 3 comma-separated fields, got {len(parts)}", line)
    values = []
    for col, part in enumerate(parts, start=1):
        try:
            v = float(part)
        except ValueError:
            raise PowerLogError(f"not a number: {part!r}", line, col) from None
        if not math.isfinite(v):
            raise PowerLogError(f"not finite: {part!r}", line, col)
        values.append(v)
    ts, vdiv, vacs = values
    for col, v in ((2, vdiv), (3, vacs)):
        if not 0.0 <= v <= ANALOG_MAX_V:
            raise PowerRangeError(f"{v} V outside 0..{ANALOG_MAX_V} V", line, col)
    return PowerSample(ts, vdiv, vacs)


def read_power_log(lines: Iterable[str]) -> list[PowerSample]:
    out = []
    for lineno, text in enumerate(lines, start=1):
        if text.strip():
            out.append(parse_power_line(text, lineno))
    return out


def load_power_log(path) -> list[PowerSample]:
    with open(path, encoding="utf-8") as fh:
        return read_power_log(fh)


def format_power_line(sample: PowerSample) -> str:
    return f"{sample.timestamp_ms:g},{sample.divider_out_volts!r},{sample.acs_out_volts!r}"


def battery_voltage(sample: PowerSample, params: SensorParams = SensorParams()) -> float:
    return sample.divider_out_volts * (params.r_top + params.r_bottom) / params.r_bottom


def battery_current(sample: PowerSample, params: SensorParams = SensorParams()) -> float:
    """Amperes; positive means the battery is discharging."""
    return (sample.acs_out_volts - params.acs_zero_volts) / params.acs_sensitivity


def instantaneous_power(sample: PowerSample, params: SensorParams = SensorParams()) -> float:
    return battery_voltage(sample, params) * battery_current(sample, params)


def sample_for_power(watts: float, timestamp_ms: float, divider_out_volts: float = 2.40,
                     params: SensorParams = SensorParams()) -> PowerSample:
    """Inverse conversion: the raw reading that corresponds to ``watts``."""
    volts = divider_out_volts * (params.r_top + params.r_bottom) / params.r_bottom
    amps = watts / volts
    return PowerSample(timestamp_ms, divider_out_volts, params.acs_zero_volts + amps * params.acs_sensitivity)


def windowed_mean_power(samples: Sequence[PowerSample], t_start_ms: float, t_end_ms: float,
                        params: SensorParams = SensorParams()) -> float:
    """Time-weighted mean power over a window, trapezoidal between samples.

    Power is interpolated linearly at window edges that fall between samples.
    The window is clipped to the sampled span; a window that misses the span
    entirely has no data.
    """
    if not samples:
        raise NoDataError("no samples")
    if t_end_ms < t_start_ms:
        raise ValueError("window end precedes its start")
    t = np.array([s.timestamp_ms for s in samples], dtype=float)
    if np.any(np.diff(t) < 0):
        order = np.argsort(t, kind="stable")
        samples = [samples[k] for k in order]
        t = t[order]
    p = np.array([instantaneous_power(s, params) for s in samples], dtype=float)
    lo, hi = max(t_start_ms, t[0]), min(t_end_ms, t[-1])
    if lo > hi:
        raise NoDataError(f"window [{t_start_ms}, {t_end_ms}] ms misses samples [{t[0]}, {t[-1]}] ms")
    if lo == hi:
        return float(np.interp(lo, t, p))
    inner = (t > lo) & (t < hi)
    ts = np.concatenate(([lo], t[inner], [hi]))
    ps = np.concatenate(([np.interp(lo, t, p)], p[inner], [np.interp(hi, t, p)]))
    area = float(np.sum((ps[1:] + ps[:-1]) * np.diff(ts)) / 2.0)
    return area / (hi - lo)


# ------------------------------------------------------------ aggregation


@dataclass(frozen=True)
class SampleMatrix:
    """Rows are independent runs (samples), columns are successive iterations."""

    values: np.ndarray

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "SampleMatrix":
        if not rows:
            raise ShapeError("matrix has no rows")
        width = len(rows[0])
        if width == 0 or any(len(r) != width for r in rows):
            raise ShapeError("ragged matrix: rows differ in length")
        arr = np.array(rows, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ShapeError("matrix has missing (non-finite) entries")
        if np.any(arr < 0):
            raise ValueError("measurements must be non-negative")
        return cls(arr)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def column_aggregate(matrix: SampleMatrix, mode: str = "mean", exact: bool = False):
    """Per-iteration aggregate over samples.

    ``mode="sum"`` is the plain column sum; ``mode="mean"`` divides it by the
    number of samples S. With ``exact=True`` the result is a list of
    :class:`fractions.Fraction` computed without rounding, so
    ``mean * S == sum`` holds exactly; the float path only guarantees
    ``mean == sum / S`` bit for bit.
    """
    values = matrix.values
    if values.ndim != 2 or not np.all(np.isfinite(values)):
        raise ShapeError("matrix must be a fully populated 2-D grid")
    if mode not in ("sum", "mean"):
        raise ValueError(f"unknown mode {mode!r}")
    if exact:
        sums_q = [sum((Fraction(float(v)) for v in col), Fraction(0)) for col in values.T]
        return sums_q if mode == "sum" else [q / values.shape[0] for q in sums_q]
    sums = values.sum(axis=0)
    if mode == "sum":
        return sums
    return sums / values.shape[0]


def battery_lifetime(capacity_wh: float, mean_power_w: float) -> float:
    if not mean_power_w > 0:
        raise ValueError("mean power must be positive")
    return capacity_wh / mean_power_w


def relative_improvement(edge_hours: float, local_hours: float) -> float:
    """Percent by which ``edge_hours`` exceeds ``local_hours``."""
    return 100.0 * (edge_hours - local_hours) / local_hours


# ---------------------------------------------------------------- output


def write_matrix_csv(path, matrix: SampleMatrix) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample"] + [f"it{j + 1}" for j in range(matrix.cols)])
        for i, row in enumerate(matrix.values, start=1):
            writer.writerow([i] + [repr(float(v)) for v in row])


def read_matrix_csv(path) -> SampleMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return SampleMatrix.from_rows([[float(v) for v in r[1:]] for r in rows[1:]])


def write_aggregate_csv(path, vector: Sequence[float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "mean_value"])
        for j, v in enumerate(vector, start=1):
            writer.writerow([j, repr(float(v))])


def read_aggregate_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["mean_value"]) for r in rows])


@dataclass(frozen=True)
class PowerSummary:
    mean_power_w: float
    capacity_wh: float
    lifetime_h: float


def summarize_power(aggregate: Sequence[float], capacity_wh: float = DEFAULT_CAPACITY_WH) -> PowerSummary:
    mean_power = float(np.mean(aggregate))
    return PowerSummary(mean_power, capacity_wh, battery_lifetime(capacity_wh, mean_power))


def write_power_summary(path, summary: PowerSummary) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["mean_power_w", "capacity_wh", "lifetime_h"])
        writer.writerow([repr(summary.mean_power_w), repr(summary.capacity_wh), repr(summary.lifetime_h)])


def read_power_summary(path) -> PowerSummary:
    with open(path, newline="", encoding="utf-8") as fh:
        row = next(csv.DictReader(fh))
    return PowerSummary(float(row["mean_power_w"]), float(row["capacity_wh"]), float(row["lifetime_h"]))
