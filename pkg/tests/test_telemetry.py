from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pose_offload.telemetry import (
    NoDataError,
    PowerLogError,
    PowerRangeError,
    PowerSample,
    PowerSummary,
    SampleMatrix,
    SensorParams,
    ShapeError,
    battery_current,
    battery_lifetime,
    battery_voltage,
    column_aggregate,
    format_power_line,
    instantaneous_power,
    load_power_log,
    parse_power_line,
    read_aggregate_csv,
    read_matrix_csv,
    read_power_summary,
    relative_improvement,
    sample_for_power,
    summarize_power,
    windowed_mean_power,
    write_aggregate_csv,
    write_matrix_csv,
    write_power_summary,
)


def S(ts=0.0, v=2.40, i=2.5):
    return PowerSample(ts, v, i)


# --- parsing


def test_parse_line():
    assert parse_power_line("1000,2.40,2.75") == PowerSample(1000.0, 2.40, 2.75)


def test_out_of_range_voltage():
    with pytest.raises(PowerRangeError) as info:
        parse_power_line("1000,9.99,2.5", line=4)
    assert info.value.column == 2 and info.value.line == 4


@pytest.mark.parametrize("text, column", [("abc", None), ("1,2", None), ("1,x,2", 2), ("1,2,nan", 3)])
def test_malformed_lines(text, column):
    with pytest.raises(PowerLogError) as info:
        parse_power_line(text)
    assert info.value.column == column


def test_log_file(tmp_path):
    path = tmp_path / "p.log"
    path.write_text("0,2.4,2.6\n\n100,2.4,2.7\n")
    assert [s.timestamp_ms for s in load_power_log(path)] == [0.0, 100.0]
    start = S(12.5, 2.4, 2.597)
    assert parse_power_line(format_power_line(start)) == start


# --- conversions


def test_divider():
    assert battery_voltage(S(v=2.40)) == pytest.approx(11.80)
    assert battery_voltage(S(v=0.0)) == 0.0
    assert battery_voltage(S(v=1.0), SensorParams(r_top=0.0)) == 1.0


@pytest.mark.parametrize("acs, amps", [(2.60, 1.0), (2.50, 0.0), (2.40, -1.0)])
def test_current(acs, amps):
    assert battery_current(S(i=acs)) == pytest.approx(amps)


def test_power_chain_lands_on_reference_mean():
    assert instantaneous_power(S(v=2.40, i=2.597)) == pytest.approx(11.43, abs=0.02)
    assert instantaneous_power(S(i=2.5)) == 0.0


def test_sample_for_power_inverts():
    assert instantaneous_power(sample_for_power(11.43, 0.0)) == pytest.approx(11.43, rel=1e-12)


def test_sensor_params_validation():
    with pytest.raises(ValueError):
        SensorParams(r_bottom=0)
    with pytest.raises(ValueError):
        SensorParams(acs_zero_volts=5.0)


volts = st.floats(0, 5)
params = st.builds(SensorParams, st.floats(0, 1e6), st.floats(1, 1e6), st.floats(0.1, 4.9), st.floats(0.01, 1))


@given(volts, volts, params)
def test_conversions_match_brute_force(v, i, p):
    s = S(0.0, v, i)
    assert battery_voltage(s, p) == pytest.approx(v * (p.r_top + p.r_bottom) / p.r_bottom)
    assert battery_current(s, p) == pytest.approx((i - p.acs_zero_volts) / p.acs_sensitivity)
    assert instantaneous_power(s, p) == pytest.approx(battery_voltage(s, p) * battery_current(s, p))


@given(volts, volts, volts, params)
def test_conversions_are_affine(a, b, i, p):
    mid = (a + b) / 2
    va, vb, vm = (battery_voltage(S(0, x, i), p) for x in (a, b, mid))
    assert vm == pytest.approx((va + vb) / 2, abs=1e-6)
    ia, ib, im = (battery_current(S(0, i, x), p) for x in (a, b, mid))
    assert im == pytest.approx((ia + ib) / 2, abs=1e-6)


# --- windowed mean


def test_constant_power_window():
    samples = [sample_for_power(11.43, t) for t in range(0, 1000, 50)]
    assert windowed_mean_power(samples, 100, 700) == pytest.approx(11.43)


def test_two_sample_trapezoid():
    samples = [sample_for_power(10, 0), sample_for_power(12, 100)]
    assert windowed_mean_power(samples, 0, 100) == pytest.approx(11.0)


def test_partial_overlap_is_clipped_and_edges_interpolated():
    samples = [sample_for_power(10, 0), sample_for_power(12, 100)]
    assert windowed_mean_power(samples, 50, 500) == pytest.approx(11.5)
    assert windowed_mean_power(samples, 25, 25) == pytest.approx(10.5)


def test_window_outside_samples():
    samples = [sample_for_power(10, 0), sample_for_power(12, 100)]
    with pytest.raises(NoDataError):
        windowed_mean_power(samples, 200, 300)
    with pytest.raises(NoDataError):
        windowed_mean_power([], 0, 1)


def test_unsorted_samples_are_sorted():
    samples = [sample_for_power(12, 100), sample_for_power(10, 0)]
    assert windowed_mean_power(samples, 0, 100) == pytest.approx(11.0)


@given(st.floats(0.1, 40), st.floats(0, 900), st.floats(0, 900))
def test_constant_stream_any_window(watts, a, b):
    samples = [sample_for_power(watts, t) for t in range(0, 1000, 37)]
    lo, hi = sorted((a, b))
    assert windowed_mean_power(samples, lo, hi) == pytest.approx(watts, rel=1e-9)


# --- aggregation


def test_constant_matrix():
    m = SampleMatrix.from_rows([[2.0] * 50] * 5)
    assert np.all(column_aggregate(m) == 2.0)
    assert np.all(column_aggregate(m, "sum") == 10.0)


def test_small_matrix_mean():
    assert list(column_aggregate(SampleMatrix.from_rows([[1, 2, 3], [3, 4, 5]]))) == [2, 3, 4]


def test_single_row_is_identity():
    row = [0.3, 1.7, 2.9]
    assert list(column_aggregate(SampleMatrix.from_rows([row]))) == row


@pytest.mark.parametrize("rows", [[], [[]], [[1, 2], [3]], [[1, float("nan")]]])
def test_bad_shapes(rows):
    with pytest.raises(ShapeError):
        SampleMatrix.from_rows(rows)


def test_negative_entries_rejected():
    with pytest.raises(ValueError):
        SampleMatrix.from_rows([[1.0, -0.5]])


def test_unknown_mode():
    with pytest.raises(ValueError):
        column_aggregate(SampleMatrix.from_rows([[1.0]]), "median")


matrices = st.integers(1, 6).flatmap(lambda s: st.integers(1, 8).flatmap(
    lambda n: st.lists(st.lists(st.floats(0, 1e4), min_size=n, max_size=n), min_size=s, max_size=s)))


@given(matrices)
def test_mean_is_sum_over_rows(rows):
    m = SampleMatrix.from_rows(rows)
    s = len(rows)
    assert np.array_equal(column_aggregate(m, "mean"), column_aggregate(m, "sum") / s)
    exact_mean = column_aggregate(m, "mean", exact=True)
    exact_sum = column_aggregate(m, "sum", exact=True)
    assert [q * s for q in exact_mean] == exact_sum
    assert all(isinstance(q, Fraction) for q in exact_sum)


# --- lifetime


def test_lifetimes():
    assert battery_lifetime(55.5, 11.43) == pytest.approx(4.86, abs=0.005)
    assert battery_lifetime(55.5, 10.47) == pytest.approx(5.30, abs=0.005)
    assert battery_lifetime(10, 10) == 1.0
    with pytest.raises(ValueError):
        battery_lifetime(55.5, 0)


def test_relative_improvement():
    assert relative_improvement(5.30, 4.86) == pytest.approx(9.05, abs=0.01)
    assert relative_improvement(4.0, 4.0) == 0.0
    assert relative_improvement(4.86, 5.30) == pytest.approx(-8.30, abs=0.01)


@given(st.floats(0.1, 1e3), st.floats(0.01, 100), st.floats(0.01, 100))
def test_lifetime_decreases_with_power(cap, p, q):
    if p < q:
        assert battery_lifetime(cap, p) > battery_lifetime(cap, q)


# --- CSV outputs


def test_csv_round_trips(tmp_path):
    m = SampleMatrix.from_rows([[0.1, 0.2], [0.3, 0.4]])
    write_matrix_csv(tmp_path / "a.csv", m)
    assert np.array_equal(read_matrix_csv(tmp_path / "a.csv").values, m.values)
    write_aggregate_csv(tmp_path / "b.csv", column_aggregate(m))
    assert (tmp_path / "b.csv").read_text().splitlines()[0] == "iteration,mean_value"
    assert np.array_equal(read_aggregate_csv(tmp_path / "b.csv"), column_aggregate(m))
    summary = summarize_power([11.0, 11.86])
    assert summary == PowerSummary(11.43, 55.5, 55.5 / 11.43)
    write_power_summary(tmp_path / "p.csv", summary)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "mean_power_w,capacity_wh,lifetime_h"
    assert read_power_summary(tmp_path / "p.csv") == summary
