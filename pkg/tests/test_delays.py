import random
import time

import pytest
from hypothesis import given, strategies as st

from pose_offload.delays import (
    EDGE_GPU,
    LOCAL_ATOM_VPU,
    PAPER_FIG6,
    PRESETS,
    ZERO,
    DelayModel,
    StageDelay,
    Timebase,
    load_delay_model,
)


def test_reference_preset_magnitudes():
    assert PAPER_FIG6.extraction.mean_us == pytest.approx(0.3e6)
    assert PAPER_FIG6.encoding.mean_us == pytest.approx(1.0e6)
    assert PAPER_FIG6.network_one_way.mean_us == pytest.approx(1.1e6)
    assert PAPER_FIG6.processing.mean_us == pytest.approx(1.0e6)
    assert PAPER_FIG6.processing.jitter_us == pytest.approx(0.1e6)
    assert PAPER_FIG6.per_frame_mean_us == pytest.approx(4.5e6)


def test_preset_names():
    assert set(PRESETS) == {"zero", "paper-fig6", "edge-gpu", "local-atom-vpu"}
    assert EDGE_GPU.per_frame_mean_us == PAPER_FIG6.per_frame_mean_us
    assert LOCAL_ATOM_VPU.network_one_way.mean_us == 0 == LOCAL_ATOM_VPU.encoding.mean_us


def test_stage_delay_invariant():
    with pytest.raises(ValueError):
        StageDelay(1.0, 2.0)
    with pytest.raises(ValueError):
        StageDelay(-1.0, 0.0)


@given(st.floats(0, 1e7), st.floats(0, 1), st.integers(0, 2**32))
def test_samples_stay_within_jitter(mean, frac, seed):
    d = StageDelay(mean, mean * frac)
    v = d.sample(random.Random(seed))
    assert mean - d.jitter_us <= v <= mean + d.jitter_us


def test_json_round_trip_and_loading(tmp_path):
    model = DelayModel.from_means("mine", jitter=0.05, encoding=0.5, processing=0.2)
    assert DelayModel.from_json(model.to_json()) == model
    path = tmp_path / "d.json"
    path.write_text(model.to_json())
    assert load_delay_model(str(path)) == model
    assert load_delay_model("zero") is ZERO
    with pytest.raises(ValueError):
        load_delay_model("no-such-preset")
    with pytest.raises(ValueError):
        DelayModel.from_json('{"warp": {"mean_us": 1}}')


def test_timebase_scales_sleep_and_reports_model_time():
    tb = Timebase(0.01)
    t0, w0 = tb.now_us(), time.perf_counter()
    tb.sleep_us(1e6)  # one model second
    wall = time.perf_counter() - w0
    assert 0.009 <= wall < 0.05
    assert tb.now_us() - t0 == pytest.approx(1e6, rel=0.3)


def test_timebase_rejects_nonpositive_scale():
    with pytest.raises(ValueError):
        Timebase(0)
