import numpy as np
import pytest

from src.config.config import FeatureConfig
from src.dsp.features import (
    AudioNight,
    SegmentIndex,
    featurize_segment,
    log_mel,
    mel_center_frequencies,
    mel_filterbank,
    segment_count,
    segment_night,
)
from src.errors import EmptyInput, InvalidValue, NightTooShort, NonFiniteSample, UnsupportedSampleRate


def _night(seconds, rate=100, **kwargs):
    return AudioNight(np.zeros(int(seconds * rate)), rate, "s0", "s0_n0", **kwargs)


def test_thirty_seconds_at_16k_gives_1500_by_64(rng):
    values = log_mel(rng.standard_normal(30 * 16000)).values
    assert values.shape == (1500, 64)
    assert np.all(np.isfinite(values))


def test_default_feature_config_matches_frontend_geometry():
    config = FeatureConfig()
    assert config.frames_per_segment() == 1500
    assert config.trace_points() == 960


def test_silence_hits_the_log_floor():
    values = log_mel(np.zeros(16000), log_floor=1e-10).values
    assert np.all(values == np.log(1e-10))


def test_pure_tone_peaks_in_the_nearest_mel_band():
    rate = 16000
    centers = mel_center_frequencies(64, rate)
    t = np.arange(2 * rate) / rate
    values = log_mel(np.sin(2 * np.pi * centers[20] * t), sample_rate_hz=rate).values
    assert int(np.argmax(values.mean(axis=0))) == 20


def test_filterbank_triangles_have_unit_peak():
    bank = mel_filterbank(16, 1024, 4000)
    assert bank.shape == (16, 513)
    assert np.all(bank >= 0)
    assert np.all(bank.max(axis=1) <= 1.0)
    assert np.all(bank.max(axis=1) > 0.5)


def test_featurize_segment_follows_the_config(rng):
    config = FeatureConfig(sample_rate_hz=4000, window_ms=200, shift_ms=200, mel_bins=16)
    index = SegmentIndex(start_s=10.0)
    seg = featurize_segment(index, rng.standard_normal(30 * 4000), 4000, config)
    assert seg.shape == (150, 16)
    assert seg.segment == index


def test_log_mel_rejects_nan():
    x = np.zeros(1000)
    x[10] = np.nan
    with pytest.raises(NonFiniteSample):
        log_mel(x)


def test_log_mel_rejects_empty_input():
    with pytest.raises(EmptyInput):
        log_mel(np.array([]))


def test_segment_night_counts_full_windows_only():
    segments = segment_night(_night(95), 30.0, 10.0)
    assert len(segments) == segment_count(95, 30, 10) == 7
    assert [s.start_s for s, _ in segments] == [0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0]
    assert all(samples.size == 3000 for _, samples in segments)


def test_exact_thirty_second_night_has_one_segment():
    assert len(segment_night(_night(30))) == 1


def test_short_night_is_rejected():
    with pytest.raises(NightTooShort):
        segment_night(_night(20))


def test_night_validates_rate_and_sleep_time():
    with pytest.raises(UnsupportedSampleRate):
        AudioNight(np.zeros(10), 0, "s", "n")
    with pytest.raises(InvalidValue) as excinfo:
        _night(60, total_sleep_time_h=1.0)
    assert excinfo.value.module == "dsp-features"


def test_segment_index_rejects_negative_start():
    with pytest.raises(ValueError):
        SegmentIndex(start_s=-1.0)


def test_seven_hour_night_has_2518_windows():
    assert segment_count(7 * 3600, 30, 10) == 2518
    assert len(segment_night(_night(7 * 3600, rate=10))) == 2518


def test_one_kilohertz_tone_lands_in_the_nearest_band():
    rate = 16000
    nearest = int(np.argmin(np.abs(mel_center_frequencies(64, rate) - 1000.0)))
    t = np.arange(30 * rate) / rate
    values = log_mel(np.sin(2 * np.pi * 1000.0 * t), sample_rate_hz=rate).values
    assert np.all(np.argmax(values, axis=1) == nearest)


def test_shifting_by_whole_hops_shifts_the_frames(rng):
    hop = 320
    x = rng.standard_normal(5 * 16000)
    shifted = log_mel(x[3 * hop:]).values
    original = log_mel(x).values
    # frames away from the padded edges
    assert np.allclose(shifted[2:-2], original[5:shifted.shape[0] + 1], atol=1e-9)


def test_gain_raises_every_band(rng):
    x = rng.standard_normal(2 * 16000)
    quiet = log_mel(x).values
    loud = log_mel(3.0 * x).values
    assert np.all(loud >= quiet)
    assert np.allclose(loud - quiet, 2 * np.log(3.0))


def test_features_are_byte_identical_across_calls(rng):
    x = rng.standard_normal(30 * 16000)
    assert log_mel(x).values.tobytes() == log_mel(x.copy()).values.tobytes()
