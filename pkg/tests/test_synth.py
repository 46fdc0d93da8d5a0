import numpy as np
import pytest
from scipy.signal import welch

from src.dsp.alignment import downsample_envelope
from src.errors import ConfigInvalid
from src.scoring.events import compute_ahi, merge_events, reference_probs
from src.synth.generator import (
    EXHALE_BAND_HZ,
    INHALE_BAND_HZ,
    SynthConfig,
    band_edges,
    effort_signal,
    generate,
    schedule_events,
    subject_variation,
)

SMALL = dict(night_duration_s=120.0, sample_rate_hz=4000)


@pytest.mark.parametrize("seed", range(100))
def test_reference_labels_reproduce_the_true_ahi(seed):
    rate = float(np.random.default_rng(seed).uniform(0.0, 30.0))
    config = SynthConfig(seed=seed, night_duration_s=3600.0, event_rate_per_h=rate)
    events = schedule_events(config, np.random.default_rng(seed))
    assert len(events) == round(rate)

    starts = [10.0 * i for i in range(358)]
    merged = merge_events(reference_probs(starts, events), threshold=0.5, gap_s=10.0, min_dur_s=10.0)
    assert compute_ahi(merged, 1.0) == len(events) / 1.0


def test_twenty_events_per_hour():
    config = SynthConfig(seed=5, night_duration_s=3600.0, event_rate_per_h=20.0)
    events = schedule_events(config, np.random.default_rng(5))
    assert len(events) == 20
    for event in events:
        assert 10.0 <= event.duration_s <= 60.0
    for first, second in zip(events, events[1:]):
        assert second.start_s - first.end_s >= config.min_event_gap_s


@pytest.mark.parametrize("night_s, rate, count", [(600.0, 60.0, 10), (3600.0, 60.0, 60), (3600.0, 90.0, 90)])
def test_dense_nights_shrink_the_gaps(night_s, rate, count):
    config = SynthConfig(seed=7, night_duration_s=night_s, event_rate_per_h=rate)
    events = schedule_events(config, np.random.default_rng(7))
    assert len(events) == count
    assert events[0].start_s >= config.edge_margin_s
    assert events[-1].end_s <= night_s - config.edge_margin_s
    for event in events:
        assert 10.0 <= event.duration_s <= 60.0
    for first, second in zip(events, events[1:]):
        assert second.start_s > first.end_s


def test_impossible_schedule_is_a_config_error():
    config = SynthConfig(night_duration_s=600.0, event_rate_per_h=600.0)
    with pytest.raises(ConfigInvalid):
        schedule_events(config, np.random.default_rng(0))


def test_effort_is_suppressed_inside_events():
    config = SynthConfig(seed=2, night_duration_s=1800.0, event_rate_per_h=20.0, effort_suppression_factor=0.1)
    rng = np.random.default_rng(2)
    events = schedule_events(config, rng)
    effort = effort_signal(config, events, rng)
    t = np.arange(effort.size) / config.effort_rate_hz
    inside = np.zeros(effort.size, dtype=bool)
    for event in events:
        inside |= (t >= event.start_s) & (t <= event.end_s)
    outside_mean = np.abs(effort[~inside]).mean()
    assert np.abs(effort[inside]).mean() < (0.1 + 0.05) * outside_mean


def test_no_events_leaves_effort_untouched():
    night = generate(SynthConfig(seed=1, event_rate_per_h=0.0, **SMALL))
    assert night.events == []
    assert night.true_ahi == 0.0
    assert np.abs(night.effort).max() > 0.8


def test_generation_is_bit_identical_per_seed():
    config = SynthConfig(seed=11, event_rate_per_h=30.0, **SMALL)
    first, second = generate(config), generate(config)
    assert np.array_equal(first.audio.samples, second.audio.samples)
    assert np.array_equal(first.effort, second.effort)
    assert first.events == second.events
    assert first.true_ahi == len(first.events) / (120.0 / 3600.0)


def test_audio_metadata():
    night = generate(dict(seed=3, subject_id="a", night_id="a_n0", **SMALL))
    assert night.audio.sample_rate_hz == 4000
    assert night.audio.samples.size == 120 * 4000
    assert night.audio.samples.dtype == np.float32
    assert np.abs(night.audio.samples).max() <= 0.9 + 1e-6
    assert night.audio.total_sleep_time_h == pytest.approx(120.0 / 3600.0)


def test_audio_envelope_tracks_effort():
    config = SynthConfig(seed=4, night_duration_s=120.0, audio_snr_db=20.0)
    night = generate(config)
    envelope = downsample_envelope(night.audio.samples, config.sample_rate_hz, 500)
    t = np.arange(envelope.size) / 500.0
    effort = np.abs(np.interp(t, np.arange(night.effort.size) / config.effort_rate_hz, night.effort))
    # 100 ms blocks
    blocks = envelope.size // 50
    smooth_env = envelope[:blocks * 50].reshape(blocks, 50).mean(axis=1)
    smooth_eff = effort[:blocks * 50].reshape(blocks, 50).mean(axis=1)
    assert np.corrcoef(smooth_env, smooth_eff)[0, 1] > 0.7


def test_invalid_config_is_reported():
    with pytest.raises(ConfigInvalid):
        generate(dict(night_duration_s=10.0))


def test_subject_variation_is_seeded():
    base = SynthConfig()
    first = subject_variation(0, 3, base, (0.0, 30.0))
    assert first == subject_variation(0, 3, base, (0.0, 30.0))
    assert 0.0 <= first["event_rate_per_h"] <= 30.0
    assert first != subject_variation(0, 4, base, (0.0, 30.0))


@pytest.mark.parametrize("rate", [4000, 16000])
def test_breathing_bands_stay_apart(rate):
    assert band_edges(rate, INHALE_BAND_HZ)[0] > band_edges(rate, EXHALE_BAND_HZ)[1]
    assert band_edges(rate, INHALE_BAND_HZ)[1] < rate / 2.0
    assert band_edges(16000, INHALE_BAND_HZ) == INHALE_BAND_HZ


def test_inhalation_is_brighter_than_exhalation_at_low_rates():
    config = SynthConfig(seed=6, audio_snr_db=40.0, **SMALL)
    night = generate(config)
    t = np.arange(night.audio.samples.size) / config.sample_rate_hz
    effort = np.interp(t, np.arange(night.effort.size) / config.effort_rate_hz, night.effort)
    cutoff = band_edges(config.sample_rate_hz, INHALE_BAND_HZ)[0] - 25.0

    def high_share(samples):
        freqs, power = welch(samples, fs=config.sample_rate_hz, nperseg=1024)
        return power[freqs >= cutoff].sum() / power.sum()

    assert high_share(night.audio.samples[effort > 0.3]) > 0.7
    assert high_share(night.audio.samples[effort < -0.3]) < 0.3
