import numpy as np
import pytest

from src.dsp.alignment import ENVELOPE_RATE_HZ, downsample_envelope, estimate_lag
from src.errors import DegenerateInput, EmptyInput

MAX_LAG = 30 * ENVELOPE_RATE_HZ


def _delayed_pair(seed, lag, snr_db=None, length=60_000):
    """a and b where b[i] = a[i - lag] (plus optional white noise on b)"""
    rng = np.random.default_rng(seed)
    base = np.abs(rng.standard_normal(length + 2 * MAX_LAG))
    a = base[MAX_LAG:MAX_LAG + length]
    b = base[MAX_LAG - lag:MAX_LAG - lag + length].copy()
    if snr_db is not None:
        noise_std = np.sqrt(np.var(b) / 10 ** (snr_db / 10.0))
        b += noise_std * rng.standard_normal(length)
    return a, b


def test_positive_lag_means_b_is_delayed():
    a, b = _delayed_pair(0, 37, length=10_000)
    estimate = estimate_lag(a, b, max_lag_s=1.0)
    assert estimate.lag_samples == 37
    assert estimate.lag_s == pytest.approx(37 / ENVELOPE_RATE_HZ)
    assert estimate.peak_normalized_correlation == pytest.approx(1.0)


def test_swapping_inputs_negates_the_lag():
    a, b = _delayed_pair(1, 37, length=10_000)
    assert estimate_lag(b, a, max_lag_s=1.0).lag_samples == -37


@pytest.mark.parametrize("seed", range(100))
def test_injected_delays_recovered_at_10db(seed):
    lag = int(np.random.default_rng(10_000 + seed).integers(-MAX_LAG, MAX_LAG + 1))
    a, b = _delayed_pair(seed, lag, snr_db=10.0)
    estimate = estimate_lag(a, b, max_lag_s=30.0)
    assert abs(estimate.lag_samples - lag) <= 1


def test_zero_variance_envelope_is_degenerate():
    with pytest.raises(DegenerateInput):
        estimate_lag(np.ones(2000), np.random.default_rng(0).random(2000), max_lag_s=1.0)


def test_envelope_shorter_than_search_range():
    with pytest.raises(EmptyInput):
        estimate_lag(np.random.default_rng(0).random(100), np.random.default_rng(1).random(100), max_lag_s=1.0)


def test_integer_ratio_envelope_is_a_block_mean():
    x = np.tile([1.0, -1.0], 16000)
    envelope = downsample_envelope(x, 16000, 500)
    assert envelope.shape == (1000,)
    assert np.allclose(envelope, 1.0)


def test_fractional_ratio_envelope_length():
    x = np.random.default_rng(0).standard_normal(44100)
    envelope = downsample_envelope(x, 44100, 500)
    assert abs(envelope.size - 500) <= 1
    assert np.all(envelope >= 0)


def test_empty_signal_has_no_envelope():
    with pytest.raises(EmptyInput):
        downsample_envelope(np.array([]), 16000)


def test_identical_envelopes_align_at_zero():
    a = np.abs(np.random.default_rng(3).standard_normal(10_000))
    estimate = estimate_lag(a, a.copy(), max_lag_s=1.0)
    assert estimate.lag_samples == 0
    assert abs(estimate.peak_normalized_correlation - 1.0) <= 1e-9


def test_lag_ignores_channel_gain():
    a, b = _delayed_pair(4, -120, length=10_000)
    plain = estimate_lag(a, b, max_lag_s=1.0)
    scaled = estimate_lag(0.01 * a, 250.0 * b, max_lag_s=1.0)
    assert scaled.lag_samples == plain.lag_samples == -120
    assert scaled.peak_normalized_correlation == pytest.approx(plain.peak_normalized_correlation, abs=1e-9)


def test_independent_noise_has_a_weak_peak():
    rng = np.random.default_rng(5)
    a, b = rng.standard_normal((2, 60 * ENVELOPE_RATE_HZ))
    estimate = estimate_lag(a, b, max_lag_s=1000 / ENVELOPE_RATE_HZ)
    assert estimate.peak_normalized_correlation < 0.2


def test_silence_gives_a_zero_envelope():
    envelope = downsample_envelope(np.zeros(2 * 16000), 16000)
    assert envelope.shape == (1000,)
    assert not envelope.any()


def test_constant_sine_has_a_flat_envelope():
    t = np.arange(10 * 16000) / 16000
    envelope = downsample_envelope(np.sin(2 * np.pi * 1000.0 * t), 16000)
    assert envelope.shape == (5000,)
    tail = envelope[10:]
    assert tail.std() / tail.mean() < 0.05
