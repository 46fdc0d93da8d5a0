"""
Deterministic synthetic nights: paired audio, 32 Hz effort and event labels.

Effort is a breathing sinusoid with slow amplitude drift, suppressed
inside scheduled events. Audio is band-limited noise whose amplitude
follows |effort| (high band while inhaling, low band while exhaling)
plus white noise at the requested SNR.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.signal import butter, sosfilt, sosfilt_zi

from ..dsp.features import AudioNight
from ..errors import ConfigInvalid
from ..scoring.events import SdbEvent

logger = logging.getLogger(__name__)

MAX_SCHEDULE_ATTEMPTS = 10_000
INHALE_BAND_HZ = (2000.0, 7000.0)
EXHALE_BAND_HZ = (150.0, 1800.0)
REFERENCE_RATE_HZ = 16000
CHUNK_S = 60.0
PEAK = 0.9


class SynthConfig(BaseModel):
    seed: int = Field(0, ge=0)
    night_duration_s: float = Field(3600.0, ge=60.0)
    breathing_rate_hz: float = Field(0.25, gt=0)
    event_rate_per_h: float = Field(0.0, ge=0)
    event_duration_range_s: Tuple[float, float] = (10.0, 60.0)
    audio_snr_db: float = 20.0
    effort_suppression_factor: float = Field(0.1, ge=0, le=1)
    sample_rate_hz: int = Field(16000, gt=0)
    effort_rate_hz: int = Field(32, gt=0)
    min_event_gap_s: float = Field(60.0, ge=0)
    edge_margin_s: float = Field(30.0, ge=0)
    drift_depth: float = Field(0.1, ge=0, lt=1)
    subject_id: str = "synth"
    night_id: str = "synth_n0"

    @model_validator(mode="after")
    def _check(self):
        lo, hi = self.event_duration_range_s
        if not 0 < lo <= hi:
            raise ValueError(f"invalid event duration range {self.event_duration_range_s}")
        return self


@dataclass
class SynthNight:
    audio: AudioNight
    effort: np.ndarray
    effort_rate_hz: int
    events: List[SdbEvent]
    true_ahi: float


def _validated(config) -> SynthConfig:
    try:
        return SynthConfig.model_validate(config.model_dump() if isinstance(config, SynthConfig) else config)
    except ValueError as e:
        raise ConfigInvalid(f"invalid synthetic night config: {e}", module="synthgen")


def _spacing(config: SynthConfig, count: int) -> Tuple[float, float]:
    """(gap, longest duration) that leave room for count events"""
    usable = config.night_duration_s - 2 * config.edge_margin_s
    lo, hi = config.event_duration_range_s
    gap = config.min_event_gap_s
    if count > 1 and count * lo + (count - 1) * gap > usable:
        # dense nights: shrink gaps to half of what the shortest events leave free
        gap = max(0.0, usable - count * lo) / (count - 1) / 2.0
        logger.warning(
            f"{count} events do not fit {config.night_duration_s:.0f} s with "
            f"{config.min_event_gap_s} s gaps; using {gap:.1f} s"
        )
    # cap the draw so the mean duration fits the remaining budget
    budget = usable - (count - 1) * gap
    return gap, min(hi, 2.0 * budget / count - lo)


def schedule_events(config: SynthConfig, rng: np.random.Generator) -> List[SdbEvent]:
    """
    Place round(rate * hours) non-overlapping events

    Durations are drawn uniformly from the configured range; the free time
    left after durations, gaps and edge margins is split at uniformly drawn
    points, which makes the start times a conditioned Poisson process.
    Durations are redrawn when they cannot fit. Nights too short for the
    requested count at min_event_gap_s get proportionally smaller gaps and
    shorter events.
    """
    count = int(round(config.event_rate_per_h * config.night_duration_s / 3600.0))
    if count == 0:
        return []

    usable = config.night_duration_s - 2 * config.edge_margin_s
    lo = config.event_duration_range_s[0]
    gap, hi = _spacing(config, count)
    if hi < lo:
        raise ConfigInvalid(
            f"cannot fit {count} events of at least {lo} s into a {config.night_duration_s} s night",
            module="synthgen",
        )
    for _ in range(MAX_SCHEDULE_ATTEMPTS):
        durations = rng.uniform(lo, hi, size=count)
        slack = usable - durations.sum() - (count - 1) * gap
        if slack >= 0:
            break
    else:
        raise ConfigInvalid(
            f"cannot fit {count} events of {lo}-{hi} s with {gap} s gaps "
            f"into a {config.night_duration_s} s night",
            module="synthgen",
        )

    cuts = np.sort(rng.uniform(0.0, slack, size=count))
    events = []
    cursor = config.edge_margin_s
    previous_cut = 0.0
    for cut, duration in zip(cuts, durations):
        cursor += cut - previous_cut
        events.append(SdbEvent(start_s=float(cursor), end_s=float(cursor + duration), source="reference"))
        cursor += duration + gap
        previous_cut = cut
    return events


def effort_signal(config: SynthConfig, events: List[SdbEvent], rng: np.random.Generator) -> np.ndarray:
    """Full-night effort at effort_rate_hz"""
    n = int(round(config.night_duration_s * config.effort_rate_hz))
    t = np.arange(n) / config.effort_rate_hz

    # drift: a few slow sinusoids (periods 5-30 min)
    periods = rng.uniform(300.0, 1800.0, size=3)
    phases = rng.uniform(0.0, 2 * np.pi, size=3)
    drift = np.sum([np.sin(2 * np.pi * t / p + ph) for p, ph in zip(periods, phases)], axis=0) / 3.0
    amplitude = 1.0 + config.drift_depth * drift

    phase = rng.uniform(0.0, 2 * np.pi)
    effort = amplitude * np.sin(2 * np.pi * config.breathing_rate_hz * t + phase)

    mask = np.ones(n)
    for event in events:
        first = int(np.ceil(event.start_s * config.effort_rate_hz))
        last = int(np.floor(event.end_s * config.effort_rate_hz))
        mask[first:last + 1] = config.effort_suppression_factor
    return effort * mask


def band_edges(sample_rate_hz: int, band: Tuple[float, float]) -> Tuple[float, float]:
    """Band edges scaled from the 16 kHz layout to this sample rate"""
    scale = sample_rate_hz / REFERENCE_RATE_HZ
    return band[0] * scale, band[1] * scale


def _band(sample_rate_hz: int, band: Tuple[float, float]):
    nyquist = sample_rate_hz / 2.0
    low, high = band_edges(sample_rate_hz, band)
    sos = butter(4, [low / nyquist, high / nyquist], btype="bandpass", output="sos")
    # unit-variance white noise keeps roughly bandwidth / nyquist of its power
    gain = np.sqrt(nyquist / (high - low))
    return sos, gain


def audio_signal(config: SynthConfig, effort: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Effort-modulated two-band noise plus white noise, peak-normalised float32"""
    rate = config.sample_rate_hz
    n = int(round(config.night_duration_s * rate))
    t_audio = np.arange(n) / rate
    t_effort = np.arange(effort.size) / config.effort_rate_hz
    effort_at_audio = np.interp(t_audio, t_effort, effort)

    inhale_sos, inhale_gain = _band(rate, INHALE_BAND_HZ)
    exhale_sos, exhale_gain = _band(rate, EXHALE_BAND_HZ)
    zi_inhale = sosfilt_zi(inhale_sos) * 0.0
    zi_exhale = sosfilt_zi(exhale_sos) * 0.0

    clean = np.empty(n)
    chunk = int(CHUNK_S * rate)
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        inhale, zi_inhale = sosfilt(inhale_sos, rng.standard_normal(stop - start), zi=zi_inhale)
        exhale, zi_exhale = sosfilt(exhale_sos, rng.standard_normal(stop - start), zi=zi_exhale)
        e = effort_at_audio[start:stop]
        carrier = np.where(e > 0, inhale * inhale_gain, exhale * exhale_gain)
        clean[start:stop] = np.abs(e) * carrier

    signal_power = float(np.mean(clean * clean))
    noise_std = np.sqrt(signal_power / 10 ** (config.audio_snr_db / 10.0)) if signal_power > 0 else 1e-3
    audio = clean + noise_std * rng.standard_normal(n)

    peak = float(np.max(np.abs(audio)))
    if peak > 0:
        audio *= PEAK / peak
    return audio.astype(np.float32)


def generate(config) -> SynthNight:
    """
    Build one synthetic night, fully determined by config.seed

    Args:
        config: SynthConfig or a dict of its fields

    Returns:
        SynthNight
    """
    config = _validated(config)
    rng = np.random.default_rng(config.seed)

    events = schedule_events(config, rng)
    effort = effort_signal(config, events, rng)
    audio = audio_signal(config, effort, rng)
    hours = config.night_duration_s / 3600.0

    night = AudioNight(
        samples=audio,
        sample_rate_hz=config.sample_rate_hz,
        subject_id=config.subject_id,
        night_id=config.night_id,
        total_sleep_time_h=audio.size / config.sample_rate_hz / 3600.0,
        events=events,
    )
    logger.info(
        f"Synthesised night {config.night_id}: {config.night_duration_s:.0f} s, "
        f"{len(events)} events, SNR {config.audio_snr_db} dB"
    )
    return SynthNight(
        audio=night,
        effort=effort,
        effort_rate_hz=config.effort_rate_hz,
        events=events,
        true_ahi=len(events) / hours,
    )


def derived_seed(master_seed: int, *path: int) -> int:
    """Independent per-subject / per-night seed from the master seed"""
    return int(np.random.SeedSequence([master_seed, *path]).generate_state(1)[0])


def subject_variation(
    master_seed: int,
    subject_index: int,
    base: SynthConfig,
    event_rate_range: Optional[Tuple[float, float]] = None,
    rate_jitter: float = 0.2,
) -> dict:
    """Per-subject breathing rate and event rate drawn from the master seed"""
    rng = np.random.default_rng(derived_seed(master_seed, subject_index))
    breathing = base.breathing_rate_hz * rng.uniform(1.0 - rate_jitter, 1.0 + rate_jitter)
    if event_rate_range is None:
        event_rate = base.event_rate_per_h
    else:
        event_rate = rng.uniform(*event_rate_range)
    return {"breathing_rate_hz": float(breathing), "event_rate_per_h": float(event_rate)}
