"""
Night-level event scoring: merge segment predictions into episodes,
compute AHI and severity, and assemble the night report.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel

from ..errors import InvalidValue, NegativeAhi, NonPositiveTst, UnsortedInput

logger = logging.getLogger(__name__)

SEVERITY_CUTOFFS = (5.0, 15.0, 30.0)


@dataclass(frozen=True)
class SdbEvent:
    """Apnoea/hypopnoea interval, reference-labelled or predicted"""
    start_s: float
    end_s: float
    source: Literal["reference", "predicted"] = "reference"

    def __post_init__(self):
        if not self.end_s > self.start_s:
            raise InvalidValue(
                f"event must end after it starts: [{self.start_s}, {self.end_s}]", module="events-metrics"
            )

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


class Severity(str, Enum):
    HEALTHY = "healthy"
    MILD = "mild"
    MODERATE = "moderate"
    SEVERE = "severe"


class NightReport(BaseModel):
    night_id: str
    event_count: int
    tst_h: float
    tst_source: Literal["metadata", "recording"]
    ahi: float
    severity: Severity
    events: List[Tuple[float, float]]
    segment_probs: List[Tuple[float, float]]
    threshold: float
    config_hash: str = ""
    seed: int = 0


def merge_events(
    probs: Sequence[Tuple[float, float]],
    threshold: float = 0.5,
    gap_s: float = 10.0,
    min_dur_s: float = 10.0,
    window_s: float = 30.0,
) -> List[SdbEvent]:
    """
    Turn windowed probabilities into predicted episodes

    Args:
        probs: (start_s, prob) pairs sorted by start
        threshold: Windows with prob >= threshold are positive
        gap_s: Positive windows closer than this (or overlapping) merge
        min_dur_s: Merged episodes shorter than this are dropped
        window_s: Window length in seconds

    Returns:
        Sorted, disjoint predicted events separated by more than gap_s
    """
    if not 0.0 < threshold < 1.0:
        raise InvalidValue(f"threshold must lie in (0, 1), got {threshold}", module="events-metrics")

    previous = None
    for start, _ in probs:
        if previous is not None and start < previous:
            raise UnsortedInput(f"window starts must be sorted, {start} follows {previous}")
        previous = start

    merged: List[List[float]] = []
    for start, prob in probs:
        if prob < threshold:
            continue
        end = start + window_s
        if merged and start - merged[-1][1] <= gap_s:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])

    return [
        SdbEvent(start_s=s, end_s=e, source="predicted")
        for s, e in merged
        if e - s >= min_dur_s
    ]


def compute_ahi(events: Sequence[SdbEvent], tst_h: float) -> float:
    """Events per hour of total sleep time"""
    if not tst_h > 0:
        raise NonPositiveTst(f"total sleep time must be positive, got {tst_h}")
    return len(events) / tst_h


def severity(ahi: float) -> Severity:
    """Clinical severity class at AHI cut-offs 5, 15 and 30"""
    if ahi < 0:
        raise NegativeAhi(f"AHI cannot be negative, got {ahi}")
    mild, moderate, severe = SEVERITY_CUTOFFS
    if ahi < mild:
        return Severity.HEALTHY
    if ahi < moderate:
        return Severity.MILD
    if ahi < severe:
        return Severity.MODERATE
    return Severity.SEVERE


def segment_label(start_s: float, events: Sequence[SdbEvent], window_s: float = 30.0, min_overlap_s: float = 10.0) -> int:
    """1 when the window overlaps any reference event by at least min_overlap_s"""
    end_s = start_s + window_s
    for event in events:
        overlap = min(end_s, event.end_s) - max(start_s, event.start_s)
        if overlap >= min_overlap_s:
            return 1
    return 0


def reference_probs(
    starts: Sequence[float],
    events: Sequence[SdbEvent],
    window_s: float = 30.0,
    min_overlap_s: float = 10.0,
) -> List[Tuple[float, float]]:
    """Ground-truth window labels expressed as (start_s, 0.0 | 1.0) pairs"""
    return [
        (float(s), float(segment_label(s, events, window_s, min_overlap_s)))
        for s in starts
    ]


def recorded_tst(
    duration_s: float,
    total_sleep_time_h: Optional[float] = None,
) -> Tuple[float, Literal["metadata", "recording"]]:
    """Total sleep time from metadata when present, else the recording length"""
    if total_sleep_time_h is not None:
        return total_sleep_time_h, "metadata"
    return duration_s / 3600.0, "recording"


def build_night_report(
    night_id: str,
    probs: Sequence[Tuple[float, float]],
    tst_h: float,
    tst_source: Literal["metadata", "recording"],
    scoring,
    window_s: float = 30.0,
    config_hash: str = "",
    seed: int = 0,
) -> NightReport:
    """
    Run merge -> AHI -> severity on one night's window probabilities

    Args:
        night_id: Night identifier
        probs: Sorted (start_s, prob) pairs
        tst_h: Total sleep time in hours
        tst_source: Where tst_h came from
        scoring: ScoringConfig (threshold, gap_s, min_dur_s)
        window_s: Window length in seconds

    Returns:
        NightReport
    """
    events = merge_events(
        probs,
        threshold=scoring.threshold,
        gap_s=scoring.gap_s,
        min_dur_s=scoring.min_dur_s,
        window_s=window_s,
    )
    ahi = compute_ahi(events, tst_h)
    report = NightReport(
        night_id=night_id,
        event_count=len(events),
        tst_h=tst_h,
        tst_source=tst_source,
        ahi=ahi,
        severity=severity(ahi),
        events=[(e.start_s, e.end_s) for e in events],
        segment_probs=[(float(s), float(p)) for s, p in probs],
        threshold=scoring.threshold,
        config_hash=config_hash,
        seed=seed,
    )
    logger.info(
        f"Night {night_id}: {report.event_count} events, AHI {ahi:.2f} ({report.severity.value}, TST from {tst_source})"
    )
    return report
