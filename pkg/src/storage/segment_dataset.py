"""
Segment datasets: every 30-s window of every manifest night with its
reference effort slice, its segment label and lazily computed log-Mel
features (through the feature cache).
"""
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..cache.feature_cache import FeatureCache, feature_cache
from ..config.config import RunConfig
from ..dsp.features import AudioNight, SegmentIndex, featurize_segment, segment_night
from ..errors import EmptyDataset
from ..models.effort_estimator import EFFORT_RATE_HZ, EffortTrace, expected_points
from ..scoring.events import SdbEvent, segment_label
from ..tasks.worker import parallel_map
from .audio_storage import read_wave
from .manifest_storage import Manifest, ManifestEntry
from .trace_storage import read_effort_trace, read_labels

logger = logging.getLogger(__name__)


@dataclass
class NightInfo:
    night_id: str
    subject_id: str
    duration_s: float
    total_sleep_time_h: Optional[float] = None
    events: Optional[List[SdbEvent]] = None


class NightSource:
    """Audio of one night, loaded on first use"""

    def __init__(
        self,
        loader: Callable[[], AudioNight],
        preloaded: Optional[AudioNight] = None,
        tag: str = "",
    ):
        self._loader = loader
        self._night = preloaded
        # identifies the audio file in feature cache keys
        self.tag = tag
        self._lock = threading.Lock()

    @property
    def night(self) -> AudioNight:
        with self._lock:
            if self._night is None:
                self._night = self._loader()
            return self._night

    def release(self):
        self._night = None


@dataclass
class SegmentRecord:
    night_id: str
    subject_id: str
    index: SegmentIndex
    label: Optional[int] = None
    effort: Optional[EffortTrace] = None
    features: Optional[np.ndarray] = field(default=None, repr=False)


class SegmentDataset:
    """
    Ordered collection of segment records.

    Records of a night are contiguous and sorted by start time.
    """

    def __init__(
        self,
        records: List[SegmentRecord],
        nights: Dict[str, NightInfo],
        sources: Optional[Dict[str, NightSource]] = None,
        config: Optional[RunConfig] = None,
        cache: Optional[FeatureCache] = None,
    ):
        self.records = records
        self.nights = nights
        self.sources = sources or {}
        self.config = config or RunConfig()
        self.cache = cache
        self._digest = self.config.features.digest()

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> SegmentRecord:
        return self.records[i]

    @classmethod
    def from_arrays(
        cls,
        features: Sequence[np.ndarray],
        efforts: Optional[Sequence[np.ndarray]] = None,
        labels: Optional[Sequence[int]] = None,
        subject_ids: Optional[Sequence[str]] = None,
        night_ids: Optional[Sequence[str]] = None,
        starts_s: Optional[Sequence[float]] = None,
    ) -> "SegmentDataset":
        """In-memory dataset, mainly for tests and synthetic experiments"""
        n = len(features)
        subject_ids = subject_ids or ["s0"] * n
        night_ids = night_ids or [f"{s}_n0" for s in subject_ids]
        starts_s = starts_s if starts_s is not None else [10.0 * i for i in range(n)]
        records = []
        nights: Dict[str, NightInfo] = {}
        for i in range(n):
            index = SegmentIndex(start_s=float(starts_s[i]))
            effort = EffortTrace.from_raw(efforts[i]) if efforts is not None else None
            label = int(labels[i]) if labels is not None else None
            records.append(
                SegmentRecord(
                    night_id=night_ids[i],
                    subject_id=subject_ids[i],
                    index=index,
                    label=label,
                    effort=effort,
                    features=np.asarray(features[i], dtype=np.float32).astype(np.float64),
                )
            )
            info = nights.setdefault(night_ids[i], NightInfo(night_ids[i], subject_ids[i], 0.0))
            info.duration_s = max(info.duration_s, index.end_s)
        return cls(records, nights)

    def segment_features(self, i: int) -> np.ndarray:
        """(frames, mel_bins) log-Mel map, float32-quantised, as float64"""
        record = self.records[i]
        if record.features is not None:
            return record.features

        key = None
        if self.cache is not None and self.cache.enabled:
            source = self.sources.get(record.night_id)
            key = self.cache.key(record.night_id, record.index.start_s, self._digest, source.tag if source else "")
            cached = self.cache.get(key)
            if cached is not None:
                return cached.astype(np.float64)

        night = self.sources[record.night_id].night
        rate = night.sample_rate_hz
        start = int(round(record.index.start_s * rate))
        length = int(round(record.index.duration_s * rate))
        segment = featurize_segment(record.index, night.samples[start:start + length], rate, self.config.features)
        values = segment.values.astype(np.float32)
        if key is not None:
            self.cache.set(key, values)
        return values.astype(np.float64)

    def features_batch(self, indices: Sequence[int]) -> List[np.ndarray]:
        return [self.segment_features(i) for i in indices]

    def materialize(self, n_workers: int = 1) -> int:
        """Compute (and cache) every segment's features; returns the count"""
        parallel_map(self.segment_features, range(len(self.records)), n_workers)
        return len(self.records)

    def labels(self) -> np.ndarray:
        return np.array([-1 if r.label is None else r.label for r in self.records], dtype=np.int64)

    def has_labels(self) -> bool:
        return all(r.label is not None for r in self.records)

    def has_effort(self) -> bool:
        return all(r.effort is not None for r in self.records)

    def subjects(self) -> List[str]:
        return sorted({r.subject_id for r in self.records})

    def night_indices(self) -> Dict[str, List[int]]:
        out: Dict[str, List[int]] = {}
        for i, r in enumerate(self.records):
            out.setdefault(r.night_id, []).append(i)
        return out

    def subset(self, subjects: Sequence[str]) -> "SegmentDataset":
        wanted = set(subjects)
        records = [r for r in self.records if r.subject_id in wanted]
        nights = {k: v for k, v in self.nights.items() if v.subject_id in wanted}
        sources = {k: v for k, v in self.sources.items() if k in nights}
        return SegmentDataset(records, nights, sources, self.config, self.cache)


def _effort_slice(effort: np.ndarray, index: SegmentIndex, offset_s: float) -> Optional[np.ndarray]:
    first = int(round((index.start_s + offset_s) * EFFORT_RATE_HZ))
    count = expected_points(index.duration_s)
    if first < 0 or first + count > effort.size:
        return None
    return effort[first:first + count]


def _night_records(entry: ManifestEntry, manifest: Manifest, config: RunConfig):
    features = config.features
    audio_path = manifest.resolve(entry.audio_path)
    night = read_wave(
        audio_path,
        expected_rate=features.sample_rate_hz,
        subject_id=entry.subject_id,
        night_id=entry.night_id,
        total_sleep_time_h=entry.total_sleep_time_h,
    )
    events = read_labels(manifest.resolve(entry.labels_path)) if entry.labels_path else None
    effort = read_effort_trace(manifest.resolve(entry.effort_path)) if entry.effort_path else None

    records = []
    dropped = 0
    for index, _ in segment_night(night, features.duration_s, features.shift_s):
        trace = None
        if effort is not None:
            window = _effort_slice(effort, index, entry.effort_offset_s)
            if window is None:
                dropped += 1
                continue
            trace = EffortTrace.from_raw(window, index)
        label = None
        if events is not None:
            label = segment_label(index.start_s, events, index.duration_s, config.scoring.label_overlap_s)
        records.append(SegmentRecord(entry.night_id, entry.subject_id, index, label, trace))

    if dropped:
        logger.warning(f"Night {entry.night_id}: dropped {dropped} segments without a full effort reference")
    info = NightInfo(entry.night_id, entry.subject_id, night.duration_s, entry.total_sleep_time_h, events)
    return records, info, night


def _source_tag(path: Path) -> str:
    stat = path.stat()
    return f"{path.resolve()}:{stat.st_size}:{stat.st_mtime_ns}"


def build_segment_dataset(
    manifest: Manifest,
    config: RunConfig,
    subjects: Optional[Sequence[str]] = None,
    cache: Optional[FeatureCache] = feature_cache,
) -> SegmentDataset:
    """
    Segment every night of the manifest (optionally only some subjects)

    Args:
        manifest: Loaded manifest
        config: Run configuration (features, scoring.label_overlap_s)
        subjects: Restrict to these subject ids
        cache: Feature cache for lazy log-Mel computation

    Returns:
        SegmentDataset
    """
    entries = manifest.for_subjects(subjects) if subjects is not None else manifest.entries
    if not entries:
        raise EmptyDataset("manifest selection contains no nights")

    records: List[SegmentRecord] = []
    nights: Dict[str, NightInfo] = {}
    sources: Dict[str, NightSource] = {}
    for entry in entries:
        night_records, info, night = _night_records(entry, manifest, config)
        records.extend(night_records)
        nights[entry.night_id] = info
        sources[entry.night_id] = NightSource(
            lambda e=entry: read_wave(
                manifest.resolve(e.audio_path),
                expected_rate=config.features.sample_rate_hz,
                subject_id=e.subject_id,
                night_id=e.night_id,
                total_sleep_time_h=e.total_sleep_time_h,
            ),
            preloaded=night,
            tag=_source_tag(manifest.resolve(entry.audio_path)),
        )

    logger.info(f"Built segment dataset: {len(records)} segments from {len(nights)} nights")
    return SegmentDataset(records, nights, sources, config, cache)
