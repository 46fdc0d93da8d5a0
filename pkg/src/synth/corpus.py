"""
Synthetic corpus writer: subjects x nights on disk plus a manifest.
"""
import logging
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

from ..storage.audio_storage import write_wave
from ..storage.manifest_storage import Manifest, ManifestEntry, save_manifest
from ..storage.trace_storage import write_effort_trace, write_labels
from ..tasks.worker import parallel_map
from .generator import SynthConfig, derived_seed, generate, subject_variation

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def write_corpus(
    out_dir: Union[str, Path],
    base: SynthConfig,
    n_subjects: int,
    nights_per_subject: int = 1,
    event_rate_range: Optional[Tuple[float, float]] = None,
    event_rates: Optional[Sequence[float]] = None,
    config_hash: str = "",
    n_workers: Optional[int] = None,
) -> Path:
    """
    Generate and write a synthetic corpus

    Args:
        out_dir: Target directory (audio/, effort/, labels/, manifest.json)
        base: Template night config; its seed is the master seed
        n_subjects: Number of subjects
        nights_per_subject: Nights per subject
        event_rate_range: Per-subject event rate drawn from this range (events/h);
            None keeps base.event_rate_per_h for everyone
        event_rates: Explicit per-subject event rates (overrides the range)
        config_hash: Run config hash recorded in the manifest

    Returns:
        Path of the written manifest
    """
    if n_subjects < 1 or nights_per_subject < 1:
        raise ValueError("need at least one subject and one night")
    if event_rates is not None and len(event_rates) != n_subjects:
        raise ValueError(f"got {len(event_rates)} event rates for {n_subjects} subjects")
    out_dir = Path(out_dir)

    jobs = []
    for s in range(n_subjects):
        variation = subject_variation(base.seed, s, base, event_rate_range)
        if event_rates is not None:
            variation["event_rate_per_h"] = float(event_rates[s])
        for k in range(nights_per_subject):
            subject_id = f"subj{s:03d}"
            night_id = f"{subject_id}_n{k}"
            jobs.append(
                base.model_copy(
                    update={
                        **variation,
                        "seed": derived_seed(base.seed, s, k),
                        "subject_id": subject_id,
                        "night_id": night_id,
                    }
                )
            )

    def write_night(config: SynthConfig) -> ManifestEntry:
        night = generate(config)
        audio_rel = Path("audio") / f"{config.night_id}.wav"
        effort_rel = Path("effort") / f"{config.night_id}.eff"
        labels_rel = Path("labels") / f"{config.night_id}.csv"
        write_wave(out_dir / audio_rel, night.audio.samples, config.sample_rate_hz)
        write_effort_trace(out_dir / effort_rel, night.effort)
        write_labels(out_dir / labels_rel, night.events)
        return ManifestEntry(
            audio_path=audio_rel.as_posix(),
            effort_path=effort_rel.as_posix(),
            labels_path=labels_rel.as_posix(),
            subject_id=config.subject_id,
            night_id=config.night_id,
            total_sleep_time_h=night.audio.total_sleep_time_h,
        )

    entries = parallel_map(write_night, jobs, n_workers)
    manifest = Manifest(config_hash=config_hash, seed=base.seed, entries=entries)
    path = save_manifest(manifest, out_dir / MANIFEST_NAME)
    logger.info(f"✅ Wrote synthetic corpus: {n_subjects} subjects x {nights_per_subject} nights -> {path}")
    return path
