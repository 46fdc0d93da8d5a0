"""
Paired-data manifest: one entry per night pointing at its audio, effort
and label files. Relative paths resolve against the manifest's directory.
"""
import json
import os
import logging
from pathlib import Path
from typing import List, Optional, Union

from pydantic import BaseModel, Field, ValidationError

from ..errors import ConfigInvalid

logger = logging.getLogger(__name__)


class ManifestEntry(BaseModel):
    audio_path: str
    effort_path: Optional[str] = None
    labels_path: Optional[str] = None
    subject_id: str
    night_id: str
    total_sleep_time_h: Optional[float] = Field(None, gt=0)
    # Lag of the effort reference behind the audio, from `align`
    effort_offset_s: float = 0.0


class Manifest(BaseModel):
    config_hash: str = ""
    seed: int = 0
    entries: List[ManifestEntry] = []
    root: Optional[str] = Field(None, exclude=True)

    def resolve(self, relative: Optional[str]) -> Optional[Path]:
        if relative is None:
            return None
        path = Path(relative)
        if path.is_absolute() or self.root is None:
            return path
        return Path(self.root) / path

    def subjects(self) -> List[str]:
        return sorted({e.subject_id for e in self.entries})

    def for_subjects(self, subjects) -> List[ManifestEntry]:
        wanted = set(subjects)
        return [e for e in self.entries if e.subject_id in wanted]

    def entry(self, night_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.night_id == night_id:
                return e
        raise ConfigInvalid(f"night {night_id!r} not in manifest")

    def rebased(self, root: Union[str, Path]) -> "Manifest":
        """Copy whose relative paths resolve to the same files from a new directory"""
        root = Path(root)

        def move(relative: Optional[str]) -> Optional[str]:
            if relative is None or Path(relative).is_absolute():
                return relative
            return Path(os.path.relpath(self.resolve(relative), root)).as_posix()

        entries = [
            e.model_copy(update={
                "audio_path": move(e.audio_path),
                "effort_path": move(e.effort_path),
                "labels_path": move(e.labels_path),
            })
            for e in self.entries
        ]
        return Manifest(config_hash=self.config_hash, seed=self.seed, entries=entries, root=str(root))


def load_manifest(path: Union[str, Path]) -> Manifest:
    path = Path(path)
    try:
        manifest = Manifest.model_validate(json.loads(path.read_text()))
    except FileNotFoundError:
        raise ConfigInvalid(f"manifest not found: {path}")
    except (json.JSONDecodeError, ValidationError) as e:
        raise ConfigInvalid(f"invalid manifest {path}: {e}")
    manifest.root = str(path.parent)
    logger.info(f"Loaded manifest {path} ({len(manifest.entries)} nights, {len(manifest.subjects())} subjects)")
    return manifest


def save_manifest(manifest: Manifest, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
    return path
