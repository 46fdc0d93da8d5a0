"""
Storage module initialization
"""
from .audio_storage import read_wave, write_wave
from .trace_storage import read_effort_trace, read_labels, write_effort_trace, write_labels
from .manifest_storage import Manifest, ManifestEntry, load_manifest, save_manifest
from .segment_dataset import SegmentDataset, SegmentRecord, build_segment_dataset

__all__ = [
    'read_wave',
    'write_wave',
    'read_effort_trace',
    'read_labels',
    'write_effort_trace',
    'write_labels',
    'Manifest',
    'ManifestEntry',
    'load_manifest',
    'save_manifest',
    'SegmentDataset',
    'SegmentRecord',
    'build_segment_dataset'
]
