import json

import numpy as np
import pytest

from src.cache.feature_cache import FeatureCache, decode_features, encode_features
from src.errors import ConfigInvalid, EmptyDataset, InvalidValue, ShapeMismatch, StorageError, UnsupportedSampleRate
from src.scoring.events import SdbEvent
from src.storage.audio_storage import read_wave, write_wave
from src.storage.manifest_storage import load_manifest, save_manifest
from src.storage.segment_dataset import NightSource, SegmentDataset, build_segment_dataset
from src.storage.trace_storage import read_effort_trace, read_labels, write_effort_trace, write_labels
from src.synth.corpus import write_corpus
from src.synth.generator import SynthConfig


@pytest.fixture
def corpus(tmp_path):
    base = SynthConfig(seed=9, night_duration_s=120.0, sample_rate_hz=4000, event_rate_per_h=30.0)
    return write_corpus(tmp_path / "corpus", base, n_subjects=2, config_hash="h")


@pytest.fixture
def cache(tmp_path):
    cache = FeatureCache()
    cache.initialize(str(tmp_path / "cache"))
    return cache


def test_wave_round_trip_keeps_float32_samples(tmp_path, rng):
    samples = rng.uniform(-0.9, 0.9, 4000).astype(np.float32)
    path = write_wave(tmp_path / "a.wav", samples, 4000)
    night = read_wave(path, expected_rate=4000, subject_id="s", total_sleep_time_h=None)
    assert np.array_equal(night.samples, samples)
    assert night.night_id == "a"


def test_wave_with_the_wrong_rate(tmp_path):
    path = write_wave(tmp_path / "a.wav", np.zeros(800, dtype=np.float32), 8000)
    with pytest.raises(UnsupportedSampleRate):
        read_wave(path, expected_rate=16000)


def test_effort_trace_round_trip(tmp_path, rng):
    values = rng.standard_normal(3840).astype(np.float32)
    path = write_effort_trace(tmp_path / "t.eff", values)
    assert path.read_bytes().startswith(b"EFF32 3840\n")
    assert np.array_equal(read_effort_trace(path), values.astype(np.float64))


def test_truncated_effort_trace(tmp_path):
    path = write_effort_trace(tmp_path / "t.eff", np.ones(10))
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(ShapeMismatch):
        read_effort_trace(path)


def test_labels_round_trip_sorted(tmp_path):
    path = write_labels(tmp_path / "l.csv", [SdbEvent(100.0, 130.5), SdbEvent(10.0, 25.0)])
    assert [(e.start_s, e.end_s) for e in read_labels(path)] == [(10.0, 25.0), (100.0, 130.5)]


def test_malformed_label_line(tmp_path):
    path = tmp_path / "l.csv"
    path.write_text("# start_s,end_s\n10,20\noops\n")
    with pytest.raises(InvalidValue, match="l.csv:3"):
        read_labels(path)


def test_label_line_ending_before_it_starts(tmp_path):
    path = tmp_path / "l.csv"
    path.write_text("40,10\n")
    with pytest.raises(InvalidValue) as excinfo:
        read_labels(path)
    assert str(excinfo.value).startswith("storage: l.csv:1:")


def test_missing_files_are_storage_errors(tmp_path):
    for reader in (read_wave, read_effort_trace, read_labels):
        with pytest.raises(StorageError):
            reader(tmp_path / "absent")


def test_manifest_resolves_relative_paths(corpus):
    manifest = load_manifest(corpus)
    assert manifest.config_hash == "h"
    assert manifest.subjects() == ["subj000", "subj001"]
    entry = manifest.entry("subj000_n0")
    assert manifest.resolve(entry.audio_path).is_file()
    with pytest.raises(ConfigInvalid):
        manifest.entry("nobody")


def test_rebased_manifest_points_at_the_same_files(corpus, tmp_path):
    manifest = load_manifest(corpus)
    moved = manifest.rebased(tmp_path / "elsewhere")
    save_manifest(moved, tmp_path / "elsewhere" / "manifest.json")
    reloaded = load_manifest(tmp_path / "elsewhere" / "manifest.json")
    for old, new in zip(manifest.entries, reloaded.entries):
        assert reloaded.resolve(new.audio_path).resolve() == manifest.resolve(old.audio_path).resolve()


def test_invalid_manifest(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"entries": [{"audio_path": "a.wav"}]}))
    with pytest.raises(ConfigInvalid):
        load_manifest(path)
    with pytest.raises(ConfigInvalid):
        load_manifest(tmp_path / "missing.json")


def test_segment_dataset_from_a_corpus(corpus, small_config, cache):
    dataset = build_segment_dataset(load_manifest(corpus), small_config, cache=cache)
    assert len(dataset) == 20
    assert set(dataset.night_indices()) == {"subj000_n0", "subj001_n0"}
    assert dataset.has_labels() and dataset.has_effort()
    assert set(dataset.labels().tolist()) == {0, 1}
    record = dataset[0]
    assert record.effort.values.shape == (960,)
    assert abs(record.effort.values.mean()) < 1e-9

    features = dataset.segment_features(3)
    assert features.shape == (150, 16)
    assert np.array_equal(features, features.astype(np.float32).astype(np.float64))


def test_features_come_back_from_the_cache(corpus, small_config, cache):
    dataset = build_segment_dataset(load_manifest(corpus), small_config, cache=cache)
    assert dataset.materialize(n_workers=2) == 20
    assert len(list(cache.root.glob("*.lmel"))) == 20

    def unreadable():
        raise AssertionError("audio should not be read")

    fresh = build_segment_dataset(load_manifest(corpus), small_config, cache=cache)
    fresh.sources = {nid: NightSource(unreadable, tag=src.tag) for nid, src in fresh.sources.items()}
    assert np.array_equal(fresh.segment_features(5), dataset.segment_features(5))


def test_effort_offset_drops_segments_without_a_full_reference(corpus, small_config, cache):
    manifest = load_manifest(corpus)
    manifest.entry("subj000_n0").effort_offset_s = 5.0
    dataset = build_segment_dataset(manifest, small_config, subjects=["subj000"], cache=cache)
    assert len(dataset) == 9


def test_empty_subject_selection(corpus, small_config, cache):
    with pytest.raises(EmptyDataset):
        build_segment_dataset(load_manifest(corpus), small_config, subjects=["nobody"], cache=cache)


def test_subset_keeps_whole_subjects(corpus, small_config, cache):
    dataset = build_segment_dataset(load_manifest(corpus), small_config, cache=cache)
    subset = dataset.subset(["subj001"])
    assert len(subset) == 10
    assert subset.subjects() == ["subj001"]
    assert list(subset.nights) == ["subj001_n0"]


def test_in_memory_dataset(rng):
    dataset = SegmentDataset.from_arrays(
        [rng.standard_normal((4, 3)) for _ in range(3)],
        labels=[0, 1, 0],
        subject_ids=["a", "a", "b"],
    )
    assert dataset.subjects() == ["a", "b"]
    assert dataset.labels().tolist() == [0, 1, 0]
    assert not dataset.has_effort()


def test_cache_keys_depend_on_config_and_source(cache):
    key = cache.key("n/1", 10.0, "digest", "a.wav:1:2")
    assert key.startswith("n_1_10000_")
    assert key != cache.key("n/1", 10.0, "digest", "b.wav:1:2")
    assert key != cache.key("n/1", 10.0, "other", "a.wav:1:2")
    assert key == cache.key("n/1", 10.0, "digest", "a.wav:1:2")


def test_cache_round_trip_and_damage(cache, rng):
    values = rng.standard_normal((6, 4)).astype(np.float32)
    cache.set("k", values)
    assert np.array_equal(cache.get("k"), values)

    (cache.root / "k.lmel").write_bytes(b"LMEL1garbage")
    assert cache.get("k") is None
    assert not (cache.root / "k.lmel").exists()
    assert cache.get("absent") is None


def test_disabled_cache_is_a_no_op(rng):
    cache = FeatureCache()
    cache.set("k", np.ones((2, 2)))
    assert not cache.enabled
    assert cache.get("k") is None
    assert cache.clear() == 0


def test_feature_blob_layout(rng):
    values = rng.standard_normal((3, 2)).astype(np.float32)
    blob = encode_features(values)
    assert blob.startswith(b"LMEL1 3 2\n")
    assert len(blob) == len(b"LMEL1 3 2\n") + 4 * 6
    assert np.array_equal(decode_features(blob), values)
    assert decode_features(blob[:-1]) is None
    assert decode_features(b"LMEL1 3\n" + blob[10:]) is None
