"""
Synthetic end-to-end runs on the reduced geometry of config/small_config.json.

Slow: run with `pytest --runslow`.
"""
import pytest

from src.cache.feature_cache import FeatureCache
from src.config.config import apply_overrides, load_run_config
from src.scoring.folds import make_folds
from src.storage.manifest_storage import load_manifest
from src.storage.segment_dataset import build_segment_dataset
from src.synth.corpus import write_corpus
from src.synth.generator import SynthConfig
from src.tasks.evaluation import evaluate_effort_dataset, segment_auc
from src.tasks.training import train_effort, train_osa
from tests.conftest import SMALL_CONFIG

pytestmark = pytest.mark.slow

N_SUBJECTS = 50
NIGHT_S = 600.0


@pytest.fixture(scope="module")
def config(tmp_path_factory):
    base = load_run_config(str(SMALL_CONFIG))
    return apply_overrides(
        base,
        {
            "seed": 3,
            "paths.cache_dir": str(tmp_path_factory.mktemp("cache")),
            "effort_training.max_epochs": 100,
            "effort_training.patience": 10,
            "osa_training.max_epochs": 60,
            "osa_training.patience": 10,
        },
    )


def _corpus(tmp_path_factory, config, snr_db):
    base = SynthConfig(
        seed=config.seed,
        night_duration_s=NIGHT_S,
        sample_rate_hz=config.features.sample_rate_hz,
        audio_snr_db=snr_db,
    )
    path = write_corpus(
        tmp_path_factory.mktemp(f"snr{int(snr_db)}"), base, N_SUBJECTS, event_rate_range=(0.0, 60.0)
    )
    cache = FeatureCache()
    cache.initialize(config.cache_dir())
    dataset = build_segment_dataset(load_manifest(path), config, cache=cache)
    dataset.materialize()
    for source in dataset.sources.values():
        source.release()
    split = make_folds(dataset.subjects(), k=config.folds.k, seed=config.seed)[0]
    return dataset.subset(split.train), dataset.subset(split.val), dataset.subset(split.test)


@pytest.fixture(scope="module")
def clean(tmp_path_factory, config):
    return _corpus(tmp_path_factory, config, 20.0)


@pytest.fixture(scope="module")
def noisy(tmp_path_factory, config):
    return _corpus(tmp_path_factory, config, 10.0)


def test_effort_is_recoverable_from_clean_audio(clean, config):
    train, val, test = clean
    model, history = train_effort(train, val, config)
    assert len(history.epochs) <= 100
    assert evaluate_effort_dataset(model, test).ccc_mean >= 0.8


def test_audio_only_classifier_separates_events(clean, config):
    train, val, test = clean
    model, _ = train_osa("audio_only", train, val, config)
    assert segment_auc(model, test) >= 0.9


def test_fusion_holds_up_on_degraded_audio(noisy, config):
    train, val, test = noisy
    effort, _ = train_effort(train, val, config)
    audio_only, _ = train_osa("audio_only", train, val, config)
    fusion, _ = train_osa("latent_fusion", train, val, config, frozen_effort=effort)
    assert segment_auc(fusion, test) >= segment_auc(audio_only, test)
