import numpy as np
import pytest

from src.config.config import apply_overrides
from src.dsp.features import AudioNight
from src.errors import EmptyDataset, MissingCheckpoint, MissingClass
from src.models.effort_estimator import EffortEstimatorModel
from src.models.osa_classifier import AudioEncoderModel
from src.scoring.events import Severity
from src.storage.segment_dataset import SegmentDataset
from src.tasks.evaluation import evaluate_nights, night_report, oracle_probabilities, write_roc_table
from src.tasks.training import train_effort, train_osa


def _dataset(rng, n, subject, labels=None, with_effort=True):
    features = [rng.standard_normal((150, 16)) for _ in range(n)]
    efforts = [np.sin(np.linspace(0, 8 * np.pi, 960) + rng.uniform(0, 6)) for _ in range(n)] if with_effort else None
    labels = [i % 2 for i in range(n)] if labels is None else labels
    return SegmentDataset.from_arrays(features, efforts=efforts, labels=labels, subject_ids=[subject] * n)


@pytest.fixture
def quick_config(small_config):
    return apply_overrides(
        small_config,
        {"effort_training.max_steps": 2, "osa_training.max_steps": 2, "effort_training.batch_size": 4, "osa_training.batch_size": 4},
    )


@pytest.fixture
def splits(rng):
    return _dataset(rng, 8, "a"), _dataset(rng, 4, "b")


def test_effort_training_stops_at_max_steps(quick_config, splits):
    train, val = splits
    model, history = train_effort(train, val, quick_config)
    assert len(history.step_losses) == 2
    assert len(history.epochs) == 1
    assert history.epochs[0].val_metric == "ccc"
    assert all(0.0 <= loss <= 2.0 for loss in history.step_losses)


def test_training_is_reproducible_per_seed(quick_config, splits):
    train, val = splits
    first_model, first = train_effort(train, val, quick_config, seed=5)
    second_model, second = train_effort(train, val, quick_config, seed=5)
    assert first.step_losses == second.step_losses
    assert first_model.state_hash() == second_model.state_hash()


def test_audio_only_training(quick_config, splits):
    train, val = splits
    model, history = train_osa("audio_only", train, val, quick_config)
    assert model.kind == "audio_only"
    assert history.epochs[0].val_metric == "auc"
    assert all(np.isfinite(history.step_losses))


def test_fusion_training_leaves_the_estimator_frozen(quick_config, splits):
    train, val = splits
    effort = EffortEstimatorModel(quick_config.effort_model, seed=1)
    before = effort.state_hash()
    model, history = train_osa("latent_fusion", train, val, quick_config, frozen_effort=effort)
    assert model.kind == "latent_fusion"
    assert effort.state_hash() == before
    assert len(history.step_losses) == 2


def test_fusion_needs_an_estimator(quick_config, splits):
    train, val = splits
    with pytest.raises(MissingCheckpoint):
        train_osa("latent_fusion", train, val, quick_config)


def test_single_class_training_split(quick_config, rng):
    train = _dataset(rng, 4, "a", labels=[0, 0, 0, 0])
    val = _dataset(rng, 4, "b")
    with pytest.raises(MissingClass):
        train_osa("audio_only", train, val, quick_config)


def test_missing_references(quick_config, rng):
    train = _dataset(rng, 4, "a", with_effort=False)
    val = _dataset(rng, 4, "b")
    with pytest.raises(EmptyDataset):
        train_effort(train, val, quick_config)


def test_single_class_validation_falls_back_to_loss(quick_config, rng):
    train = _dataset(rng, 8, "a")
    val = _dataset(rng, 4, "b", labels=[1, 1, 1, 1])
    _, history = train_osa("audio_only", train, val, quick_config)
    assert history.epochs[0].val_metric == "neg_loss"


def test_silent_night_is_healthy(small_config):
    model = AudioEncoderModel(small_config.osa_model, seed=0, zero_head=True)
    model.parts["head"].layers[0].params["bias"].value[:] = -20.0
    night = AudioNight(samples=np.zeros(60 * 4000, dtype=np.float32), sample_rate_hz=4000, subject_id="q", night_id="quiet")

    report = night_report(model, night, small_config)
    assert report.severity is Severity.HEALTHY
    assert report.event_count == 0
    assert report.tst_source == "recording"
    assert len(report.segment_probs) == 4
    assert night_report(model, night, small_config) == report


def test_oracle_probabilities_reproduce_reference_segments(small_config, rng):
    dataset = _dataset(rng, 6, "a", labels=[0, 1, 1, 0, 0, 1])
    probs = oracle_probabilities(dataset)
    assert probs.tolist() == [0.0, 1.0, 1.0, 0.0, 0.0, 1.0]
    result = evaluate_nights("oracle", dataset, probs, small_config)
    assert result.segment_auc == 1.0
    assert len(result.nights) == 1


def test_roc_table_layout(tmp_path):
    path = write_roc_table([0.9, 0.2], [1, 0], tmp_path / "roc.csv", config_hash="abc", seed=4)
    lines = path.read_text().splitlines()
    assert lines[0] == "# config_hash=abc seed=4"
    assert lines[1] == "threshold,sensitivity,specificity"
    assert lines[2] == "inf,0.0,1.0"
    assert len(lines) == 5


def test_a_single_segment_can_be_memorised(small_config, rng):
    config = apply_overrides(
        small_config,
        {
            "effort_training.batch_size": 1,
            "effort_training.lr": 0.01,
            "effort_training.max_epochs": 200,
            "effort_training.patience": 200,
            "effort_training.max_steps": 200,
        },
    )
    single = SegmentDataset.from_arrays(
        [rng.standard_normal((150, 16))],
        efforts=[np.sin(np.linspace(0, 8 * np.pi, 960))],
        labels=[0],
        subject_ids=["a"],
    )
    _, history = train_effort(single, single, config)
    assert len(history.step_losses) <= 200
    assert min(history.step_losses) < 0.05
