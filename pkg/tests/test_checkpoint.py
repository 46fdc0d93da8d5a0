import numpy as np
import pytest

from src.config.config import EffortModelConfig, OsaModelConfig
from src.errors import CorruptCheckpoint, MissingCheckpoint, VersionMismatch
from src.models import AudioEncoderModel, EffortEstimatorModel, FusionModel, load_model
from src.nn.checkpoint import (
    FORMAT_VERSION,
    Checkpoint,
    checkpoint_of,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
)
from src.nn.network import SequentialNetwork

EFFORT = EffortModelConfig(input_frames=16, mel_bins=8, channels=(2,), pool=(2, 4), hidden_size=3, trace_points=10)
OSA = OsaModelConfig(input_frames=16, mel_bins=8, channels=(2,), pool=(4, 4), embedding_dim=5, fusion_dim=3)


def _models():
    effort = EffortEstimatorModel(EFFORT, seed=1)
    return [effort, AudioEncoderModel(OSA, seed=2), FusionModel(effort, OSA, seed=3)]


@pytest.mark.parametrize("index", range(3), ids=["effort", "audio_only", "fusion"])
def test_save_then_load_reproduces_eval_outputs(index, tmp_path, rng):
    model = _models()[index]
    probe = rng.standard_normal((3, 16, 8))
    path = save_checkpoint(model, tmp_path / "model.ckpt", config_hash="abc")
    before = model.forward(probe)

    loaded = load_model(path)
    assert type(loaded) is type(model)
    assert loaded.config_snapshot() == model.config_snapshot()
    assert np.array_equal(loaded.forward(probe), before)


def test_payloads_survive_bit_exactly(tmp_path):
    model = _models()[0]
    path = save_checkpoint(model, tmp_path / "effort.ckpt", config_hash="abc")
    stored = read_checkpoint(path)
    assert stored.config_hash == "abc"
    assert stored.rng_seed == 1
    assert stored.format_version == FORMAT_VERSION
    state = model.state_dict()
    assert sorted(stored.named_tensors) == sorted(state)
    for name, value in state.items():
        assert np.array_equal(stored.named_tensors[name], value.astype(np.float32))

    again = encode_checkpoint(decode_checkpoint(path.read_bytes()))
    assert again == path.read_bytes()


def test_every_parameter_has_one_named_tensor():
    model = _models()[2]
    state = model.state_dict()
    assert set(model.named_parameters()) <= set(state)
    assert len(state) == len(set(state))
    assert any(name.startswith("effort.") for name in state)


def test_sequential_network_loads_without_a_builder(tmp_path, rng):
    net = SequentialNetwork([dict(kind="linear", in_features=3, out_features=2), dict(kind="relu")], seed=5)
    path = save_checkpoint(net, tmp_path / "seq.ckpt")
    x = rng.standard_normal((4, 3))
    assert np.array_equal(load_checkpoint(path).forward(x), net.forward(x))


def test_bad_magic_is_corrupt():
    with pytest.raises(CorruptCheckpoint):
        decode_checkpoint(b"NOTACKPT" + bytes(16))


def test_truncated_payload_is_corrupt():
    data = encode_checkpoint(checkpoint_of(_models()[1]))
    with pytest.raises(CorruptCheckpoint):
        decode_checkpoint(data[:-8])


def test_other_format_version_is_rejected():
    checkpoint = Checkpoint(format_version=FORMAT_VERSION + 1, named_tensors={"w": np.ones(2)}, config_snapshot={}, rng_seed=0)
    with pytest.raises(VersionMismatch):
        decode_checkpoint(encode_checkpoint(checkpoint))


def test_missing_file(tmp_path):
    with pytest.raises(MissingCheckpoint):
        read_checkpoint(tmp_path / "absent.ckpt")


def test_unknown_model_kind(tmp_path):
    checkpoint = Checkpoint(format_version=FORMAT_VERSION, named_tensors={}, config_snapshot={"kind": "mystery"}, rng_seed=0)
    path = tmp_path / "mystery.ckpt"
    path.write_bytes(encode_checkpoint(checkpoint))
    with pytest.raises(CorruptCheckpoint):
        load_model(path)


def test_mismatched_tensor_names_are_corrupt(tmp_path):
    model = _models()[1]
    state = model.state_dict()
    state.pop(sorted(state)[0])
    checkpoint = Checkpoint(format_version=FORMAT_VERSION, named_tensors=state, config_snapshot=model.config_snapshot(), rng_seed=2)
    path = tmp_path / "partial.ckpt"
    path.write_bytes(encode_checkpoint(checkpoint))
    with pytest.raises(CorruptCheckpoint):
        load_model(path)
