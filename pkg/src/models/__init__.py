"""
Models module initialization
"""
from pathlib import Path
from typing import Union

from ..errors import CorruptCheckpoint
from ..nn.checkpoint import load_checkpoint
from ..nn.network import Network
from .effort_estimator import (
    EffortEstimatorModel,
    EffortTrace,
    ccc,
    ccc_loss,
    evaluate_effort,
    respiratory_embedding,
)
from .osa_classifier import AudioEncoderModel, ClassCounts, FusionModel, classify_segment, weighted_bce

MODEL_KINDS = {
    EffortEstimatorModel.kind: EffortEstimatorModel,
    AudioEncoderModel.kind: AudioEncoderModel,
    FusionModel.kind: FusionModel,
}


def build_model(snapshot: dict, seed: int) -> Network:
    """Untrained model described by a checkpoint config snapshot"""
    kind = snapshot.get("kind")
    if kind not in MODEL_KINDS:
        raise CorruptCheckpoint(f"unknown model kind {kind!r}")
    return MODEL_KINDS[kind].from_snapshot(snapshot, seed)


def load_model(path: Union[str, Path]) -> Network:
    return load_checkpoint(path, builder=build_model)


__all__ = [
    'EffortEstimatorModel',
    'EffortTrace',
    'ccc',
    'ccc_loss',
    'evaluate_effort',
    'respiratory_embedding',
    'AudioEncoderModel',
    'ClassCounts',
    'FusionModel',
    'classify_segment',
    'weighted_bce',
    'build_model',
    'load_model'
]
