"""
Neural network core module initialization
"""
from .layers import LayerSpec, Parameter, build_layer, conv_block, forward
from .network import Network, Sequential, SequentialNetwork
from .optim import Adam, AdamState, optimizer_step
from .checkpoint import Checkpoint, load_checkpoint, read_checkpoint, save_checkpoint

__all__ = [
    'LayerSpec',
    'Parameter',
    'build_layer',
    'conv_block',
    'forward',
    'Network',
    'Sequential',
    'SequentialNetwork',
    'Adam',
    'AdamState',
    'optimizer_step',
    'Checkpoint',
    'load_checkpoint',
    'read_checkpoint',
    'save_checkpoint'
]
