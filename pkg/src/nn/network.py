"""
Containers: Sequential stacks of layers and Network, the base for the
trainable models (named parameters, state dicts, gradient bookkeeping).
"""
import hashlib
import logging
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import CorruptCheckpoint, ShapeMismatch
from .layers import Layer, LayerSpec, Mode, Parameter, build_layer, check_finite

logger = logging.getLogger(__name__)


class Sequential:
    def __init__(self, layers: Sequence[Layer]):
        self.layers: List[Layer] = list(layers)

    @classmethod
    def from_specs(cls, specs: Iterable[LayerSpec], rng: np.random.Generator) -> "Sequential":
        return cls([build_layer(spec, rng) for spec in specs])

    def forward(self, x: np.ndarray, mode: Mode = "eval", record: Optional[bool] = None) -> np.ndarray:
        if record is None:
            record = mode == "train"
        out = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            out = check_finite(layer.forward(out, training=(mode == "train"), record=record), layer.kind)
        return out

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = check_finite(layer.backward(grad), f"{layer.kind} backward")
        return grad

    def named_parameters(self) -> Iterator[Tuple[str, Parameter]]:
        for i, layer in enumerate(self.layers):
            for name, param in layer.params.items():
                yield f"{i}.{name}", param

    def named_buffers(self) -> Iterator[Tuple[str, np.ndarray, Layer]]:
        for i, layer in enumerate(self.layers):
            for name in layer.buffers:
                yield f"{i}.{name}", layer.buffers[name], layer


class Network:
    """
    Base class for models built from named Sequential parts.

    Subclasses register parts with add(), implement forward/backward and
    describe themselves through config_snapshot() so checkpoints can
    rebuild them.
    """
    kind = "network"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.parts: Dict[str, Sequential] = {}

    def add(self, name: str, part: Sequential) -> Sequential:
        self.parts[name] = part
        return part

    def config_snapshot(self) -> dict:
        raise NotImplementedError

    def named_parameters(self) -> Dict[str, Parameter]:
        return {
            f"{part_name}.{name}": param
            for part_name, part in self.parts.items()
            for name, param in part.named_parameters()
        }

    def trainable_parameters(self) -> Dict[str, Parameter]:
        return self.named_parameters()

    def zero_grad(self):
        for param in self.trainable_parameters().values():
            param.zero_grad()

    def check_gradients(self):
        for name, param in self.trainable_parameters().items():
            if param.grad is not None:
                check_finite(param.grad, f"gradient of {name}")

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: param.value.copy() for name, param in self.named_parameters().items()}
        for part_name, part in self.parts.items():
            for name, value, _ in part.named_buffers():
                state[f"{part_name}.{name}"] = np.array(value, copy=True)
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        """
        Replace every parameter and buffer

        Raises:
            CorruptCheckpoint: The tensor names differ from the architecture's
            ShapeMismatch: A tensor has the wrong shape
        """
        params = self.named_parameters()
        buffers = {
            f"{part_name}.{name}": (layer, name.split(".", 1)[1])
            for part_name, part in self.parts.items()
            for name, _, layer in part.named_buffers()
        }
        expected = set(params) | set(buffers)
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise CorruptCheckpoint(f"tensor names do not match the architecture (missing {missing[:5]}, extra {extra[:5]})")

        for name, value in state.items():
            value = np.asarray(value, dtype=np.float64)
            if name in params:
                target = params[name]
                if target.value.shape != value.shape:
                    raise ShapeMismatch(f"{name}: expected {target.value.shape}, got {value.shape}")
                target.value = value.copy()
                target.grad = None
            else:
                layer, key = buffers[name]
                if layer.buffers[key].shape != value.shape:
                    raise ShapeMismatch(f"{name}: expected {layer.buffers[key].shape}, got {value.shape}")
                layer.buffers[key] = value.copy()

    def quantize(self):
        """Round every parameter and buffer to float32 precision (kept as float64)"""
        for param in self.named_parameters().values():
            param.value = param.value.astype(np.float32).astype(np.float64)
        for part in self.parts.values():
            for name, value, layer in part.named_buffers():
                key = name.split(".", 1)[1]
                layer.buffers[key] = np.asarray(value).astype(np.float32).astype(np.float64)

    def state_hash(self) -> str:
        """sha256 over every tensor name, shape and value"""
        digest = hashlib.sha256()
        for name, value in sorted(self.state_dict().items()):
            digest.update(name.encode())
            digest.update(str(value.shape).encode())
            digest.update(np.ascontiguousarray(value, dtype="<f8").tobytes())
        return digest.hexdigest()

    def parameter_count(self) -> int:
        return int(sum(p.value.size for p in self.named_parameters().values()))


class SequentialNetwork(Network):
    """A single Sequential part described by its layer specs"""
    kind = "sequential"

    def __init__(self, specs: Sequence[LayerSpec], seed: int = 0):
        super().__init__(seed)
        self.specs = [LayerSpec.model_validate(s) for s in specs]
        self.body = self.add("body", Sequential.from_specs(self.specs, np.random.default_rng(seed)))

    def forward(self, x: np.ndarray, mode: Mode = "eval", record: Optional[bool] = None) -> np.ndarray:
        return self.body.forward(x, mode, record)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return self.body.backward(grad)

    def config_snapshot(self) -> dict:
        return {"kind": self.kind, "layers": [s.model_dump(mode="json") for s in self.specs]}

    @classmethod
    def from_snapshot(cls, snapshot: dict, seed: int) -> "SequentialNetwork":
        return cls(snapshot["layers"], seed=seed)
