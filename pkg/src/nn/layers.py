"""
Layer kinds with explicit forward/backward passes (float64).

Activations are numpy arrays; trainable weights are Parameter objects.
Each layer records what its backward pass needs during forward and
releases it once backward has run.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.special import expit

from ..errors import NoRecordedGraph, NonFiniteActivation, ShapeMismatch

logger = logging.getLogger(__name__)

Mode = Literal["train", "eval"]


@dataclass
class Parameter:
    value: np.ndarray
    grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)


def check_finite(x: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteActivation(f"non-finite values after {where}")
    return x


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    kind = ""

    def __init__(self):
        self.params: Dict[str, Parameter] = {}
        self.buffers: Dict[str, np.ndarray] = {}
        self._cache: Any = None

    def forward(self, x: np.ndarray, training: bool = False, record: bool = True) -> np.ndarray:
        """
        Args:
            x: Input activations
            training: Batch statistics and running-stat updates (batch_norm)
            record: Keep what backward needs; eval-only callers pass False so
                a frozen layer can be shared between threads
        """
        out, cache = self._forward(x, training)
        self._cache = cache if record else None
        return out

    def _forward(self, x: np.ndarray, training: bool):
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _recorded(self):
        if self._cache is None:
            raise NoRecordedGraph(f"{self.kind}: backward called without a recorded forward pass")
        cache, self._cache = self._cache, None
        return cache

    def _accumulate(self, name: str, grad: np.ndarray):
        param = self.params[name]
        param.grad = grad if param.grad is None else param.grad + grad


class Conv2d(Layer):
    """
    'same'-padded stride-1 convolution on (B, C, H, W).

    Accumulates one kernel tap at a time.
    """
    kind = "conv2d"

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator):
        super().__init__()
        if kernel_size % 2 == 0:
            raise ShapeMismatch(f"conv kernels must be odd-sized, got {kernel_size}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        fan_in = in_channels * kernel_size * kernel_size
        self.params["weight"] = Parameter(_uniform(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in))
        self.params["bias"] = Parameter(_uniform(rng, (out_channels,), fan_in))

    def _taps(self):
        k = self.kernel_size
        return ((u, v) for u in range(k) for v in range(k))

    def _forward(self, x, training):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeMismatch(f"conv2d expects (B, {self.in_channels}, H, W), got {x.shape}")
        b, _, h, w = x.shape
        p = self.kernel_size // 2
        padded = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        weight = self.params["weight"].value

        out = np.zeros((b, h, w, self.out_channels))
        for u, v in self._taps():
            out += np.tensordot(padded[:, :, u:u + h, v:v + w], weight[:, :, u, v], axes=([1], [1]))
        out = out.transpose(0, 3, 1, 2) + self.params["bias"].value[None, :, None, None]
        return out, padded

    def backward(self, grad):
        padded = self._recorded()
        weight = self.params["weight"].value
        _, _, h, w = grad.shape
        p = self.kernel_size // 2

        d_weight = np.zeros_like(weight)
        d_padded = np.zeros_like(padded)
        for u, v in self._taps():
            d_weight[:, :, u, v] = np.tensordot(grad, padded[:, :, u:u + h, v:v + w], axes=([0, 2, 3], [0, 2, 3]))
            d_padded[:, :, u:u + h, v:v + w] += np.tensordot(grad, weight[:, :, u, v], axes=([1], [0])).transpose(0, 3, 1, 2)
        self._accumulate("weight", d_weight)
        self._accumulate("bias", grad.sum(axis=(0, 2, 3)))
        return d_padded[:, :, p:p + h, p:p + w]


class BatchNorm(Layer):
    """Per-channel normalisation of (B, C, H, W) or (B, C) inputs"""
    kind = "batch_norm"

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = Parameter(np.ones(channels))
        self.params["beta"] = Parameter(np.zeros(channels))
        self.buffers["running_mean"] = np.zeros(channels)
        self.buffers["running_var"] = np.ones(channels)

    def _layout(self, x):
        if x.ndim == 4 and x.shape[1] == self.channels:
            return (0, 2, 3), (1, self.channels, 1, 1)
        if x.ndim == 2 and x.shape[1] == self.channels:
            return (0,), (1, self.channels)
        raise ShapeMismatch(f"batch_norm expects channel axis {self.channels}, got {x.shape}")

    def _forward(self, x, training):
        axes, shape = self._layout(x)
        gamma = self.params["gamma"].value.reshape(shape)
        beta = self.params["beta"].value.reshape(shape)

        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            n = x.size // self.channels
            unbiased = var * n / max(n - 1, 1)
            self.buffers["running_mean"] = (1 - self.momentum) * self.buffers["running_mean"] + self.momentum * mean
            self.buffers["running_var"] = (1 - self.momentum) * self.buffers["running_var"] + self.momentum * unbiased
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]

        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
        return gamma * x_hat + beta, (x_hat, inv_std, axes, shape, training)

    def backward(self, grad):
        x_hat, inv_std, axes, shape, training = self._recorded()
        gamma = self.params["gamma"].value.reshape(shape)
        self._accumulate("gamma", (grad * x_hat).sum(axis=axes))
        self._accumulate("beta", grad.sum(axis=axes))

        g_hat = grad * gamma
        if not training:
            return g_hat * inv_std.reshape(shape)
        n = grad.size // self.channels
        sum_g = g_hat.sum(axis=axes).reshape(shape)
        sum_gx = (g_hat * x_hat).sum(axis=axes).reshape(shape)
        return inv_std.reshape(shape) / n * (n * g_hat - sum_g - x_hat * sum_gx)


class ReLU(Layer):
    kind = "relu"

    def _forward(self, x, training):
        mask = x > 0
        return x * mask, mask

    def backward(self, grad):
        return grad * self._recorded()


class Sigmoid(Layer):
    kind = "sigmoid"

    def _forward(self, x, training):
        out = expit(x)
        return out, out

    def backward(self, grad):
        out = self._recorded()
        return grad * out * (1.0 - out)


class MaxPool2d(Layer):
    """Non-overlapping max pooling on (B, C, H, W); trailing rows/cols are dropped"""
    kind = "max_pool2d"

    def __init__(self, kernel: Tuple[int, int]):
        super().__init__()
        self.kernel = tuple(kernel)

    def _forward(self, x, training):
        kh, kw = self.kernel
        b, c, h, w = x.shape
        ho, wo = h // kh, w // kw
        if ho == 0 or wo == 0:
            raise ShapeMismatch(f"max_pool2d kernel {self.kernel} larger than input {x.shape}")
        blocks = x[:, :, :ho * kh, :wo * kw].reshape(b, c, ho, kh, wo, kw)
        blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho, wo, kh * kw)
        argmax = blocks.argmax(axis=-1)
        return np.take_along_axis(blocks, argmax[..., None], axis=-1)[..., 0], (argmax, x.shape)

    def backward(self, grad):
        argmax, in_shape = self._recorded()
        kh, kw = self.kernel
        b, c, h, w = in_shape
        ho, wo = grad.shape[2], grad.shape[3]
        blocks = np.zeros((b, c, ho, wo, kh * kw))
        np.put_along_axis(blocks, argmax[..., None], grad[..., None], axis=-1)
        blocks = blocks.reshape(b, c, ho, wo, kh, kw).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho * kh, wo * kw)
        dx = np.zeros(in_shape)
        dx[:, :, :ho * kh, :wo * kw] = blocks
        return dx


class Linear(Layer):
    """x @ W + b over the last axis"""
    kind = "linear"

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, zero_init: bool = False):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        if zero_init:
            weight = np.zeros((in_features, out_features))
            bias = np.zeros(out_features)
        else:
            weight = _uniform(rng, (in_features, out_features), in_features)
            bias = _uniform(rng, (out_features,), in_features)
        self.params["weight"] = Parameter(weight)
        self.params["bias"] = Parameter(bias)

    def _forward(self, x, training):
        if x.shape[-1] != self.in_features:
            raise ShapeMismatch(f"linear expects last axis {self.in_features}, got {x.shape}")
        return x @ self.params["weight"].value + self.params["bias"].value, x

    def backward(self, grad):
        x = self._recorded()
        flat_x = x.reshape(-1, self.in_features)
        flat_g = grad.reshape(-1, self.out_features)
        self._accumulate("weight", flat_x.T @ flat_g)
        self._accumulate("bias", flat_g.sum(axis=0))
        return grad @ self.params["weight"].value.T


class Flatten(Layer):
    """(B, ...) -> (B, prod)"""
    kind = "flatten"

    def _forward(self, x, training):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, grad):
        return grad.reshape(self._recorded())


class ToSequence(Layer):
    """CNN map (B, C, T, F) -> sequence (B, T, C * F)"""
    kind = "to_sequence"

    def _forward(self, x, training):
        b, c, t, f = x.shape
        return x.transpose(0, 2, 1, 3).reshape(b, t, c * f), x.shape

    def backward(self, grad):
        b, c, t, f = self._recorded()
        return grad.reshape(b, t, c, f).transpose(0, 2, 1, 3)


class MeanPoolTime(Layer):
    """(B, T, D) -> (B, D)"""
    kind = "mean_pool_time"

    def _forward(self, x, training):
        return x.mean(axis=1), x.shape

    def backward(self, grad):
        b, t, d = self._recorded()
        return np.broadcast_to(grad[:, None, :] / t, (b, t, d)).copy()


class BiLSTM(Layer):
    """
    Bidirectional LSTM over (B, T, D) returning (B, T, 2H).

    Gate order i, f, g, o. Forward states fill [:, :, :H], backward
    states (run on the reversed sequence) fill [:, :, H:].
    """
    kind = "bilstm"
    DIRECTIONS = ("fwd", "bwd")

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        h = hidden_size
        for d in self.DIRECTIONS:
            self.params[f"w_ih_{d}"] = Parameter(_uniform(rng, (input_size, 4 * h), h))
            self.params[f"w_hh_{d}"] = Parameter(_uniform(rng, (h, 4 * h), h))
            bias = _uniform(rng, (4 * h,), h)
            bias[h:2 * h] += 1.0  # forget gate starts open
            self.params[f"b_{d}"] = Parameter(bias)

    def _run(self, x, direction):
        h_size = self.hidden_size
        w_ih = self.params[f"w_ih_{direction}"].value
        w_hh = self.params[f"w_hh_{direction}"].value
        b, t_len, _ = x.shape

        projected = x @ w_ih + self.params[f"b_{direction}"].value
        h = np.zeros((b, h_size))
        c = np.zeros((b, h_size))
        hs = np.empty((b, t_len, h_size))
        steps = []
        for t in range(t_len):
            z = projected[:, t] + h @ w_hh
            i = expit(z[:, :h_size])
            f = expit(z[:, h_size:2 * h_size])
            g = np.tanh(z[:, 2 * h_size:3 * h_size])
            o = expit(z[:, 3 * h_size:])
            c_prev, h_prev = c, h
            c = f * c_prev + i * g
            tanh_c = np.tanh(c)
            h = o * tanh_c
            hs[:, t] = h
            steps.append((i, f, g, o, c_prev, h_prev, tanh_c))
        return hs, steps

    def _run_backward(self, x, d_hs, steps, direction):
        h_size = self.hidden_size
        w_ih = self.params[f"w_ih_{direction}"].value
        w_hh = self.params[f"w_hh_{direction}"].value
        b, t_len, _ = x.shape

        dz_all = np.empty((b, t_len, 4 * h_size))
        d_w_hh = np.zeros_like(w_hh)
        dh_next = np.zeros((b, h_size))
        dc_next = np.zeros((b, h_size))
        for t in reversed(range(t_len)):
            i, f, g, o, c_prev, h_prev, tanh_c = steps[t]
            dh = d_hs[:, t] + dh_next
            do = dh * tanh_c
            dc = dh * o * (1.0 - tanh_c ** 2) + dc_next
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_next = dc * f
            dz = np.concatenate(
                [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g ** 2), do * o * (1.0 - o)],
                axis=1,
            )
            d_w_hh += h_prev.T @ dz
            dh_next = dz @ w_hh.T
            dz_all[:, t] = dz

        self._accumulate(f"w_ih_{direction}", x.reshape(-1, self.input_size).T @ dz_all.reshape(-1, 4 * h_size))
        self._accumulate(f"w_hh_{direction}", d_w_hh)
        self._accumulate(f"b_{direction}", dz_all.sum(axis=(0, 1)))
        return dz_all @ w_ih.T

    def _forward(self, x, training):
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ShapeMismatch(f"bilstm expects (B, T, {self.input_size}), got {x.shape}")
        reversed_x = x[:, ::-1]
        hs_fwd, steps_fwd = self._run(x, "fwd")
        hs_bwd, steps_bwd = self._run(reversed_x, "bwd")
        return np.concatenate([hs_fwd, hs_bwd[:, ::-1]], axis=2), (x, reversed_x, steps_fwd, steps_bwd)

    def backward(self, grad):
        x, reversed_x, steps_fwd, steps_bwd = self._recorded()
        h = self.hidden_size
        dx_fwd = self._run_backward(x, grad[:, :, :h], steps_fwd, "fwd")
        dx_bwd = self._run_backward(reversed_x, grad[:, ::-1, h:], steps_bwd, "bwd")
        return dx_fwd + dx_bwd[:, ::-1]


class LayerSpec(BaseModel):
    """Declarative layer description used to assemble networks"""
    kind: Literal[
        "conv2d", "batch_norm", "relu", "max_pool2d", "linear", "bilstm",
        "sigmoid", "mean_pool_time", "flatten", "to_sequence",
    ]
    in_features: Optional[int] = Field(None, gt=0)
    out_features: Optional[int] = Field(None, gt=0)
    kernel_size: Optional[int] = Field(None, gt=0)
    pool: Optional[Tuple[int, int]] = None
    hidden_size: Optional[int] = Field(None, gt=0)
    zero_init: bool = False

    @model_validator(mode="after")
    def _check(self):
        required = {
            "conv2d": ("in_features", "out_features", "kernel_size"),
            "batch_norm": ("in_features",),
            "max_pool2d": ("pool",),
            "linear": ("in_features", "out_features"),
            "bilstm": ("in_features", "hidden_size"),
        }.get(self.kind, ())
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.kind} needs {', '.join(missing)}")
        if self.kernel_size is not None and self.kernel_size % 2 == 0:
            raise ValueError("conv kernels must be odd-sized")
        if self.pool is not None and min(self.pool) < 1:
            raise ValueError("pool extents must be positive")
        return self


def build_layer(spec: LayerSpec, rng: np.random.Generator) -> Layer:
    if spec.kind == "conv2d":
        return Conv2d(spec.in_features, spec.out_features, spec.kernel_size, rng)
    if spec.kind == "batch_norm":
        return BatchNorm(spec.in_features)
    if spec.kind == "max_pool2d":
        return MaxPool2d(spec.pool)
    if spec.kind == "linear":
        return Linear(spec.in_features, spec.out_features, rng, zero_init=spec.zero_init)
    if spec.kind == "bilstm":
        return BiLSTM(spec.in_features, spec.hidden_size, rng)
    simple = {
        "relu": ReLU,
        "sigmoid": Sigmoid,
        "mean_pool_time": MeanPoolTime,
        "flatten": Flatten,
        "to_sequence": ToSequence,
    }
    return simple[spec.kind]()


def forward(layer: Layer, x: np.ndarray, mode: Mode = "eval", record: bool = True) -> np.ndarray:
    """Run one layer and trip on non-finite activations"""
    out = layer.forward(np.asarray(x, dtype=np.float64), training=(mode == "train"), record=record)
    return check_finite(out, layer.kind)


def conv_block(in_channels: int, out_channels: int, kernel_size: int, pool: Tuple[int, int]) -> List[LayerSpec]:
    """conv -> batch_norm -> relu -> max_pool"""
    return [
        LayerSpec(kind="conv2d", in_features=in_channels, out_features=out_channels, kernel_size=kernel_size),
        LayerSpec(kind="batch_norm", in_features=out_channels),
        LayerSpec(kind="relu"),
        LayerSpec(kind="max_pool2d", pool=pool),
    ]