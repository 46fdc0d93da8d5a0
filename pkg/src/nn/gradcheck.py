"""
Central finite-difference gradient checks for layers, networks and losses.
"""
from typing import Callable, Dict, Optional

import numpy as np

from .layers import Layer

STEP = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """max |a - n| / max(|a|, |n|, floor) over all entries"""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / scale)) if a.size else 0.0


def numeric_gradient(f: Callable[[], float], value: np.ndarray, step: float = STEP) -> np.ndarray:
    """Perturb value in place, entry by entry, and difference f"""
    grad = np.zeros_like(value)
    it = np.nditer(value, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        original = value[idx]
        value[idx] = original + step
        plus = f()
        value[idx] = original - step
        minus = f()
        value[idx] = original
        grad[idx] = (plus - minus) / (2 * step)
    return grad


def check_layer(
    layer: Layer,
    x: np.ndarray,
    training: bool = False,
    seed: int = 0,
    step: float = STEP,
) -> Dict[str, float]:
    """
    Compare analytic and numeric gradients of a random projection of the layer output

    Returns:
        Relative error per parameter name, plus "input"
    """
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=np.float64)
    probe = rng.standard_normal(layer.forward(x, training=training, record=False).shape)

    # running statistics drift between calls but never feed a train-mode output
    def loss() -> float:
        return float(np.sum(layer.forward(x, training=training, record=False) * probe))

    for param in layer.params.values():
        param.grad = None
    layer.forward(x, training=training, record=True)
    dx = layer.backward(probe)

    errors = {"input": relative_error(dx, numeric_gradient(loss, x, step))}
    for name, param in layer.params.items():
        errors[name] = relative_error(param.grad, numeric_gradient(loss, param.value, step))
    return errors


def check_loss(
    loss_and_grad: Callable[[np.ndarray], tuple],
    x: np.ndarray,
    step: float = STEP,
) -> float:
    """Relative error of a (loss, dloss/dx) function against finite differences"""
    x = np.array(x, dtype=np.float64)
    _, analytic = loss_and_grad(x)
    numeric = numeric_gradient(lambda: float(loss_and_grad(x)[0]), x, step)
    return relative_error(analytic, numeric)


def check_network(
    model,
    x: np.ndarray,
    mode: str = "eval",
    seed: int = 0,
    step: float = STEP,
    names: Optional[list] = None,
) -> Dict[str, float]:
    """Same as check_layer for a Network exposing forward(x, mode, record) / backward(grad)"""
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=np.float64)
    probe = rng.standard_normal(model.forward(x, mode, record=False).shape)
    params = model.trainable_parameters()
    names = names or sorted(params)

    def loss() -> float:
        return float(np.sum(model.forward(x, mode, record=False) * probe))

    model.zero_grad()
    model.forward(x, mode, record=True)
    model.backward(probe)

    return {
        name: relative_error(params[name].grad, numeric_gradient(loss, params[name].value, step))
        for name in names
    }
