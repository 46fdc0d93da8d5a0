"""
Adam optimizer.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from ..errors import ShapeMismatch
from .layers import Parameter

logger = logging.getLogger(__name__)

BETAS = (0.9, 0.999)
EPS = 1e-8


@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    betas: Tuple[float, float] = BETAS,
    eps: float = EPS,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """
    One bias-corrected Adam update

    Args:
        params: Parameter values by name
        grads: Gradients by name (same shapes)
        state: Moment estimates from previous steps (not mutated)
        lr: Learning rate

    Returns:
        (updated params, updated state)
    """
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    beta1, beta2 = betas
    step = state.step + 1
    new_params, new_m, new_v = {}, {}, {}

    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(value)
        if grad.shape != value.shape:
            raise ShapeMismatch(f"gradient for {name} has shape {grad.shape}, parameter {value.shape}")

        m = beta1 * state.m.get(name, np.zeros_like(value)) + (1 - beta1) * grad
        v = beta2 * state.v.get(name, np.zeros_like(value)) + (1 - beta2) * grad * grad
        m_hat = m / (1 - beta1 ** step)
        v_hat = v / (1 - beta2 ** step)
        new_params[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v

    return new_params, AdamState(step=step, m=new_m, v=new_v)


class Adam:
    """Applies optimizer_step in place to a fixed set of Parameters"""

    def __init__(self, params: Dict[str, Parameter], lr: float = 1e-3):
        self.params = params
        self.lr = lr
        self.state = AdamState()

    def step(self):
        values = {name: p.value for name, p in self.params.items()}
        grads = {name: p.grad for name, p in self.params.items() if p.grad is not None}
        updated, self.state = optimizer_step(values, grads, self.state, self.lr)
        for name, param in self.params.items():
            param.value = updated[name]

    def zero_grad(self):
        for param in self.params.values():
            param.zero_grad()
