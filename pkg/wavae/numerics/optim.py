"""Adam optimizer over named parameter tensors."""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from .autodiff import ShapeError, Tensor

logger = logging.getLogger(__name__)


class NonFiniteGradientError(ArithmeticError):
    """A gradient handed to the optimizer contained NaN or inf."""


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators, keyed by parameter name."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """
    One Adam update.

    Returns new parameter arrays and the same ``state`` object advanced by one
    step. Inputs are not modified.
    """
    for name, grad in grads.items():
        if name not in params:
            raise KeyError(f"Gradient for unknown parameter: {name}")
        if grad.shape != params[name].shape:
            raise ShapeError(f"adam_step: gradient shape {grad.shape} does not match {name} shape {params[name].shape}")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError(f"Non-finite gradient for parameter {name}")

    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step

    updated: Dict[str, np.ndarray] = {}
    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            updated[name] = value
            continue
        m = state.first_moment.get(name, np.zeros_like(value))
        v = state.second_moment.get(name, np.zeros_like(value))
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        updated[name] = value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return updated, state


class Adam:
    """Adam bound to a fixed set of named trainable tensors, updated in place."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = dict(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def step(self) -> None:
        values = {name: t.data for name, t in self.params.items()}
        grads = {name: t.grad for name, t in self.params.items() if t.grad is not None}
        updated, self.state = adam_step(values, grads, self.state)
        for name, tensor in self.params.items():
            tensor.data = updated[name]
        logger.debug(f"Adam step {self.state.step} over {len(grads)} tensors")
