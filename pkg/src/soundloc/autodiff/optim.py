"""Adaptive-moment optimizer with a step-decay learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteError, ShapeError


@dataclass
class OptimizerState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    decay_factor: float = 0.95
    decay_every: int = 10
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def optimizer_step(state: OptimizerState, params: dict, grads: dict | None = None) -> None:
    """Apply one Adam update in place.

    ``grads`` defaults to each parameter's ``.grad``; parameters without a
    gradient are skipped.  Any non-finite gradient rejects the whole update.
    """
    if grads is None:
        grads = {name: p.grad for name, p in params.items() if p.grad is not None}
    for name, g in grads.items():
        if g is None:
            continue
        if np.shape(g) != params[name].shape:
            raise ShapeError(f"gradient for {name} has shape {np.shape(g)}, expected {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name}; update rejected")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    for name, g in grads.items():
        if g is None:
            continue
        p = params[name]
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        p.data = p.data - state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)


def epoch_schedule(state: OptimizerState, epoch: int) -> None:
    """Multiply the learning rate by ``decay_factor`` at every positive multiple of ``decay_every``."""
    if epoch > 0 and epoch % state.decay_every == 0:
        state.learning_rate *= state.decay_factor
