"""Adam optimizer operating in place on named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        for key in ("lr", "beta1", "beta2", "eps"):
            if not getattr(self, key) > 0:
                raise ContractError(f"Adam {key} must be positive, got {getattr(self, key)}")


def adam_step(params, grads, state):
    """Apply one bias-corrected Adam update.

    ``params`` maps names to tensors (updated in place), ``grads`` maps the
    same names to arrays. Returns ``(params, state)``.
    """
    missing = [name for name in params if name not in grads]
    if missing:
        raise ContractError(f"no gradient for parameter(s): {', '.join(missing)}")
    for name, p in params.items():
        if grads[name].shape != p.data.shape:
            raise ContractError(
                f"gradient for {name} has shape {grads[name].shape}, parameter has {p.data.shape}")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state
