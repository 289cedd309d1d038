"""Adam with bias correction over dictionaries of numpy arrays."""

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np


@dataclass
class AdamState:
    """First/second moment estimates per parameter name and the step counter."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in (*self.m.values(), *self.v.values()))


class Adam:
    def __init__(self, lr: float = 1e-2, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 state: Optional[AdamState] = None):
        if lr < 0:
            raise ValueError(f"Learning rate must be >= 0, got {lr}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = state if state is not None else AdamState()

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        """Update ``params`` in place; names missing from ``grads`` are skipped."""
        state = self.state
        state.step += 1
        bc1 = 1.0 - self.beta1 ** state.step
        bc2 = 1.0 - self.beta2 ** state.step
        step_size = self.lr / bc1

        for name, value in params.items():
            if name not in grads:
                continue
            g = grads[name]
            if name not in state.m:
                state.m[name] = np.zeros_like(value)
                state.v[name] = np.zeros_like(value)
            m, v = state.m[name], state.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            value -= step_size * m / (np.sqrt(v / bc2) + self.eps)
