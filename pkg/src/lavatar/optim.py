"""Adam with named parameter groups and per-group learning rates."""

from __future__ import annotations

import numpy as np


class Adam:
    """Updates arrays in place; deterministic given the gradient sequence."""

    def __init__(self, params: dict[str, np.ndarray], lrs: dict[str, float],
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        unknown = set(lrs) - set(params)
        if unknown:
            raise ValueError(f"learning rates for unknown groups: {sorted(unknown)}")
        self.params = params
        self.lrs = dict(lrs)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_counts = {k: 0 for k in params}
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    @property
    def step_count(self) -> int:
        return max(self.step_counts.values(), default=0)

    def step(self, grads: dict[str, np.ndarray]) -> None:
        """Update the groups present in `grads`; absent groups are untouched
        (their moment estimates and bias-correction clocks do not advance)."""
        for name, g in grads.items():
            if name not in self.params:
                raise KeyError(f"unknown parameter group {name!r}")
            lr = self.lrs.get(name, 0.0)
            if lr == 0.0:
                continue
            self.step_counts[name] += 1
            t = self.step_counts[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            self.params[name] -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
