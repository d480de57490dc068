"""Adam with bias correction plus the EMA shadow copy used at sampling time."""

from __future__ import annotations

import numpy as np


class Adam:
    """Standard Adam; state arrays live in the optimizer, updates are in place."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(
        self,
        params: dict[str, np.ndarray],
        grads: dict[str, np.ndarray],
        lr: float,
    ) -> None:
        for name, grad in grads.items():
            if not np.all(np.isfinite(grad)):
                raise FloatingPointError(f"non-finite gradient for {name}")
        self.step_count += 1
        t = self.step_count
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            p -= (lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)

    def state_arrays(self) -> dict[str, dict[str, np.ndarray]]:
        return {"adam_m": self.m, "adam_v": self.v}

    def load_state(
        self, m: dict[str, np.ndarray], v: dict[str, np.ndarray], step_count: int
    ) -> None:
        self.m = {k: np.array(a) for k, a in m.items()}
        self.v = {k: np.array(a) for k, a in v.items()}
        self.step_count = step_count


def init_ema(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Shadow starts as an exact copy of the parameters."""
    return {k: v.copy() for k, v in params.items()}


def ema_update(
    shadow: dict[str, np.ndarray], params: dict[str, np.ndarray], decay: float
) -> None:
    """shadow <- decay * shadow + (1 - decay) * params, in place."""
    if not 0.0 <= decay < 1.0:
        raise ValueError(f"decay must be in [0, 1), got {decay}")
    for name, p in params.items():
        s = shadow[name]
        s *= decay
        s += (1.0 - decay) * p
