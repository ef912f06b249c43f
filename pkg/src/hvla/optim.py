"""Adam over dicts of numpy arrays, plus the warmup/cosine learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np


class Adam:
    def __init__(self, params: dict, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr=None, keys=None):
        """In-place update of ``params`` for every key in ``keys`` (default: all grads)."""
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k in (grads if keys is None else keys):
            g = grads[k]
            if self.weight_decay:
                g = g + self.weight_decay * params[k]
            m = self.m[k]
            v = self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            params[k] -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def warmup_steps(total_steps: int, warmup_ratio: float) -> int:
    return int(math.ceil(warmup_ratio * total_steps))


def lr_at(step: int, total_steps: int, lr_max: float, warmup_ratio: float = 0.01,
          schedule: str = "cosine") -> float:
    """Linear warmup over ``ceil(ratio * total)`` steps, then cosine decay to 0.

    ``step`` is 0-based; the last step (``total_steps - 1``) gets lr 0 under
    the cosine schedule.
    """
    w = warmup_steps(total_steps, warmup_ratio)
    if step < w:
        return lr_max * (step + 1) / w
    if schedule == "constant":
        return lr_max
    span = total_steps - w
    if span <= 0:
        return lr_max
    progress = (step - w + 1) / span if w > 0 else (step / max(1, total_steps - 1))
    return 0.5 * lr_max * (1.0 + math.cos(math.pi * min(1.0, progress)))
