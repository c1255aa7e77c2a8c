"""Optimizer and learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError, TrainingError


class WarmupCosine:
    """Linear warmup over the first tenth of training, cosine decay after.

    ``lr_at(step)`` takes a 1-based step index: it climbs linearly to the
    peak at step = warmup_steps and reaches exactly 0 at step = total_steps.
    """

    def __init__(self, peak_lr, total_steps, warmup_frac=0.1):
        if total_steps < 1:
            raise ConfigurationError(f"total_steps must be >= 1, got {total_steps}")
        if not (0.0 < warmup_frac < 1.0):
            raise ConfigurationError(f"warmup_frac must be in (0,1), got {warmup_frac}")
        self.peak_lr = peak_lr
        self.total_steps = total_steps
        self.warmup_steps = max(1, round(total_steps * warmup_frac))

    def lr_at(self, step):
        if not (1 <= step <= self.total_steps):
            raise ConfigurationError(
                f"step {step} outside schedule range [1,{self.total_steps}]")
        if step <= self.warmup_steps:
            return self.peak_lr * step / self.warmup_steps
        progress = (step - self.warmup_steps) / (self.total_steps - self.warmup_steps)
        return self.peak_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


class AdamW:
    """Adam with decoupled weight decay.

    Takes (name, tensor) pairs so a bad gradient can be reported by
    parameter name. Tensors flagged ``no_decay`` (BN affine terms, the
    loss log-variances) skip the decay term. Aborts on non-finite
    gradients rather than silently corrupting the moments.
    """

    def __init__(self, named_params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=1e-4):
        self.params = list(named_params)
        seen = set()
        for name, _ in self.params:
            if name in seen:
                raise ConfigurationError(f"duplicate parameter name {name!r}")
            seen.add(name)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = {name: np.zeros_like(p.data) for name, p in self.params}
        self._v = {name: np.zeros_like(p.data) for name, p in self.params}

    def zero_grad(self):
        for _, p in self.params:
            p.grad = None

    def step(self, lr=None):
        self.step_count += 1
        t = self.step_count
        lr = self.lr if lr is None else lr
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise TrainingError(
                    f"non-finite gradient in {name} at step {t}; aborting")
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay and not p.no_decay:
                update = update + self.weight_decay * p.data
            p.data = p.data - lr * update
