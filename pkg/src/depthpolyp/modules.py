"""Parameter-holding layers on top of the tensor engine.

A Module discovers its parameters, buffers and submodules by walking its
instance attributes in definition order, so naming is deterministic and
there is no registration boilerplate. Lists of modules are traversed with
the index spliced into the dotted name.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError


class Module:
    """Base class: attribute-walk introspection plus train/eval state."""

    def __init__(self):
        self.training = True
        self._buffer_names = ()

    # -- traversal ----------------------------------------------------

    def _children(self):
        for name, value in vars(self).items():
            if name.startswith("_") or name == "training":
                continue
            yield name, value

    def named_parameters(self, prefix=""):
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{full}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name, value in self._children():
            full = f"{prefix}{name}"
            if name in self._buffer_names:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_buffers(f"{full}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{full}.{i}.")

    def modules(self):
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    # -- state --------------------------------------------------------

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for _, p in self.named_parameters():
            p.grad = None

    def astype(self, dtype):
        """Cast all parameters and buffers (float64 replay for grad checks)."""
        for _, p in self.named_parameters():
            p.astype_(dtype)
        for m in self.modules():
            for name in m._buffer_names:
                setattr(m, name, getattr(m, name).astype(dtype))
        return self

    def num_parameters(self):
        return sum(p.size for _, p in self.named_parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _he_normal(rng, shape, fan_in):
    std = np.sqrt(2.0 / fan_in)
    return (rng.standard_normal(shape) * std).astype(np.float32)


class Conv2d(Module):
    """Bias-free dense convolution; He-normal init."""

    def __init__(self, in_channels, out_channels, kernel_size, rng,
                 stride=1, padding=None):
        super().__init__()
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Tensor(
            _he_normal(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in),
            requires_grad=True)

    def forward(self, x):
        return ad.conv2d(x, self.weight, stride=self.stride, padding=self.padding)


class DepthwiseConv2d(Module):
    """Per-channel convolution with an integer channel multiplier."""

    def __init__(self, channels, kernel_size, rng, multiplier=1):
        super().__init__()
        fan_in = kernel_size * kernel_size
        self.weight = Tensor(
            _he_normal(rng, (channels * multiplier, 1, kernel_size, kernel_size), fan_in),
            requires_grad=True)

    def forward(self, x):
        return ad.conv2d_depthwise(x, self.weight)


class BatchNorm2d(Module):
    def __init__(self, channels, momentum=0.1, eps=1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones(channels, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=np.float32), requires_grad=True)
        # Affine terms are excluded from weight decay.
        self.gamma.no_decay = True
        self.beta.no_decay = True
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)
        self._buffer_names = ("running_mean", "running_var")

    def forward(self, x):
        return ad.batchnorm2d(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            self.training, momentum=self.momentum, eps=self.eps)


class Linear(Module):
    """Affine layer; zero-init option for gates that must start neutral."""

    def __init__(self, in_features, out_features, rng=None, bias=True,
                 zero_init=False):
        super().__init__()
        if zero_init:
            w = np.zeros((out_features, in_features), dtype=np.float32)
        else:
            if rng is None:
                raise ConfigurationError("Linear needs an rng unless zero_init=True")
            w = _he_normal(rng, (out_features, in_features), in_features)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, dtype=np.float32),
                           requires_grad=True) if bias else None

    def forward(self, x):
        return ad.linear(x, self.weight, self.bias)
