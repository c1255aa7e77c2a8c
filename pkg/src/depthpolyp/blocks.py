"""Decoder building blocks: ghost factorization, shuffle fusion, group gating."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError
from .modules import BatchNorm2d, Conv2d, DepthwiseConv2d, Linear, Module


class GhostFactorization(Module):
    """Cheap replacement for a dense KxK conv.

    A pointwise conv produces out_channels // ratio primary maps; the
    remaining maps are derived from the primaries by a depthwise conv
    (channel multiplier rounds up, surplus maps are dropped). Both halves
    get BN + ReLU and are concatenated primary-first.
    """

    def __init__(self, in_channels, out_channels, rng, ratio=2, kernel_size=3):
        super().__init__()
        if ratio < 2 or out_channels % ratio != 0:
            raise ConfigurationError(
                f"out_channels {out_channels} must be divisible by ratio {ratio} (>= 2)")
        self.primary_channels = out_channels // ratio
        self.aux_channels = out_channels - self.primary_channels
        self.multiplier = math.ceil(self.aux_channels / self.primary_channels)
        self.pointwise = Conv2d(in_channels, self.primary_channels, 1, rng)
        self.bn_primary = BatchNorm2d(self.primary_channels)
        self.depthwise = DepthwiseConv2d(
            self.primary_channels, kernel_size, rng, multiplier=self.multiplier)
        self.bn_aux = BatchNorm2d(self.aux_channels)

    def forward(self, x):
        p = ad.relu(self.bn_primary(self.pointwise(x)))
        a = self.depthwise(p)
        if a.shape[1] != self.aux_channels:
            a = ad.slice_channels(a, 0, self.aux_channels)
        a = ad.relu(self.bn_aux(a))
        return ad.concat_channels([p, a])


class InterleavedShuffleFusion(Module):
    """Cross-group mixing: a gated depthwise branch over shuffled channels.

    The shuffle and depthwise conv live only on the side branch, which is
    bare (no bias, no norm, no activation) and scaled per group by a
    zero-initialized vector before being added back onto the unshuffled
    input, so a freshly built block is exactly the identity.
    """

    def __init__(self, channels, rng, groups=4, kernel_size=3):
        super().__init__()
        if channels % groups != 0:
            raise ConfigurationError(
                f"channel count {channels} not divisible by group count {groups}")
        self.groups = groups
        self.depthwise = DepthwiseConv2d(channels, kernel_size, rng)
        self.gate = ad.Tensor(np.zeros(groups, dtype=np.float32),
                              requires_grad=True)

    def forward(self, x):
        shuffled = ad.channel_shuffle(x, self.groups)
        mixed = self.depthwise(shuffled)
        return ad.add(x, ad.group_scale(mixed, self.gate, self.groups))


class DynamicGroupGating(Module):
    """Content-dependent per-group amplification.

    Each group is summarized by a global average, mapped through a small
    zero-initialized affine layer and a sigmoid, and the resulting gate
    rescales the group residually: out = x * (1 + gate). A fresh block
    therefore multiplies every activation by exactly 1.5.
    """

    def __init__(self, channels, groups=4):
        super().__init__()
        if channels % groups != 0:
            raise ConfigurationError(
                f"channel count {channels} not divisible by group count {groups}")
        self.groups = groups
        self.proj = Linear(groups, groups, bias=True, zero_init=True)

    def forward(self, x):
        desc = ad.group_avgpool(x, self.groups)
        gates = ad.sigmoid(self.proj(desc))
        return ad.add(x, ad.group_gate(x, gates, self.groups))
