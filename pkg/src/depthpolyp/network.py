"""Full segmentation network: encoder, three-stage decoder, twin heads.

Layout at input resolution H x W (both must be multiples of 32):

  encoder   five stride-2 conv-BN-ReLU stages -> features at H/4 (w1),
            H/8 (w2), H/16 (w3), H/32 (w4); two stride-2 convs sit in
            front of the first tap
  unify     bias-free 1x1 conv to unified_dim at the source scale, then
            bilinear upsampling to H/4
  stage 1   one ghost block per scale; its primary and auxiliary halves
            are routed into two cross-scale streams, deepest scale
            first: [P4,P3,P2,P1] and [A4,A3,A2,A1]
  stage 2   each stream runs shuffle fusion then a ghost block down to
            stream_dim, splitting again into primary/aux halves
  stage 3   the four halves are concatenated (primary-of-primary-stream,
            primary-of-aux-stream, aux-of-primary-stream, aux-of-aux-
            stream) so group gating sees one group per half, then a 1x1
            conv fuses to fused_dim
  heads     bias-free 1x1 conv to one map each from the shared fused
            feature, upsampled x4; the depth head ends in a sigmoid, the
            mask head emits logits

All convolutions are bias-free; the only bias in the network sits in the
gating projection. Initialization is fully determined by config.seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .blocks import DynamicGroupGating, GhostFactorization, InterleavedShuffleFusion
from .errors import ConfigurationError, DimensionError
from .modules import BatchNorm2d, Conv2d, Module


@dataclass
class NetworkConfig:
    in_channels: int = 3
    widths: tuple = (16, 32, 48, 64)
    unified_dim: int = 64
    ghost_ratio: int = 2
    groups: int = 4
    stream_dim: int = 32
    fused_dim: int = 64
    kernel_size: int = 3
    seed: int = 0

    def validate(self):
        if len(self.widths) != 4:
            raise ConfigurationError(f"need 4 encoder widths, got {len(self.widths)}")
        if self.kernel_size % 2 == 0:
            raise ConfigurationError(f"kernel_size must be odd, got {self.kernel_size}")
        for name in ("unified_dim", "stream_dim"):
            v = getattr(self, name)
            if v % self.ghost_ratio != 0:
                raise ConfigurationError(
                    f"{name} {v} not divisible by ghost_ratio {self.ghost_ratio}")
        for width in self.stream_widths() + (2 * self.stream_dim,):
            if width % self.groups != 0:
                raise ConfigurationError(
                    f"stream width {width} not divisible by groups {self.groups}")
        return self

    def stream_widths(self):
        """Channel counts of the stage-2 primary and auxiliary streams."""
        primary = self.unified_dim // self.ghost_ratio
        return 4 * primary, 4 * (self.unified_dim - primary)

    @classmethod
    def mini(cls, seed=0):
        """Tiny variant for gradient checks and fast tests."""
        return cls(widths=(4, 4, 4, 4), unified_dim=4, stream_dim=4,
                   fused_dim=8, seed=seed)


class TaskUncertainty(Module):
    """Learned log-variances balancing the two task losses."""

    def __init__(self):
        super().__init__()
        self.log_var_seg = Tensor(np.float32(0.0), requires_grad=True)
        self.log_var_depth = Tensor(np.float32(0.0), requires_grad=True)
        self.log_var_seg.no_decay = True
        self.log_var_depth.no_decay = True


class _EncoderStage(Module):
    def __init__(self, cin, cout, rng, kernel_size):
        super().__init__()
        self.conv = Conv2d(cin, cout, kernel_size, rng, stride=2)
        self.bn = BatchNorm2d(cout)

    def forward(self, x):
        return ad.relu(self.bn(self.conv(x)))


def _halves(ghost, x):
    cp = ghost.primary_channels
    return ad.slice_channels(x, 0, cp), ad.slice_channels(x, cp, x.shape[1])


class DepthPolypNet(Module):
    def __init__(self, config=None):
        super().__init__()
        cfg = (config or NetworkConfig()).validate()
        self.config = cfg
        rng = np.random.default_rng(cfg.seed)
        w1, w2, w3, w4 = cfg.widths
        k = cfg.kernel_size

        self.encoder = [
            _EncoderStage(cfg.in_channels, w1, rng, k),  # H/2
            _EncoderStage(w1, w1, rng, k),               # H/4
            _EncoderStage(w1, w2, rng, k),               # H/8
            _EncoderStage(w2, w3, rng, k),               # H/16
            _EncoderStage(w3, w4, rng, k),               # H/32
        ]
        self.unify = [Conv2d(w, cfg.unified_dim, 1, rng) for w in cfg.widths]
        self.stage1 = [
            GhostFactorization(cfg.unified_dim, cfg.unified_dim, rng,
                               ratio=cfg.ghost_ratio, kernel_size=k)
            for _ in range(4)
        ]
        wp, wa = cfg.stream_widths()
        self.fuse_primary = InterleavedShuffleFusion(wp, rng, groups=cfg.groups,
                                                     kernel_size=k)
        self.ghost_primary = GhostFactorization(wp, cfg.stream_dim, rng,
                                                ratio=cfg.ghost_ratio, kernel_size=k)
        self.fuse_aux = InterleavedShuffleFusion(wa, rng, groups=cfg.groups,
                                                 kernel_size=k)
        self.ghost_aux = GhostFactorization(wa, cfg.stream_dim, rng,
                                            ratio=cfg.ghost_ratio, kernel_size=k)
        self.gating = DynamicGroupGating(2 * cfg.stream_dim, groups=cfg.groups)
        self.fusion = Conv2d(2 * cfg.stream_dim, cfg.fused_dim, 1, rng)
        self.seg_head = Conv2d(cfg.fused_dim, 1, 1, rng)
        self.depth_head = Conv2d(cfg.fused_dim, 1, 1, rng)
        self.uncertainty = TaskUncertainty()

    # -- plumbing ------------------------------------------------------

    def check_input(self, x):
        if x.data.ndim != 4:
            raise DimensionError(f"expected (B,C,H,W) input, got rank {x.data.ndim}")
        b, c, h, w = x.shape
        if c != self.config.in_channels:
            raise DimensionError(
                f"channel axis mismatch: input has {c} channels, network expects "
                f"{self.config.in_channels}")
        if h % 32 != 0 or w % 32 != 0:
            raise DimensionError(
                f"input size {(h, w)} must be a multiple of 32 on both axes")

    def forward(self, x):
        """Returns (mask_logits, depth) at input resolution."""
        self.check_input(x)
        h, w = x.shape[2], x.shape[3]
        target = (h // 4, w // 4)

        feats = []
        cur = x
        for stage in self.encoder:
            cur = stage(cur)
            feats.append(cur)
        scales = feats[1:]  # H/4 .. H/32

        unified = [
            ad.upsample_bilinear(conv(feat), target)
            for conv, feat in zip(self.unify, scales)
        ]
        primaries, auxes = [], []
        for block, u in zip(self.stage1, unified):
            p, a = _halves(block, block(u))
            primaries.append(p)
            auxes.append(a)

        # Deepest scale leads each cross-scale stream.
        stream_p = ad.concat_channels(primaries[::-1])
        stream_a = ad.concat_channels(auxes[::-1])
        feat_p = self.ghost_primary(self.fuse_primary(stream_p))
        feat_a = self.ghost_aux(self.fuse_aux(stream_a))

        pp, pa = _halves(self.ghost_primary, feat_p)
        ap, aa = _halves(self.ghost_aux, feat_a)
        fused = ad.concat_channels([pp, ap, pa, aa])
        fused = self.fusion(self.gating(fused))

        logits = ad.upsample_bilinear(self.seg_head(fused), (h, w))
        depth = ad.sigmoid(ad.upsample_bilinear(self.depth_head(fused), (h, w)))
        return logits, depth


# ---------------------------------------------------------------------------
# Accounting


_GROUP_PREFIXES = (
    ("encoder", ("encoder.",)),
    ("unify", ("unify.",)),
    ("stage1", ("stage1.",)),
    ("streams", ("fuse_primary.", "ghost_primary.", "fuse_aux.", "ghost_aux.")),
    ("fusion", ("gating.", "fusion.")),
    ("heads", ("seg_head.", "depth_head.")),
    ("uncertainty", ("uncertainty.",)),
)


def parameter_table(net):
    """Per-tensor rows: (dotted name, shape, element count)."""
    return [(name, tuple(p.shape), p.size) for name, p in net.named_parameters()]


def parameter_summary(net):
    """Element counts bucketed by architectural section, plus the total."""
    totals = {group: 0 for group, _ in _GROUP_PREFIXES}
    for name, _, count in parameter_table(net):
        for group, prefixes in _GROUP_PREFIXES:
            if name.startswith(prefixes):
                totals[group] += count
                break
        else:
            raise ConfigurationError(f"parameter {name} missing from the group map")
    totals["total"] = sum(totals.values())
    return totals


def _ghost_macs(rows, label, cin, cout, ratio, k, h, w):
    primary = cout // ratio
    aux = cout - primary
    mult = -(-aux // primary)
    rows.append((f"{label}.pointwise", h * w * cin * primary))
    rows.append((f"{label}.depthwise", primary * mult * k * k * h * w))


def mac_table(config, height, width, batch=1):
    """Static multiply-add counts per op, in forward execution order.

    Mirrors the conventions of the instrumented kernels exactly: dense and
    pointwise convs count Cout*Cin*K*K per output pixel, depthwise convs
    K*K per output element, bilinear resizing 4 per output element (zero
    when the size is unchanged), and normalization, activations, pooling
    and elementwise arithmetic count zero.
    """
    cfg = config.validate()
    if height % 32 != 0 or width % 32 != 0:
        raise ConfigurationError(
            f"input size {(height, width)} must be a multiple of 32 on both axes")
    k = cfg.kernel_size
    rows = []

    def conv(label, cin, cout, ksize, h, w):
        rows.append((label, cout * cin * ksize * ksize * h * w))

    widths = [cfg.in_channels] + list(cfg.widths[:1]) + list(cfg.widths)
    h, w = height, width
    for i in range(5):
        h, w = h // 2, w // 2
        conv(f"encoder.{i}", widths[i], widths[i + 1], k, h, w)
    th, tw = height // 4, width // 4
    sizes = [(height // d, width // d) for d in (4, 8, 16, 32)]
    for i, ((sh, sw), cw) in enumerate(zip(sizes, cfg.widths)):
        conv(f"unify.{i}", cw, cfg.unified_dim, 1, sh, sw)
        up = 0 if (sh, sw) == (th, tw) else 4 * cfg.unified_dim * th * tw
        rows.append((f"unify.{i}.upsample", up))
    for i in range(4):
        _ghost_macs(rows, f"stage1.{i}", cfg.unified_dim, cfg.unified_dim,
                    cfg.ghost_ratio, k, th, tw)
    for stream, swidth in zip(("primary", "aux"), cfg.stream_widths()):
        rows.append((f"fuse_{stream}.depthwise", swidth * k * k * th * tw))
        _ghost_macs(rows, f"ghost_{stream}", swidth, cfg.stream_dim,
                    cfg.ghost_ratio, k, th, tw)
    rows.append(("gating.proj", cfg.groups * cfg.groups))
    conv("fusion", 2 * cfg.stream_dim, cfg.fused_dim, 1, th, tw)
    conv("seg_head", cfg.fused_dim, 1, 1, th, tw)
    rows.append(("seg_head.upsample", 4 * height * width))
    conv("depth_head", cfg.fused_dim, 1, 1, th, tw)
    rows.append(("depth_head.upsample", 4 * height * width))
    if batch != 1:
        rows = [(name, n * batch) for name, n in rows]
    return rows


def total_macs(config, height, width, batch=1):
    return sum(n for _, n in mac_table(config, height, width, batch=batch))
