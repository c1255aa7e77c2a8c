"""Training objectives: overlap loss, depth regression, uncertainty weighting."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DataError, DimensionError, TrainingError

DICE_EPS = 1e-6


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def dice_loss(probs, target, eps=DICE_EPS):
    """Soft overlap loss 1 - (2*|P∩Y|+eps)/(|P|+|Y|+eps), summed batch-globally.

    ``probs`` must already be probabilities; ``target`` must be strictly
    {0,1}-valued or a DataError is raised.
    """
    target = _as_tensor(target)
    if probs.shape != target.shape:
        raise DimensionError(
            f"prediction/mask shape mismatch: {probs.shape} vs {target.shape}")
    y = target.data
    if not np.all((y == 0) | (y == 1)):
        bad = y[(y != 0) & (y != 1)]
        raise DataError(
            f"mask must be strictly binary, found value {bad.flat[0]!r}")
    inter = ad.sum_all(ad.mul(probs, target))
    total = ad.add(ad.sum_all(probs), ad.sum_all(target))
    return 1.0 - (2.0 * inter + eps) / (total + eps)


def depth_loss(pred, target, beta=1.0):
    """Mean smooth-L1 between predicted and reference depth maps."""
    return ad.smooth_l1(pred, _as_tensor(target), beta=beta)


def joint_loss(seg_term, depth_term, uncertainty):
    """Uncertainty-weighted sum of the two task losses.

    With s = log sigma^2 per task, the total is
    0.5*exp(-s_seg)*L_seg + 0.5*exp(-s_depth)*L_depth + 0.5*(s_seg + s_depth);
    each weight falls as its task's learned variance grows, and the linear
    terms stop the variances from growing without bound.
    """
    for name, term in (("segmentation", seg_term), ("depth", depth_term)):
        if not np.isfinite(term.data):
            raise TrainingError(f"{name} loss is non-finite: {term.data}")
    s_s = uncertainty.log_var_seg
    s_d = uncertainty.log_var_depth
    weighted = 0.5 * ad.exp(-s_s) * seg_term + 0.5 * ad.exp(-s_d) * depth_term
    return weighted + 0.5 * s_s + 0.5 * s_d


def model_loss(net, images, masks, depths=None):
    """Forward pass plus joint objective; returns (total, parts dict).

    When ``depths`` is None the depth branch is skipped and the overlap
    loss is returned unweighted (no uncertainty terms).
    """
    logits, depth_pred = net(images)
    seg_term = dice_loss(ad.sigmoid(logits), masks)
    if depths is None:
        return seg_term, {"seg": float(seg_term.data)}
    d_term = depth_loss(depth_pred, depths)
    total = joint_loss(seg_term, d_term, net.uncertainty)
    parts = {
        "seg": float(seg_term.data),
        "depth": float(d_term.data),
        "log_var_seg": float(net.uncertainty.log_var_seg.data),
        "log_var_depth": float(net.uncertainty.log_var_depth.data),
    }
    return total, parts
