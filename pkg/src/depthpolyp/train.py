"""Training loop, evaluation, and inference-speed measurement."""

from __future__ import annotations

import contextlib
import gc
import time
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from . import autodiff as ad
from .autodiff import Tensor
from .degrade import DegradationSpec, degrade_sample
from .errors import ConfigurationError, TrainingError
from .losses import model_loss
from .metrics import MetricReport, binary_metrics
from .optim import AdamW, WarmupCosine


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    lr: float = 1e-4
    weight_decay: float = 1e-4
    warmup_frac: float = 0.1
    condition: str = "clean"   # "clean" or "noisy" (online degradations)
    degrade_seed: int = 77
    use_depth: bool = True
    seed: int = 0              # epoch shuffling
    threshold: float = 0.5
    total_steps: int = 0       # >0 caps training at this many steps

    def validate(self):
        if self.condition not in ("clean", "noisy"):
            raise ConfigurationError(
                f"condition must be clean or noisy, got {self.condition!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError(
                f"bad epochs/batch_size: {self.epochs}/{self.batch_size}")
        return self


def stack_batch(samples):
    """Samples -> (images (B,3,H,W), masks (B,1,H,W), depths (B,1,H,W))."""
    images = np.stack([s.image.transpose(2, 0, 1) for s in samples])
    masks = np.stack([s.mask[None].astype(np.float32) for s in samples])
    depths = np.stack([s.depth[None] for s in samples])
    return images, masks, depths


def _epoch_view(samples, epoch, cfg, spec):
    """Per-epoch sample list; noisy runs swap in fresh degradations.

    Every sample is re-degraded each epoch with a distinct keyed stream
    (epoch * n + i), so the model never sees the same corruption twice;
    which operators fire is governed by the per-operator probabilities.
    """
    if cfg.condition == "clean":
        return samples
    from .data import Sample  # local import, data does not depend on train
    out = []
    n = len(samples)
    for i, s in enumerate(samples):
        img, mask, depth, _ = degrade_sample(
            s.image, s.mask, s.depth, cfg.degrade_seed, epoch * n + i, spec)
        out.append(Sample(id=s.id, image=img, mask=mask, depth=depth,
                          condition="noisy"))
    return out


def train_model(net, samples, cfg=None, spec=None):
    """Mini-batch training; returns the per-step history list.

    History rows carry step, epoch, lr, total loss, the two task losses
    and the two log-variances. Non-finite losses or gradients abort with
    a TrainingError naming the step.
    """
    cfg = (cfg or TrainConfig()).validate()
    spec = spec or DegradationSpec()
    if not samples:
        raise ConfigurationError("empty training set")
    n = len(samples)
    steps_per_epoch = -(-n // cfg.batch_size)
    total = cfg.total_steps if cfg.total_steps > 0 else cfg.epochs * steps_per_epoch
    history = []
    if total == 0:
        return history
    sched = WarmupCosine(cfg.lr, total, warmup_frac=cfg.warmup_frac)
    opt = AdamW(list(net.named_parameters()), lr=cfg.lr,
                weight_decay=cfg.weight_decay)
    shuffler = np.random.default_rng([cfg.seed, 0xD5])

    net.train()
    step = 0
    epoch = 0
    while step < total:
        epoch_samples = _epoch_view(samples, epoch, cfg, spec)
        order = shuffler.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            if step >= total:
                break
            batch = [epoch_samples[j] for j in order[lo:lo + cfg.batch_size]]
            images, masks, depths = stack_batch(batch)
            ad.clear_tape()
            loss, parts = model_loss(
                net, Tensor(images), Tensor(masks),
                Tensor(depths) if cfg.use_depth else None)
            if not np.isfinite(loss.data):
                raise TrainingError(
                    f"non-finite loss {loss.data} at step {step + 1} "
                    f"(epoch {epoch}, parts {parts})")
            ad.backward(loss)
            step += 1
            lr = sched.lr_at(step)
            opt.step(lr=lr)
            opt.zero_grad()
            history.append({"step": step, "epoch": epoch, "lr": lr,
                            "loss": float(loss.data), **parts})
        epoch += 1
    return history


def predict(net, samples, batch_size=16):
    """Forward in eval mode; returns (probs, depths) as (N,H,W) arrays."""
    net.eval()
    probs, depths = [], []
    with ad.no_grad():
        for lo in range(0, len(samples), batch_size):
            batch = samples[lo:lo + batch_size]
            images, _, _ = stack_batch(batch)
            logits, depth = net(Tensor(images))
            z = logits.data
            p = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                         np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
            probs.extend(p[:, 0])
            depths.extend(depth.data[:, 0])
    return probs, depths


def evaluate(net, samples, threshold=0.5, batch_size=16):
    """Per-image metrics over a sample list, averaged into a report."""
    probs, _ = predict(net, samples, batch_size=batch_size)
    report = MetricReport(threshold=threshold)
    for sample, p in zip(samples, probs):
        report.add(sample.id, *binary_metrics(p, sample.mask, threshold))
    return report


def bench_fps(net, input_size, warmup=10, iters=100, seed=0, threads=1):
    """Forward-only wall-clock timing at batch 1.

    Returns mean/std FPS over the timed iterations plus the coefficient
    of variation of the per-iteration times. BLAS pools are capped at
    `threads` during timing (pass None to leave them alone).
    """
    if iters < 10:
        raise ConfigurationError(f"iters must be >= 10, got {iters}")
    h, w = (input_size, input_size) if isinstance(input_size, int) else input_size
    rng = np.random.default_rng(seed)
    x = Tensor(rng.random((1, net.config.in_channels, h, w), dtype=np.float32))
    net.eval()
    times = np.empty(iters)
    pool_cap = (threadpool_limits(limits=threads) if threads
                else contextlib.nullcontext())
    # collector pauses otherwise land inside random iterations and inflate
    # the variance; reference counting still reclaims the per-forward arrays
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        with pool_cap, ad.no_grad():
            for _ in range(warmup):
                net(x)
            for i in range(iters):
                t0 = time.perf_counter()
                net(x)
                times[i] = time.perf_counter() - t0
    finally:
        if gc_was_enabled:
            gc.enable()
    fps = 1.0 / times
    return {
        "input_size": (h, w),
        "iters": iters,
        "mean_fps": float(fps.mean()),
        "std_fps": float(fps.std()),
        "cov": float(times.std() / times.mean()),
        "mean_ms": float(times.mean() * 1e3),
    }
