"""Synthetic degradation operators and the sampling pipeline.

Every operator is a pure function of explicit parameters; randomness
lives only in ``degrade_sample``, which draws parameters from per-operator
counter-based streams (see rng.KeyedRng) and records them in an event
list. Replaying the events reproduces the degraded sample bit-exactly,
which is what the corpus manifest is for.

Conventions: image (H,W,3) float32 in [0,1], mask (H,W) uint8 {0,1},
depth (H,W) float32 in [0,1]. Photometric operators touch the image only;
the geometric warp moves image, mask and depth together so labels stay
aligned with pixels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .rng import KeyedRng

OPERATOR_ORDER = (
    "motion_blur",
    "gaussian_blur",
    "brightness",
    "contrast",
    "jpeg",
    "light_spots",
    "fog",
    "optical_distortion",
)


@dataclass
class DegradationSpec:
    """Operator parameter ranges and firing probabilities."""

    motion_p: float = 1.0
    motion_kernel: tuple = (3, 29)
    gaussian_p: float = 0.2
    gaussian_sizes: tuple = (3, 5, 7)
    # Literal-sigma reading of the blur row: treat the three values as
    # sigmas instead of kernel sizes. Off by default.
    gaussian_sigma_literal: bool = False
    brightness_p: float = 1.0
    brightness_range: tuple = (-0.1, 0.2)
    contrast_p: float = 1.0
    contrast_range: tuple = (-0.2, 0.2)
    jpeg_p: float = 0.5
    jpeg_quality: tuple = (30, 70)
    spots_p: float = 0.8
    spots_count: tuple = (1, 3)
    spots_radius: tuple = (5, 40)
    spots_intensity: float = 0.85
    fog_p: float = 0.3
    fog_range: tuple = (0.5, 0.8)
    distortion_p: float = 0.3
    distortion_limit: float = 0.05
    shift_limit: float = 0.05

    def probabilities(self):
        return {
            "motion_blur": self.motion_p,
            "gaussian_blur": self.gaussian_p,
            "brightness": self.brightness_p,
            "contrast": self.contrast_p,
            "jpeg": self.jpeg_p,
            "light_spots": self.spots_p,
            "fog": self.fog_p,
            "optical_distortion": self.distortion_p,
        }

    def validate(self):
        for name, p in self.probabilities().items():
            if not (0.0 <= p <= 1.0):
                raise ConfigurationError(f"{name} probability {p} outside [0,1]")
        for name in ("motion_kernel", "jpeg_quality", "spots_count", "spots_radius"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ConfigurationError(f"empty range for {name}: [{lo},{hi}]")
        if self.motion_kernel[0] % 2 == 0 or self.motion_kernel[1] % 2 == 0:
            raise ConfigurationError(
                f"motion kernel bounds must be odd, got {self.motion_kernel}")
        if not self.gaussian_sigma_literal:
            for k in self.gaussian_sizes:
                if k % 2 == 0:
                    raise ConfigurationError(f"gaussian kernel size {k} must be odd")
        return self

    @classmethod
    def disabled(cls):
        """All probabilities zero; the pipeline becomes the identity."""
        return cls(motion_p=0.0, gaussian_p=0.0, brightness_p=0.0, contrast_p=0.0,
                   jpeg_p=0.0, spots_p=0.0, fog_p=0.0, distortion_p=0.0)


# ---------------------------------------------------------------------------
# Kernels shared by the blur operators


def _conv_reflect(img, kernel):
    """2-D correlation of (H,W,C) with a small kernel, reflected borders."""
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    padded = np.pad(img, ((ph, ph), (pw, pw), (0, 0)), mode="reflect")
    h, w = img.shape[:2]
    out = np.zeros_like(img)
    for ky in range(kh):
        for kx in range(kw):
            wgt = kernel[ky, kx]
            if wgt != 0.0:
                out += wgt * padded[ky:ky + h, kx:kx + w, :]
    return out


def motion_blur_kernel(kernel_size, angle_deg):
    """1-px-wide line through the kernel center, normalized to sum 1."""
    if kernel_size % 2 == 0:
        raise ConfigurationError(f"motion kernel size must be odd, got {kernel_size}")
    if kernel_size < 3:
        raise ConfigurationError(f"motion kernel size must be >= 3, got {kernel_size}")
    c = kernel_size // 2
    theta = np.deg2rad(angle_deg)
    dx, dy = np.cos(theta), np.sin(theta)
    kernel = np.zeros((kernel_size, kernel_size), dtype=np.float32)
    # Oversampled rasterization so steep lines stay connected.
    for t in np.linspace(-c, c, 4 * kernel_size):
        y = int(round(c + t * dy))
        x = int(round(c + t * dx))
        if 0 <= y < kernel_size and 0 <= x < kernel_size:
            kernel[y, x] = 1.0
    kernel /= kernel.sum()
    return kernel


def motion_blur(img, kernel_size, angle_deg):
    out = _conv_reflect(img, motion_blur_kernel(kernel_size, angle_deg))
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def gaussian_kernel1d(kernel_size, sigma=None):
    if kernel_size % 2 == 0:
        raise ConfigurationError(f"gaussian kernel size must be odd, got {kernel_size}")
    if sigma is None:
        sigma = 0.3 * ((kernel_size - 1) / 2 - 1) + 0.8
    xs = np.arange(kernel_size, dtype=np.float64) - kernel_size // 2
    g = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return (g / g.sum()).astype(np.float32)


def gaussian_blur(img, kernel_size, sigma=None):
    g = gaussian_kernel1d(kernel_size, sigma)
    out = _conv_reflect(img, g[None, :])
    out = _conv_reflect(out, g[:, None])
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def gaussian_blur_sigma(img, sigma):
    """Literal-sigma variant; kernel size grows with sigma (2*ceil(3s)+1)."""
    size = 2 * int(np.ceil(3.0 * sigma)) + 1
    return gaussian_blur(img, size, sigma)


def brightness(img, alpha):
    return np.clip(img + np.float32(alpha), 0.0, 1.0)


def contrast(img, beta):
    """Scale distances from the per-channel mean by (1+beta), then clamp."""
    mean = img.mean(axis=(0, 1), keepdims=True)
    out = (img - mean) * np.float32(1.0 + beta) + mean
    return np.clip(out, 0.0, 1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# JPEG-style quantization (per-channel, no subsampling or entropy coding)

# Standard luminance quantization table.
_JPEG_QTABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


def _dct_matrix():
    n = 8
    mat = np.zeros((n, n), dtype=np.float64)
    for u in range(n):
        a = np.sqrt(1.0 / n) if u == 0 else np.sqrt(2.0 / n)
        for x in range(n):
            mat[u, x] = a * np.cos((2 * x + 1) * u * np.pi / (2 * n))
    return mat


_DCT = _dct_matrix()


def jpeg_quant_table(quality):
    """Base table scaled by the classic quality law, clamped to [1,255]."""
    if not (1 <= quality <= 100):
        raise ConfigurationError(f"jpeg quality {quality} outside [1,100]")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    q = np.floor((_JPEG_QTABLE * scale + 50.0) / 100.0)
    return np.clip(q, 1.0, 255.0)


def jpeg_compress(img, quality):
    """Blockwise DCT quantization round-trip on each channel.

    Values are mapped to the centered [-128,127] JPEG domain but not
    rounded to integers on the way in; only the coefficient quantization
    introduces error.
    """
    qtable = jpeg_quant_table(quality)
    h, w = img.shape[:2]
    ph = (-h) % 8
    pw = (-w) % 8
    x = img.astype(np.float64).transpose(2, 0, 1) * 255.0 - 128.0
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, ph), (0, pw)), mode="edge")
    c, hp, wp = x.shape
    blocks = x.reshape(c, hp // 8, 8, wp // 8, 8).transpose(0, 1, 3, 2, 4)
    coeff = np.einsum("ux,cijxy,vy->cijuv", _DCT, blocks, _DCT)
    coeff = np.round(coeff / qtable) * qtable
    rec = np.einsum("ux,cijuv,vy->cijxy", _DCT, coeff, _DCT)
    rec = rec.transpose(0, 1, 3, 2, 4).reshape(c, hp, wp)[:, :h, :w]
    out = (rec + 128.0) / 255.0
    return np.clip(out.transpose(1, 2, 0), 0.0, 1.0).astype(np.float32)


def light_spots(img, spots, intensity=0.85):
    """Blend toward white around each (cy, cx, radius) with Gaussian falloff."""
    out = img.astype(np.float32).copy()
    h, w = img.shape[:2]
    ys = np.arange(h, dtype=np.float32)[:, None]
    xs = np.arange(w, dtype=np.float32)[None, :]
    for cy, cx, radius in spots:
        d2 = (ys - cy) ** 2 + (xs - cx) ** 2
        sigma = radius / 2.0
        a = (np.float32(intensity) * np.exp(-d2 / (2.0 * sigma * sigma)))[:, :, None]
        out = (1.0 - a) * out + a
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def fog(img, coef):
    if not (0.0 < coef < 1.0):
        raise ConfigurationError(f"fog coefficient {coef} outside (0,1)")
    out = (1.0 - np.float32(coef)) * img + np.float32(coef)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def _bilinear_gather(plane, sy, sx):
    h, w = plane.shape
    y0 = np.clip(np.floor(sy).astype(int), 0, max(h - 2, 0))
    x0 = np.clip(np.floor(sx).astype(int), 0, max(w - 2, 0))
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = sy - y0
    wx = sx - x0
    top = plane[y0, x0] * (1 - wx) + plane[y0, x1] * wx
    bot = plane[y1, x0] * (1 - wx) + plane[y1, x1] * wx
    return top * (1 - wy) + bot * wy


def optical_distortion(img, mask, depth, k, shift):
    """Radial barrel/pincushion warp plus a diagonal shift.

    Coordinates are normalized to [-1,1] by the half extents; the source
    location is coord*(1 + k*r^2) + shift on both axes. The image and
    depth are sampled bilinearly, the mask nearest-neighbor so it stays
    binary. Out-of-bounds sources clamp to the border.
    """
    h, w = img.shape[:2]
    if mask.shape != (h, w) or depth.shape != (h, w):
        raise ConfigurationError(
            f"mask/depth shape {mask.shape}/{depth.shape} does not match image {(h, w)}")
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    u = (xs - cx) / (w / 2.0)
    v = (ys - cy) / (h / 2.0)
    r2 = u * u + v * v
    su = u * (1.0 + k * r2) + shift
    sv = v * (1.0 + k * r2) + shift
    sx = np.clip(su * (w / 2.0) + cx, 0, w - 1)
    sy = np.clip(sv * (h / 2.0) + cy, 0, h - 1)

    warped_img = np.stack(
        [_bilinear_gather(img[:, :, ci].astype(np.float64), sy, sx)
         for ci in range(img.shape[2])], axis=-1)
    warped_depth = _bilinear_gather(depth.astype(np.float64), sy, sx)
    ny = np.clip(np.rint(sy), 0, h - 1).astype(int)
    nx = np.clip(np.rint(sx), 0, w - 1).astype(int)
    warped_mask = mask[ny, nx]
    return (np.clip(warped_img, 0.0, 1.0).astype(np.float32),
            warped_mask,
            np.clip(warped_depth, 0.0, 1.0).astype(np.float32))


# ---------------------------------------------------------------------------
# Pipeline


def _draw_params(op, spec, rng, shape):
    h, w = shape
    if op == "motion_blur":
        lo, hi = spec.motion_kernel
        size = lo + 2 * rng.randint(0, (hi - lo) // 2)
        return {"kernel_size": size, "angle": rng.uniform(0.0, 180.0)}
    if op == "gaussian_blur":
        idx = rng.randint(0, len(spec.gaussian_sizes) - 1)
        value = spec.gaussian_sizes[idx]
        if spec.gaussian_sigma_literal:
            return {"sigma": float(value)}
        return {"kernel_size": int(value)}
    if op == "brightness":
        return {"alpha": rng.uniform(*spec.brightness_range)}
    if op == "contrast":
        return {"beta": rng.uniform(*spec.contrast_range)}
    if op == "jpeg":
        return {"quality": rng.randint(*spec.jpeg_quality)}
    if op == "light_spots":
        n = rng.randint(*spec.spots_count)
        spots = [(rng.randint(0, h - 1), rng.randint(0, w - 1),
                  rng.randint(*spec.spots_radius)) for _ in range(n)]
        return {"spots": spots, "intensity": spec.spots_intensity}
    if op == "fog":
        return {"coef": rng.uniform(*spec.fog_range)}
    if op == "optical_distortion":
        return {"k": rng.uniform(-spec.distortion_limit, spec.distortion_limit),
                "shift": rng.uniform(-spec.shift_limit, spec.shift_limit)}
    raise ConfigurationError(f"unknown operator {op!r}")


def _apply(op, params, img, mask, depth):
    if op == "motion_blur":
        return motion_blur(img, params["kernel_size"], params["angle"]), mask, depth
    if op == "gaussian_blur":
        if "sigma" in params:
            return gaussian_blur_sigma(img, params["sigma"]), mask, depth
        return gaussian_blur(img, params["kernel_size"]), mask, depth
    if op == "brightness":
        return brightness(img, params["alpha"]), mask, depth
    if op == "contrast":
        return contrast(img, params["beta"]), mask, depth
    if op == "jpeg":
        return jpeg_compress(img, params["quality"]), mask, depth
    if op == "light_spots":
        spots = [tuple(s) for s in params["spots"]]
        return light_spots(img, spots, params["intensity"]), mask, depth
    if op == "fog":
        return fog(img, params["coef"]), mask, depth
    if op == "optical_distortion":
        return optical_distortion(img, mask, depth, params["k"], params["shift"])
    raise ConfigurationError(f"unknown operator {op!r}")


def degrade_sample(img, mask, depth, seed, sample_index, spec=None):
    """Apply the pipeline with parameters drawn from keyed streams.

    Returns (img, mask, depth, events) where events is one record per
    operator in application order: {"op", "fired", "params"}. The result
    is a pure function of (spec, inputs, seed, sample_index).
    """
    spec = (spec or DegradationSpec()).validate()
    probs = spec.probabilities()
    events = []
    for op_index, op in enumerate(OPERATOR_ORDER):
        rng = KeyedRng(seed, sample_index, op_index)
        fired = rng.uniform() < probs[op]
        params = _draw_params(op, spec, rng, mask.shape) if fired else {}
        if fired:
            img, mask, depth = _apply(op, params, img, mask, depth)
        events.append({"op": op, "fired": fired, "params": params})
    return img, mask, depth, events


def replay_events(img, mask, depth, events):
    """Re-run a recorded event list; bit-identical to the original pass."""
    for event in events:
        if event["fired"]:
            img, mask, depth = _apply(event["op"], event["params"], img, mask, depth)
    return img, mask, depth


def write_manifest(path, records):
    """One JSON object per line: {"id", "seed", "index", "events"}."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_manifest(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
