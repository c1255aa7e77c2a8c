"""Synthetic datasets and portable image I/O.

The procedural generator stands in for an endoscopic corpus at desk
scale: pinkish textured mucosa, one to three smooth protruding blobs
(the "polyps"), a radial pseudo-depth field dipping inside the blobs.
Every sample is a pure function of (seed, index).

Files use binary PPM (P6) for images and PGM (P5) for masks (0/255) and
depth (0..255 mapped to [0,1]); a dataset is a directory of
NNNNN.ppm / NNNNN.mask.pgm / NNNNN.depth.pgm triples.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError


@dataclass
class Sample:
    id: str
    image: np.ndarray  # (H,W,3) float32 in [0,1]
    mask: np.ndarray   # (H,W) uint8 in {0,1}
    depth: np.ndarray  # (H,W) float32 in [0,1]
    condition: str = "clean"

    def validate(self):
        h, w = self.mask.shape
        if self.image.shape != (h, w, 3):
            raise DataError(
                f"sample {self.id}: image shape {self.image.shape} does not match "
                f"mask {(h, w)}")
        if self.depth.shape != (h, w):
            raise DataError(
                f"sample {self.id}: depth shape {self.depth.shape} does not match "
                f"mask {(h, w)}")
        if not np.all((self.mask == 0) | (self.mask == 1)):
            raise DataError(f"sample {self.id}: mask is not strictly binary")
        if self.image.min() < 0 or self.image.max() > 1:
            raise DataError(f"sample {self.id}: image values outside [0,1]")
        if self.depth.min() < 0 or self.depth.max() > 1:
            raise DataError(f"sample {self.id}: depth values outside [0,1]")
        return self


def _box_smooth(field, radius=2):
    n = 2 * radius + 1
    padded = np.pad(field, radius, mode="edge")
    out = np.zeros_like(field)
    for dy in range(n):
        for dx in range(n):
            out += padded[dy:dy + field.shape[0], dx:dx + field.shape[1]]
    return out / (n * n)


def synth_sample(size, seed, index):
    """Generate one procedural sample, deterministic in (seed, index)."""
    if size % 32 != 0:
        raise ConfigurationError(f"sample size {size} must be a multiple of 32")
    rng = np.random.default_rng([seed, index])
    s = size
    ys, xs = np.meshgrid(np.arange(s, dtype=np.float64),
                         np.arange(s, dtype=np.float64), indexing="ij")

    # Mucosa background: pink base, a few low-frequency waves, grain.
    base = np.array([0.78, 0.45, 0.42])
    img = np.tile(base, (s, s, 1))
    for _ in range(3):
        fy, fx = rng.uniform(0.5, 2.5, size=2) * 2 * np.pi / s
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.02, 0.06)
        wave = amp * np.sin(fy * ys + fx * xs + phase)
        img += wave[:, :, None] * rng.uniform(0.5, 1.0, size=3)
    img += rng.normal(0.0, 0.015, size=(s, s, 3))

    # Lumen: the image darkens and the scene recedes toward this point.
    ly, lx = rng.uniform(0.25 * s, 0.75 * s, size=2)
    lumen_dist = np.sqrt((ys - ly) ** 2 + (xs - lx) ** 2) / s
    img *= (0.55 + 0.45 * np.clip(lumen_dist * 1.8, 0, 1))[:, :, None]
    depth = lumen_dist.copy()

    mask = np.zeros((s, s), dtype=np.uint8)
    n_blobs = rng.integers(1, 4)
    blob_color = np.array([0.86, 0.52, 0.47])
    for _ in range(n_blobs):
        margin = 0.2 * s
        cy, cx = rng.uniform(margin, s - margin, size=2)
        a = rng.uniform(0.13 * s, 0.27 * s)
        b = rng.uniform(0.13 * s, 0.27 * s)
        tilt = rng.uniform(0, np.pi)
        amps = rng.uniform(0.0, 0.12, size=3)
        phases = rng.uniform(0, 2 * np.pi, size=3)

        dy, dx = ys - cy, xs - cx
        rx = dx * np.cos(tilt) + dy * np.sin(tilt)
        ry = -dx * np.sin(tilt) + dy * np.cos(tilt)
        rho = np.sqrt((rx / a) ** 2 + (ry / b) ** 2)
        theta = np.arctan2(ry, rx)
        boundary = 1.0
        for k, (amp, ph) in enumerate(zip(amps, phases), start=2):
            boundary = boundary + amp * np.sin(k * theta + ph)
        inside = rho <= boundary
        mask[inside] = 1

        soft = 1.0 / (1.0 + np.exp((rho - boundary) / 0.08))
        tint = rng.uniform(0.75, 1.0)
        img = img * (1 - 0.7 * soft[:, :, None]) + \
            (blob_color * tint) * (0.7 * soft[:, :, None])
        shine = 0.15 * np.exp(-((rx / a) ** 2 + (ry / b) ** 2) / 0.18)
        img += shine[:, :, None]

        bump = np.exp(-(dy ** 2 + dx ** 2) / (2 * (0.5 * (a + b)) ** 2))
        depth -= 0.35 * bump

    depth = _box_smooth(depth, radius=2)
    dmin, dmax = depth.min(), depth.max()
    depth = (depth - dmin) / (dmax - dmin) if dmax > dmin else np.zeros_like(depth)

    sample = Sample(
        id=f"{index:05d}",
        image=np.clip(img, 0.0, 1.0).astype(np.float32),
        mask=mask,
        depth=depth.astype(np.float32),
    )
    return sample.validate()


def synth_dataset(n, size, seed):
    """n procedural samples; same (n, size, seed) gives bit-identical data."""
    return [synth_sample(size, seed, i) for i in range(n)]


# ---------------------------------------------------------------------------
# PPM / PGM


def _write_netpbm(path, magic, arr):
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"{magic}\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.astype(np.uint8).tobytes())


def write_ppm(path, image):
    """image (H,W,3) float in [0,1] -> binary P6."""
    _write_netpbm(path, "P6", np.rint(np.clip(image, 0, 1) * 255))


def write_pgm(path, gray):
    """gray (H,W): uint8 written as-is, float mapped from [0,1] to 0..255."""
    if gray.dtype == np.uint8:
        arr = gray
    else:
        arr = np.rint(np.clip(gray, 0, 1) * 255)
    _write_netpbm(path, "P5", arr)


def _read_netpbm(path, expect_magic):
    with open(path, "rb") as fh:
        data = fh.read()
    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # comments (#...) allowed between them.
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n|\S+)").match(data, pos)
        if m is None:
            raise DataError(f"{path}: truncated netpbm header")
        pos = m.end()
        tok = m.group(1)
        if not tok.startswith(b"#"):
            tokens.append(tok)
    magic = tokens[0].decode("ascii")
    if magic != expect_magic:
        raise DataError(f"{path}: expected {expect_magic}, found {magic}")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise DataError(f"{path}: only maxval 255 supported, got {maxval}")
    channels = 3 if expect_magic == "P6" else 1
    body = data[pos + 1:]  # single whitespace byte after maxval
    need = w * h * channels
    if len(body) < need:
        raise DataError(f"{path}: pixel payload truncated ({len(body)} < {need})")
    arr = np.frombuffer(body[:need], dtype=np.uint8)
    return arr.reshape((h, w, 3) if channels == 3 else (h, w))


def read_ppm(path):
    return _read_netpbm(path, "P6").astype(np.float32) / 255.0


def read_pgm(path, binary=False):
    arr = _read_netpbm(path, "P5")
    if binary:
        return (arr >= 128).astype(np.uint8)
    return arr.astype(np.float32) / 255.0


# ---------------------------------------------------------------------------
# Dataset directories


def save_dataset(directory, samples):
    os.makedirs(directory, exist_ok=True)
    for sample in samples:
        stem = os.path.join(directory, sample.id)
        write_ppm(f"{stem}.ppm", sample.image)
        write_pgm(f"{stem}.mask.pgm", sample.mask * np.uint8(255))
        write_pgm(f"{stem}.depth.pgm", sample.depth)


def load_dataset(directory, condition="clean"):
    if not os.path.isdir(directory):
        raise DataError(f"dataset directory not found: {directory}")
    ids = sorted(
        name[:-4] for name in os.listdir(directory)
        if name.endswith(".ppm") and not name.endswith(".mask.ppm"))
    if not ids:
        raise DataError(f"no .ppm images under {directory}")
    samples = []
    for sid in ids:
        stem = os.path.join(directory, sid)
        mask = read_pgm(f"{stem}.mask.pgm", binary=True)
        depth_path = f"{stem}.depth.pgm"
        depth = (read_pgm(depth_path) if os.path.exists(depth_path)
                 else np.zeros(mask.shape, dtype=np.float32))
        sample = Sample(id=sid, image=read_ppm(f"{stem}.ppm"), mask=mask,
                        depth=depth, condition=condition)
        samples.append(sample.validate())
    return samples
