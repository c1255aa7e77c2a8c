"""Input checking for the estimator API (array-of-images conventions)."""

from __future__ import annotations

import numpy as np

from .errors import DataError, DimensionError


def check_image_array(X):
    """Coerce to (N,H,W,3) float32 in [0,1]; H and W must be multiples of 32."""
    arr = np.asarray(X, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise DimensionError(
            f"expected images shaped (N,H,W,3), got {arr.shape}")
    n, h, w, _ = arr.shape
    if h % 32 != 0 or w % 32 != 0:
        raise DimensionError(
            f"image size {(h, w)} must be a multiple of 32 on both axes")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise DataError(
            f"image values must lie in [0,1], got range "
            f"[{arr.min():.4g}, {arr.max():.4g}]")
    return arr


def check_mask_array(y, n_expected, hw):
    """Coerce to (N,H,W) uint8 strictly {0,1}, matching the images."""
    arr = np.asarray(y)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise DimensionError(f"expected masks shaped (N,H,W), got {arr.shape}")
    if arr.shape[0] != n_expected or arr.shape[1:] != hw:
        raise DimensionError(
            f"masks {arr.shape} do not match images ({n_expected},{hw[0]},{hw[1]})")
    vals = np.unique(arr)
    if not np.all(np.isin(vals, (0, 1))):
        raise DataError(f"masks must be strictly binary, found values {vals[:5]}")
    return arr.astype(np.uint8)


def check_depth_array(depth, n_expected, hw):
    """Coerce to (N,H,W) float32 in [0,1], matching the images."""
    arr = np.asarray(depth, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise DimensionError(f"expected depths shaped (N,H,W), got {arr.shape}")
    if arr.shape[0] != n_expected or arr.shape[1:] != hw:
        raise DimensionError(
            f"depths {arr.shape} do not match images ({n_expected},{hw[0]},{hw[1]})")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise DataError(
            f"depth values must lie in [0,1], got range "
            f"[{arr.min():.4g}, {arr.max():.4g}]")
    return arr
