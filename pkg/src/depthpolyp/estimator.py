"""scikit-learn style front end.

PolypSegmenter wraps network construction, training and thresholded
prediction behind the familiar fit/predict surface; images are channel-
last (N,H,W,3) arrays in [0,1] and masks (N,H,W) binary arrays, so the
estimator slots into sklearn pipelines and model-selection utilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data import Sample
from .degrade import DegradationSpec, degrade_sample
from .network import DepthPolypNet, NetworkConfig
from .train import TrainConfig, predict as _predict, train_model
from .validation import check_depth_array, check_image_array, check_mask_array


def _to_samples(X, y=None, depth=None, condition="clean"):
    n = X.shape[0]
    hw = X.shape[1:3]
    masks = (check_mask_array(y, n, hw) if y is not None
             else np.zeros((n,) + hw, dtype=np.uint8))
    depths = (check_depth_array(depth, n, hw) if depth is not None
              else np.zeros((n,) + hw, dtype=np.float32))
    return [Sample(id=f"{i:05d}", image=X[i], mask=masks[i], depth=depths[i],
                   condition=condition) for i in range(n)]


class PolypSegmenter(BaseEstimator):
    """Trainable polyp segmenter with optional pseudo-depth supervision.

    The default learning rate is tuned for the desk-scale synthetic
    corpus rather than full-scale training.
    """

    def __init__(self, epochs=20, batch_size=16, lr=1e-3, weight_decay=1e-4,
                 condition="clean", use_depth=True, threshold=0.5, seed=0,
                 degrade_seed=77, widths=(16, 32, 48, 64), unified_dim=64,
                 ghost_ratio=2, groups=4, stream_dim=32, fused_dim=64,
                 kernel_size=3):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.condition = condition
        self.use_depth = use_depth
        self.threshold = threshold
        self.seed = seed
        self.degrade_seed = degrade_seed
        self.widths = widths
        self.unified_dim = unified_dim
        self.ghost_ratio = ghost_ratio
        self.groups = groups
        self.stream_dim = stream_dim
        self.fused_dim = fused_dim
        self.kernel_size = kernel_size

    def _network_config(self):
        return NetworkConfig(
            widths=tuple(self.widths), unified_dim=self.unified_dim,
            ghost_ratio=self.ghost_ratio, groups=self.groups,
            stream_dim=self.stream_dim, fused_dim=self.fused_dim,
            kernel_size=self.kernel_size, seed=self.seed)

    def _train_config(self, use_depth):
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            weight_decay=self.weight_decay, condition=self.condition,
            degrade_seed=self.degrade_seed, use_depth=use_depth,
            seed=self.seed, threshold=self.threshold)

    def fit(self, X, y, depth=None):
        """Train from scratch on images X, masks y, optional depth maps."""
        X = check_image_array(X)
        use_depth = bool(self.use_depth) and depth is not None
        samples = _to_samples(X, y, depth)
        self.net_ = DepthPolypNet(self._network_config())
        self.history_ = train_model(self.net_, samples,
                                    self._train_config(use_depth))
        self.n_samples_fit_ = len(samples)
        return self

    def predict_proba(self, X):
        """Foreground probability maps, (N,H,W) float in [0,1]."""
        check_is_fitted(self, "net_")
        X = check_image_array(X)
        probs, _ = _predict(self.net_, _to_samples(X),
                            batch_size=self.batch_size)
        return np.stack(probs)

    def predict(self, X):
        """Binary masks, (N,H,W) uint8."""
        return (self.predict_proba(X) >= self.threshold).astype(np.uint8)

    def predict_depth(self, X):
        """Predicted pseudo-depth maps, (N,H,W) float in (0,1)."""
        check_is_fitted(self, "net_")
        X = check_image_array(X)
        _, depths = _predict(self.net_, _to_samples(X),
                             batch_size=self.batch_size)
        return np.stack(depths)

    def score(self, X, y):
        """Mean per-image Dice against binary masks y."""
        from .metrics import binary_metrics
        X = check_image_array(X)
        masks = check_mask_array(y, X.shape[0], X.shape[1:3])
        probs = self.predict_proba(X)
        scores = [binary_metrics(p, m, self.threshold)[0]
                  for p, m in zip(probs, masks)]
        return float(np.mean(scores))


class DegradationTransformer(TransformerMixin, BaseEstimator):
    """Image-only degradation as a pipeline step.

    Applies the keyed degradation pipeline to each image; sample i in a
    ``transform`` call always receives the draws for (seed, offset+i), so
    the output is deterministic. Masks and depths are not part of the
    sklearn X matrix, so the geometric warp here affects pixels only;
    label-aligned warping lives in the training loop.
    """

    def __init__(self, seed=0, offset=0, spec=None):
        self.seed = seed
        self.offset = offset
        self.spec = spec

    def fit(self, X, y=None):
        check_image_array(X)
        self.is_fitted_ = True
        return self

    def transform(self, X):
        X = check_image_array(X)
        spec = self.spec if self.spec is not None else DegradationSpec()
        out = np.empty_like(X)
        hw = X.shape[1:3]
        for i in range(X.shape[0]):
            dummy_mask = np.zeros(hw, dtype=np.uint8)
            dummy_depth = np.zeros(hw, dtype=np.float32)
            img, _, _, _ = degrade_sample(
                X[i], dummy_mask, dummy_depth, self.seed, self.offset + i, spec)
            out[i] = img
        return out
