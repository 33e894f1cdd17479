"""Estimator-style wrapper around the functional training/inference core.

``UnderwaterImageRestorer`` follows the scikit-learn contract: constructor
only stores hyperparameters, ``fit(X, y)`` trains on paired images,
``predict``/``transform`` restore new images, ``score`` reports mean PSNR.
Images are accepted as [3,H,W] or [H,W,3] float arrays in [0,1] (or stacks
of either); predictions always come back channels-first.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import ImagePair
from .errors import ParameterError, ShapeError
from .losses import LossWeights
from .metrics import psnr
from .network import ModelConfig, restore_image
from .trainer import LrSchedule, load_checkpoint, save_checkpoint, train_on_pairs


def as_image(arr, name="X"):
    """Validate one image and return it as float32 [3,H,W] in [0,1]."""
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim != 3:
        raise ShapeError(f"{name}: expected a 3-D image array, got shape {arr.shape}")
    if arr.shape[0] != 3 and arr.shape[-1] == 3:
        arr = np.ascontiguousarray(arr.transpose(2, 0, 1))
    if arr.shape[0] != 3:
        raise ShapeError(f"{name}: no channel axis of size 3 in shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name}: non-finite values")
    if arr.min() < -1e-5 or arr.max() > 1.0 + 1e-5:
        raise ParameterError(
            f"{name}: values outside [0,1] (min {arr.min():.4f}, max {arr.max():.4f})")
    return np.clip(arr, 0.0, 1.0)


def as_image_list(X, name="X"):
    """Accept one image, a sequence of images, or a 4-D stack."""
    if isinstance(X, np.ndarray) and X.ndim == 3:
        return [as_image(X, name)]
    if isinstance(X, np.ndarray) and X.ndim == 4:
        return [as_image(X[i], f"{name}[{i}]") for i in range(X.shape[0])]
    if isinstance(X, (list, tuple)):
        return [as_image(item, f"{name}[{i}]") for i, item in enumerate(X)]
    raise ShapeError(f"{name}: expected an image, list of images, or 4-D stack")


class UnderwaterImageRestorer(BaseEstimator):
    """Trainable restoration model with a scikit-learn interface.

    Hyperparameters mirror the run-config keys; ``fit`` trains an internal
    parameter store from scratch, deterministically from ``seed``.
    """

    def __init__(self, base_width=16, blocks_per_level=1, pooling_ratio=1.0,
                 dct_groups=8, enable_dfesa=True, enable_sfm=True,
                 steps=200, batch_size=2, patch=32, flips=True,
                 lr_max=1e-4, lr_min=1e-6, lambda_l1=1.0, lambda_fft=0.1,
                 seed=0):
        self.base_width = base_width
        self.blocks_per_level = blocks_per_level
        self.pooling_ratio = pooling_ratio
        self.dct_groups = dct_groups
        self.enable_dfesa = enable_dfesa
        self.enable_sfm = enable_sfm
        self.steps = steps
        self.batch_size = batch_size
        self.patch = patch
        self.flips = flips
        self.lr_max = lr_max
        self.lr_min = lr_min
        self.lambda_l1 = lambda_l1
        self.lambda_fft = lambda_fft
        self.seed = seed

    def _model_config(self):
        return ModelConfig(
            base_width=self.base_width,
            blocks_per_level=self.blocks_per_level,
            pooling_ratio=self.pooling_ratio,
            dct_groups=self.dct_groups,
            enable_dfesa=self.enable_dfesa,
            enable_sfm=self.enable_sfm,
            seed=self.seed,
        ).validate()

    def fit(self, X, y):
        """Train on paired degraded (X) and reference (y) images."""
        degraded = as_image_list(X, "X")
        reference = as_image_list(y, "y")
        if len(degraded) != len(reference):
            raise ShapeError(f"X has {len(degraded)} images, y has {len(reference)}")
        pairs = [ImagePair(d, r, name=f"pair{i}")
                 for i, (d, r) in enumerate(zip(degraded, reference))]
        cfg = self._model_config()
        params, trace = train_on_pairs(
            cfg, pairs, self.steps,
            patch=self.patch, flips=self.flips, data_seed=self.seed,
            batch=self.batch_size,
            weights=LossWeights(self.lambda_l1, self.lambda_fft),
            schedule=LrSchedule(self.lr_max, self.lr_min, max(1, self.steps)),
        )
        self.params_ = params
        self.config_ = cfg
        self.loss_trace_ = trace
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError(
                "This UnderwaterImageRestorer instance is not fitted yet; "
                "call fit(X, y) first.")

    def predict(self, X):
        """Restore each image; returns a list of float32 [3,H,W] arrays."""
        self._check_fitted()
        return [restore_image(self.params_, self.config_, img).astype(np.float32)
                for img in as_image_list(X, "X")]

    def transform(self, X):
        """Alias of predict, for transformer-style pipelines."""
        return self.predict(X)

    def score(self, X, y):
        """Mean PSNR (dB) of predictions against references."""
        preds = self.predict(X)
        refs = as_image_list(y, "y")
        if len(preds) != len(refs):
            raise ShapeError(f"X has {len(preds)} images, y has {len(refs)}")
        return float(np.mean([psnr(p, r) for p, r in zip(preds, refs)]))

    def save(self, path):
        """Serialise the fitted parameters to a checkpoint file."""
        self._check_fitted()
        save_checkpoint(self.params_, self.config_, path)

    @classmethod
    def from_checkpoint(cls, path):
        """Rebuild a fitted estimator from a checkpoint file."""
        params, cfg = load_checkpoint(path)
        est = cls(base_width=cfg.base_width, blocks_per_level=cfg.blocks_per_level,
                  pooling_ratio=cfg.pooling_ratio, dct_groups=cfg.dct_groups,
                  enable_dfesa=cfg.enable_dfesa, enable_sfm=cfg.enable_sfm,
                  seed=cfg.seed)
        est.params_ = params
        est.config_ = cfg
        est.loss_trace_ = []
        return est
