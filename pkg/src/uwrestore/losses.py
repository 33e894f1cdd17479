"""Dual-domain training objective.

Pixel L1 plus an L1 penalty on 2-D Fourier magnitudes of the prediction
error, summed over the three output scales. The frequency term keeps its
gradient finite at zero error through a small epsilon inside the root.
"""

from dataclasses import dataclass

from . import tensor as T
from .errors import ConfigError, ShapeError
from .spectral import fft2

FFT_EPS = 1e-12


@dataclass
class LossWeights:
    lambda_l1: float = 1.0
    lambda_fft: float = 0.1

    def validate(self):
        if self.lambda_l1 < 0 or self.lambda_fft < 0:
            raise ConfigError(
                f"loss weights must be >= 0, got {self.lambda_l1}, {self.lambda_fft}")
        return self


def l1_loss(pred, gt):
    """Mean absolute error, scalar output."""
    if pred.shape != gt.shape:
        raise ShapeError(f"l1_loss shapes differ: {pred.shape} vs {gt.shape}")
    return T.mean_all(T.absolute(T.sub(pred, gt)))


def fft_loss(pred, gt):
    """Mean over frequencies of sqrt(d_re^2 + d_im^2 + eps^2) where d_* are
    spectrum differences of an unnormalised 2-D FFT per channel."""
    if pred.shape != gt.shape:
        raise ShapeError(f"fft_loss shapes differ: {pred.shape} vs {gt.shape}")
    sp, sg = fft2(pred), fft2(gt)
    d_re = T.sub(sp.re, sg.re)
    d_im = T.sub(sp.im, sg.im)
    squared = T.add(T.add(T.mul(d_re, d_re), T.mul(d_im, d_im)), FFT_EPS * FFT_EPS)
    return T.mean_all(T.sqrt(squared))


def total_loss(output, pyramid, weights):
    """Sum over scales of lambda_l1 * L1 + lambda_fft * frequency L1."""
    if len(pyramid) != len(output.preds):
        raise ShapeError(
            f"pyramid has {len(pyramid)} levels, output has {len(output.preds)}")
    total = None
    for pred, gt_arr in zip(output.preds, pyramid):
        gt = gt_arr if isinstance(gt_arr, T.Tensor) else T.constant(gt_arr)
        term = T.add(T.mul(l1_loss(pred, gt), weights.lambda_l1),
                     T.mul(fft_loss(pred, gt), weights.lambda_fft))
        total = term if total is None else T.add(total, term)
    return total
