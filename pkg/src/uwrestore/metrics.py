"""Evaluation metrics on [0,1] float images.

Plain numpy/scipy: these run outside the gradient graph. PSNR assumes a
unit dynamic range and is capped so identical images score 99 dB rather
than infinity. SSIM uses the standard 11x11 Gaussian window (sigma 1.5)
with valid-mode filtering and averages over channels.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

from .errors import ParameterError, ShapeError

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _as_pair(pred, gt, name):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"{name} shapes differ: {pred.shape} vs {gt.shape}")
    return np.clip(pred, 0.0, 1.0), np.clip(gt, 0.0, 1.0)


def psnr(pred, gt):
    """10*log10(1/MSE) after clamping, capped at 99 dB."""
    pred, gt = _as_pair(pred, gt, "psnr")
    mse = float(np.mean((pred - gt) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def _gaussian_kernel():
    half = (SSIM_WINDOW - 1) / 2.0
    x = np.arange(SSIM_WINDOW, dtype=np.float64) - half
    k = np.exp(-(x ** 2) / (2.0 * SSIM_SIGMA ** 2))
    return k / k.sum()


def _filter(img, k):
    # separable Gaussian, valid windows only
    return convolve2d(convolve2d(img, k[:, None], mode="valid"), k[None, :], mode="valid")


def _ssim_channel(x, y, k):
    mu_x = _filter(x, k)
    mu_y = _filter(y, k)
    sigma_x = _filter(x * x, k) - mu_x ** 2
    sigma_y = _filter(y * y, k) - mu_y ** 2
    sigma_xy = _filter(x * y, k) - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * sigma_xy + SSIM_C2)
    den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (sigma_x + sigma_y + SSIM_C2)
    return float(np.mean(num / den))


def ssim(pred, gt):
    """Mean SSIM over channels of [3,H,W] images; needs H,W >= 11."""
    pred, gt = _as_pair(pred, gt, "ssim")
    if pred.ndim != 3 or pred.shape[0] != 3:
        raise ShapeError(f"ssim expects [3,H,W], got {pred.shape}")
    _, h, w = pred.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ParameterError(f"ssim needs sides >= {SSIM_WINDOW}, got {h}x{w}")
    k = _gaussian_kernel()
    return float(np.mean([_ssim_channel(pred[c], gt[c], k) for c in range(3)]))


@dataclass
class MetricReport:
    """Per-image rows plus running means, serialisable to plain text."""
    rows: list = field(default_factory=list)

    def add(self, name, psnr_value, ssim_value):
        self.rows.append((name, float(psnr_value), float(ssim_value)))

    @property
    def mean_psnr(self):
        if not self.rows:
            raise ParameterError("empty report has no mean")
        return float(np.mean([r[1] for r in self.rows]))

    @property
    def mean_ssim(self):
        if not self.rows:
            raise ParameterError("empty report has no mean")
        return float(np.mean([r[2] for r in self.rows]))

    def to_text(self):
        lines = ["name psnr ssim"]
        for name, p, s in self.rows:
            lines.append(f"{name} {p:.4f} {s:.6f}")
        lines.append(f"MEAN {self.mean_psnr:.4f} {self.mean_ssim:.6f}")
        return "\n".join(lines) + "\n"
