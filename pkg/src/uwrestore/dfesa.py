"""Dual-frequency enhanced self-attention.

Channel-wise self-attention (a C×C attention map over flattened spatial
vectors) refined by two per-channel excitation factors computed from the
low- and high-frequency halves of the input. The low factor shifts the
attended features additively, the high factor rescales them, and the whole
block is wrapped in a residual connection.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .spectral import decompose_frequencies


@dataclass
class DfesaParams:
    ln_gamma: T.Tensor
    ln_beta: T.Tensor
    wq_w: T.Tensor
    wq_b: T.Tensor
    wk_w: T.Tensor
    wk_b: T.Tensor
    wv_w: T.Tensor
    wv_b: T.Tensor
    dw_low_w: T.Tensor     # depthwise 3x3, no bias: zero input must stay zero
    dw_high_w: T.Tensor
    fc_low_w: T.Tensor
    fc_low_b: T.Tensor     # init 1.0 so factors start near identity
    fc_high_w: T.Tensor
    fc_high_b: T.Tensor
    alpha: T.Tensor        # scalar, init 0.0
    beta: T.Tensor         # scalar, init 1.0
    freq_gate: T.Tensor


def init_dfesa_params(c, rng):
    """Fresh parameters for a width-``c`` block, drawn from ``rng``."""
    return DfesaParams(
        ln_gamma=T.ones((c,), requires_grad=True),
        ln_beta=T.zeros((c,), requires_grad=True),
        wq_w=T.glorot_uniform((c, c, 1, 1), c, rng),
        wq_b=T.zeros((c,), requires_grad=True),
        wk_w=T.glorot_uniform((c, c, 1, 1), c, rng),
        wk_b=T.zeros((c,), requires_grad=True),
        wv_w=T.glorot_uniform((c, c, 1, 1), c, rng),
        wv_b=T.zeros((c,), requires_grad=True),
        dw_low_w=T.glorot_uniform((c, 1, 3, 3), 9, rng),
        dw_high_w=T.glorot_uniform((c, 1, 3, 3), 9, rng),
        fc_low_w=T.he_uniform((c, c, 1, 1), c, rng),
        fc_low_b=T.ones((c,), requires_grad=True),
        fc_high_w=T.he_uniform((c, c, 1, 1), c, rng),
        fc_high_b=T.ones((c,), requires_grad=True),
        alpha=T.zeros((), requires_grad=True),
        beta=T.ones((), requires_grad=True),
        freq_gate=T.zeros((c,), requires_grad=True),
    )


def project_qkv(f, p):
    """LayerNorm then 1x1 projections, flattened to per-channel row vectors."""
    c, h, w = f.shape
    xc = T.layernorm(f, p.ln_gamma, p.ln_beta)
    q = T.reshape(T.conv2d(xc, p.wq_w, p.wq_b), (c, h * w))
    k = T.reshape(T.conv2d(xc, p.wk_w, p.wk_b), (c, h * w))
    v = T.reshape(T.conv2d(xc, p.wv_w, p.wv_b), (c, h * w))
    return q, k, v


def channel_attention(q, k, v, h, w):
    """Row-stochastic C×C attention applied to the value rows.

    Scores are q·kᵀ scaled by 1/sqrt(d) with d the spatial length, then
    softmax per row; the attended values reshape back to [C, h, w].
    """
    if q.shape != k.shape or q.shape != v.shape:
        raise T.ShapeError("q, k, v must share one shape")
    c, d = q.shape
    scores = T.mul(T.matmul(q, T.transpose(k)), 1.0 / math.sqrt(d))
    att = T.softmax_lastdim(scores)
    return T.reshape(T.matmul(att, v), (c, h, w))


def _factor_branch(component, dw_w, fc_w, fc_b):
    c = component.shape[0]
    local = T.conv2d(component, dw_w, None, stride=1, pad=1, groups=c)
    pooled, _ = T.avg_pool_ratio(local, 1.0)           # [C,1,1] spatial mean
    projected = T.conv2d(pooled, fc_w, fc_b)
    return T.relu(projected)


def frequency_factors(f, p, ratio):
    """Low/high excitation factors, one nonnegative scalar per channel."""
    pair = decompose_frequencies(f, p.freq_gate, ratio)
    f_low = _factor_branch(pair.low, p.dw_low_w, p.fc_low_w, p.fc_low_b)
    f_high = _factor_branch(pair.high, p.dw_high_w, p.fc_high_w, p.fc_high_b)
    return f_low, f_high


def dfesa_forward(f, p, ratio):
    """Attention + frequency modulation + residual: (X̂ + α·f_l)·(β·f_h) + f."""
    c, h, w = f.shape
    q, k, v = project_qkv(f, p)
    attended = channel_attention(q, k, v, h, w)
    f_low, f_high = frequency_factors(f, p, ratio)
    shifted = T.add(attended, T.mul(p.alpha, f_low))
    modulated = T.mul(shifted, T.mul(p.beta, f_high))
    return T.add(modulated, f)
