"""Spatial-and-frequency modulator.

Two parallel excitation maps gate the incoming features: a per-channel
factor driven by grouped DCT statistics, and a single-channel spatial mask
from a small downsample/conv/upsample tower. Both are sigmoid-bounded and
added to an identity path, so the block starts close to a gain of one.
"""

from dataclasses import dataclass

from . import tensor as T
from .spectral import DctBasisSelection, grouped_dct_vector, zigzag_pairs

REDUCTION = 4


@dataclass
class SfmParams:
    dw_w: T.Tensor      # depthwise 3x3, no bias
    fc_in_w: T.Tensor   # pointwise C->C mixing after the depthwise conv
    fc_in_b: T.Tensor
    fc_red_w: T.Tensor  # squeeze C -> C/REDUCTION
    fc_red_b: T.Tensor
    fc_exp_w: T.Tensor  # expand back C/REDUCTION -> C
    fc_exp_b: T.Tensor
    conv1_w: T.Tensor   # spatial tower; biases omitted, layernorm shift covers
    ln1_gamma: T.Tensor
    ln1_beta: T.Tensor
    conv2_w: T.Tensor
    ln2_gamma: T.Tensor
    ln2_beta: T.Tensor
    basis: DctBasisSelection


def init_sfm_params(c, rng, groups=8):
    """Fresh parameters for a width-``c`` block with ``groups`` DCT groups.

    The expansion bias starts negative so the frequency gate opens slowly;
    the spatial gate cannot start below 0.5 (sigmoid after ReLU), so this
    keeps the block's initial gain close to 1.5 rather than 2-3.
    """
    if c % REDUCTION != 0:
        raise T.ParameterError(f"width {c} not divisible by reduction {REDUCTION}")
    if c % groups != 0:
        raise T.ParameterError(f"width {c} not divisible by dct groups {groups}")
    hidden = c // REDUCTION
    quarter = max(1, c // 4)
    return SfmParams(
        dw_w=T.glorot_uniform((c, 1, 3, 3), 9, rng),
        fc_in_w=T.glorot_uniform((c, c, 1, 1), c, rng),
        fc_in_b=T.zeros((c,), requires_grad=True),
        fc_red_w=T.he_uniform((hidden, c, 1, 1), c, rng),
        fc_red_b=T.zeros((hidden,), requires_grad=True),
        fc_exp_w=T.glorot_uniform((c, hidden, 1, 1), hidden, rng),
        fc_exp_b=T.from_values((c,), [-2.0] * c, requires_grad=True),
        conv1_w=T.he_uniform((quarter, c, 3, 3), c * 9, rng),
        ln1_gamma=T.ones((quarter,), requires_grad=True),
        ln1_beta=T.zeros((quarter,), requires_grad=True),
        conv2_w=T.he_uniform((1, quarter, 3, 3), quarter * 9, rng),
        ln2_gamma=T.ones((1,), requires_grad=True),
        ln2_beta=T.zeros((1,), requires_grad=True),
        basis=zigzag_pairs(groups),
    )


def frequency_excitation(y, p):
    """Per-channel gate in (0,1): depthwise+pointwise mix, grouped DCT
    statistics, then a squeeze/expand bottleneck ending in a sigmoid."""
    c = y.shape[0]
    mixed = T.conv2d(y, p.dw_w, None, stride=1, pad=1, groups=c)
    mixed = T.conv2d(mixed, p.fc_in_w, p.fc_in_b)
    stats = T.reshape(grouped_dct_vector(mixed, p.basis), (c, 1, 1))
    squeezed = T.relu(T.conv2d(stats, p.fc_red_w, p.fc_red_b))
    expanded = T.conv2d(squeezed, p.fc_exp_w, p.fc_exp_b)
    return T.sigmoid(expanded)


def spatial_excitation(y, p):
    """Single-channel mask in (0,1) at the input resolution."""
    c, h, w = y.shape
    if h < 2 or w < 2:
        raise T.ParameterError(f"spatial excitation needs h,w >= 2, got {h}x{w}")
    half = T.avg_pool_window(y, 2, 2)
    t = T.conv2d(half, p.conv1_w, None, stride=1, pad=1)
    t = T.relu(T.layernorm(t, p.ln1_gamma, p.ln1_beta))
    t = T.conv2d(t, p.conv2_w, None, stride=1, pad=1)
    t = T.relu(T.layernorm(t, p.ln2_gamma, p.ln2_beta))
    return T.sigmoid(T.upsample_nearest(t, h, w))


def sfm_forward(y, p):
    """tau_f ⊙ y + tau_s ⊙ y + y with both gates broadcast over y."""
    tau_f = frequency_excitation(y, p)
    tau_s = spatial_excitation(y, p)
    return T.add(T.add(T.mul(tau_f, y), T.mul(tau_s, y)), y)
