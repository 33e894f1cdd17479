"""Frequency-domain machinery: 2-D FFT, DCT-II coefficients, low/high split.

The FFT is the unnormalized forward transform (the dual-domain loss divides
by element count anyway). DCT coefficients use the orthonormal convention so
magnitudes are scale-stable across feature-map sizes.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ParameterError, ShapeError


@dataclass
class ComplexPlane:
    """Real/imaginary planes of a per-channel 2-D spectrum."""
    re: T.Tensor
    im: T.Tensor

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ShapeError("re and im must share one shape")


@dataclass
class FrequencyPair:
    """Exact low/high split of a feature map: low + high == source."""
    low: T.Tensor
    high: T.Tensor


@dataclass
class DctBasisSelection:
    """G distinct (u, v) frequency indices, one per channel group."""
    pairs: list = field(default_factory=list)

    def __post_init__(self):
        self.pairs = [(int(u), int(v)) for u, v in self.pairs]
        if len(set(self.pairs)) != len(self.pairs):
            raise ParameterError("basis pairs must be distinct")
        for u, v in self.pairs:
            if u < 0 or v < 0:
                raise ParameterError(f"negative frequency index ({u},{v})")

    def __len__(self):
        return len(self.pairs)


def zigzag_pairs(count, grid=8):
    """First ``count`` (u, v) indices of the JPEG zigzag walk over a grid.

    Low frequencies come first, which is where underwater degradation lives.
    """
    if count > grid * grid:
        raise ParameterError(f"cannot take {count} pairs from a {grid}x{grid} grid")
    walk = []
    for s in range(2 * grid - 1):
        diag = [(u, s - u) for u in range(min(s, grid - 1), -1, -1) if s - u < grid]
        if s % 2 == 1:
            diag.reverse()
        walk.extend(diag)
    return DctBasisSelection(walk[:count])


# ---------------------------------------------------------------------------
# FFT

def _fft_re(x):
    h, w = x.shape[-2], x.shape[-1]
    spec = np.fft.fft2(x.data, axes=(-2, -1))
    out = np.ascontiguousarray(spec.real.astype(x.dtype))

    def bwd(g):
        # adjoint of Re∘DFT: the conjugate-transposed transform, itself a DFT
        back = np.fft.ifft2(g, axes=(-2, -1)).real * (h * w)
        return (back.astype(x.dtype),)

    return T.apply_op(out, (x,), bwd, "fft2_re")


def _fft_im(x):
    h, w = x.shape[-2], x.shape[-1]
    spec = np.fft.fft2(x.data, axes=(-2, -1))
    out = np.ascontiguousarray(spec.imag.astype(x.dtype))

    def bwd(g):
        back = -np.fft.ifft2(g, axes=(-2, -1)).imag * (h * w)
        return (back.astype(x.dtype),)

    return T.apply_op(out, (x,), bwd, "fft2_im")


def fft2(x):
    """Unnormalized forward DFT per channel, differentiable through both planes."""
    if x.data.ndim != 3:
        raise ShapeError("fft2 expects [C,H,W]")
    return ComplexPlane(re=_fft_re(x), im=_fft_im(x))


# ---------------------------------------------------------------------------
# DCT-II

def _dct_axis_basis(n, k, dtype):
    # orthonormal DCT-II row: alpha(k) * cos(pi*(2i+1)*k / (2n))
    i = np.arange(n)
    alpha = np.sqrt(1.0 / n) if k == 0 else np.sqrt(2.0 / n)
    return (alpha * np.cos(np.pi * (2 * i + 1) * k / (2 * n))).astype(dtype)


def dct_basis_2d(h, w, u, v, dtype=np.float64):
    """Orthonormal 2-D DCT-II basis image for frequency (u, v)."""
    if not (0 <= u < h and 0 <= v < w):
        raise ParameterError(f"frequency ({u},{v}) out of range for {h}x{w}")
    return np.outer(_dct_axis_basis(h, u, dtype), _dct_axis_basis(w, v, dtype))


def dct2_coefficient(x, u, v):
    """Single orthonormal DCT-II coefficient of a [h,w] map; gradient is the basis image."""
    if x.data.ndim != 2:
        raise ShapeError("dct2_coefficient expects [h,w]")
    h, w = x.shape
    basis = dct_basis_2d(h, w, u, v, dtype=x.dtype)
    out = np.asarray((x.data * basis).sum())

    def bwd(g):
        return (g * basis,)

    return T.apply_op(out.reshape(()), (x,), bwd, "dct2_coeff")


def grouped_dct_vector(x, basis):
    """Per-channel DCT coefficients with one frequency pair per channel group.

    Channels are split into len(basis) equal groups; channel c in group g is
    compressed to its (u_g, v_g) coefficient. Returns a [C] tensor.
    """
    c, h, w = x.shape
    g = len(basis)
    if g == 0 or c % g:
        raise ParameterError(f"{c} channels do not split into {g} groups")
    per = c // g
    stack = np.empty((c, h, w), dtype=x.dtype)
    for gi, (u, v) in enumerate(basis.pairs):
        stack[gi * per:(gi + 1) * per] = dct_basis_2d(h, w, u, v, dtype=x.dtype)
    out = (x.data * stack).sum(axis=(1, 2))

    def bwd(gr):
        return (gr[:, None, None] * stack,)

    return T.apply_op(out, (x,), bwd, "grouped_dct")


# ---------------------------------------------------------------------------
# learnable low/high decomposition

def decompose_frequencies(f, gate, ratio):
    """Gated DC split: low = sigmoid(gate) ⊙ pooled-DC, high = f − low.

    The decomposition is exact by construction, so low + high always
    reconstructs the input bit-for-bit.
    """
    c = f.shape[0]
    if gate.shape != (c,):
        raise ShapeError(f"gate must have shape ({c},)")
    _, low_pass = T.avg_pool_ratio(f, ratio)
    scale = T.reshape(T.sigmoid(gate), (c, 1, 1))
    low = T.mul(scale, low_pass)
    high = T.sub(f, low)
    return FrequencyPair(low=low, high=high)
