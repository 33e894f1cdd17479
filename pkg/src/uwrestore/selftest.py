"""Built-in health checks runnable from the CLI.

Each suite returns (passed, detail). The spectral suites compare the fast
implementations against naive definition-following loops, so a regression
in either route surfaces as a disagreement. The DCT suite accepts an
injectable coefficient function, which lets tests prove the suite catches
a wrong normalisation.
"""

import math

import numpy as np

from . import metrics, tensor as T
from .dfesa import dfesa_forward, init_dfesa_params
from .gradcheck import max_relative_error
from .network import ResBlockParams, init_resblock_params, resblock_forward
from .sfm import init_sfm_params, sfm_forward
from .spectral import dct2_coefficient, decompose_frequencies, fft2

GRAD_TOL = 1e-5
SUITES = ("grad", "fft", "dct", "decomp", "metrics")


def naive_dft2(x):
    """Definition-following O(N^4) 2-D DFT of a [H,W] array -> (re, im)."""
    h, w = x.shape
    re = np.zeros((h, w), dtype=np.float64)
    im = np.zeros((h, w), dtype=np.float64)
    for u in range(h):
        for v in range(w):
            s_re = 0.0
            s_im = 0.0
            for i in range(h):
                for j in range(w):
                    angle = -2.0 * math.pi * (u * i / h + v * j / w)
                    s_re += x[i, j] * math.cos(angle)
                    s_im += x[i, j] * math.sin(angle)
            re[u, v] = s_re
            im[u, v] = s_im
    return re, im


def naive_dct2(x, u, v):
    """Definition-following orthonormal DCT-II coefficient of a [H,W] array."""
    h, w = x.shape
    au = math.sqrt(1.0 / h) if u == 0 else math.sqrt(2.0 / h)
    av = math.sqrt(1.0 / w) if v == 0 else math.sqrt(2.0 / w)
    total = 0.0
    for i in range(h):
        for j in range(w):
            total += (x[i, j]
                      * math.cos(math.pi * (2 * i + 1) * u / (2 * h))
                      * math.cos(math.pi * (2 * j + 1) * v / (2 * w)))
    return au * av * total


def _weighted_scalar(t, seed):
    rng = np.random.default_rng(seed)
    w = T.constant(rng.normal(size=t.shape))
    return T.sum_all(T.mul(t, w))


def suite_grad():
    """Fast finite-difference sweep over the composite blocks."""
    failures = []
    with T.precision("check64"):
        for seed in (0, 1):
            rng = np.random.default_rng(100 + seed)
            x = T.constant(rng.normal(size=(4, 8, 8)) * 0.5, requires_grad=True)

            rp = init_resblock_params(4, rng)
            err = max_relative_error(
                lambda: _weighted_scalar(resblock_forward(x, rp, 0.5), seed),
                [x, rp.conv_a_w, rp.dc_gate], max_elems=6, sample_seed=seed)
            if err >= GRAD_TOL:
                failures.append(f"resblock seed {seed}: {err:.2e}")

            dp = init_dfesa_params(4, rng)
            err = max_relative_error(
                lambda: _weighted_scalar(dfesa_forward(x, dp, 1.0), seed),
                [x, dp.wq_w, dp.alpha, dp.beta, dp.freq_gate],
                max_elems=6, sample_seed=seed)
            if err >= GRAD_TOL:
                failures.append(f"dfesa seed {seed}: {err:.2e}")

            sp = init_sfm_params(4, rng, groups=4)
            err = max_relative_error(
                lambda: _weighted_scalar(sfm_forward(x, sp), seed),
                [x, sp.dw_w, sp.fc_red_w, sp.conv1_w],
                max_elems=6, sample_seed=seed)
            if err >= GRAD_TOL:
                failures.append(f"sfm seed {seed}: {err:.2e}")
    if failures:
        return False, "; ".join(failures)
    return True, "composite blocks pass finite-difference checks"


def suite_fft(fft_fn=fft2):
    """Fast FFT against the O(N^4) definition on random small planes."""
    rng = np.random.default_rng(7)
    with T.precision("check64"):
        for h, w in ((4, 4), (5, 6), (8, 7)):
            x = rng.normal(size=(2, h, w))
            spectrum = fft_fn(T.constant(x))
            for c in range(2):
                re, im = naive_dft2(x[c])
                if (np.max(np.abs(spectrum.re.data[c] - re)) > 1e-9
                        or np.max(np.abs(spectrum.im.data[c] - im)) > 1e-9):
                    return False, f"fft mismatch on {h}x{w} channel {c}"
    return True, "matches naive DFT within 1e-9"


def suite_dct(coeff_fn=dct2_coefficient):
    """Coefficient oracle plus orthonormal full-basis reconstruction."""
    rng = np.random.default_rng(11)
    with T.precision("check64"):
        x = rng.normal(size=(7, 7))
        xt = T.constant(x)
        for u in range(7):
            for v in range(7):
                got = float(coeff_fn(xt, u, v).data)
                want = naive_dct2(x, u, v)
                if abs(got - want) > 1e-10:
                    return False, f"coefficient ({u},{v}): got {got!r}, want {want!r}"
        # orthonormal basis: summing coeff * basis reconstructs the input
        recon = np.zeros_like(x)
        for u in range(7):
            for v in range(7):
                from .spectral import dct_basis_2d
                recon += float(coeff_fn(xt, u, v).data) * dct_basis_2d(7, 7, u, v, np.float64)
        if np.max(np.abs(recon - x)) > 1e-9:
            return False, f"reconstruction error {np.max(np.abs(recon - x)):.2e}"
    return True, "matches naive DCT-II and reconstructs exactly"


def suite_decomp():
    """Low + high must equal the input exactly as stated, in both modes."""
    for mode, tol in (("train32", 1e-6), ("check64", 1e-12)):
        with T.precision(mode):
            rng = np.random.default_rng(23)
            for trial in range(100):
                c = int(rng.integers(1, 5))
                h = int(rng.integers(2, 11))
                w = int(rng.integers(2, 11))
                ratio = float(rng.uniform(0.05, 1.0))
                f = T.constant(rng.normal(size=(c, h, w)))
                gate = T.constant(rng.normal(size=(c,)))
                pair = decompose_frequencies(f, gate, ratio)
                err = np.max(np.abs(pair.low.data + pair.high.data - f.data))
                if err > tol:
                    return False, f"trial {trial} ({mode}): residual {err:.2e}"
    return True, "low + high == input in both precision modes"


def suite_metrics():
    """Closed-form PSNR and SSIM cases."""
    a = np.full((3, 16, 16), 0.5)
    cases = []
    cases.append(abs(metrics.psnr(a, a - 0.1) - 20.0) < 1e-3)
    cases.append(abs(metrics.psnr(a, a - 16.0 / 255.0)
                     - 20.0 * math.log10(255.0 / 16.0)) < 1e-9)
    big = np.full((3, 16, 16), 0.25)
    cases.append(abs(metrics.ssim(big, big) - 1.0) < 1e-9)
    want = (2 * 0.125 + 1e-4) / (0.3125 + 1e-4)
    cases.append(abs(metrics.ssim(np.full((3, 16, 16), 0.5), big) - want) < 1e-4)
    cases.append(metrics.psnr(a, a) == 99.0)
    if not all(cases):
        return False, f"case results {cases}"
    return True, "closed-form PSNR/SSIM cases hold"


def run_all(out=None):
    """Run every suite; returns {name: passed} and prints one line per suite."""
    results = {}
    runners = {"grad": suite_grad, "fft": suite_fft, "dct": suite_dct,
               "decomp": suite_decomp, "metrics": suite_metrics}
    for name in SUITES:
        passed, detail = runners[name]()
        results[name] = passed
        if out is not None:
            out(f"{name} {'PASS' if passed else 'FAIL'}: {detail}")
    return results
