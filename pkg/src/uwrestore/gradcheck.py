"""Central finite-difference gradient checking.

A check runs a closure twice per perturbed coordinate under the 64-bit
precision mode and compares the analytic gradient against
(f(x+h) - f(x-h)) / 2h with a relative-error criterion. Coordinates can be
subsampled deterministically to keep composite-block checks fast; the
sample always includes the first and last element of each leaf.
"""

import numpy as np

from . import tensor as T
from .errors import ContractError, ParameterError

DEFAULT_H = 1e-4
DEFAULT_TOL = 1e-5


def _leaf_indices(leaf, max_elems, rng):
    n = leaf.data.size
    if max_elems is None or n <= max_elems:
        return np.arange(n)
    picked = rng.choice(n, size=max_elems, replace=False)
    picked[0], picked[-1] = 0, n - 1
    return np.unique(picked)


def max_relative_error(build, leaves, h=DEFAULT_H, max_elems=None, sample_seed=0):
    """Largest relative error over the sampled coordinates of all leaves.

    ``build()`` must construct and return a scalar loss Tensor from the
    current contents of ``leaves``; it is re-run for every perturbation.
    """
    if T.precision_mode() != "check64":
        raise ContractError("gradient checks must run in check64 mode")
    for leaf in leaves:
        if not leaf.requires_grad:
            raise ParameterError("all checked leaves must require grad")
        leaf.grad = None

    loss = build()
    T.backward(loss)
    analytic = []
    for leaf in leaves:
        if leaf.grad is None:
            raise ContractError("a leaf received no gradient; check the graph")
        analytic.append(leaf.grad.copy())

    rng = np.random.default_rng(sample_seed)
    worst = 0.0
    for leaf, grad in zip(leaves, analytic):
        flat = leaf.data.reshape(-1)
        gflat = grad.reshape(-1)
        for idx in _leaf_indices(leaf, max_elems, rng):
            original = flat[idx]
            flat[idx] = original + h
            up = float(build().data)
            flat[idx] = original - h
            down = float(build().data)
            flat[idx] = original
            fd = (up - down) / (2.0 * h)
            rel = abs(gflat[idx] - fd) / (abs(fd) + 1e-8)
            worst = max(worst, rel)
    return worst


def check_gradients(build, leaves, h=DEFAULT_H, tol=DEFAULT_TOL,
                    max_elems=None, sample_seed=0):
    """Assert-style wrapper; returns the worst relative error found."""
    worst = max_relative_error(build, leaves, h=h, max_elems=max_elems,
                               sample_seed=sample_seed)
    if worst >= tol:
        raise AssertionError(f"gradient check failed: max relative error {worst:.3e}")
    return worst
