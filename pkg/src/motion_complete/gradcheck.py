"""Central finite-difference checks for the autodiff engine."""

import numpy as np

from . import tensor as tn


def numeric_grad(fn, arrays, i, eps=1e-6):
    """d sum(fn(*arrays)) / d arrays[i] by central differences, float64."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    x = base[i]
    grad = np.zeros_like(x)
    with tn.precision(np.float64), tn.no_grad():
        for idx in np.ndindex(x.shape):
            orig = x[idx]
            x[idx] = orig + eps
            hi = float(np.sum(fn(*[tn.Tensor(a) for a in base]).data))
            x[idx] = orig - eps
            lo = float(np.sum(fn(*[tn.Tensor(a) for a in base]).data))
            x[idx] = orig
            grad[idx] = (hi - lo) / (2 * eps)
    return grad


def analytic_grads(fn, arrays):
    with tn.precision(np.float64):
        leaves = [tn.Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
        out = fn(*leaves)
        tn.backward(out.sum() if out.size != 1 else out)
    return [leaf.grad if leaf.grad is not None else np.zeros(leaf.shape) for leaf in leaves]


def relative_error(analytic, numeric):
    """``max|a - n| / max|n|``, falling back to the absolute error near zero."""
    scale = max(float(np.max(np.abs(numeric), initial=0.0)), 1e-8)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def check_grads(fn, arrays, eps=1e-6):
    """Per-input relative errors between backprop and finite differences."""
    analytic = analytic_grads(fn, arrays)
    return [relative_error(a, numeric_grad(fn, arrays, i, eps)) for i, a in enumerate(analytic)]
