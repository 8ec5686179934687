"""Central finite-difference oracle for reverse-mode gradients."""
from __future__ import annotations

import numpy as np


def numeric_gradient(fn, tensor, h=1e-5, indices=None):
    """Estimate d fn() / d tensor by central differences.

    ``fn`` takes no arguments and returns a scalar (Tensor or float); it is
    re-evaluated with ``tensor.data`` perturbed in place. ``indices`` limits
    the probe to a subset of flat positions.
    """
    flat = tensor.data.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    out = np.zeros(flat.size)
    for i in indices:
        orig = flat[i]
        flat[i] = orig + h
        fp = float(np.asarray(_value(fn())))
        flat[i] = orig - h
        fm = float(np.asarray(_value(fn())))
        flat[i] = orig
        out[i] = (fp - fm) / (2 * h)
    return out.reshape(tensor.shape)


def _value(v):
    return v.data if hasattr(v, "data") else v


def relative_error(analytic, numeric, rel_floor=1e-3, abs_floor=1e-8):
    """Elementwise ``|a - n| / max(|a|, |n|, rel_floor * max|n|, abs_floor)``, maximised."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    if a.size == 0:
        return 0.0
    scale = max(rel_floor * np.abs(n).max(), abs_floor)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), scale)
    return float((np.abs(a - n) / denom).max())


def check_gradients(fn, tensors, h=1e-5, max_probes=None, seed=0, abs_floor=1e-8):
    """Compare backprop against finite differences for each tensor in ``tensors``.

    Returns ``{name or index: max relative error}``. With ``max_probes`` only
    that many randomly chosen entries per tensor are probed. ``abs_floor``
    is the smallest magnitude treated as a nonzero gradient.
    """
    for t in tensors:
        t.grad = None
    fn().backward()
    rng = np.random.default_rng(seed)
    report = {}
    for k, t in enumerate(tensors):
        size = t.data.size
        if max_probes is not None and size > max_probes:
            idx = np.sort(rng.choice(size, max_probes, replace=False))
        else:
            idx = np.arange(size)
        num = numeric_gradient(fn, t, h, idx).reshape(-1)[idx]
        ana = (t.grad if t.grad is not None else np.zeros_like(t.data)).reshape(-1)[idx]
        report[t.name or k] = relative_error(ana, num, abs_floor=abs_floor)
    return report
