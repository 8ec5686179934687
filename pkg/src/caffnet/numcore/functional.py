"""Differentiable layer primitives: convolution, normalization, activations.

Sequences are frame-major, ``(batch, time, channels)``; the batch axis is
optional for every op here.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, _sigmoid, as_tensor

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
LEAKY_SLOPE = 0.2


class ShapeError(ValueError):
    pass


def _conv_out_len(t, k, stride, pad):
    return (t + 2 * pad - k) // stride + 1


def conv1d(x, w, b=None, stride=1, pad=0):
    """1-D cross-correlation over the time axis.

    Args:
        x: ``(T, Cin)`` or ``(B, T, Cin)`` input.
        w: ``(Cout, Cin, K)`` filter bank.
        b: optional ``(Cout,)`` bias.
        stride, pad: temporal stride and symmetric zero padding.

    Returns:
        ``(T', Cout)`` (or batched) with ``T' = (T + 2*pad - K) // stride + 1``.
    """
    x = as_tensor(x)
    w = as_tensor(w, x.dtype)
    if b is not None:
        b = as_tensor(b, x.dtype)
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    cout, cin, k = w.shape
    if xd.shape[-1] != cin:
        raise ShapeError(
            f"conv1d channel mismatch: input {tuple(x.shape)} vs weight {tuple(w.shape)}"
        )
    bsz, t, _ = xd.shape
    t_out = _conv_out_len(t, k, stride, pad)
    if t_out < 1:
        raise ShapeError(f"conv1d input too short: input {tuple(x.shape)}, kernel {k}")
    xp = np.pad(xd, ((0, 0), (pad, pad), (0, 0))) if pad else xd
    # (B, T', Cin, K) -> (B*T', Cin*K)
    cols = sliding_window_view(xp, k, axis=1)[:, : (t_out - 1) * stride + 1 : stride]
    cols = cols.reshape(bsz * t_out, cin * k)
    wmat = w.data.reshape(cout, cin * k)
    out = cols @ wmat.T
    if b is not None:
        out = out + b.data
    out = out.reshape(bsz, t_out, cout)
    if squeeze:
        out = out[0]

    def backward(g):
        g2 = (g[None] if squeeze else g).reshape(bsz * t_out, cout)
        gw = (g2.T @ cols).reshape(w.shape)
        gcols = (g2 @ wmat).reshape(bsz, t_out, cin, k)
        gxp = np.zeros_like(xp)
        span = (t_out - 1) * stride + 1
        for j in range(k):
            gxp[:, j : j + span : stride] += gcols[..., j]
        gx = gxp[:, pad : pad + t] if pad else gxp
        if squeeze:
            gx = gx[0]
        gb = g2.sum(axis=0) if b is not None else None
        return gx, gw, gb

    if b is None:
        return Tensor._make(out, (x, w), lambda g: backward(g)[:2])
    return Tensor._make(out, (x, w, b), backward)


class BatchNormState:
    """Running statistics for one normalization layer."""

    def __init__(self, channels, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)


def batchnorm1d(x, gamma, beta, state, training, eps=BN_EPS, momentum=BN_MOMENTUM):
    """Per-channel normalization over every axis but the last.

    In training mode batch statistics are used and ``state`` is updated in
    place with momentum ``momentum`` (unbiased variance, as is customary);
    in eval mode the running statistics are used.
    """
    x = as_tensor(x)
    gamma = as_tensor(gamma, x.dtype)
    beta = as_tensor(beta, x.dtype)
    c = x.shape[-1]
    if gamma.shape != (c,) or state.mean.shape != (c,):
        raise ShapeError(f"batchnorm channel mismatch: input {x.shape} vs gamma {gamma.shape}")
    axes = tuple(range(x.ndim - 1))
    n = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    if n == 0:
        raise ValueError("batchnorm on an empty batch")
    xd = x.data
    if training:
        mean = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        unbiased = var * (n / (n - 1)) if n > 1 else var
        state.mean[...] = (1 - momentum) * state.mean + momentum * mean
        state.var[...] = (1 - momentum) * state.var + momentum * unbiased
    else:
        mean = state.mean.astype(xd.dtype)
        var = state.var.astype(xd.dtype)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mean) * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        gg = (g * xhat).sum(axis=axes)
        gb = g.sum(axis=axes)
        gxhat = g * gamma.data
        if training:
            gx = inv * (gxhat - gxhat.mean(axis=axes) - xhat * (gxhat * xhat).mean(axis=axes))
        else:
            gx = gxhat * inv
        return gx, gg, gb

    return Tensor._make(out, (x, gamma, beta), backward)


def clamp_min(x, floor):
    """``max(x, floor)`` elementwise; no gradient flows where the floor is active."""
    x = as_tensor(x)
    keep = x.data > floor
    return Tensor._make(np.where(keep, x.data, floor).astype(x.dtype), (x,), lambda g: (g * keep,))


def relu(x):
    return as_tensor(x).relu()


def leaky_relu(x, slope=LEAKY_SLOPE):
    return as_tensor(x).leaky_relu(slope)


def sigmoid(x):
    return as_tensor(x).sigmoid()


def tanh(x):
    return as_tensor(x).tanh()


def softmax(x, axis=-1, temperature=1.0):
    """Softmax along ``axis`` of ``x / temperature`` with max subtraction."""
    if temperature <= 0:
        raise ValueError("softmax temperature must be positive")
    x = as_tensor(x)
    z = x.data / temperature
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot) / temperature,)

    return Tensor._make(out, (x,), backward)


def row_softmax(x, temperature=1.0):
    return softmax(x, axis=-1, temperature=temperature)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._make(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)
    n = len(tensors)
    return Tensor._make(
        out,
        tuple(tensors),
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)),
    )


def hypot(re, im):
    """Elementwise ``sqrt(re^2 + im^2)``; the gradient at the origin is taken as 0."""
    re, im = as_tensor(re), as_tensor(im, re.dtype)
    r = np.hypot(re.data, im.data)
    safe = np.where(r > 0, r, 1.0)
    nz = r > 0

    def backward(g):
        return g * re.data / safe * nz, g * im.data / safe * nz

    return Tensor._make(r, (re, im), backward)


def atan2(im, re):
    """Elementwise phase in ``(-pi, pi]``; phase and gradient at the origin are 0."""
    im, re = as_tensor(im), as_tensor(re, im.dtype)
    out = np.arctan2(im.data, re.data)
    r2 = re.data**2 + im.data**2
    safe = np.where(r2 > 0, r2, 1.0)
    nz = r2 > 0

    def backward(g):
        return g * re.data / safe * nz, -g * im.data / safe * nz

    return Tensor._make(out, (im, re), backward)


def tanh_magnitude(re, im, eps=1e-12):
    """Bound a complex field to the unit disc: ``z * tanh(|z|) / |z|``.

    Returns the bounded real and imaginary parts; phase is preserved and the
    origin maps to the origin.
    """
    re, im = as_tensor(re), as_tensor(im, re.dtype)
    r = np.sqrt(re.data**2 + im.data**2 + eps)
    th = np.tanh(r)
    ratio = th / r
    # d(ratio)/dr; series form near the origin avoids cancellation
    small = r < 1e-3
    dratio = np.where(small, -2.0 * r / 3.0, (1.0 - th * th) / r - th / (r * r))
    out_re = re.data * ratio
    out_im = im.data * ratio

    def backward_re(g):
        common = g * re.data * dratio / r
        return g * ratio + common * re.data, common * im.data

    def backward_im(g):
        common = g * im.data * dratio / r
        return common * re.data, g * ratio + common * im.data

    return (
        Tensor._make(out_re, (re, im), backward_re),
        Tensor._make(out_im, (re, im), backward_im),
    )


def numpy_sigmoid(x):
    return _sigmoid(np.asarray(x, dtype=np.float64))
