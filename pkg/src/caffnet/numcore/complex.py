"""Complex tensors stored as paired real/imaginary :class:`Tensor` parts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from .tensor import Tensor, as_tensor


@dataclass
class ComplexTensor:
    re: Tensor
    im: Tensor

    def __post_init__(self):
        self.re = as_tensor(self.re)
        self.im = as_tensor(self.im, self.re.dtype)
        if self.re.shape != self.im.shape:
            raise F.ShapeError(f"real/imag shape mismatch: {self.re.shape} vs {self.im.shape}")

    @classmethod
    def from_numpy(cls, z, dtype=np.float64):
        z = np.asarray(z)
        return cls(Tensor(z.real.astype(dtype)), Tensor(z.imag.astype(dtype)))

    @property
    def shape(self):
        return self.re.shape

    def numpy(self):
        return self.re.data + 1j * self.im.data

    def __mul__(self, other):
        if not isinstance(other, ComplexTensor):
            return ComplexTensor(self.re * other, self.im * other)
        return ComplexTensor(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    __rmul__ = __mul__

    def __add__(self, other):
        return ComplexTensor(self.re + other.re, self.im + other.im)


def complex_conv1d(h, w, b=None, stride=1, pad=0):
    """Complex convolution built from four real convolutions.

    ``(w * h) = (h_re*w_re - h_im*w_im) + i (h_re*w_im + h_im*w_re)``.
    The optional complex bias is added to both parts.
    """
    b_re = b.re if b is not None else None
    b_im = b.im if b is not None else None
    re = F.conv1d(h.re, w.re, b_re, stride, pad) - F.conv1d(h.im, w.im, None, stride, pad)
    im = F.conv1d(h.re, w.im, b_im, stride, pad) + F.conv1d(h.im, w.re, None, stride, pad)
    return ComplexTensor(re, im)


def complex_batchnorm1d(h, gamma, beta, states, training):
    """Independent normalization of the real and imaginary parts.

    ``gamma``, ``beta`` and ``states`` are ``(re, im)`` pairs.
    """
    return ComplexTensor(
        F.batchnorm1d(h.re, gamma[0], beta[0], states[0], training),
        F.batchnorm1d(h.im, gamma[1], beta[1], states[1], training),
    )


def complex_leaky_relu(h, slope=F.LEAKY_SLOPE):
    """Leaky ReLU applied separately to each part."""
    return ComplexTensor(F.leaky_relu(h.re, slope), F.leaky_relu(h.im, slope))


def decompose(h):
    """Split into (magnitude, phase); the phase of 0 is defined as 0."""
    return F.hypot(h.re, h.im), F.atan2(h.im, h.re)


def from_polar(mag, phase):
    phase = as_tensor(phase)
    return ComplexTensor(mag * phase.cos(), mag * phase.sin())


def tanh_bound(h):
    """Map a complex field into the unit disc, keeping its phase."""
    re, im = F.tanh_magnitude(h.re, h.im)
    return ComplexTensor(re, im)
