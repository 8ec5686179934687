"""Training objectives: log-magnitude distance, cosine SI-SDR, and their sum.

``sisdr_loss`` is the negative cosine similarity of two waveforms (bounded in
[-1, 1]); the dB-scale SI-SDR used for evaluation lives in ``metrics``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp
from .numcore import ComplexTensor, Tensor, as_tensor, hypot

SISDR_EPS = 1e-8


@dataclass
class LossConfig:
    alpha: float = 1.0
    mag_floor: float = 1e-7

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.mag_floor <= 0:
            raise ValueError("mag_floor must be positive")


def _batch_mean(per_item):
    return per_item.mean() if per_item.ndim else per_item


def mag_loss(Y_mag, Yhat_mag, floor=1e-7):
    """Frobenius norm of ``log((|Y| + floor) / (|Y_hat| + floor))``.

    Inputs are ``(N, F)`` or ``(B, N, F)``; a batch is averaged.
    """
    Yhat_mag = as_tensor(Yhat_mag)
    Y = np.asarray(Y_mag.data if isinstance(Y_mag, Tensor) else Y_mag)
    if Y.shape != Yhat_mag.shape:
        raise ValueError(f"mag_loss shape mismatch: {Y.shape} vs {Yhat_mag.shape}")
    target = Tensor(np.log(Y + floor).astype(Yhat_mag.dtype))
    diff = target - (Yhat_mag + floor).log()
    sq = (diff * diff).sum(axis=(-2, -1))
    return _batch_mean((sq + 1e-30).sqrt())


def sisdr_loss(y, y_hat, eps=SISDR_EPS):
    """``-<y, y_hat> / (||y|| ||y_hat||)`` over the last axis; a batch is averaged."""
    y_hat = as_tensor(y_hat)
    y = as_tensor(y.samples if isinstance(y, dsp.Waveform) else y, y_hat.dtype)
    if y.shape != y_hat.shape:
        raise ValueError(f"sisdr_loss length mismatch: {y.shape} vs {y_hat.shape}")
    dot = (y * y_hat).sum(axis=-1)
    energy = (y * y).sum(axis=-1) * (y_hat * y_hat).sum(axis=-1)
    return _batch_mean(-dot / (energy + eps * eps).sqrt())


def istft_tensor(spec, cfg=dsp.DEFAULT_STFT, out_len=None):
    """Differentiable counterpart of :func:`dsp.istft` for a ComplexTensor ``(..., N, F)``."""
    re, im = spec.re, spec.im
    data = re.data + 1j * im.data
    lead = data.shape[:-2]
    n, nbins = data.shape[-2:]
    if nbins != cfg.bins:
        raise ValueError(f"spectrogram has {nbins} bins, config expects {cfg.bins}")
    length = (n - 1) * cfg.hop + cfg.win_len
    out_len = length if out_len is None else out_len
    inv_norm = dsp.synthesis_gain(n, cfg)
    win = cfg.window

    frames = np.fft.irfft(data, n=cfg.fft_size, axis=-1)[..., : cfg.win_len] * win
    y = np.zeros(lead + (length,))
    for i in range(n):
        y[..., i * cfg.hop : i * cfg.hop + cfg.win_len] += frames[..., i, :]
    y *= inv_norm
    y = y[..., :out_len] if length >= out_len else np.pad(y, [(0, 0)] * len(lead) + [(0, out_len - length)])

    weights = np.full(nbins, 2.0)
    weights[0] = 1.0
    if cfg.fft_size % 2 == 0:
        weights[-1] = 1.0
    weights /= cfg.fft_size

    def backward(g):
        g = g[..., :length] if out_len >= length else np.pad(g, [(0, 0)] * len(lead) + [(0, length - out_len)])
        g = g * inv_norm
        gf = np.stack([g[..., i * cfg.hop : i * cfg.hop + cfg.win_len] for i in range(n)], axis=-2) * win
        G = np.fft.rfft(gf, n=cfg.fft_size, axis=-1) * weights
        return G.real.astype(re.dtype), G.imag.astype(im.dtype)

    return Tensor._make(y.astype(re.dtype), (re, im), backward)


def _as_complex(Y, dtype):
    if isinstance(Y, ComplexTensor):
        return Y
    return ComplexTensor.from_numpy(np.asarray(Y), dtype)


def total_loss(variant, Y, Y_hat, cfg=None, stft_cfg=dsp.DEFAULT_STFT):
    """``mag_loss`` for the real variant; ``mag_loss + alpha * sisdr_loss`` for the complex one.

    For ``variant == "real"``, ``Y`` is the clean magnitude (or complex
    spectrogram) and ``Y_hat`` the estimated magnitude tensor. For
    ``"complex"`` both are complex spectrograms and the waveforms are obtained
    by inverse STFT of each.
    """
    cfg = cfg or LossConfig()
    if variant == "real":
        Y_mag = np.abs(Y) if np.iscomplexobj(Y) else Y
        return mag_loss(Y_mag, Y_hat, cfg.mag_floor)
    if variant != "complex":
        raise ValueError(f"unknown variant {variant!r}")
    Y_hat = _as_complex(Y_hat, np.float64)
    Yc = _as_complex(Y, Y_hat.re.dtype)
    Y_np = Yc.re.data + 1j * Yc.im.data
    est_mag = hypot(Y_hat.re, Y_hat.im)
    loss = mag_loss(np.abs(Y_np), est_mag, cfg.mag_floor)
    if cfg.alpha:
        y = istft_tensor(Yc, stft_cfg).data
        y_hat = istft_tensor(Y_hat, stft_cfg)
        loss = loss + sisdr_loss(y, y_hat) * cfg.alpha
    return loss
