"""Waveform <-> time-frequency conversion and 16-bit WAV I/O.

Spectrograms are frame-major: ``data[n, f]`` is bin ``f`` of frame ``n``.
Everything here runs in float64 / complex128.
"""
from __future__ import annotations

import wave
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SAMPLE_RATE = 16000


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.samples.ndim != 1:
            raise ValueError("only mono waveforms are supported")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


def periodic_hann(n):
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 512
    win_len: int = 400
    hop: int = 160
    window: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not (0 < self.hop <= self.win_len <= self.fft_size):
            raise ValueError("need 0 < hop <= win_len <= fft_size")
        if self.window is None:
            object.__setattr__(self, "window", periodic_hann(self.win_len))
        w2 = _overlap_sum(self.window**2, self.hop)
        # every sample past the first frame's leading zero must be covered
        if np.min(w2[1:]) <= 0:
            raise ValueError("window/hop combination leaves uncovered samples")

    @property
    def bins(self):
        return self.fft_size // 2 + 1

    def num_frames(self, length):
        return 1 + (length - self.win_len) // self.hop


def _overlap_sum(w, hop):
    """Steady-state overlap-add of ``w`` at ``hop`` over one window span."""
    n = len(w)
    acc = np.zeros(n)
    for start in range(-(n // hop) * hop, n, hop):
        lo, hi = max(start, 0), min(start + n, n)
        if lo < hi:
            acc[lo:hi] += w[lo - start : hi - start]
    return acc


@dataclass
class ComplexSpectrogram:
    data: np.ndarray
    hop: int = 160
    win_len: int = 400

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.ndim != 2:
            raise ValueError("spectrogram must be frames x bins")

    @property
    def frames(self):
        return self.data.shape[0]

    @property
    def bins(self):
        return self.data.shape[1]

    @property
    def magnitude(self):
        return np.abs(self.data)


DEFAULT_STFT = StftConfig()

# fraction of the peak window-square sum below which istft stops normalizing exactly
NORM_FLOOR = 1e-2


def stft(w, cfg=DEFAULT_STFT):
    """Frame, window and zero-pad to ``fft_size``; returns a frames x bins spectrogram."""
    x = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    if len(x) < cfg.win_len:
        raise ValueError(f"input too short: {len(x)} samples < window {cfg.win_len}")
    n = cfg.num_frames(len(x))
    frames = sliding_window_view(x, cfg.win_len)[: (n - 1) * cfg.hop + 1 : cfg.hop]
    spec = np.fft.rfft(frames * cfg.window, n=cfg.fft_size, axis=-1)
    return ComplexSpectrogram(spec, cfg.hop, cfg.win_len)


def synthesis_norm(n_frames, cfg=DEFAULT_STFT):
    """Overlap-added squared window for ``n_frames`` frames."""
    length = (n_frames - 1) * cfg.hop + cfg.win_len
    norm = np.zeros(length)
    w2 = cfg.window**2
    for i in range(n_frames):
        norm[i * cfg.hop : i * cfg.hop + cfg.win_len] += w2
    return norm


def istft(s, cfg=DEFAULT_STFT, out_len=None, sample_rate=SAMPLE_RATE):
    """Weighted overlap-add inverse of :func:`stft`.

    Each frame is inverse-transformed, windowed again and overlap-added; the
    sum is divided by the overlap-added squared window, which reconstructs
    every sample the analysis covered with nonzero weight. Uncovered samples
    are zero. The output is truncated or zero-padded to ``out_len``.
    """
    data = s.data if isinstance(s, ComplexSpectrogram) else np.asarray(s)
    if data.shape[-1] != cfg.bins:
        raise ValueError(f"spectrogram has {data.shape[-1]} bins, config expects {cfg.bins}")
    n = data.shape[0]
    frames = np.fft.irfft(data, n=cfg.fft_size, axis=-1)[:, : cfg.win_len] * cfg.window
    length = (n - 1) * cfg.hop + cfg.win_len
    y = np.zeros(length)
    for i in range(n):
        y[i * cfg.hop : i * cfg.hop + cfg.win_len] += frames[i]
    y *= synthesis_gain(n, cfg)
    if out_len is not None:
        y = y[:out_len] if len(y) >= out_len else np.pad(y, (0, out_len - len(y)))
    return Waveform(y, sample_rate)


def synthesis_gain(n_frames, cfg=DEFAULT_STFT):
    """Per-sample reciprocal of the window-square normalizer, floored.

    Near the ends the overlap-added squared window falls to zero, and dividing
    by it would amplify any inconsistency in a modified spectrogram without
    bound. Below ``NORM_FLOOR`` times its peak the divisor is held at that
    floor, which fades the outermost samples instead.
    """
    norm = synthesis_norm(n_frames, cfg)
    return 1.0 / np.maximum(norm, NORM_FLOOR * norm.max())


def covered_span(length, cfg=DEFAULT_STFT):
    """Half-open sample range reconstructed exactly by an stft/istft round trip."""
    n = cfg.num_frames(length)
    norm = synthesis_norm(n, cfg)
    idx = np.flatnonzero(norm >= NORM_FLOOR * norm.max())
    return int(idx[0]), int(idx[-1]) + 1


def decompose(s):
    """Return ``(magnitude, phase)``; the phase of an exact zero is 0."""
    data = s.data if isinstance(s, ComplexSpectrogram) else np.asarray(s)
    phase = np.angle(data)
    # -0.0 imaginary parts would give -pi; keep the half-open range (-pi, pi]
    phase[phase == -np.pi] = np.pi
    return np.abs(data), phase


def recompose(magnitude, phase):
    return magnitude * np.exp(1j * phase)


# -- WAV I/O ----------------------------------------------------------------


class WavFormatError(ValueError):
    pass


def write_wav(path, w):
    """Write mono 16-bit PCM; samples are clipped to [-1, 1) and rounded."""
    x = w.samples if isinstance(w, Waveform) else np.asarray(w)
    rate = w.sample_rate if isinstance(w, Waveform) else SAMPLE_RATE
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.tobytes())


def read_wav(path, expected_rate=SAMPLE_RATE):
    """Read mono 16-bit PCM WAV, rejecting anything else by field name."""
    try:
        fh = wave.open(str(path), "rb")
    except wave.Error as exc:
        raise WavFormatError(f"{path}: audio_format: {exc}") from exc
    except EOFError as exc:
        raise WavFormatError(f"{path}: truncated RIFF header") from exc
    with fh:
        if fh.getnchannels() != 1:
            raise WavFormatError(f"{path}: num_channels is {fh.getnchannels()}, expected 1")
        if fh.getsampwidth() != 2:
            raise WavFormatError(
                f"{path}: bits_per_sample is {8 * fh.getsampwidth()}, expected 16"
            )
        if expected_rate is not None and fh.getframerate() != expected_rate:
            raise WavFormatError(
                f"{path}: sample_rate is {fh.getframerate()}, expected {expected_rate}"
            )
        raw = fh.readframes(fh.getnframes())
        rate = fh.getframerate()
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)
