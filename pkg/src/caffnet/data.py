"""Synthetic paired audio-visual corpus with shift and jitter corruption.

Speakers are harmonic sources with a wandering fundamental, a fixed formant
profile and a syllable-rate envelope. The "visual" stream is a deterministic
featurization of the target speaker's own audio, so audio-visual
correspondence is exact by construction and offsets can be verified.

Timing model (``R = offset_range``, ``TV = 0.04`` s per video frame): a
record's visual stream always spans video time ``[T - TV*(R+1), T + dur + TV*R]``
around an audio segment ``[T, T + dur]``. With an applied offset ``o`` the
video clock runs ``o`` frames behind the content, so the clip shown at video
time ``t`` depicts content time ``t - TV*o``. That window contains every span
returned by :func:`apply_shift` and places the zero-offset diagonal where the
offset-``0`` band of the affinity masks expects it.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dsp

FPS = 25
VIDEO_FRAME = 1.0 / FPS
STACK = 5
FEAT_WIN = 640  # 40 ms at 16 kHz
FEAT_BINS = slice(2, 82)  # 50 Hz .. 2025 Hz at 25 Hz resolution
FEAT_FLOOR = 1e-3
CONTEXT = 0.8  # seconds of source audio kept on each side of the segment
PROJECTION_SEED = 20210601
MAX_OFFSET = 9

LOW_BAND = (90.0, 160.0)
HIGH_BAND = (170.0, 260.0)


# -- speakers and utterances -------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpeaker:
    id: int
    seed: int = 0
    f0_band: tuple = LOW_BAND
    f0_center: float = 120.0
    tilt_db_per_oct: float = -9.0
    formants: tuple = ((500.0, 0.25, 12.0), (1500.0, 0.2, 8.0))
    syllable_rate: float = 4.0

    @classmethod
    def create(cls, speaker_id, seed=0):
        """Deterministic speaker from ``(speaker_id, seed)``; even ids are low-band."""
        rng = np.random.default_rng([seed, speaker_id, 17])
        band = LOW_BAND if speaker_id % 2 == 0 else HIGH_BAND
        lo, hi = band
        center = rng.uniform(lo + 0.2 * (hi - lo), hi - 0.2 * (hi - lo))
        f1 = rng.uniform(300, 900)
        f2 = rng.uniform(max(f1 + 300, 900), 2500)
        formants = (
            (f1, rng.uniform(0.15, 0.3), rng.uniform(8, 16)),
            (f2, rng.uniform(0.12, 0.25), rng.uniform(4, 12)),
        )
        return cls(
            id=int(speaker_id),
            seed=int(seed),
            f0_band=band,
            f0_center=float(center),
            tilt_db_per_oct=float(rng.uniform(-12, -6)),
            formants=formants,
            syllable_rate=float(rng.uniform(2.0, 6.0)),
        )

    def harmonic_gain(self, freq):
        """Linear amplitude of a partial at ``freq`` Hz."""
        freq = np.maximum(freq, 1.0)
        db = self.tilt_db_per_oct * np.log2(freq / 100.0)
        for fc, width_oct, gain_db in self.formants:
            db = db + gain_db * np.exp(-0.5 * (np.log2(freq / fc) / width_oct) ** 2)
        return 10.0 ** (db / 20.0)


def _utterance_rng(spk, seed):
    return np.random.default_rng([spk.seed, spk.id, int(seed), 29])


def synth_envelope(spk, dur, seed, sample_rate=dsp.SAMPLE_RATE):
    """Syllable-rate amplitude envelope with silent syllables; exact zeros in gaps."""
    rng = _utterance_rng(spk, seed)
    n = int(round(dur * sample_rate))
    env = np.zeros(n)
    pos = 0
    first = True
    while pos < n:
        length = int(sample_rate / (spk.syllable_rate * rng.uniform(0.7, 1.3)))
        voiced = first or rng.uniform() < 0.8
        first = False
        if voiced:
            seg = np.sin(np.pi * np.arange(length) / length) ** 2 * rng.uniform(0.5, 1.0)
            end = min(pos + length, n)
            env[pos:end] = seg[: end - pos]
        pos += length
    return env


def synth_f0(spk, dur, seed, sample_rate=dsp.SAMPLE_RATE):
    """Log-domain random walk of the fundamental, reflected into the speaker band."""
    rng = np.random.default_rng([spk.seed, spk.id, int(seed), 31])
    ctrl_rate = 100
    n_ctrl = int(np.ceil(dur * ctrl_rate)) + 2
    lo, hi = np.log(spk.f0_band[0]), np.log(spk.f0_band[1])
    steps = rng.normal(0.0, 0.02, n_ctrl)
    path = np.empty(n_ctrl)
    x = np.log(spk.f0_center)
    for i in range(n_ctrl):
        # pull gently toward the speaker's center, reflect at the band edges
        x += steps[i] + 0.05 * (np.log(spk.f0_center) - x)
        if x < lo:
            x = 2 * lo - x
        if x > hi:
            x = 2 * hi - x
        path[i] = x
    t_ctrl = np.arange(n_ctrl) / ctrl_rate
    t = np.arange(int(round(dur * sample_rate))) / sample_rate
    return np.exp(np.interp(t, t_ctrl, path))


def synth_utterance(spk, dur, seed, sample_rate=dsp.SAMPLE_RATE, max_freq=4000.0):
    """Harmonic utterance of ``dur`` seconds, peak-normalized to 0.5."""
    if dur <= 0:
        raise ValueError("duration must be positive")
    f0 = synth_f0(spk, dur, seed, sample_rate)
    env = synth_envelope(spk, dur, seed, sample_rate)
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    rng = np.random.default_rng([spk.seed, spk.id, int(seed), 37])
    n_harm = int(max_freq // spk.f0_band[0])
    x = np.zeros_like(f0)
    for h in range(1, n_harm + 1):
        freq = h * f0
        gain = spk.harmonic_gain(freq) * (freq < max_freq)
        x += gain * np.sin(h * phase + rng.uniform(-np.pi, np.pi))
    x *= env
    peak = np.max(np.abs(x))
    if peak > 0:
        x *= 0.5 / peak
    return dsp.Waveform(x, sample_rate)


def quantize(x):
    """Round-trip through 16-bit PCM resolution."""
    return np.clip(np.round(np.asarray(x) * 32768.0), -32768, 32767) / 32768.0


# -- synthetic visual featurizer ----------------------------------------------


_PROJECTIONS = {}


def projection_matrix(dim):
    """Fixed ``(STACK * per-frame bins) x dim`` matrix with orthonormal columns."""
    if dim not in _PROJECTIONS:
        n_in = STACK * (FEAT_BINS.stop - FEAT_BINS.start)
        if dim > n_in:
            raise ValueError(f"visual dim {dim} exceeds stacked feature size {n_in}")
        rng = np.random.default_rng(PROJECTION_SEED)
        q, _ = np.linalg.qr(rng.normal(size=(n_in, dim)))
        _PROJECTIONS[dim] = q
    return _PROJECTIONS[dim]


_FEAT_WINDOW = dsp.periodic_hann(FEAT_WIN)


class SpanError(ValueError):
    """Requested content lies outside the available source audio."""


def frame_spectra(source, start_index, centers, sample_rate=dsp.SAMPLE_RATE, strict=True):
    """Centered log-magnitude spectra of 40 ms spans at ``centers`` (seconds).

    ``centers`` are content times relative to the sample ``start_index`` of
    ``source``. Each returned row has its mean over bins removed, so silence
    maps to the zero vector.
    """
    x = source.samples if isinstance(source, dsp.Waveform) else np.asarray(source)
    centers = np.asarray(centers, dtype=np.float64)
    idx = start_index + np.round(centers * sample_rate).astype(int)
    lo = idx - FEAT_WIN // 2
    if strict and (lo.min() < 0 or lo.max() + FEAT_WIN > len(x)):
        raise SpanError(
            f"feature span [{lo.min()}, {lo.max() + FEAT_WIN}) outside source of {len(x)} samples"
        )
    pad = FEAT_WIN
    xp = np.pad(x, pad)
    segs = np.stack([xp[s + pad : s + pad + FEAT_WIN] for s in lo.ravel()])
    mag = np.abs(np.fft.rfft(segs * _FEAT_WINDOW, axis=-1))[:, FEAT_BINS]
    logmag = np.log(mag + FEAT_FLOOR)
    logmag -= logmag.mean(axis=-1, keepdims=True)
    return logmag.reshape(centers.shape + (logmag.shape[-1],))


def stack_frames(frames, dim):
    """Concatenate every run of ``STACK`` consecutive frames and project to ``dim``."""
    frames = np.asarray(frames)
    t = frames.shape[0]
    if t < STACK:
        raise ValueError(f"need at least {STACK} frames, got {t}")
    m = t - (STACK - 1)
    stacked = np.concatenate([frames[q : q + m] for q in range(STACK)], axis=-1)
    return stacked @ projection_matrix(dim)


@dataclass
class VisualStream:
    features: np.ndarray  # (M, dim)
    frames: np.ndarray = None  # (T, bins) per-frame spectra before stacking
    frame_rate: float = FPS

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError("visual features must be M x dim with M >= 1")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("visual features contain non-finite values")

    @property
    def num_rows(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]


def num_video_frames(duration, offset_range=MAX_OFFSET):
    return int(round(duration * FPS)) + 2 * offset_range + 1


def video_frame_content_times(duration, offset=0, offset_range=MAX_OFFSET):
    """Content time (relative to segment start) depicted by each video frame's center."""
    f = np.arange(num_video_frames(duration, offset_range))
    video_t = -VIDEO_FRAME * (offset_range + 1) + VIDEO_FRAME * f + VIDEO_FRAME / 2
    return video_t - VIDEO_FRAME * offset


def synth_visual(source, segment_start, duration, offset=0, dim=32, offset_range=MAX_OFFSET,
                 jitter=None, sample_rate=dsp.SAMPLE_RATE):
    """Visual stream for the segment starting at sample ``segment_start`` of ``source``.

    Returns ``M = T - 4`` stacked rows for ``T = num_video_frames(duration)``
    video frames. ``jitter=(t, tau)`` applies :func:`apply_jitter` before stacking.
    """
    if abs(offset) > offset_range:
        raise ValueError(f"offset {offset} outside [-{offset_range}, {offset_range}]")
    centers = video_frame_content_times(duration, offset, offset_range)
    frames = frame_spectra(source, segment_start, centers, sample_rate)
    stream = VisualStream(stack_frames(frames, dim), frames)
    if jitter is not None and jitter[1] > 0:
        stream = apply_jitter(stream, *jitter)
    return stream


def audio_rate_features(source, segment_start, n_frames, dim=32, stft_cfg=dsp.DEFAULT_STFT,
                        sample_rate=dsp.SAMPLE_RATE):
    """Visual-space features evaluated at every STFT frame center of the segment.

    Used with identity projections to probe alignment without training.
    """
    centers = (np.arange(n_frames) * stft_cfg.hop + stft_cfg.win_len / 2) / sample_rate
    sub = centers[:, None] + VIDEO_FRAME * (np.arange(STACK) - STACK // 2)[None, :]
    spectra = frame_spectra(source, segment_start, sub, sample_rate, strict=False)
    stacked = spectra.reshape(n_frames, -1)
    return stacked @ projection_matrix(dim)


# -- corruption protocols ------------------------------------------------------


def apply_shift(audio_span, offset, max_offset=MAX_OFFSET, frame=VIDEO_FRAME):
    """Video extraction span that still holds all audio-responsive frames.

    ``audio_span = (T, T + delta)``; a negative offset extends the start by
    ``|offset|`` frames, a positive one extends the end.
    """
    if abs(offset) > max_offset:
        raise ValueError(f"|offset| must be <= {max_offset}, got {offset}")
    start, end = audio_span
    return (start + frame * min(offset, 0), end + frame * max(offset, 0))


def visual_window(audio_span, offset_range=MAX_OFFSET, frame=VIDEO_FRAME):
    """Fixed video-time window rendered for every offset (contains all :func:`apply_shift` spans)."""
    start, end = audio_span
    return (start - frame * (offset_range + 1), end + frame * offset_range)


def apply_jitter(v, t, tau):
    """Freeze the stream on frame ``t-1`` for ``tau`` frames, then resume late.

    Frames ``t .. t+tau-1`` (0-based) become copies of frame ``t-1``; the
    following frames are the original ones delayed by ``tau`` and the tail is
    dropped, so the length is unchanged. The stream is re-stacked afterwards.
    """
    if tau < 0 or tau > 8:
        raise ValueError(f"jitter duration must be in [0, 8], got {tau}")
    if v.frames is None:
        raise ValueError("jitter needs the per-frame features of the stream")
    n = v.frames.shape[0]
    if tau == 0:
        return v
    if t < 1 or t + tau > n:
        raise ValueError(f"jitter start {t} with duration {tau} out of range for {n} frames")
    frames = v.frames.copy()
    frames[t : t + tau] = v.frames[t - 1]
    frames[t + tau :] = v.frames[t : n - tau]
    return VisualStream(stack_frames(frames, v.dim), frames, v.frame_rate)


def make_mixture(target, interferer):
    """Sample-wise ``target + interferer``; no renormalization."""
    y = target.samples if isinstance(target, dsp.Waveform) else np.asarray(target)
    h = interferer.samples if isinstance(interferer, dsp.Waveform) else np.asarray(interferer)
    if y.shape != h.shape:
        raise ValueError(f"mixture length mismatch: {y.shape} vs {h.shape}")
    rate = target.sample_rate if isinstance(target, dsp.Waveform) else dsp.SAMPLE_RATE
    return dsp.Waveform(y + h, rate)


def scale_to_ratio(target, interferer, ratio_db):
    """Scale ``interferer`` so that target/interferer energy equals ``ratio_db``."""
    et = float(np.sum(np.square(target)))
    ei = float(np.sum(np.square(interferer)))
    if et == 0 or ei == 0:
        return np.asarray(interferer, dtype=np.float64)
    return np.asarray(interferer) * np.sqrt(et / (ei * 10 ** (ratio_db / 10)))


# -- records and corpus -------------------------------------------------------


@dataclass
class DataConfig:
    duration: float = 2.0
    sample_rate: int = dsp.SAMPLE_RATE
    visual_dim: int = 32
    offset_range: int = MAX_OFFSET
    tir_db: float = 0.0
    tir_jitter_db: float = 0.0
    jitter_prob: float = 0.0
    speakers_train: int = 32
    speakers_val: int = 8
    speakers_test: int = 8
    speaker_seed: int = 0

    @property
    def segment_samples(self):
        return int(round(self.duration * self.sample_rate))

    @property
    def context_samples(self):
        return int(round(CONTEXT * self.sample_rate))


SPLITS = ("train", "val", "test")
_SPLIT_CODE = {"train": 0, "val": 1, "test": 2}
_SPLIT_ID_BASE = {"train": 0, "val": 10000, "test": 20000}


def speaker_pool(split, cfg):
    count = {"train": cfg.speakers_train, "val": cfg.speakers_val, "test": cfg.speakers_test}[split]
    return [_SPLIT_ID_BASE[split] + i for i in range(count)]


@dataclass
class SampleRecord:
    mixture: dsp.Waveform
    target: dsp.Waveform
    visual: VisualStream
    applied_offset: int
    jitter: tuple = None
    seed: int = 0
    context: dsp.Waveform = None
    target_speaker: int = -1
    interferer_speaker: int = -1

    @property
    def interferer(self):
        return dsp.Waveform(self.mixture.samples - self.target.samples, self.mixture.sample_rate)


def make_record(target_spk, interferer_spk, seed, cfg=None, offset=0, jitter=None, tir_db=None):
    """Generate one record; all randomness flows from ``seed``."""
    cfg = cfg or DataConfig()
    rng = np.random.default_rng([int(seed), 41])
    ctx = cfg.context_samples
    seg = cfg.segment_samples
    extra = 0.0
    while True:
        tspk = SyntheticSpeaker.create(target_spk, cfg.speaker_seed)
        ispk = SyntheticSpeaker.create(interferer_spk, cfg.speaker_seed)
        total = cfg.duration + 2 * CONTEXT + extra
        source = quantize(synth_utterance(tspk, total, seed, cfg.sample_rate).samples)
        start = ctx + int(round(extra / 2 * cfg.sample_rate))
        try:
            visual = synth_visual(source, start, cfg.duration, offset, cfg.visual_dim,
                                  cfg.offset_range, jitter, cfg.sample_rate)
            break
        except SpanError:
            extra += 0.4
    target = source[start : start + seg]
    interf = synth_utterance(ispk, cfg.duration, int(seed) + 7919, cfg.sample_rate).samples[:seg]
    ratio = cfg.tir_db if tir_db is None else tir_db
    if cfg.tir_jitter_db:
        ratio += rng.uniform(-cfg.tir_jitter_db, cfg.tir_jitter_db)
    interf = quantize(scale_to_ratio(target, interf, ratio))
    mixture = make_mixture(target, interf)
    return SampleRecord(
        mixture=mixture,
        target=dsp.Waveform(target, cfg.sample_rate),
        visual=visual,
        applied_offset=int(offset),
        jitter=tuple(jitter) if jitter else None,
        seed=int(seed),
        context=dsp.Waveform(source[start - ctx : start + seg + ctx], cfg.sample_rate),
        target_speaker=int(target_spk),
        interferer_speaker=int(interferer_spk),
    )


def record_seed(seed, split, index):
    return int(np.random.SeedSequence([int(seed), _SPLIT_CODE[split], int(index)]).generate_state(1)[0])


def sample_record_spec(split, index, seed, cfg):
    """Draw speakers, offset and jitter for record ``index`` of ``split``."""
    rs = record_seed(seed, split, index)
    rng = np.random.default_rng([rs, 43])
    pool = speaker_pool(split, cfg)
    t_spk, i_spk = rng.choice(pool, size=2, replace=False)
    offset = int(rng.integers(-cfg.offset_range, cfg.offset_range + 1))
    jitter = None
    if cfg.jitter_prob and rng.uniform() < cfg.jitter_prob:
        tau = int(rng.integers(1, 9))
        t = int(rng.integers(1, num_video_frames(cfg.duration, cfg.offset_range) - tau))
        jitter = (t, tau)
    return int(t_spk), int(i_spk), offset, jitter, rs


# -- file formats ---------------------------------------------------------------

AVF_MAGIC = b"AVF1"


def write_avf(path, features):
    feats = np.ascontiguousarray(features, dtype="<f4")
    rows, cols = feats.shape
    with open(path, "wb") as fh:
        fh.write(AVF_MAGIC + struct.pack("<II", rows, cols) + feats.tobytes())


def read_avf(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != AVF_MAGIC:
        raise ValueError(f"{path}: magic is {raw[:4]!r}, expected {AVF_MAGIC!r}")
    if len(raw) < 12:
        raise ValueError(f"{path}: header truncated")
    rows, cols = struct.unpack("<II", raw[4:12])
    expected = 12 + 4 * rows * cols
    if len(raw) != expected:
        raise ValueError(f"{path}: payload is {len(raw)} bytes, expected {expected} for {rows}x{cols}")
    return np.frombuffer(raw[12:], dtype="<f4").reshape(rows, cols).astype(np.float64)


MANIFEST_FIELDS = (
    "split", "record", "mixture", "target", "context", "visual",
    "target_speaker", "interferer_speaker", "offset", "jitter_t", "jitter_tau", "seed",
)


@dataclass
class ManifestEntry:
    split: str
    record: str
    mixture: str
    target: str
    context: str
    visual: str
    target_speaker: int
    interferer_speaker: int
    offset: int
    jitter_t: int
    jitter_tau: int
    seed: int

    def to_line(self):
        return "\t".join(str(getattr(self, f)) for f in MANIFEST_FIELDS)

    @classmethod
    def from_line(cls, line):
        parts = line.rstrip("\n").split("\t")
        if len(parts) != len(MANIFEST_FIELDS):
            raise ValueError(f"manifest line has {len(parts)} fields, expected {len(MANIFEST_FIELDS)}")
        kw = dict(zip(MANIFEST_FIELDS, parts))
        for f in MANIFEST_FIELDS[6:]:
            kw[f] = int(kw[f])
        return cls(**kw)

    @property
    def jitter(self):
        return (self.jitter_t, self.jitter_tau) if self.jitter_tau > 0 else None


@dataclass
class CorpusManifest:
    root: Path
    entries: list = field(default_factory=list)

    def split(self, name):
        return [e for e in self.entries if e.split == name]

    def speakers(self, name):
        return {e.target_speaker for e in self.split(name)} | {
            e.interferer_speaker for e in self.split(name)
        }

    def path(self, rel):
        return Path(self.root) / rel


def write_manifest(path, entries):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# " + "\t".join(MANIFEST_FIELDS) + "\n")
        for e in entries:
            fh.write(e.to_line() + "\n")


def read_manifest(path):
    path = Path(path)
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            entries.append(ManifestEntry.from_line(line))
    return CorpusManifest(path.parent, entries)


def save_record(root, split, index, rec):
    rel = Path(split) / f"{index:06d}"
    d = Path(root) / rel
    d.mkdir(parents=True, exist_ok=True)
    try:
        dsp.write_wav(d / "mixture.wav", rec.mixture)
        dsp.write_wav(d / "target.wav", rec.target)
        dsp.write_wav(d / "context.wav", rec.context)
        write_avf(d / "visual.avf1", rec.visual.features)
    except OSError as exc:
        raise OSError(f"failed writing record under {d}: {exc}") from exc
    jt, jtau = rec.jitter if rec.jitter else (0, 0)
    return ManifestEntry(
        split, rel.as_posix(), (rel / "mixture.wav").as_posix(), (rel / "target.wav").as_posix(),
        (rel / "context.wav").as_posix(), (rel / "visual.avf1").as_posix(),
        rec.target_speaker, rec.interferer_speaker, rec.applied_offset, jt, jtau, rec.seed,
    )


def _build_one(args):
    root, split, index, seed, cfg = args
    t_spk, i_spk, offset, jitter, rs = sample_record_spec(split, index, seed, cfg)
    rec = make_record(t_spk, i_spk, rs, cfg, offset, jitter)
    return save_record(root, split, index, rec)


def build_corpus(root, n_train, n_val, n_test, cfg=None, seed=0, jobs=1):
    """Generate record files plus ``manifest.tsv`` under ``root``."""
    cfg = cfg or DataConfig()
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create corpus directory {root}: {exc}") from exc
    tasks = [
        (root, split, i, seed, cfg)
        for split, n in zip(SPLITS, (n_train, n_val, n_test))
        for i in range(n)
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            entries = list(pool.map(_build_one, tasks, chunksize=8))
    else:
        entries = [_build_one(t) for t in tasks]
    write_manifest(root / "manifest.tsv", entries)
    return CorpusManifest(root, entries)


def load_record(manifest, entry, cfg=None):
    """Read every file of a manifest entry back into a :class:`SampleRecord`."""
    cfg = cfg or DataConfig()
    mixture = dsp.read_wav(manifest.path(entry.mixture), cfg.sample_rate)
    target = dsp.read_wav(manifest.path(entry.target), cfg.sample_rate)
    context = dsp.read_wav(manifest.path(entry.context), cfg.sample_rate)
    visual = VisualStream(read_avf(manifest.path(entry.visual)))
    return SampleRecord(
        mixture=mixture, target=target, visual=visual, applied_offset=entry.offset,
        jitter=entry.jitter, seed=entry.seed, context=context,
        target_speaker=entry.target_speaker, interferer_speaker=entry.interferer_speaker,
    )


def regenerate_visual(record, offset, cfg=None, jitter=None):
    """Re-render a record's visual stream at a different offset from its stored context."""
    cfg = cfg or DataConfig()
    return synth_visual(record.context, cfg.context_samples, cfg.duration, offset,
                        cfg.visual_dim, cfg.offset_range, jitter, cfg.sample_rate)


def with_offset(record, offset, cfg=None, jitter=None):
    return replace(record, visual=regenerate_visual(record, offset, cfg, jitter),
                   applied_offset=int(offset), jitter=jitter)
