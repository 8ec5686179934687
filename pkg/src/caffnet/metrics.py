"""Waveform metrics, offset sweeps and alignment accuracy.

SI-SDR (dB) is the only waveform metric; BSS-eval SDR, PESQ and STOI are not
computed, so reported numbers are not directly comparable to SDRi tables.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import affinity, data, dsp

SDR_EPS = 1e-12
SUBSTITUTION_NOTE = "metric: SI-SDR in dB (substitutes BSS-eval SDR; PESQ/STOI not computed)"


def _samples(w):
    return w.samples if isinstance(w, dsp.Waveform) else np.asarray(w, dtype=np.float64)


def si_sdr_db(reference, estimate, eps=SDR_EPS):
    """Scale-invariant SDR of ``estimate`` against ``reference`` in dB."""
    r = _samples(reference)
    e = _samples(estimate)
    if r.shape != e.shape:
        raise ValueError(f"length mismatch: reference {r.shape} vs estimate {e.shape}")
    rr = float(np.dot(r, r))
    if rr == 0:
        raise ValueError("reference signal is all zeros")
    scale = float(np.dot(e, r)) / rr
    proj = scale * r
    return 10.0 * np.log10((np.dot(proj, proj) + eps) / (np.dot(proj - e, proj - e) + eps))


def si_sdri(reference, estimate, mixture):
    """Improvement of the estimate over the unprocessed mixture."""
    if np.array_equal(_samples(estimate), _samples(mixture)):
        return 0.0
    return si_sdr_db(reference, estimate) - si_sdr_db(reference, mixture)


@dataclass
class EvalReport:
    offset: int
    si_sdr: list = field(default_factory=list)
    si_sdr_in: list = field(default_factory=list)
    si_sdri: list = field(default_factory=list)
    offset_estimates: list = field(default_factory=list)

    @property
    def count(self):
        return len(self.si_sdri)

    @property
    def mean_si_sdr(self):
        return float(np.mean(self.si_sdr)) if self.si_sdr else float("nan")

    @property
    def mean_si_sdri(self):
        return float(np.mean(self.si_sdri)) if self.si_sdri else float("nan")

    @property
    def median_si_sdri(self):
        return float(np.median(self.si_sdri)) if self.si_sdri else float("nan")

    @property
    def offset_accuracy(self):
        if not self.offset_estimates:
            return float("nan")
        return float(np.mean(np.array(self.offset_estimates) == self.offset))


def separate(model, mixture, visual, stft_cfg=dsp.DEFAULT_STFT):
    """Enhanced waveform plus affinity diagnostics for one record."""
    X = dsp.stft(mixture, stft_cfg).data
    Y_hat, info = model.forward(X, visual, training=False)
    if model.cfg.variant == "real":
        spec = dsp.recompose(Y_hat.data.astype(np.float64), np.angle(X))
    else:
        spec = Y_hat.numpy().astype(np.complex128)
    return dsp.istft(spec, stft_cfg, out_len=len(mixture)), info


def evaluate_records(model, records, offset=None, data_cfg=None, passthrough=False,
                     jitter=None, batch_size=8, stft_cfg=dsp.DEFAULT_STFT):
    """Evaluate ``records`` at ``offset`` (``None`` keeps each record's stored visual)."""
    cfg = data_cfg or data.DataConfig()
    report = EvalReport(offset=0 if offset is None else int(offset))
    for start in range(0, len(records), batch_size):
        chunk = records[start : start + batch_size]
        visuals = []
        for rec in chunk:
            if offset is None and jitter is None:
                visuals.append(rec.visual.features)
            else:
                off = rec.applied_offset if offset is None else offset
                visuals.append(data.regenerate_visual(rec, off, cfg, jitter).features)
        if passthrough:
            estimates = [rec.mixture for rec in chunk]
            estimated_offsets = [None] * len(chunk)
        else:
            X = np.stack([dsp.stft(rec.mixture, stft_cfg).data for rec in chunk])
            Y_hat, info = model.forward(X, np.stack(visuals), training=False)
            if model.cfg.variant == "real":
                specs = dsp.recompose(Y_hat.data.astype(np.float64), np.angle(X))
            else:
                specs = Y_hat.numpy().astype(np.complex128)
            estimates = [dsp.istft(s, stft_cfg, out_len=len(rec.mixture)) for s, rec in zip(specs, chunk)]
            masks = model.masks(X.shape[1], visuals[0].shape[0])
            estimated_offsets = list(np.atleast_1d(affinity.estimate_offset(info.A, masks)))
        for rec, est, eo in zip(chunk, estimates, estimated_offsets):
            report.si_sdr.append(si_sdr_db(rec.target, est))
            report.si_sdr_in.append(si_sdr_db(rec.target, rec.mixture))
            report.si_sdri.append(si_sdri(rec.target, est, rec.mixture))
            if eo is not None:
                report.offset_estimates.append(int(eo))
    return report


def sweep_offsets(model, records, offsets=range(-9, 10), data_cfg=None, passthrough=False,
                  batch_size=8):
    return [evaluate_records(model, records, o, data_cfg, passthrough, batch_size=batch_size)
            for o in offsets]


REPORT_COLUMNS = ("offset", "records", "si_sdr", "si_sdri", "offset_accuracy")


def format_report_csv(reports):
    lines = ["# " + SUBSTITUTION_NOTE, ",".join(REPORT_COLUMNS)]
    for r in reports:
        lines.append(f"{r.offset},{r.count},{r.mean_si_sdr:.3f},{r.mean_si_sdri:.3f},{r.offset_accuracy:.3f}")
    return "\n".join(lines) + "\n"


def write_report_csv(path, reports):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_report_csv(reports))


def read_report_csv(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        body = [ln for ln in fh if not ln.startswith("#")]
    header = body[0].strip().split(",")
    for ln in body[1:]:
        vals = ln.strip().split(",")
        rows.append({k: (int(v) if k in ("offset", "records") else float(v)) for k, v in zip(header, vals)})
    return rows


# -- alignment without a separator --------------------------------------------------


def probe_affinity(record, data_cfg=None, offset=None, jitter=None, stft_cfg=dsp.DEFAULT_STFT):
    """Identity-projection affinity between audio-rate and video-rate features of the target."""
    cfg = data_cfg or data.DataConfig()
    offset = record.applied_offset if offset is None else offset
    visual = data.regenerate_visual(record, offset, cfg, jitter)
    n = stft_cfg.num_frames(cfg.segment_samples)
    s = data.audio_rate_features(record.context, cfg.context_samples, n, cfg.visual_dim, stft_cfg)
    params = affinity.AffinityParams.identity(cfg.visual_dim)
    A = affinity.compute_affinity(s, visual.features, params.w_s, params.w_v).data
    masks = affinity.build_diagonal_masks(n, visual.num_rows, 4, cfg.offset_range)
    return A, masks


def jitter_row_ranges(t, tau, n_rows, fa_over_fv=4, offset_range=9, stack=data.STACK):
    """Audio-row ranges before and after a stall of ``tau`` frames at frame ``t``.

    At zero offset, audio row ``i`` pairs with the clip starting at frame
    ``i // fa_over_fv + offset_range``. Pre rows pair with clips that end
    before frame ``t``; post rows pair with clips that start after the stall.
    """
    pre_end = fa_over_fv * (t - (stack - 1) - offset_range)
    post_start = fa_over_fv * (t + tau - offset_range)
    return np.arange(0, max(pre_end, 0)), np.arange(min(max(post_start, 0), n_rows), n_rows)


def offset_accuracy(records, estimator, data_cfg=None):
    """Fraction of records whose estimated offset equals the applied one."""
    hits = [estimator(rec) == rec.applied_offset for rec in records]
    return float(np.mean(hits)) if hits else float("nan")


def identity_estimator(data_cfg=None):
    def estimate(rec):
        A, masks = probe_affinity(rec, data_cfg)
        return affinity.estimate_offset(A, masks)

    return estimate


def confusion_matrix(true_offsets, estimated_offsets, offset_range=9):
    """``(2R+1) x (2R+1)`` counts; row = true offset, column = estimate."""
    size = 2 * offset_range + 1
    cm = np.zeros((size, size), dtype=int)
    for t, e in zip(true_offsets, estimated_offsets):
        cm[t + offset_range, e + offset_range] += 1
    return cm
