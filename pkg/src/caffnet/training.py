"""Training loop: dynamic remixing, Adam, plateau schedule, best-val checkpoint."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import data, dsp, losses
from .model import Model, parse_key_values
from .numcore import Adam, ReduceLROnPlateau


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    steps: int = 3000
    batch_size: int = 8
    lr: float = 1e-3
    steps_per_epoch: int = 250
    plateau_factor: float = 0.8
    plateau_patience: int = 2
    remix: bool = True
    random_offsets: bool = True
    val_records: int = 32
    seed: int = 0
    init_seed: int = 0

    @classmethod
    def from_text(cls, text):
        return cls(**parse_key_values(text, cls))


@dataclass
class Batch:
    X: np.ndarray  # (B, N, F) complex mixture spectrogram
    Y: np.ndarray  # (B, N, F) complex target spectrogram
    V: np.ndarray  # (B, M, D) visual features
    offsets: np.ndarray


class RecordPool:
    """In-memory view of one corpus split for batching."""

    def __init__(self, manifest, split, data_cfg, limit=None):
        entries = manifest.split(split)
        if limit is not None:
            entries = entries[:limit]
        if not entries:
            raise ValueError(f"empty split {split!r} in {manifest.root}")
        self.cfg = data_cfg
        self.records = [data.load_record(manifest, e, data_cfg) for e in entries]
        self.speakers = np.array([r.target_speaker for r in self.records])

    def __len__(self):
        return len(self.records)

    def stored_batch(self, indices, stft_cfg=dsp.DEFAULT_STFT):
        recs = [self.records[i] for i in indices]
        return Batch(
            X=np.stack([dsp.stft(r.mixture, stft_cfg).data for r in recs]),
            Y=np.stack([dsp.stft(r.target, stft_cfg).data for r in recs]),
            V=np.stack([r.visual.features for r in recs]),
            offsets=np.array([r.applied_offset for r in recs]),
        )

    def remixed_batch(self, rng, size, random_offsets=True, stft_cfg=dsp.DEFAULT_STFT):
        """Fresh target/interferer pairings and offsets drawn from ``rng``."""
        cfg = self.cfg
        X, Y, V, offs = [], [], [], []
        for _ in range(size):
            i = int(rng.integers(len(self)))
            others = np.flatnonzero(self.speakers != self.speakers[i])
            j = int(others[rng.integers(len(others))])
            target = self.records[i].target.samples
            ratio = cfg.tir_db
            if cfg.tir_jitter_db:
                ratio += rng.uniform(-cfg.tir_jitter_db, cfg.tir_jitter_db)
            interf = data.scale_to_ratio(target, self.records[j].target.samples, ratio)
            mix = data.make_mixture(target, interf)
            off = int(rng.integers(-cfg.offset_range, cfg.offset_range + 1)) if random_offsets else 0
            vis = data.regenerate_visual(self.records[i], off, cfg)
            X.append(dsp.stft(mix, stft_cfg).data)
            Y.append(dsp.stft(target, stft_cfg).data)
            V.append(vis.features)
            offs.append(off)
        return Batch(np.stack(X), np.stack(Y), np.stack(V), np.array(offs))


def batch_loss(model, batch, training):
    Y_hat, _ = model.forward(batch.X, batch.V, training=training)
    cfg = model.cfg
    target = np.abs(batch.Y) if cfg.variant == "real" else batch.Y
    return losses.total_loss(cfg.variant, target, Y_hat, losses.LossConfig(alpha=cfg.alpha))


def evaluate_loss(model, pool, batch_size=8, limit=None):
    n = len(pool) if limit is None else min(limit, len(pool))
    total = 0.0
    for start in range(0, n, batch_size):
        idx = list(range(start, min(start + batch_size, n)))
        total += float(batch_loss(model, pool.stored_batch(idx), False).data) * len(idx)
    return total / n


def train(model, train_pool, val_pool, cfg, log=print, checkpoint=None):
    """Run ``cfg.steps`` optimizer steps; returns the per-step training losses.

    Every ``steps_per_epoch`` steps the validation loss is computed, the
    plateau scheduler is stepped and, if ``checkpoint`` is given, the best
    model so far is written there.
    """
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, lr=cfg.lr)
    sched = ReduceLROnPlateau(opt, factor=cfg.plateau_factor, patience=cfg.plateau_patience)
    history = []
    best = math.inf
    epoch = 0
    running = []
    for step in range(1, cfg.steps + 1):
        if cfg.remix:
            batch = train_pool.remixed_batch(rng, cfg.batch_size, cfg.random_offsets)
        else:
            batch = train_pool.stored_batch(rng.integers(len(train_pool), size=cfg.batch_size))
        opt.zero_grad()
        loss = batch_loss(model, batch, True)
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingError(f"non-finite training loss {value} at step {step}")
        loss.backward()
        opt.step()
        history.append(value)
        running.append(value)
        if step % cfg.steps_per_epoch == 0 or step == cfg.steps:
            epoch += 1
            val = evaluate_loss(model, val_pool, cfg.batch_size, cfg.val_records) if val_pool else float("nan")
            if val_pool is not None and not np.isfinite(val):
                raise TrainingError(f"non-finite validation loss at step {step}")
            if val_pool is not None:
                sched.step(val)
            improved = val_pool is None or val < best
            if improved:
                best = val if val_pool is not None else best
                if checkpoint is not None:
                    model.save(checkpoint)
            log(f"epoch {epoch} step {step} train_loss {np.mean(running):.6f} "
                f"val_loss {val:.6f} lr {opt.lr:.3g}{' *' if improved else ''}")
            running = []
    return history
