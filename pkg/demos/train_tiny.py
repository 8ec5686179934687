"""
Training a small separator end to end
=====================================

Generates a small corpus, trains a narrow real-mask model for a few hundred
steps and evaluates it at several offsets. At this size the model only
begins to separate; the acceptance suite trains the desk configuration
(64 channels, 2000 steps, 512 records) instead.

Equivalent command line::

    caffnet gen-data --out corpus --train 64 --val 8 --test 8 --seed 1
    caffnet train --corpus corpus --out tiny.ckpt --channels 16 --steps 300
    caffnet sweep --corpus corpus --checkpoint tiny.ckpt
"""
import sys
import time
from pathlib import Path

from caffnet import data, metrics, model, training

root = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out") / "tiny_corpus"
steps = int(sys.argv[2]) if len(sys.argv) > 2 else 300
cfg = data.DataConfig()

t0 = time.time()
manifest = data.build_corpus(root, 64, 8, 8, cfg, seed=1)
print(f"corpus of {len(manifest.entries)} records in {time.time() - t0:.0f} s")

train_pool = training.RecordPool(manifest, "train", cfg)
val_pool = training.RecordPool(manifest, "val", cfg)
net = model.Model(model.ModelConfig(channels=16), seed=0)

t0 = time.time()
tcfg = training.TrainConfig(steps=steps, steps_per_epoch=100)
history = training.train(net, train_pool, val_pool, tcfg, checkpoint=root.parent / "tiny.ckpt")
print(f"{steps} steps in {time.time() - t0:.0f} s, loss {history[0]:.1f} -> {history[-1]:.1f}")

# evaluate the best checkpoint with the video shifted by several frames
best = model.Model.load(root.parent / "tiny.ckpt")
test = [data.load_record(manifest, e, cfg) for e in manifest.split("test")]
reports = metrics.sweep_offsets(best, test, (-5, 0, 5), cfg)
print(metrics.format_report_csv(reports), end="")
