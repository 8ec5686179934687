"""
Recovering an audio-visual offset without training
==================================================

The synthetic visual stream is a fixed projection of the target speaker's
spectra, so audio-rate features built from the same projection line up
with it along one diagonal band of the affinity matrix. Shifting the video
moves the band; stalling it breaks the band in two.
"""
import sys
from pathlib import Path

import numpy as np

from caffnet import affinity, data, metrics

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(exist_ok=True)
cfg = data.DataConfig()

# one record, target speaker 0 against interferer 1
rec = data.make_record(0, 1, seed=11, cfg=cfg, offset=0)

# re-render the video at a few offsets and read the offset back off the band
for offset in (-9, -4, 0, 3, 9):
    A, masks = metrics.probe_affinity(rec, cfg, offset)
    scores = affinity.band_scores(A, masks).data
    print(f"applied {offset:+d}  estimated {affinity.estimate_offset(A, masks):+d}  "
          f"best band score {scores.max():.2f} (mean {scores.mean():.2f})")

A, _ = metrics.probe_affinity(rec, cfg, 4)
affinity.write_affinity_pgm(out / "affinity_offset_plus4.pgm", A)

# a stall of 8 frames at frame 25: the band before and after the stall
# sits on different diagonals
A, masks = metrics.probe_affinity(rec, cfg, 0, jitter=(25, 8))
pre, post = metrics.jitter_row_ranges(25, 8, A.shape[0])
print("jitter: pre rows", (int(pre[0]), int(pre[-1]) + 1), "->", affinity.estimate_offset(A, masks, pre),
      " post rows", (int(post[0]), int(post[-1]) + 1), "->", affinity.estimate_offset(A, masks, post))
affinity.write_affinity_pgm(out / "affinity_jitter.pgm", A)

# the offset posterior the model would tile into its identity matrix
p = affinity.offset_posterior(A, masks).data
print("posterior mass on 0 and +8:", np.round(p[[9, 17]], 3))
print("wrote", sorted(str(p) for p in out.glob("*.pgm")))
