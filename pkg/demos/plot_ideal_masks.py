"""
How separable is the synthetic corpus?
======================================

Before training anything, check what an oracle mask can reach on the toy
mixtures. The ideal ratio mask clipped to [0, 1] with the mixture phase is
the ceiling for a real-valued masking model such as the one trained here.
"""
import numpy as np

from caffnet import data, dsp, metrics

cfg = data.DataConfig()
gains = {"irm": [], "binary": []}
for k in range(8):
    # even speaker ids draw a low pitch band, odd ids a high one
    rec = data.make_record(2 * k, 2 * k + 1, seed=100 + k, cfg=cfg)
    X = dsp.stft(rec.mixture).data
    Y = dsp.stft(rec.target).data
    N = X - Y
    masks = {
        "irm": np.clip(np.abs(Y) / (np.abs(X) + 1e-9), 0, 1),
        "binary": (np.abs(Y) > np.abs(N)).astype(float),
    }
    for name, M in masks.items():
        est = dsp.istft(M * X, out_len=len(rec.mixture))
        gains[name].append(metrics.si_sdri(rec.target, est, rec.mixture))

for name, g in gains.items():
    print(f"{name:7s} mean SI-SDRi {np.mean(g):6.2f} dB  (min {np.min(g):.2f}, max {np.max(g):.2f})")

# passing the mixture through unchanged is exactly 0 dB by definition
rec = data.make_record(0, 1, seed=100, cfg=cfg)
print("passthrough", metrics.si_sdri(rec.target, rec.mixture, rec.mixture))
