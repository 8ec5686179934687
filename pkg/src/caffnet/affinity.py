"""Cross-modal affinity with offset-posterior regularization.

Audio rows ``i`` (``N`` spectrogram frames) are matched against visual rows
``j`` (``M`` stacked video clips). With ``r = fa_over_fv`` audio frames per
video frame, the diagonal mask for offset index ``k`` selects, in 1-based
indices, ``r*(j-k) + 1 <= i <= r*(j-k+1)``. Offset index ``k`` maps to the
signed frame offset ``k - offset_range``.

All functions accept an optional leading batch axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numcore import Tensor, as_tensor, clamp_min, row_softmax, softmax

COS_EPS = 1e-8


@dataclass
class DiagonalMaskSet:
    masks: np.ndarray  # (2R+1, N, M) uint8
    fa_over_fv: int
    offset_range: int

    @property
    def num_offsets(self):
        return self.masks.shape[0]

    def offsets(self):
        return np.arange(self.num_offsets) - self.offset_range

    def restrict_rows(self, rows):
        """Masks with every audio row outside ``rows`` zeroed."""
        keep = np.zeros(self.masks.shape[1], dtype=bool)
        keep[rows] = True
        return DiagonalMaskSet(self.masks * keep[None, :, None], self.fa_over_fv, self.offset_range)


@dataclass
class AffinityParams:
    w_s: Tensor
    w_v: Tensor
    w_o: Tensor

    @classmethod
    def identity(cls, channels, dtype=np.float64):
        eye = np.eye(channels, dtype=dtype)
        return cls(Tensor(eye), Tensor(eye.copy()), Tensor(eye.copy()))


@dataclass
class AffinityResult:
    A: np.ndarray
    p: np.ndarray
    Gamma: np.ndarray
    V_hat: np.ndarray


def build_diagonal_masks(n, m, fa_over_fv=4, offset_range=9):
    """One binary ``n x m`` band per offset index ``k = 0 .. 2*offset_range``."""
    if n < 1 or m < 1:
        raise ValueError("mask grid needs n, m >= 1")
    i = np.arange(1, n + 1)[None, :, None]
    j = np.arange(1, m + 1)[None, None, :]
    k = np.arange(2 * offset_range + 1)[:, None, None]
    lo = fa_over_fv * (j - k) + 1
    hi = fa_over_fv * (j - k + 1)
    masks = ((i >= lo) & (i <= hi)).astype(np.uint8)
    return DiagonalMaskSet(masks, fa_over_fv, offset_range)


def _normalize_rows(x, eps=COS_EPS):
    norm = clamp_min((x * x).sum(axis=-1, keepdims=True).sqrt(), eps)
    return x / norm


def compute_affinity(S_bar, V_bar, w_s, w_v, tau_row=1.0):
    """Row-softmax of cosine similarities between projected audio and visual rows.

    ``S_bar`` is ``(..., N, C)``, ``V_bar`` is ``(..., M, C)``; returns ``(..., N, M)``.
    """
    s = _normalize_rows(as_tensor(S_bar) @ w_s)
    v = _normalize_rows(as_tensor(V_bar) @ w_v)
    return row_softmax(s @ v.swapaxes(-1, -2), temperature=tau_row)


def _flat_masks(masks, dtype):
    d = masks.masks
    return Tensor(d.reshape(d.shape[0], -1).astype(dtype))


def band_scores(A, masks):
    """``score_k = sum_ij D^k_ij A_ij`` for every offset index (last axis)."""
    A = as_tensor(A)
    n, m = A.shape[-2:]
    flat = A.reshape(A.shape[:-2] + (n * m,))
    return flat @ _flat_masks(masks, A.dtype).T


def offset_posterior(A, masks, tau=0.1):
    return softmax(band_scores(A, masks), axis=-1, temperature=tau)


def tile_identity(p, masks):
    """``Gamma_ij = sum_k p_k D^k_ij``."""
    p = as_tensor(p)
    _, n, m = masks.masks.shape
    g = p @ _flat_masks(masks, p.dtype)
    return g.reshape(p.shape[:-1] + (n, m))


def fuse_visual(A, Gamma, V_bar, w_o, gamma=1.0):
    """``V_hat_i = sum_j (A_ij + gamma * Gamma_ij) (w_o V_bar_j)``; ``Gamma=None`` drops the term."""
    weights = as_tensor(A)
    if Gamma is not None and gamma != 0:
        weights = weights + as_tensor(Gamma) * gamma
    return weights @ (as_tensor(V_bar) @ w_o)


def estimate_offset(A, masks, rows=None, tau=0.1):
    """Signed frame offset of the strongest diagonal band.

    ``rows`` restricts the evaluation to a subset of audio rows. Near-ties
    (relative 1e-9) are resolved toward offset 0. Works on a single ``N x M``
    matrix or a batch, returning an int or an int array.
    """
    if rows is not None:
        masks = masks.restrict_rows(rows)
    A = A.data if isinstance(A, Tensor) else np.asarray(A, dtype=np.float64)
    scores = band_scores(Tensor(A.astype(np.float64)), masks).data
    single = scores.ndim == 1
    scores = np.atleast_2d(scores)
    offsets = masks.offsets()
    out = np.empty(scores.shape[0], dtype=int)
    for b, row in enumerate(scores):
        top = row.max()
        tied = np.flatnonzero(np.isclose(row, top, rtol=1e-9, atol=1e-12))
        out[b] = offsets[tied[np.argmin(np.abs(offsets[tied]))]]
    return int(out[0]) if single else out


def affinity_forward(S_bar, V_bar, params, masks, tau_row=1.0, tau=0.1, gamma=1.0, regularize=True):
    """Full affinity block; returns ``(V_hat, A, p, Gamma)`` as tensors.

    With ``regularize=False`` the identity term is still computed for
    diagnostics but excluded from the fused features.
    """
    A = compute_affinity(S_bar, V_bar, params.w_s, params.w_v, tau_row)
    p = offset_posterior(A, masks, tau)
    Gamma = tile_identity(p, masks)
    V_hat = fuse_visual(A, Gamma if regularize else None, V_bar, params.w_o, gamma)
    return V_hat, A, p, Gamma


# -- export -------------------------------------------------------------------


def write_affinity_csv(path, A):
    A = np.asarray(A)
    with open(path, "w", encoding="utf-8") as fh:
        for row in A:
            fh.write(",".join(f"{v:.6g}" for v in row) + "\n")


def write_affinity_pgm(path, A):
    """8-bit binary PGM, width M (visual) by height N (audio), scaled to the matrix max."""
    A = np.asarray(A, dtype=np.float64)
    peak = A.max()
    scaled = np.zeros_like(A) if peak <= 0 else A / peak
    pix = np.clip(np.round(scaled * 255.0), 0, 255).astype(np.uint8)
    n, m = A.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{m} {n}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    width, height = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(height, width)
