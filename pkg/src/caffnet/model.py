"""Encoders, non-local refiners, mask decoders and the assembled networks.

``variant="real"`` masks the mixture magnitude with a sigmoid mask;
``variant="complex"`` runs a complex-valued audio encoder and decoder and
estimates a bounded complex ratio mask that also corrects the phase.

Arrays are frame-major ``(B, T, C)``; a missing batch axis is added and
removed transparently by :meth:`Model.forward`.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import affinity as aff
from .numcore import (
    BatchNormState,
    ComplexTensor,
    ShapeError,
    Tensor,
    batchnorm1d,
    complex_batchnorm1d,
    complex_conv1d,
    complex_leaky_relu,
    concat,
    conv1d,
    decompose,
    from_polar,
    load_checkpoint,
    relu,
    save_checkpoint,
    sigmoid,
    softmax,
    tanh_bound,
)

VARIANTS = ("real", "complex")
# |X| ** INPUT_POWER is fed to the audio encoder; the mask still applies to the raw X
INPUT_POWER = 0.3


@dataclass
class ModelConfig:
    variant: str = "real"
    audio_bins: int = 257
    visual_in_dim: int = 32
    channels: int = 64
    visual_enc_depth: int = 4
    audio_enc_depth: int = 3
    decoder_depth: int = 6
    kernel: int = 5
    stride: int = 1
    pad: int = 2
    nonlocal_blocks: int = 2
    fa_over_fv: int = 4
    offset_range: int = 9
    tau: float = 0.1
    gamma: float = 1.0
    alpha: float = 1.0
    tau_row: float = 1.0
    regularize: bool = True
    dtype: str = "float32"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if min(self.visual_enc_depth, self.audio_enc_depth, self.decoder_depth) < 2:
            raise ValueError("encoder and decoder depths must be >= 2")
        if self.fa_over_fv < 1 or self.offset_range < 0:
            raise ValueError("need fa_over_fv >= 1 and offset_range >= 0")
        if self.stride != 1 or 2 * self.pad != self.kernel - 1:
            raise ValueError("conv stacks must be length-preserving (stride 1, pad = (K-1)/2)")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def fused_out_dim(self):
        return self.channels

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @classmethod
    def full_scale(cls, variant="real"):
        return cls(variant=variant, visual_in_dim=512, channels=1536,
                   visual_enc_depth=10, audio_enc_depth=5, decoder_depth=15)

    def to_text(self):
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in dataclasses.fields(self))

    @classmethod
    def from_text(cls, text):
        return cls(**parse_key_values(text, cls))


def _coerce(value, typ, key):
    try:
        if typ in (bool, "bool"):
            low = value.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if typ in (int, "int"):
            return int(value)
        if typ in (float, "float"):
            return float(value)
        return value.strip()
    except ValueError:
        raise ValueError(f"bad value for {key}: {value!r}") from None


def parse_key_values(text, cls):
    """Parse ``key=value`` lines into constructor kwargs of dataclass ``cls``."""
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        out[key] = _coerce(value, types[key], key)
    return out


# -- parameter construction ----------------------------------------------------


def _conv_init(rng, cout, cin, k, dtype):
    bound = np.sqrt(1.0 / (cin * k))
    return rng.uniform(-bound, bound, (cout, cin, k)).astype(dtype)


def _complex_conv_init(rng, cout, cin, k, dtype):
    # Rayleigh magnitude with uniform phase keeps the variance of the real init
    mag = rng.rayleigh(np.sqrt(1.0 / (2 * cin * k)), (cout, cin, k))
    phase = rng.uniform(-np.pi, np.pi, (cout, cin, k))
    return (mag * np.cos(phase)).astype(dtype), (mag * np.sin(phase)).astype(dtype)


def _stack_dims(cin, c, cout, depth):
    return [(cin if i == 0 else c, cout if i == depth - 1 else c) for i in range(depth)]


def _bn_layers(depth, last_has_bn):
    return [i for i in range(depth) if i < depth - 1 or last_has_bn]


def init_params(cfg, seed=0):
    """Return ``(params, bn_states)`` dictionaries for ``cfg``."""
    rng = np.random.default_rng(seed)
    dt = cfg.np_dtype
    c = cfg.channels
    k = cfg.kernel
    params = {}
    bn = {}

    def real_stack(prefix, cin, cout, depth, last_bn):
        for i, (ci, co) in enumerate(_stack_dims(cin, c, cout, depth)):
            params[f"{prefix}.{i}.w"] = _conv_init(rng, co, ci, k, dt)
            params[f"{prefix}.{i}.b"] = np.zeros(co, dt)
            if i in _bn_layers(depth, last_bn):
                params[f"{prefix}.{i}.bn.gamma"] = np.ones(co, dt)
                params[f"{prefix}.{i}.bn.beta"] = np.zeros(co, dt)
                bn[f"{prefix}.{i}.bn"] = BatchNormState(co, dt)

    def complex_stack(prefix, cin, cout, depth, last_bn):
        for i, (ci, co) in enumerate(_stack_dims(cin, c, cout, depth)):
            wr, wi = _complex_conv_init(rng, co, ci, k, dt)
            params[f"{prefix}.{i}.w.re"] = wr
            params[f"{prefix}.{i}.w.im"] = wi
            params[f"{prefix}.{i}.b.re"] = np.zeros(co, dt)
            params[f"{prefix}.{i}.b.im"] = np.zeros(co, dt)
            if i in _bn_layers(depth, last_bn):
                for part in ("re", "im"):
                    params[f"{prefix}.{i}.bn.{part}.gamma"] = np.ones(co, dt)
                    params[f"{prefix}.{i}.bn.{part}.beta"] = np.zeros(co, dt)
                    bn[f"{prefix}.{i}.bn.{part}"] = BatchNormState(co, dt)

    def linear(shape):
        bound = np.sqrt(1.0 / shape[0])
        return rng.uniform(-bound, bound, shape).astype(dt)

    real_stack("venc", cfg.visual_in_dim, c, cfg.visual_enc_depth, False)
    if cfg.variant == "real":
        real_stack("aenc", cfg.audio_bins, c, cfg.audio_enc_depth, False)
    else:
        complex_stack("aenc", cfg.audio_bins, c, cfg.audio_enc_depth, False)
    for stream in ("vnl", "anl"):
        for j in range(cfg.nonlocal_blocks):
            for name in ("wq", "wk", "wv"):
                params[f"{stream}.{j}.{name}"] = linear((c, c))
            # zero output projection: every block starts as the identity
            params[f"{stream}.{j}.wz"] = np.zeros((c, c), dt)
    for name in ("w_s", "w_v", "w_o"):
        params[f"aff.{name}"] = linear((c, c))
    if cfg.variant == "real":
        real_stack("dec", 2 * c, cfg.audio_bins, cfg.decoder_depth, True)
    else:
        complex_stack("dec", 2 * c, cfg.audio_bins, cfg.decoder_depth, False)
    return {n: Tensor(v, requires_grad=True, name=n) for n, v in params.items()}, bn


def expected_shapes(cfg):
    params, bn = init_params(cfg, 0)
    shapes = {n: p.shape for n, p in params.items()}
    for n, st in bn.items():
        shapes[f"{n}.running_mean"] = st.mean.shape
        shapes[f"{n}.running_var"] = st.var.shape
    return shapes


# -- building blocks --------------------------------------------------------------


def _real_stack(x, params, bn, prefix, depth, training, cfg, act=relu, residual=False):
    for i in range(depth):
        y = conv1d(x, params[f"{prefix}.{i}.w"], params[f"{prefix}.{i}.b"], cfg.stride, cfg.pad)
        key = f"{prefix}.{i}.bn"
        if key in bn:
            y = batchnorm1d(y, params[f"{key}.gamma"], params[f"{key}.beta"], bn[key], training)
        last = i == depth - 1
        if not last:
            y = act(y)
        if residual and 0 < i < depth - 1:
            y = x + y
        x = y
    return x


def _complex_stack(h, params, bn, prefix, depth, training, cfg, residual=False):
    for i in range(depth):
        w = ComplexTensor(params[f"{prefix}.{i}.w.re"], params[f"{prefix}.{i}.w.im"])
        b = ComplexTensor(params[f"{prefix}.{i}.b.re"], params[f"{prefix}.{i}.b.im"])
        y = complex_conv1d(h, w, b, cfg.stride, cfg.pad)
        key = f"{prefix}.{i}.bn"
        if f"{key}.re" in bn:
            y = complex_batchnorm1d(
                y,
                (params[f"{key}.re.gamma"], params[f"{key}.im.gamma"]),
                (params[f"{key}.re.beta"], params[f"{key}.im.beta"]),
                (bn[f"{key}.re"], bn[f"{key}.im"]),
                training,
            )
        if i < depth - 1:
            y = complex_leaky_relu(y)
        if residual and 0 < i < depth - 1:
            y = h + y
        h = y
    return h


def _check_dim(x, expected, what):
    if x.shape[-1] != expected:
        raise ShapeError(f"{what}: last dim {x.shape[-1]} does not match config {expected}")


def encode_visual(v, cfg, params, bn, training=False):
    """``(..., M, visual_in_dim) -> (..., M, C)``; length preserving."""
    v = v.features if hasattr(v, "features") else v
    v = Tensor(np.asarray(v, dtype=cfg.np_dtype)) if not isinstance(v, Tensor) else v
    _check_dim(v, cfg.visual_in_dim, "visual features")
    return _real_stack(v, params, bn, "venc", cfg.visual_enc_depth, training, cfg)


def compress_magnitude(mag):
    return np.power(mag, INPUT_POWER)


def encode_audio_real(X_mag, cfg, params, bn, training=False, compress=True):
    """``|X|: (..., N, 257) -> S: (..., N, C)``."""
    x = np.asarray(X_mag.data if isinstance(X_mag, Tensor) else X_mag)
    _check_dim(x, cfg.audio_bins, "audio magnitude")
    x = compress_magnitude(x) if compress else x
    return _real_stack(Tensor(x.astype(cfg.np_dtype)), params, bn, "aenc",
                       cfg.audio_enc_depth, training, cfg)


def encode_audio_complex(X, cfg, params, bn, training=False, compress=True):
    """Complex ``X: (..., N, 257) -> (|S|, theta_S)``, each ``(..., N, C)``."""
    X = X.numpy() if isinstance(X, ComplexTensor) else np.asarray(X)
    _check_dim(X, cfg.audio_bins, "audio spectrogram")
    if compress:
        mag = np.abs(X)
        X = X * np.where(mag > 0, np.power(np.where(mag > 0, mag, 1.0), INPUT_POWER - 1.0), 0.0)
    h = ComplexTensor.from_numpy(X, cfg.np_dtype)
    S = _complex_stack(h, params, bn, "aenc", cfg.audio_enc_depth, training, cfg)
    return decompose(S)


def nonlocal_attention(x, wq, wk, wv=None):
    c = x.shape[-1]
    q = x @ wq
    k = x @ wk
    return softmax((q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(c)), axis=-1)


def nonlocal_refine(x, wq, wk, wv, wz):
    """Embedded-Gaussian self-attention with a residual connection."""
    att = nonlocal_attention(x, wq, wk)
    return x + (att @ (x @ wv)) @ wz


def _refine_stream(x, params, prefix, blocks):
    for j in range(blocks):
        x = nonlocal_refine(x, params[f"{prefix}.{j}.wq"], params[f"{prefix}.{j}.wk"],
                            params[f"{prefix}.{j}.wv"], params[f"{prefix}.{j}.wz"])
    return x


def decode_mask_real(psi, cfg, params, bn, training=False):
    """``Psi: (..., N, 2C) -> mask in (0, 1)`` of shape ``(..., N, 257)``."""
    _check_dim(psi, 2 * cfg.channels, "fused features")
    logits = _real_stack(psi, params, bn, "dec", cfg.decoder_depth, training, cfg, residual=True)
    return sigmoid(logits)


def decode_mask_complex(psi_mag, theta, cfg, params, bn, training=False):
    """Attach the tiled audio phase to ``|Psi|`` and decode a mask with ``|M| <= 1``."""
    _check_dim(psi_mag, 2 * cfg.channels, "fused magnitude")
    _check_dim(theta, cfg.channels, "audio phase")
    psi = from_polar(psi_mag, concat([theta, theta], axis=-1))
    h = _complex_stack(psi, params, bn, "dec", cfg.decoder_depth, training, cfg, residual=True)
    return tanh_bound(h)


def apply_complex_mask(M, X):
    """Elementwise complex product ``M * X``; ``X`` may be a numpy array."""
    if not isinstance(X, ComplexTensor):
        X = ComplexTensor.from_numpy(np.asarray(X), M.re.dtype)
    if M.shape != X.shape:
        raise ShapeError(f"mask shape {M.shape} does not match spectrogram {X.shape}")
    return M * X


# -- assembled network ---------------------------------------------------------------


class Model:
    """Parameters, BatchNorm statistics and the forward pass for one variant."""

    def __init__(self, cfg, seed=0, params=None, bn=None):
        self.cfg = cfg
        if params is None:
            params, bn = init_params(cfg, seed)
        self.params = params
        self.bn = bn
        self.masks_cache = {}

    def masks(self, n, m):
        key = (n, m)
        if key not in self.masks_cache:
            self.masks_cache[key] = aff.build_diagonal_masks(n, m, self.cfg.fa_over_fv,
                                                             self.cfg.offset_range)
        return self.masks_cache[key]

    def affinity_params(self):
        p = self.params
        return aff.AffinityParams(p["aff.w_s"], p["aff.w_v"], p["aff.w_o"])

    def forward(self, X, visual, training=False, force_mask=None):
        """Run the full pipeline.

        ``X`` is the complex mixture spectrogram ``(B, N, 257)`` or ``(N, 257)``
        (the real variant also accepts ``|X|``); ``visual`` is ``(B, M, D)``.
        Returns ``(Y_hat, AffinityResult)``; ``Y_hat`` is a magnitude
        :class:`Tensor` for the real variant and a :class:`ComplexTensor`
        for the complex one. ``force_mask`` replaces the decoded mask.
        """
        cfg = self.cfg
        X = np.asarray(X.data if hasattr(X, "data") and not isinstance(X, np.ndarray) else X)
        V = np.asarray(visual.features if hasattr(visual, "features") else visual)
        single = X.ndim == 2
        if single:
            X, V = X[None], V[None]
        if X.shape[0] != V.shape[0]:
            raise ShapeError(f"batch mismatch: audio {X.shape} vs visual {V.shape}")
        p, bn = self.params, self.bn
        n, m = X.shape[1], V.shape[1]

        v_enc = _refine_stream(encode_visual(V, cfg, p, bn, training), p, "vnl", cfg.nonlocal_blocks)
        if cfg.variant == "real":
            mag = np.abs(X) if np.iscomplexobj(X) else X
            s = encode_audio_real(mag, cfg, p, bn, training)
            theta = None
        else:
            if not np.iscomplexobj(X):
                raise ValueError("complex variant needs the complex spectrogram")
            s, theta = encode_audio_complex(X, cfg, p, bn, training)
        s_bar = _refine_stream(s, p, "anl", cfg.nonlocal_blocks)

        V_hat, A, post, Gamma = aff.affinity_forward(
            s_bar, v_enc, self.affinity_params(), self.masks(n, m),
            cfg.tau_row, cfg.tau, cfg.gamma, cfg.regularize,
        )
        psi = concat([s_bar, V_hat], axis=-1)

        if cfg.variant == "real":
            M = decode_mask_real(psi, cfg, p, bn, training) if force_mask is None else force_mask
            mag = np.abs(X) if np.iscomplexobj(X) else X
            Y_hat = Tensor(mag.astype(cfg.np_dtype)) * M
            if single:
                Y_hat = Y_hat[0]
        else:
            if force_mask is None:
                M = decode_mask_complex(psi, theta, cfg, p, bn, training)
            else:
                M = force_mask
            Y_hat = apply_complex_mask(M, X)
            if single:
                Y_hat = ComplexTensor(Y_hat.re[0], Y_hat.im[0])

        def npy(t):
            return t.data[0] if single else t.data

        info = aff.AffinityResult(A=npy(A), p=npy(post), Gamma=npy(Gamma), V_hat=npy(V_hat))
        return Y_hat, info

    def parameters(self):
        return self.params

    def state_arrays(self):
        out = {n: t.data for n, t in self.params.items()}
        for n, st in self.bn.items():
            out[f"{n}.running_mean"] = st.mean
            out[f"{n}.running_var"] = st.var
        return out

    def save(self, path):
        save_checkpoint(path, self.cfg.to_text(), self.state_arrays())

    @classmethod
    def load(cls, path):
        text, tensors = load_checkpoint(path)
        cfg = ModelConfig.from_text(text)
        model = cls(cfg)
        shapes = expected_shapes(cfg)
        missing = sorted(set(shapes) - set(tensors))
        extra = sorted(set(tensors) - set(shapes))
        if missing or extra:
            raise ValueError(f"{path}: checkpoint tensors do not match config "
                             f"(missing {missing[:3]}, unexpected {extra[:3]})")
        for name, arr in tensors.items():
            if arr.shape != shapes[name]:
                raise ValueError(f"{path}: tensor {name} has shape {arr.shape}, config expects {shapes[name]}")
        for name, t in model.params.items():
            t.data = tensors[name].astype(cfg.np_dtype)
        for name, st in model.bn.items():
            st.mean[...] = tensors[f"{name}.running_mean"]
            st.var[...] = tensors[f"{name}.running_var"]
        return model


def forward(variant, X, v, cfg, model, training=False):
    """Functional entry point mirroring :meth:`Model.forward`."""
    if variant != cfg.variant:
        raise ValueError(f"variant {variant!r} does not match model config {cfg.variant!r}")
    return model.forward(X, v, training)
