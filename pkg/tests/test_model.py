import numpy as np
import pytest

from caffnet import dsp, losses, model
from caffnet.numcore import ComplexTensor, Tensor, check_gradients
from caffnet.numcore.functional import BN_EPS
from oracles import conv1d_mac

TINY = dict(channels=4, visual_in_dim=6, visual_enc_depth=2, audio_enc_depth=2,
            decoder_depth=2, nonlocal_blocks=1, dtype="float64")


def _tiny(variant="real", **kw):
    return model.Model(model.ModelConfig(variant=variant, **{**TINY, **kw}), seed=1)


def _inputs(rng, n=12, m=3, dim=6):
    X = rng.normal(size=(1, n, 257)) + 1j * rng.normal(size=(1, n, 257))
    return X, rng.normal(size=(1, m, dim))


def test_config_text_round_trip():
    cfg = model.ModelConfig(variant="complex", channels=8, regularize=False)
    assert model.ModelConfig.from_text(cfg.to_text()) == cfg


def test_config_rejects_unknown_key_and_bad_values():
    with pytest.raises(ValueError, match="unknown config key"):
        model.ModelConfig.from_text("variant=real\nwidth=3\n")
    with pytest.raises(ValueError):
        model.ModelConfig(visual_enc_depth=1)
    with pytest.raises(ValueError):
        model.ModelConfig(variant="hybrid")


def test_full_scale_config():
    cfg = model.ModelConfig.full_scale()
    assert (cfg.channels, cfg.visual_in_dim) == (1536, 512)
    assert (cfg.visual_enc_depth, cfg.audio_enc_depth, cfg.decoder_depth) == (10, 5, 15)


def test_encoders_preserve_length():
    m = model.Model(model.ModelConfig(), seed=0)
    v = np.random.default_rng(0).normal(size=(20, 32))
    out = model.encode_visual(v, m.cfg, m.params, m.bn)
    assert out.shape == (20, 64)
    s = model.encode_audio_real(np.ones((2, 15, 257)), m.cfg, m.params, m.bn)
    assert s.shape == (2, 15, 64)


def test_encode_visual_zero_input():
    m = _tiny()
    out = model.encode_visual(np.zeros((1, 5, 6)), m.cfg, m.params, m.bn)
    assert np.all(out.data == 0.0)


def test_encode_visual_matches_conv_oracle():
    m = _tiny()
    p = m.params
    v = np.random.default_rng(2).normal(size=(6, 6))
    h = conv1d_mac(v, p["venc.0.w"].data, p["venc.0.b"].data, 1, 2)
    h = np.maximum(h / np.sqrt(1 + BN_EPS), 0)
    expect = conv1d_mac(h, p["venc.1.w"].data, p["venc.1.b"].data, 1, 2)
    got = model.encode_visual(v, m.cfg, p, m.bn).data
    assert np.allclose(got, expect, atol=1e-6)


def test_encode_audio_complex_matches_mac_oracle():
    m = _tiny("complex")
    p = m.params
    rng = np.random.default_rng(3)
    X = rng.normal(size=(6, 257)) + 1j * rng.normal(size=(6, 257))

    def cw(name):
        return p[f"{name}.re"].data + 1j * p[f"{name}.im"].data

    h = conv1d_mac(X, cw("aenc.0.w"), cw("aenc.0.b"), 1, 2)
    h = h / np.sqrt(1 + BN_EPS)
    h = np.where(h.real > 0, h.real, 0.2 * h.real) + 1j * np.where(h.imag > 0, h.imag, 0.2 * h.imag)
    s = conv1d_mac(h, cw("aenc.1.w"), cw("aenc.1.b"), 1, 2)
    mag, phase = model.encode_audio_complex(X, m.cfg, p, m.bn, compress=False)
    assert np.allclose(mag.data, np.abs(s), atol=1e-6)
    assert np.allclose(np.exp(1j * phase.data), np.exp(1j * np.angle(s)), atol=1e-6)


def test_encode_audio_complex_real_only_phase():
    m = _tiny("complex")
    p = m.params
    for name, t in p.items():
        if name.startswith("aenc") and name.endswith(".im"):
            t.data[...] = 0.0
    X = np.random.default_rng(4).normal(size=(5, 257))
    h = conv1d_mac(X, p["aenc.0.w.re"].data, p["aenc.0.b.re"].data, 1, 2) / np.sqrt(1 + BN_EPS)
    h = np.where(h > 0, h, 0.2 * h)
    s = conv1d_mac(h, p["aenc.1.w.re"].data, p["aenc.1.b.re"].data, 1, 2)
    mag, phase = model.encode_audio_complex(X + 0j, m.cfg, p, m.bn, compress=False)
    assert np.all(np.isin(phase.data, [0.0, np.pi]))
    assert np.array_equal(phase.data == np.pi, s < 0)
    assert np.allclose(mag.data, np.abs(s), atol=1e-9)


def test_nonlocal_identities():
    rng = np.random.default_rng(5)
    x = Tensor(rng.normal(size=(7, 4)))
    w = [Tensor(rng.normal(size=(4, 4))) for _ in range(3)]
    zero = Tensor(np.zeros((4, 4)))
    assert np.array_equal(model.nonlocal_refine(x, *w, zero).data, x.data)
    assert np.array_equal(model.nonlocal_refine(x, zero, zero, zero, zero).data, x.data)
    wz = Tensor(rng.normal(size=(4, 4)))
    one = Tensor(x.data[:1])
    assert np.allclose(model.nonlocal_refine(one, *w, wz).data, one.data + one.data @ w[2].data @ wz.data)
    att = model.nonlocal_attention(x, w[0], w[1]).data
    assert np.allclose(att.sum(-1), 1.0, atol=1e-6)


def test_real_mask_bounds_and_zero_head():
    m = _tiny()
    rng = np.random.default_rng(6)
    psi = Tensor(rng.normal(size=(1, 9, 8)) * 5)
    mask = model.decode_mask_real(psi, m.cfg, m.params, m.bn).data
    assert mask.shape == (1, 9, 257)
    assert np.all((mask > 0) & (mask < 1))
    m.params["dec.1.w"].data[...] = 0.0
    m.params["dec.1.b"].data[...] = 0.0
    assert np.allclose(model.decode_mask_real(psi, m.cfg, m.params, m.bn).data, 0.5)


def test_complex_mask_bound_and_zero_head():
    m = _tiny("complex")
    rng = np.random.default_rng(7)
    mag = Tensor(np.abs(rng.normal(size=(1, 9, 8))) * 5)
    theta = Tensor(rng.uniform(-np.pi, np.pi, (1, 9, 4)))
    M = model.decode_mask_complex(mag, theta, m.cfg, m.params, m.bn).numpy()
    assert np.all(np.abs(M) <= 1.0)
    for part in ("re", "im"):
        m.params[f"dec.1.w.{part}"].data[...] = 0.0
    M0 = model.decode_mask_complex(mag, theta, m.cfg, m.params, m.bn)
    assert np.all(M0.numpy() == 0)
    X = rng.normal(size=(1, 9, 257)) + 1j * rng.normal(size=(1, 9, 257))
    assert np.all(model.apply_complex_mask(M0, X).numpy() == 0)


def test_apply_complex_mask_identities():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(5, 257)) + 1j * rng.normal(size=(5, 257))
    ones = ComplexTensor.from_numpy(np.ones_like(X))
    assert np.array_equal(model.apply_complex_mask(ones, X).numpy(), X)
    rot = model.apply_complex_mask(ComplexTensor.from_numpy(np.full_like(X, 1j)), X).numpy()
    assert np.allclose(np.abs(rot), np.abs(X))
    assert np.allclose(np.exp(1j * np.angle(rot)), np.exp(1j * (np.angle(X) + np.pi / 2)))
    M = rng.normal(size=X.shape) + 1j * rng.normal(size=X.shape)
    cart = model.apply_complex_mask(ComplexTensor.from_numpy(M), X).numpy()
    polar = np.abs(M) * np.abs(X) * np.exp(1j * (np.angle(M) + np.angle(X)))
    assert np.allclose(cart, polar, atol=1e-12, rtol=0)
    with pytest.raises(ValueError):
        model.apply_complex_mask(ComplexTensor.from_numpy(M[:2]), X)


@pytest.mark.parametrize("variant", ["real", "complex"])
def test_forward_shapes(variant):
    m = model.Model(model.ModelConfig(variant=variant), seed=0)
    rng = np.random.default_rng(9)
    X = dsp.stft(rng.normal(size=32000)).data
    Y_hat, info = m.forward(X, rng.normal(size=(46, 32)))
    assert Y_hat.shape == (198, 257)
    assert info.A.shape == (198, 46)
    assert info.p.shape == (19,) and info.Gamma.shape == (198, 46)


def test_forced_unit_mask_passes_magnitude():
    m = _tiny()
    X, V = _inputs(np.random.default_rng(10))
    Y_hat, _ = m.forward(X, V, force_mask=Tensor(np.ones((1, 12, 257))))
    assert np.allclose(Y_hat.data, np.abs(X))


def test_eval_forward_is_deterministic():
    m = _tiny("complex")
    X, V = _inputs(np.random.default_rng(11))
    a, _ = m.forward(X, V)
    b, _ = m.forward(X, V)
    assert np.array_equal(a.numpy(), b.numpy())


def test_visual_dim_mismatch():
    m = _tiny()
    X, _ = _inputs(np.random.default_rng(12))
    with pytest.raises(ValueError, match="visual"):
        m.forward(X, np.zeros((1, 3, 7)))


@pytest.mark.parametrize("variant", ["real", "complex"])
def test_end_to_end_gradients(variant):
    m = _tiny(variant)
    rng = np.random.default_rng(13)
    X, V = _inputs(rng)
    Y = X * 0.6 + 0.1
    # move every parameter off its init so zero-initialized projections get exercised
    for t in m.params.values():
        t.data += rng.normal(size=t.shape) * 0.1
    target = np.abs(Y) if variant == "real" else Y

    def fn():
        Y_hat, _ = m.forward(X, V, training=True)
        return losses.total_loss(variant, target, Y_hat)

    # abs_floor: entries below it are finite-difference noise on exactly-zero gradients
    # (biases feeding a training-mode BatchNorm)
    errs = check_gradients(fn, list(m.params.values()), h=1e-6, max_probes=4, seed=1, abs_floor=1e-5)
    assert max(errs.values()) < 1e-3, {k: v for k, v in errs.items() if v > 1e-3}


def test_checkpoint_round_trip(tmp_path):
    m = _tiny("complex")
    X, V = _inputs(np.random.default_rng(14))
    m.forward(X, V, training=True)  # touch the running statistics
    m.save(tmp_path / "m.ckpt")
    back = model.Model.load(tmp_path / "m.ckpt")
    assert back.cfg == m.cfg
    a, _ = m.forward(X, V)
    b, _ = back.forward(X, V)
    assert np.array_equal(a.numpy(), b.numpy())


def test_checkpoint_shape_validation(tmp_path):
    from caffnet.numcore import load_checkpoint, save_checkpoint

    m = _tiny()
    m.save(tmp_path / "m.ckpt")
    text, tensors = load_checkpoint(tmp_path / "m.ckpt")
    save_checkpoint(tmp_path / "wide.ckpt", text.replace("channels=4", "channels=5"), tensors)
    with pytest.raises(ValueError, match="shape"):
        model.Model.load(tmp_path / "wide.ckpt")
    tensors.pop("aff.w_o")
    save_checkpoint(tmp_path / "missing.ckpt", text, tensors)
    with pytest.raises(ValueError, match="missing"):
        model.Model.load(tmp_path / "missing.ckpt")
