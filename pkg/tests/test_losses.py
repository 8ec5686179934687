import numpy as np
import pytest

from caffnet import dsp, losses
from caffnet.numcore import ComplexTensor, Tensor, check_gradients


def _signal(seed=0, n=3200):
    return np.random.default_rng(seed).normal(size=n)


def test_sisdr_identities():
    y = _signal()
    assert losses.sisdr_loss(y, y).data == pytest.approx(-1.0, abs=1e-9)
    assert losses.sisdr_loss(y, -y).data == pytest.approx(1.0, abs=1e-9)
    assert losses.sisdr_loss(y, 3.5 * y).data == pytest.approx(-1.0, abs=1e-9)


def test_sisdr_hand_value():
    # cos(45 degrees) between [1, 0] and [1, 1]
    assert losses.sisdr_loss(np.array([1.0, 0.0]), np.array([1.0, 1.0])).data == pytest.approx(
        -0.7071067811865476, abs=1e-12)


def test_sisdr_orthogonal_is_zero():
    t = np.arange(1600) / 16000
    y = np.sin(2 * np.pi * 100 * t)
    yh = np.cos(2 * np.pi * 100 * t)
    assert abs(losses.sisdr_loss(y, yh).data) < 1e-9


def test_sisdr_silent_estimate_is_finite():
    assert np.isfinite(losses.sisdr_loss(_signal(), np.zeros(3200)).data)


def test_sisdr_length_mismatch():
    with pytest.raises(ValueError, match="length"):
        losses.sisdr_loss(np.ones(10), np.ones(11))


def test_mag_loss_identity_and_hand_value():
    rng = np.random.default_rng(1)
    Y = np.abs(rng.normal(size=(5, 7)))
    assert losses.mag_loss(Y, Y).data == pytest.approx(0.0, abs=1e-9)
    # (|Y| + f) = e * (|Yhat| + f) in every one of 4 bins -> sqrt(4 * 1^2) = 2
    f = 1e-7
    Yhat = np.full((2, 2), 0.5)
    Y2 = np.e * (Yhat + f) - f
    assert losses.mag_loss(Y2, Yhat, f).data == pytest.approx(2.0, abs=1e-9)


def test_mag_loss_batch_mean():
    a = np.ones((2, 3))
    b = np.stack([a, a * np.e])
    got = losses.mag_loss(b, np.stack([a, a]), floor=1e-30).data
    assert got == pytest.approx(0.5 * np.sqrt(6.0), rel=1e-9)


def test_mag_loss_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        losses.mag_loss(np.ones((2, 3)), np.ones((3, 2)))


def test_total_complex_loss_at_target_is_minus_one():
    Y = dsp.stft(_signal(2, 32000)).data
    L = losses.total_loss("complex", Y, ComplexTensor.from_numpy(Y))
    assert float(L.data) == pytest.approx(-1.0, abs=1e-9)


def test_total_real_loss_is_mag_loss():
    rng = np.random.default_rng(3)
    Y, Yh = np.abs(rng.normal(size=(4, 257))), np.abs(rng.normal(size=(4, 257)))
    assert losses.total_loss("real", Y, Yh).data == pytest.approx(losses.mag_loss(Y, Yh).data)


def test_alpha_weights_time_domain_term():
    rng = np.random.default_rng(4)
    Y = dsp.stft(rng.normal(size=1600)).data
    Yh = ComplexTensor.from_numpy(Y * 0.5 + 0.1)
    l0 = float(losses.total_loss("complex", Y, Yh, losses.LossConfig(alpha=0.0)).data)
    l1 = float(losses.total_loss("complex", Y, Yh, losses.LossConfig(alpha=1.0)).data)
    l2 = float(losses.total_loss("complex", Y, Yh, losses.LossConfig(alpha=2.0)).data)
    assert l2 - l0 == pytest.approx(2 * (l1 - l0), rel=1e-9)


def test_istft_tensor_matches_dsp():
    x = _signal(5, 4000)
    spec = dsp.stft(x).data
    got = losses.istft_tensor(ComplexTensor.from_numpy(spec)).data
    ref = dsp.istft(spec).samples
    assert np.allclose(got, ref, atol=1e-12)


def test_loss_gradients():
    rng = np.random.default_rng(6)
    Y = dsp.stft(rng.normal(size=1200)).data
    re = Tensor(Y.real * 0.7 + rng.normal(size=Y.shape) * 0.3, requires_grad=True, name="re")
    im = Tensor(Y.imag * 0.7 + rng.normal(size=Y.shape) * 0.3, requires_grad=True, name="im")
    fn = lambda: losses.total_loss("complex", Y, ComplexTensor(re, im))
    errs = check_gradients(fn, [re, im], h=1e-6, max_probes=60)
    assert max(errs.values()) < 1e-4, errs

    mag = Tensor(np.abs(Y) + rng.uniform(0.1, 1, Y.shape), requires_grad=True, name="mag")
    errs = check_gradients(lambda: losses.total_loss("real", np.abs(Y), mag), [mag], h=1e-6, max_probes=60)
    assert max(errs.values()) < 1e-4, errs


def test_unknown_variant():
    with pytest.raises(ValueError):
        losses.total_loss("quaternion", np.ones((2, 257)), np.ones((2, 257)))
