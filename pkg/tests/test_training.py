import numpy as np
import pytest

from caffnet import data, model, training

TINY = dict(channels=8, visual_enc_depth=2, audio_enc_depth=2, decoder_depth=2, nonlocal_blocks=1)


@pytest.fixture(scope="module")
def pools(tmp_path_factory):
    cfg = data.DataConfig()
    man = data.build_corpus(tmp_path_factory.mktemp("tr") / "c", 8, 2, 1, cfg, seed=4)
    return training.RecordPool(man, "train", cfg), training.RecordPool(man, "val", cfg)


def test_smoke_training_reduces_loss(pools):
    m = model.Model(model.ModelConfig(**TINY), seed=0)
    cfg = training.TrainConfig(steps=200, batch_size=4, steps_per_epoch=50)
    history = training.train(m, *pools, cfg, log=lambda s: None)
    assert len(history) == 200
    assert np.mean(history[-20:]) < history[0]


def test_remixed_batch_shapes_and_determinism(pools):
    train_pool, _ = pools
    a = train_pool.remixed_batch(np.random.default_rng(1), 3)
    b = train_pool.remixed_batch(np.random.default_rng(1), 3)
    assert a.X.shape == (3, 198, 257) and a.V.shape == (3, 65, 32)
    assert np.array_equal(a.X, b.X) and list(a.offsets) == list(b.offsets)
    assert all(-9 <= o <= 9 for o in a.offsets)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_names_the_step(pools):
    m = model.Model(model.ModelConfig(**TINY), seed=0)
    cfg = training.TrainConfig(steps=5, batch_size=2, steps_per_epoch=5, lr=1e30)
    with pytest.raises(training.TrainingError, match=r"at step \d+"):
        training.train(m, *pools, cfg, log=lambda s: None)


def test_best_checkpoint_is_written(pools, tmp_path):
    m = model.Model(model.ModelConfig(**TINY), seed=0)
    lines = []
    training.train(m, *pools, training.TrainConfig(steps=4, batch_size=2, steps_per_epoch=2),
                   log=lines.append, checkpoint=tmp_path / "best.ckpt")
    assert (tmp_path / "best.ckpt").exists()
    assert len(lines) == 2 and lines[0].endswith(" *")


def test_train_config_from_text():
    cfg = training.TrainConfig.from_text("steps=7\nlr=0.01\nremix=False\n")
    assert (cfg.steps, cfg.lr, cfg.remix) == (7, 0.01, False)
    with pytest.raises(ValueError, match="unknown config key"):
        training.TrainConfig.from_text("epochs=3\n")
