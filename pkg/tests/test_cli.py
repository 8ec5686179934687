import numpy as np
import pytest

from caffnet import cli, data, dsp, model, training

TINY = """\
channels=8
visual_enc_depth=2
audio_enc_depth=2
decoder_depth=2
nonlocal_blocks=1
batch_size=4
"""


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "corpus"
    assert cli.main(["gen-data", "--out", str(root), "--train", "8", "--val", "2", "--test", "3", "--seed", "3"]) == 0
    return root


@pytest.fixture(scope="module")
def trained(corpus):
    cfg = corpus.parent / "tiny.cfg"
    cfg.write_text(TINY)
    ckpt = corpus.parent / "tiny.ckpt"
    argv = ["train", "--corpus", corpus, "--out", ckpt, "--config", cfg, "--steps", "12", "--steps-per-epoch", "4"]
    assert cli.main([str(a) for a in argv]) == 0
    return ckpt


def test_gen_data_counts_and_output(tmp_path, capsys):
    code, out, _ = run(["gen-data", "--out", tmp_path / "c", "--train", 4, "--val", 1, "--test", 2, "--seed", 7], capsys)
    assert code == 0
    assert f"manifest {tmp_path / 'c' / 'manifest.tsv'}" in out and "records 7" in out
    man = data.read_manifest(tmp_path / "c" / "manifest.tsv")
    assert [len(man.split(s)) for s in ("train", "val", "test")] == [4, 1, 2]
    assert (tmp_path / "c" / cli.CORPUS_CONFIG).exists()


def test_gen_data_is_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        assert run(["gen-data", "--out", tmp_path / name, "--train", 3, "--val", 1, "--test", 1, "--seed", 7], capsys)[0] == 0
    assert (tmp_path / "a" / "manifest.tsv").read_bytes() == (tmp_path / "b" / "manifest.tsv").read_bytes()


def test_gen_data_empty_split(tmp_path, capsys):
    code, out, err = run(["gen-data", "--out", tmp_path / "c", "--train", 0], capsys)
    assert code == 1 and "empty split" in err and out == ""


def test_gen_data_config_file_and_unknown_key(tmp_path, capsys):
    (tmp_path / "g.cfg").write_text("# corpus\nvisual_dim=16\n")
    code, _, _ = run(["gen-data", "--out", tmp_path / "c", "--train", 2, "--val", 1, "--test", 1,
                      "--config", tmp_path / "g.cfg"], capsys)
    assert code == 0
    _, dcfg = cli.load_corpus(tmp_path / "c")
    assert dcfg.visual_dim == 16
    rec = data.load_record(data.read_manifest(tmp_path / "c" / "manifest.tsv"),
                           data.read_manifest(tmp_path / "c" / "manifest.tsv").entries[0], dcfg)
    assert rec.visual.features.shape[1] == 16
    (tmp_path / "bad.cfg").write_text("visual_dims=16\n")
    code, _, err = run(["gen-data", "--out", tmp_path / "d", "--config", tmp_path / "bad.cfg"], capsys)
    assert code == 1 and "unknown config key" in err


def test_train_log_and_reload(trained, corpus):
    log = trained.parent / "tiny.ckpt.log"
    lines = log.read_text().splitlines()
    assert "# ModelConfig.channels=8" in lines and "# TrainConfig.steps=12" in lines
    epochs = [ln for ln in lines if ln.startswith("epoch ")]
    assert len(epochs) == 3
    steps = [ln for ln in lines if ln.startswith("step ")]
    assert len(steps) == 12
    best = min(float(ln.split("val_loss ")[1].split()[0]) for ln in epochs)
    man, dcfg = cli.load_corpus(corpus)
    back = model.Model.load(trained)
    val = training.evaluate_loss(back, training.RecordPool(man, "val", dcfg))
    assert f"{val:.6f}" == f"{best:.6f}"


def test_train_is_deterministic(trained, corpus, tmp_path):
    cfg = corpus.parent / "tiny.cfg"
    argv = ["train", "--corpus", corpus, "--out", tmp_path / "again.ckpt", "--config", cfg,
            "--steps", "12", "--steps-per-epoch", "4"]
    assert cli.main([str(a) for a in argv]) == 0
    first = [ln for ln in (trained.parent / "tiny.ckpt.log").read_text().splitlines() if ln.startswith("step ")]
    second = [ln for ln in (tmp_path / "again.ckpt.log").read_text().splitlines() if ln.startswith("step ")]
    assert first == second


def test_train_flags_override_config(corpus, tmp_path, capsys):
    cfg = tmp_path / "t.cfg"
    cfg.write_text(TINY + "steps=50\n")
    code, _, _ = run(["train", "--corpus", corpus, "--out", tmp_path / "m.ckpt", "--config", cfg, "--steps", 2,
                      "--no-regularize"], capsys)
    assert code == 0
    text = (tmp_path / "m.ckpt.log").read_text()
    assert "# TrainConfig.steps=2" in text and "# ModelConfig.regularize=False" in text


def test_train_missing_corpus(tmp_path, capsys):
    code, _, err = run(["train", "--corpus", tmp_path / "none", "--out", tmp_path / "m.ckpt"], capsys)
    assert code == 1 and "manifest" in err


def test_separate_outputs(trained, corpus, tmp_path, capsys):
    rec = corpus / "test" / "000000"
    argv = ["separate", "--checkpoint", trained, "--mixture", rec / "mixture.wav", "--visual", rec / "visual.avf1"]
    assert run(argv + ["--out", tmp_path / "a.wav", "--dump-affinity", tmp_path / "aff"], capsys)[0] == 0
    assert run(argv + ["--out", tmp_path / "b.wav"], capsys)[0] == 0
    a = dsp.read_wav(tmp_path / "a.wav")
    assert len(a) == len(dsp.read_wav(rec / "mixture.wav"))
    assert (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()
    # PGM header is "width height": M = 65 video rows, N = 198 audio frames
    assert (tmp_path / "aff.pgm").read_bytes().startswith(b"P5\n65 198\n255\n")
    A = np.loadtxt(tmp_path / "aff.csv", delimiter=",")
    assert A.shape == (198, 65) and np.allclose(A.sum(axis=1), 1.0, atol=1e-4)


def test_separate_bad_inputs(trained, corpus, tmp_path, capsys):
    rec = corpus / "test" / "000000"
    (tmp_path / "bad.avf1").write_bytes(b"NOPE" + bytes(12))
    code, _, err = run(["separate", "--checkpoint", trained, "--mixture", rec / "mixture.wav",
                        "--visual", tmp_path / "bad.avf1", "--out", tmp_path / "o.wav"], capsys)
    assert code == 1 and "magic" in err
    code, _, err = run(["separate", "--checkpoint", tmp_path / "none.ckpt", "--mixture", rec / "mixture.wav",
                        "--visual", rec / "visual.avf1", "--out", tmp_path / "o.wav"], capsys)
    assert code == 1 and "checkpoint not found" in err


def test_eval_passthrough_is_zero(corpus, capsys):
    code, out, _ = run(["eval", "--corpus", corpus, "--passthrough"], capsys)
    assert code == 0
    rows = [ln.split(",") for ln in out.splitlines() if not ln.startswith("#")]
    assert rows[0] == ["offset", "records", "si_sdr", "si_sdri", "offset_accuracy"]
    assert rows[1][1] == "3" and rows[1][3] == "0.000"


def test_eval_requires_checkpoint(corpus):
    with pytest.raises(SystemExit) as exc:
        cli.main(["eval", "--corpus", str(corpus)])
    assert exc.value.code == 2


def test_sweep_rows(trained, corpus, tmp_path, capsys):
    code, _, _ = run(["sweep", "--corpus", corpus, "--checkpoint", trained, "--limit", 1,
                      "--out", tmp_path / "s.csv"], capsys)
    assert code == 0
    lines = (tmp_path / "s.csv").read_text().splitlines()
    body = [ln for ln in lines if not ln.startswith("#")][1:]
    assert [int(ln.split(",")[0]) for ln in body] == list(range(-9, 10))
    code, out, _ = run(["sweep", "--corpus", corpus, "--passthrough", "--limit", 1], capsys)
    assert all(ln.split(",")[3] == "0.000" for ln in out.splitlines()[2:])


def test_probe_affinity_identity_and_jitter(corpus, capsys):
    code, out, err = run(["probe-affinity", "--corpus", corpus], capsys)
    assert code == 0 and "# accuracy 1.000" in err
    code, out, _ = run(["probe-affinity", "--corpus", corpus, "--offset", 0, "--jitter", "25:8"], capsys)
    assert code == 0
    rows = out.splitlines()
    assert rows[0] == "record,applied_offset,estimate,pre_estimate,post_estimate"
    for row in rows[1:]:
        _, off, _, pre, post = row.split(",")
        assert (off, pre, post) == ("0", "0", "8")


def test_probe_affinity_bad_jitter(corpus):
    with pytest.raises(SystemExit):
        cli.main(["probe-affinity", "--corpus", str(corpus), "--jitter", "25"])
    assert cli.main(["probe-affinity", "--corpus", str(corpus), "--jitter", "25:9"]) == 1
