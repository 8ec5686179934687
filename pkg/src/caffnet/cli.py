"""Command-line entry point: ``caffnet <command> [flags]``.

Settings come from built-in defaults, then an optional ``--config`` file of
``key=value`` lines, then explicit flags. Diagnostics go to stderr and the
exit code is nonzero on failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import affinity, data, dsp, metrics, training
from .model import Model, ModelConfig, parse_key_values

CORPUS_CONFIG = "corpus.cfg"


class CliError(Exception):
    pass


def _merge(cls, config_text, overrides):
    """Instantiate dataclass ``cls`` from config text plus non-None overrides."""
    kwargs = parse_key_values(config_text, cls) if config_text else {}
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs.update({k: v for k, v in overrides.items() if k in names and v is not None})
    return cls(**kwargs)


def _split_config(path, groups):
    """Route each line of a config file to the dataclass in ``groups`` owning its key."""
    if path is None:
        return {cls: "" for cls in groups}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    owners = {f.name: cls for cls in groups for f in dataclasses.fields(cls)}
    out = {cls: [] for cls in groups}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key = stripped.split("=", 1)[0].strip()
        if key not in owners:
            raise CliError(f"{path}:{lineno}: unknown config key {key!r}")
        out[owners[key]].append(stripped)
    return {cls: "\n".join(lines) for cls, lines in out.items()}


def _echo_config(objs, stream):
    for obj in objs:
        for f in dataclasses.fields(obj):
            stream.write(f"# {type(obj).__name__}.{f.name}={getattr(obj, f.name)}\n")


def _data_config_text(cfg):
    return "".join(f"{f.name}={getattr(cfg, f.name)}\n" for f in dataclasses.fields(cfg))


def load_corpus(root):
    root = Path(root)
    manifest_path = root / "manifest.tsv"
    if not manifest_path.exists():
        raise CliError(f"no manifest at {manifest_path}")
    cfg_path = root / CORPUS_CONFIG
    dcfg = data.DataConfig()
    if cfg_path.exists():
        dcfg = data.DataConfig(**parse_key_values(cfg_path.read_text(encoding="utf-8"), data.DataConfig))
    return data.read_manifest(manifest_path), dcfg


def _load_model(path):
    if not Path(path).exists():
        raise CliError(f"checkpoint not found: {path}")
    return Model.load(path)


# -- commands ---------------------------------------------------------------------


def cmd_gen_data(args):
    groups = _split_config(args.config, [data.DataConfig])
    dcfg = _merge(data.DataConfig, groups[data.DataConfig], {
        "duration": args.duration, "visual_dim": args.visual_dim, "tir_db": args.tir_db,
        "tir_jitter_db": args.tir_jitter_db, "jitter_prob": args.jitter_prob,
    })
    for name, n in (("train", args.train), ("val", args.val), ("test", args.test)):
        if n <= 0:
            raise CliError(f"empty split: --{name} must be positive, got {n}")
    out = Path(args.out)
    manifest = data.build_corpus(out, args.train, args.val, args.test, dcfg, args.seed, args.jobs)
    (out / CORPUS_CONFIG).write_text(_data_config_text(dcfg), encoding="utf-8")
    print(f"manifest {out / 'manifest.tsv'}")
    print(f"records {len(manifest.entries)}")
    return 0


def cmd_train(args):
    groups = _split_config(args.config, [ModelConfig, training.TrainConfig])
    manifest, dcfg = load_corpus(args.corpus)
    mcfg = _merge(ModelConfig, groups[ModelConfig], {
        "variant": args.variant, "channels": args.channels, "visual_in_dim": dcfg.visual_dim,
        "regularize": False if args.no_regularize else None, "dtype": args.dtype,
    })
    tcfg = _merge(training.TrainConfig, groups[training.TrainConfig], {
        "steps": args.steps, "batch_size": args.batch_size, "lr": args.lr, "seed": args.seed,
        "init_seed": args.init_seed, "steps_per_epoch": args.steps_per_epoch,
    })
    log_path = Path(args.log or f"{args.out}.log")
    train_pool = training.RecordPool(manifest, "train", dcfg)
    val_pool = training.RecordPool(manifest, "val", dcfg) if manifest.split("val") else None
    model = Model(mcfg, seed=tcfg.init_seed)
    with open(log_path, "w", encoding="utf-8") as log_fh:
        _echo_config([dcfg, mcfg, tcfg], log_fh)

        def log(line):
            print(line, flush=True)
            log_fh.write(line + "\n")
            log_fh.flush()

        history = training.train(model, train_pool, val_pool, tcfg, log, checkpoint=args.out)
        for step, value in enumerate(history, 1):
            log_fh.write(f"step {step} loss {value!r}\n")
    if val_pool is None:
        model.save(args.out)
    print(f"checkpoint {args.out}")
    return 0


def _read_visual(path):
    try:
        return data.VisualStream(data.read_avf(path))
    except OSError as exc:
        raise CliError(f"cannot read visual features {path}: {exc}") from exc


def cmd_separate(args):
    model = _load_model(args.checkpoint)
    mixture = dsp.read_wav(args.mixture)
    visual = _read_visual(args.visual)
    if visual.dim != model.cfg.visual_in_dim:
        raise CliError(f"{args.visual}: feature dim {visual.dim} does not match checkpoint "
                       f"visual_in_dim {model.cfg.visual_in_dim}")
    enhanced, info = metrics.separate(model, mixture, visual.features)
    dsp.write_wav(args.out, enhanced)
    if args.dump_affinity:
        affinity.write_affinity_csv(f"{args.dump_affinity}.csv", info.A)
        affinity.write_affinity_pgm(f"{args.dump_affinity}.pgm", info.A)
    print(f"wrote {args.out}")
    return 0


def _records(manifest, dcfg, split, limit=None):
    entries = manifest.split(split)
    if not entries:
        raise CliError(f"empty split {split!r} in {manifest.root}")
    if limit:
        entries = entries[:limit]
    return [data.load_record(manifest, e, dcfg) for e in entries]


def _emit_csv(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
        print(f"wrote {out}")
    else:
        sys.stdout.write(text)


def cmd_eval(args):
    manifest, dcfg = load_corpus(args.corpus)
    model = None if args.passthrough else _load_model(args.checkpoint)
    records = _records(manifest, dcfg, args.split, args.limit)
    report = metrics.evaluate_records(model, records, args.offset, dcfg, args.passthrough)
    if args.offset is None:
        report.offset = 0
    _emit_csv(metrics.format_report_csv([report]), args.out)
    return 0


def cmd_sweep(args):
    manifest, dcfg = load_corpus(args.corpus)
    model = None if args.passthrough else _load_model(args.checkpoint)
    records = _records(manifest, dcfg, args.split, args.limit)
    reports = metrics.sweep_offsets(model, records, range(-dcfg.offset_range, dcfg.offset_range + 1),
                                    dcfg, args.passthrough)
    _emit_csv(metrics.format_report_csv(reports), args.out)
    return 0


def _parse_jitter(text):
    try:
        t, tau = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"jitter must be T:TAU, got {text!r}") from None
    return t, tau


def cmd_probe_affinity(args):
    """Per-record offset estimates from the identity probe or a trained model."""
    manifest, dcfg = load_corpus(args.corpus)
    records = _records(manifest, dcfg, args.split, args.limit)
    model = _load_model(args.checkpoint) if args.checkpoint else None
    print("record,applied_offset,estimate" + (",pre_estimate,post_estimate" if args.jitter else ""))
    hits = 0
    for idx, rec in enumerate(records):
        offset = rec.applied_offset if args.offset is None else args.offset
        if model is None:
            A, masks = metrics.probe_affinity(rec, dcfg, offset, args.jitter)
        else:
            vis = data.regenerate_visual(rec, offset, dcfg, args.jitter)
            _, info = model.forward(dsp.stft(rec.mixture).data, vis.features)
            A = info.A
            masks = model.masks(*A.shape)
        est = affinity.estimate_offset(A, masks)
        hits += est == offset
        line = f"{idx},{offset},{est}"
        if args.jitter:
            pre, post = metrics.jitter_row_ranges(args.jitter[0], args.jitter[1], A.shape[0],
                                                  masks.fa_over_fv, masks.offset_range)
            line += f",{affinity.estimate_offset(A, masks, pre)},{affinity.estimate_offset(A, masks, post)}"
        print(line)
        if args.dump_affinity and idx == 0:
            affinity.write_affinity_csv(f"{args.dump_affinity}.csv", A)
            affinity.write_affinity_pgm(f"{args.dump_affinity}.pgm", A)
    print(f"# accuracy {hits / len(records):.3f}", file=sys.stderr)
    return 0


# -- parser -----------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="caffnet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--train", type=int, default=512)
    g.add_argument("--val", type=int, default=32)
    g.add_argument("--test", type=int, default=64)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--duration", type=float)
    g.add_argument("--visual-dim", type=int)
    g.add_argument("--tir-db", type=float)
    g.add_argument("--tir-jitter-db", type=float)
    g.add_argument("--jitter-prob", type=float)
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--config")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a separator")
    t.add_argument("--corpus", required=True)
    t.add_argument("--out", required=True, help="checkpoint path (best validation loss)")
    t.add_argument("--variant", choices=["real", "complex"])
    t.add_argument("--channels", type=int)
    t.add_argument("--steps", type=int)
    t.add_argument("--steps-per-epoch", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--init-seed", type=int)
    t.add_argument("--dtype", choices=["float32", "float64"])
    t.add_argument("--no-regularize", action="store_true", help="drop the identity-matrix term")
    t.add_argument("--log")
    t.add_argument("--jobs", type=int, default=1)
    t.add_argument("--config")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("separate", help="enhance one mixture")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--mixture", required=True)
    s.add_argument("--visual", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--dump-affinity", metavar="PREFIX")
    s.set_defaults(func=cmd_separate)

    for name, func, helptext in (("eval", cmd_eval, "evaluate SI-SDRi on a split"),
                                 ("sweep", cmd_sweep, "evaluate every offset in the search window")):
        e = sub.add_parser(name, help=helptext)
        e.add_argument("--corpus", required=True)
        e.add_argument("--checkpoint")
        e.add_argument("--split", default="test")
        e.add_argument("--limit", type=int)
        e.add_argument("--passthrough", action="store_true", help="identity baseline: output = mixture")
        e.add_argument("--out")
        e.add_argument("--jobs", type=int, default=1)
        if name == "eval":
            e.add_argument("--offset", type=int, help="re-render visuals at this offset")
        e.set_defaults(func=func)

    a = sub.add_parser("probe-affinity", help="offset estimates from the affinity matrix")
    a.add_argument("--corpus", required=True)
    a.add_argument("--checkpoint", help="use a trained model instead of the identity probe")
    a.add_argument("--split", default="test")
    a.add_argument("--limit", type=int)
    a.add_argument("--offset", type=int)
    a.add_argument("--jitter", type=_parse_jitter, metavar="T:TAU")
    a.add_argument("--dump-affinity", metavar="PREFIX")
    a.set_defaults(func=cmd_probe_affinity)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("eval", "sweep") and not args.passthrough and not args.checkpoint:
        parser.error(f"{args.command}: --checkpoint is required unless --passthrough is given")
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, training.TrainingError) as exc:
        print(f"caffnet {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
