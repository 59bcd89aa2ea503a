"""Command-line driver: ``samplecnn {prepare,train,eval,viz}``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import audio, checkpoint, dsp, evaluate, train, viz
from .config import RunConfig, dump_config, load_config, replace_model
from .errors import ConfigError, DataError, SampleCNNError
from .model import Network, parse_shorthand

log = logging.getLogger("samplecnn")

SYNTH_DEFAULTS = {"sample_rate": 8000, "clip_seconds": 0.5}


# --------------------------------------------------------------------------
# config plumbing


def _resolve_config(args) -> RunConfig:
    overrides = dict(kv.split("=", 1) for kv in (args.set or []))
    if getattr(args, "synthetic", False):
        overrides.setdefault("data.synthetic", "true")
        for k, v in SYNTH_DEFAULTS.items():
            overrides.setdefault(f"data.{k}", str(v))
    cfg = load_config(args.config, overrides)
    model = cfg.model
    changes = {}
    if getattr(args, "model", None):
        short = parse_shorthand(args.model)
        changes.update(m=short.m, n=short.n, input_len=short.input_len)
    if getattr(args, "input", None):
        changes["input_len"] = args.input
    if getattr(args, "channels", None):
        changes["channels"] = tuple(int(c) for c in args.channels.split(","))
    if cfg.data.synthetic and "model.n_tags" not in overrides:
        changes.setdefault("n_tags", cfg.data.n_bands)
    if changes:
        model = replace_model(model, **changes)
    trainc = cfg.train
    if getattr(args, "seed", None) is not None:
        trainc = replace(trainc, seed=args.seed)
    if getattr(args, "epochs", None) is not None:
        trainc = replace(trainc, max_epochs=args.epochs)
    if trainc.dropout != model.dropout:
        model = replace_model(model, dropout=trainc.dropout)
    return replace(cfg, model=model, train=trainc)


def _stamp(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


# --------------------------------------------------------------------------
# prepare


def cmd_prepare(cfg: RunConfig, threads=1):
    """Materialise the dataset and manifest; returns per-split clip counts."""
    d = cfg.data
    manifest = Path(d.manifest)
    manifest.parent.mkdir(parents=True, exist_ok=True)
    stamp_path = manifest.with_name(manifest.name + ".stamp")
    stamp = _stamp({"data": asdict(d)})
    if manifest.exists() and stamp_path.exists() and stamp_path.read_text() == stamp:
        entries = audio.read_manifest(manifest, n_tags=None)
        base = manifest.resolve().parent
        if all((base / e.clip_path).exists() for e in entries):
            counts = _split_counts(entries)
            print(f"cache hit: {manifest} " + _fmt_counts(counts))
            return counts

    if d.synthetic:
        spec = audio.SynthSpec(n_clips=d.n_clips, clip_seconds=d.clip_seconds,
                               sample_rate_hz=d.sample_rate, n_bands=d.n_bands,
                               noise_level=d.noise_level, seed=d.synth_seed)
        clips, entries = audio.generate_synthetic(spec)
        clip_dir = manifest.parent / "clips"
        clip_dir.mkdir(parents=True, exist_ok=True)
        out = []
        for clip, e in zip(clips, entries):
            audio.write_wav(clip_dir / e.clip_path, clip)
            out.append(replace(e, clip_path=f"clips/{e.clip_path}"))
        entries = out
    else:
        if d.source_manifest is None:
            raise ConfigError("[data] source_manifest is required unless synthetic = true")
        src_manifest = Path(d.source_manifest)
        if not src_manifest.exists():
            raise DataError(f"source manifest {src_manifest} does not exist")
        sources = audio.read_manifest(src_manifest, n_tags=None)
        src_base = src_manifest.resolve().parent
        cache_dir = manifest.parent / "cache"
        cache_dir.mkdir(parents=True, exist_ok=True)

        def convert(i_entry):
            i, e = i_entry
            src = src_base / e.clip_path
            dst = cache_dir / f"{i:06d}_{Path(e.clip_path).stem}.wav"
            if dst.exists() and dst.stat().st_mtime >= src.stat().st_mtime:
                return replace(e, clip_path=f"cache/{dst.name}")
            try:
                clip = audio.load_wav(src)
            except (OSError, DataError) as exc:
                raise DataError(f"cannot read {src}: {exc}") from exc
            clip = audio.resample(clip, d.sample_rate)
            clip = audio.trim_or_pad(clip, d.clip_seconds, d.trim_policy)
            audio.write_wav(dst, clip)
            return replace(e, clip_path=f"cache/{dst.name}")

        with ThreadPoolExecutor(max(threads, 1)) as ex:
            entries = list(ex.map(convert, enumerate(sources)))
    audio.write_manifest(entries, manifest)
    stamp_path.write_text(stamp)
    counts = _split_counts(entries)
    print(f"wrote {manifest} " + _fmt_counts(counts))
    return counts


def _split_counts(entries):
    return {s: sum(e.split == s for e in entries) for s in audio.SPLITS}


def _fmt_counts(counts):
    return " ".join(f"{k}={v}" for k, v in counts.items())


# --------------------------------------------------------------------------
# train / eval / viz


def _load_data(cfg: RunConfig, norm=None):
    manifest = Path(cfg.data.manifest)
    if not manifest.exists():
        raise DataError(f"manifest {manifest} not found; run `samplecnn prepare` first")
    entries = audio.read_manifest(manifest, n_tags=cfg.model.n_tags)
    base = manifest.resolve().parent
    clips = []
    for e in entries:
        try:
            clips.append(audio.load_wav(base / e.clip_path))
        except (OSError, DataError) as exc:
            raise DataError(f"cannot read {e.clip_path}: {exc}") from exc
    fe = cfg.frontend
    stft = None
    if not cfg.model.is_raw:
        stft = dsp.StftConfig(fe.fft_size, fe.hop, fe.window)
    return train.build_splits(cfg.model, clips, entries, stft, fe.n_mels, fe.log_c, norm)


def cmd_train(cfg: RunConfig):
    splits, norm = _load_data(cfg)
    ckpt_dir, log_dir = Path(cfg.paths.checkpoint_dir), Path(cfg.paths.log_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    log_dir.mkdir(parents=True, exist_ok=True)
    best_path = ckpt_dir / "best.ckpt"
    extra = {"norm": None if norm is None else asdict(norm), "frontend": asdict(cfg.frontend)}
    net = Network(cfg.model, seed=cfg.train.seed)

    def on_improve(net, state):
        checkpoint.save_checkpoint(best_path, net.spec, net.params, state, extra)

    result = train.fit(net, splits["train"], splits["valid"], cfg.train,
                       log_path=log_dir / "metrics.csv", on_improve=on_improve)
    last = result.history[-1]
    print(f"trained {len(result.history)} epochs; best val loss {result.best_val_loss:.6f}; "
          f"final lr {last['lr']:g}; checkpoint {best_path}")
    return result


def _checkpoint_for(cfg, path):
    ckpt = checkpoint.load_checkpoint(path, expect_spec=cfg.model)
    return ckpt, Network(ckpt.spec, ckpt.params)


def cmd_eval(cfg: RunConfig, ckpt_path):
    ckpt, net = _checkpoint_for(cfg, ckpt_path)
    norm = ckpt.extra.get("norm")
    norm = dsp.NormStats(**norm) if norm else None
    splits, _ = _load_data(cfg, norm)
    table = evaluate.predict_songs(net, splits[cfg.eval.split], cfg.eval.batch_size)
    out = Path(cfg.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    evaluate.write_predictions(table, out / "predictions.csv")
    mean = evaluate.write_report(table, out / "auc_report.csv", cfg.eval.average)
    for k, a in enumerate(evaluate.tag_aucs(table)):
        print(f"tag {k:3d}  auc {'n/a' if np.isnan(a) else f'{a:.4f}'}")
    print(f"mean AUC ({cfg.eval.average}) {mean:.4f}")
    return mean


def cmd_viz(cfg: RunConfig, ckpt_path, threads=1):
    _, net = _checkpoint_for(cfg, ckpt_path)
    estimates = viz.layer_spectra(net, cfg.viz, threads=threads)
    out = Path(cfg.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, _ = viz.export_spectra(estimates, out / f"spectra_layer{cfg.viz.layer}.csv", cfg.viz)
    print(f"wrote {csv_path} ({len(estimates[0].spectrum)} bins x {len(estimates)} filters)")
    return estimates


# --------------------------------------------------------------------------
# argument parsing


def build_parser():
    p = argparse.ArgumentParser(prog="samplecnn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
        sp.add_argument("--model", help="m^n shorthand, e.g. 3^9")
        sp.add_argument("--input", type=int, help="model input length")
        sp.add_argument("--channels", help="comma-separated channel schedule")
        sp.add_argument("--synthetic", action="store_true", help="use the synthetic tone corpus")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int, default=1)

    sp = sub.add_parser("prepare", help="build the manifest / clip cache")
    common(sp)
    sp = sub.add_parser("train", help="train a model")
    common(sp)
    sp.add_argument("--epochs", type=int, help="maximum number of epochs")
    for name in ("eval", "viz"):
        sp = sub.add_parser(name, help=f"{name} a checkpoint")
        common(sp)
        sp.add_argument("--checkpoint", help="checkpoint path (default: <checkpoint_dir>/best.ckpt)")
    sp = sub.add_parser("config", help="print the resolved configuration")
    common(sp)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve_config(args)
        if args.command == "config":
            sys.stdout.write(dump_config(cfg))
        elif args.command == "prepare":
            cmd_prepare(cfg, args.threads)
        elif args.command == "train":
            if cfg.data.synthetic:
                cmd_prepare(cfg, args.threads)
            cmd_train(cfg)
        else:
            ckpt = args.checkpoint or str(Path(cfg.paths.checkpoint_dir) / "best.ckpt")
            if args.command == "eval":
                cmd_eval(cfg, ckpt)
            else:
                cmd_viz(cfg, ckpt, args.threads)
    except SampleCNNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
