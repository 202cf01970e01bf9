"""Command-line driver: train, generate, eval, and standalone PID analysis.

Config handling: an optional ``--config FILE`` holds ``key = value`` lines
with ``#`` comments; explicit flags override file values, and the effective
configuration is echoed to ``config.resolved`` in the output directory.

Seed discipline: every artifact-producing command derives all of its
randomness from ``--seed`` (synthetic data from child 0, banks from child 1,
training/generation noise from child 2), so a repeated invocation writes
byte-identical files.

Exit codes: 0 success, 2 usage or config problem, 3 training divergence.

Joint-distribution file grammar for ``pid``: first non-comment line holds
the three cardinalities, each following line one ``i j k probability``
entry; omitted cells are zero and the total must reach 1 within 1e-9.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .data_io import load_dataset, load_ppm, load_wav, synth_dataset, write_ppm, write_wav
from .decoder import decode_audio, decode_visual
from .encoder import batch_sigma, compress
from .errors import (
    CheckpointError,
    ConfigError,
    DimensionError,
    DistributionError,
    FormatError,
    NumericError,
    PcvaeError,
    TokenizationError,
    TrainingError,
    UsageError,
)
from .infotheory import JointDistribution, pid_decompose
from .numerics import Rng
from .presets import get_preset, list_presets, preset_banks, preset_decoder_configs
from .tokenizer import AudioClip, audio_to_segments, image_to_stripes
from .training import (
    LossConfig,
    TrainConfig,
    TrainHistory,
    derive_seed,
    evaluate,
    init_state,
    train,
)

_USAGE_ERRORS = (
    UsageError,
    ConfigError,
    FormatError,
    DimensionError,
    TokenizationError,
    DistributionError,
    CheckpointError,
    NumericError,
    FileNotFoundError,
    IsADirectoryError,
)

# config-file keys accepted per command, with their parsers
_TRAIN_KEYS = {
    "preset": str,
    "latent": int,
    "mode": str,
    "epochs": int,
    "batch_size": int,
    "step_size": float,
    "seed": int,
    "synthetic": int,
    "data": str,
    "ii": str,
    "ii_weight": float,
    "recon_weight": float,
    "projection_dim": int,
    "ridge": float,
    "sigma_scope": str,
    "sample_interval": int,
}
_EVAL_KEYS = {"seed": int, "synthetic": int, "data": str, "split": str, "ii": str}
_GENERATE_KEYS = {"seed": int, "count": int, "sample_rate": int}


def _parse_config_file(path, allowed):
    values = {}
    for ln, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key = value, got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in allowed:
            raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
        try:
            values[key] = allowed[key](value.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}:{ln}: bad value for {key}: {exc}") from exc
    return values


def _effective(args, allowed):
    """File values where flags were left unset; flags win."""
    merged = dict(_parse_config_file(args.config, allowed)) if args.config else {}
    for key in allowed:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return merged


def _write_resolved(out_dir: Path, command: str, values: dict) -> None:
    lines = [f"command = {command}"]
    for key in sorted(values):
        lines.append(f"{key} = {values[key]}")
    (out_dir / "config.resolved").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _resolve_preset(name, latent):
    """Preset lookup, including decoder-family aliases qualified by latent."""
    alias = {
        ("paper-visual", 300): "paper-300",
        ("paper-visual", 400): "paper-400",
        ("paper-audio", 200): "paper-audio-200",
        ("paper-audio", 250): "paper-audio-250",
    }
    if (name, latent) in alias:
        name = alias[(name, latent)]
    preset = get_preset(name)
    if latent is not None and preset.latent_len != latent:
        raise ConfigError(
            f"preset {preset.name} has latent {preset.latent_len}, asked for {latent}"
        )
    return preset


def _load_samples(cfg, preset, seed):
    if cfg.get("synthetic") is not None and cfg.get("data") is not None:
        raise ConfigError("pass --synthetic or --data, not both")
    if cfg.get("synthetic") is not None:
        h, w = preset.image_hw
        return synth_dataset(
            cfg["synthetic"], img_hw=(h, w), audio_len=preset.audio_len,
            seed=derive_seed(seed, 0),
        )
    if cfg.get("data") is not None:
        return load_dataset(cfg["data"])
    raise ConfigError("a dataset is required: --synthetic N or --data MANIFEST")


def _loss_config(cfg) -> LossConfig:
    return LossConfig(
        ii_backend=cfg.get("ii", "gaussian"),
        ii_weight=cfg.get("ii_weight", 1.0),
        recon_weight=cfg.get("recon_weight", 1.0),
        projection_dim=cfg.get("projection_dim", 8),
        ridge=cfg.get("ridge", 1e-6),
        projection_seed=7,
    )


def cmd_train(args) -> int:
    cfg = _effective(args, _TRAIN_KEYS)
    preset = _resolve_preset(cfg.get("preset", "desk"), cfg.get("latent"))
    seed = cfg.get("seed", 0)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    mode = cfg.get("mode", preset.mode)
    train_cfg = TrainConfig(
        epochs=cfg.get("epochs", 50),
        batch_size=cfg.get("batch_size", 64),
        step_size=cfg.get("step_size", preset.step_size),
        seed=derive_seed(seed, 2),
        mode=mode,
        sigma_scope=cfg.get("sigma_scope", "batch"),
    )
    loss_cfg = _loss_config(cfg)
    resolved = dict(cfg)
    resolved.update(
        preset=preset.name,
        mode=mode,
        latent=preset.latent_len,
        epochs=train_cfg.epochs,
        batch_size=train_cfg.batch_size,
        step_size=train_cfg.step_size,
        seed=seed,
        ii=loss_cfg.ii_backend,
    )
    _write_resolved(out_dir, "train", resolved)
    if args.dry_run:
        vcfg, acfg = preset_decoder_configs(preset, mode)
        latent = (vcfg or acfg).latent_len
        print(f"preset {preset.name}: mode {mode}, latent {latent}")
        for modality, (count, out_d, in_d) in preset.bank_shapes().items():
            print(f"  {modality} bank: {count} matrices of {out_d}x{in_d}")
        if vcfg is not None:
            print(f"  visual decoder out: {vcfg.output}")
        if acfg is not None:
            print(f"  audio decoder out: {acfg.output}")
        return 0
    samples = _load_samples(cfg, preset, seed)
    train_samples = [s for s in samples if s.split == "train"] or samples
    banks = preset_banks(preset, derive_seed(seed, 1))
    decoder_cfgs = preset_decoder_configs(preset, mode)
    state = init_state(banks, decoder_cfgs, train_cfg, loss_cfg)
    interval = cfg.get("sample_interval", 0)
    history = TrainHistory()
    while state.epoch_done < train_cfg.epochs:
        if interval > 0:
            stop = min(state.epoch_done + interval, train_cfg.epochs)
            state.train_cfg = dataclasses.replace(state.train_cfg, epochs=stop)
        state, chunk = train(train_samples, state=state)
        history.records.extend(chunk.records)
        if interval > 0:
            state.train_cfg = train_cfg
            _write_reconstruction(state, train_samples[0], out_dir, state.epoch_done)
    history.to_csv(out_dir / "history.csv")
    save_checkpoint(state, out_dir / "model.ckpt")
    last = history.records[-1]
    print(
        f"trained {state.epoch_done} epochs: total {last.total_loss:.6f}, "
        f"mse_visual {last.mse_visual:.6f}, mse_audio {last.mse_audio:.6f}"
    )
    print(f"wrote {out_dir / 'model.ckpt'} and {out_dir / 'history.csv'}")
    return 0


def _write_reconstruction(state, sample, out_dir, epoch) -> None:
    """Noise-free reconstructions of one sample at an epoch boundary."""
    parts = []
    if state.mode != "audio-only-input":
        bundle = image_to_stripes(sample.image, len(state.visual_bank))
        parts.append(compress(state.visual_bank, bundle))
    if state.mode != "visual-only-input":
        bundle = audio_to_segments(sample.audio, len(state.audio_bank))
        parts.append(compress(state.audio_bank, bundle))
    z = np.concatenate(parts)
    if state.visual_params is not None:
        img = np.clip(decode_visual(z, state.visual_params), 0.0, 1.0)
        write_ppm(out_dir / f"recon_epoch{epoch:04d}.ppm", img)
    if state.audio_params is not None:
        wave = decode_audio(z, state.audio_params)
        write_wav(out_dir / f"recon_epoch{epoch:04d}.wav",
                  AudioClip(np.clip(wave, -1.0, 1.0), sample.audio.sample_rate))


def cmd_generate(args) -> int:
    cfg = _effective(args, _GENERATE_KEYS)
    state = load_checkpoint(args.checkpoint)
    seed = cfg.get("seed", 0)
    count = cfg.get("count", 1)
    if count < 1:
        raise UsageError(f"count must be >= 1, got {count}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    source = args.source
    need_mode = {"audio": "audio-only-input", "image": "visual-only-input", "both": "joint"}
    if state.mode != need_mode[source]:
        raise UsageError(
            f"--from {source} needs a checkpoint trained in {need_mode[source]} mode, "
            f"this one is {state.mode}"
        )
    rng = Rng(derive_seed(seed, 2))
    parts = []
    rate = cfg.get("sample_rate", 44100)
    if source in ("image", "both"):
        path = args.in_image or args.in_path
        if path is None:
            raise UsageError("--from image needs --in (a PPM file)")
        bundle = image_to_stripes(load_ppm(path), len(state.visual_bank))
        mu = compress(state.visual_bank, bundle)
        parts.append((mu, batch_sigma([mu]), rng.split(0)))
    if source in ("audio", "both"):
        path = args.in_audio or args.in_path
        if path is None:
            raise UsageError("--from audio needs --in (a WAV file)")
        clip = load_wav(path)
        rate = clip.sample_rate
        bundle = audio_to_segments(clip, len(state.audio_bank))
        mu = compress(state.audio_bank, bundle)
        parts.append((mu, batch_sigma([mu]), rng.split(1)))
    written = []
    for k in range(count):
        z = np.concatenate([mu + sig * sub.split(k).normal(mu.size) for mu, sig, sub in parts])
        if state.visual_params is not None:
            img = np.clip(decode_visual(z, state.visual_params), 0.0, 1.0)
            name = out_dir / f"gen_{k:03d}.ppm"
            write_ppm(name, img)
            written.append(name)
        if state.audio_params is not None:
            wave = decode_audio(z, state.audio_params)
            name = out_dir / f"gen_{k:03d}.wav"
            write_wav(name, AudioClip(np.clip(wave, -1.0, 1.0), sample_rate=rate))
            written.append(name)
    _write_resolved(out_dir, "generate", {**cfg, "seed": seed, "count": count, "from": source})
    print(f"wrote {len(written)} files to {out_dir}")
    return 0


def cmd_eval(args) -> int:
    cfg = _effective(args, _EVAL_KEYS)
    state = load_checkpoint(args.checkpoint)
    seed = cfg.get("seed", 0)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.get("synthetic") is not None:
        if state.visual_params is None:
            raise UsageError("synthetic eval needs a checkpoint with a visual decoder")
        _, h, w = state.visual_params.config.output
        audio_len = state.audio_bank.in_dim * len(state.audio_bank)
        samples = synth_dataset(
            cfg["synthetic"], img_hw=(h, w), audio_len=audio_len, seed=derive_seed(seed, 0)
        )
    elif cfg.get("data") is not None:
        samples = load_dataset(cfg["data"])
    else:
        raise ConfigError("a dataset is required: --synthetic N or --data MANIFEST")
    wanted = cfg.get("split", "all")
    splits = sorted({s.split for s in samples}) if wanted == "all" else [wanted]
    train_imgs = [s.image for s in samples if s.split == "train"]
    mean_image = np.mean(np.stack(train_imgs), axis=0) if train_imgs else None
    ii_off = cfg.get("ii", "gaussian") == "off"
    header = "split,n,mse_visual,mse_audio,baseline_mse_visual,ii_gauss_nats,ii_plugin_bits"
    rows = [header]
    for split in splits:
        chosen = [s for s in samples if s.split == split]
        if not chosen:
            raise UsageError(f"split {split!r} has no samples")
        metrics = evaluate(chosen, state, mean_image=mean_image)
        direction = "visual" if "mse_visual" in metrics else "audio"
        ii_nats = "" if ii_off else metrics.get(f"ii_{direction}_nats", "")
        ii_bits = "" if ii_off else metrics.get(f"ii_{direction}_plugin_bits", "")
        row = (
            f"{split},{len(chosen)},{metrics.get('mse_visual', '')},"
            f"{metrics.get('mse_audio', '')},{metrics.get('baseline_mse_visual', '')},"
            f"{ii_nats},{ii_bits}"
        )
        rows.append(row)
        print(row)
    (out_dir / "metrics.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    _write_resolved(out_dir, "eval", {**cfg, "seed": seed, "split": wanted})
    return 0


_PID_CASES = {
    "xor": lambda: _xor_joint(),
    "copy": lambda: _copy_joint(),
    "indep": lambda: _indep_joint(),
}


def _xor_joint() -> JointDistribution:
    pmf = np.zeros((2, 2, 2))
    for a in (0, 1):
        for b in (0, 1):
            pmf[a, b, a ^ b] = 0.25
    return JointDistribution(pmf)


def _copy_joint() -> JointDistribution:
    pmf = np.zeros((2, 2, 2))
    for a in (0, 1):
        pmf[a, a, a] = 0.5
    return JointDistribution(pmf)


def _indep_joint() -> JointDistribution:
    return JointDistribution(np.full((2, 2, 2), 0.125))


def _load_joint_file(path) -> JointDistribution:
    cards = None
    entries = []
    for ln, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if cards is None:
            if len(fields) != 3:
                raise FormatError(f"{path}:{ln}: expected three cardinalities")
            cards = tuple(int(f) for f in fields)
            continue
        if len(fields) != 4:
            raise FormatError(f"{path}:{ln}: expected 'i j k p', got {len(fields)} fields")
        i, j, k = (int(f) for f in fields[:3])
        entries.append((i, j, k, float(fields[3])))
    if cards is None:
        raise FormatError(f"{path}: empty joint file")
    pmf = np.zeros(cards)
    for i, j, k, p in entries:
        if not (0 <= i < cards[0] and 0 <= j < cards[1] and 0 <= k < cards[2]):
            raise FormatError(f"{path}: index ({i},{j},{k}) outside {cards}")
        pmf[i, j, k] += p
    return JointDistribution(pmf)


def cmd_pid(args) -> int:
    if (args.case is None) == (args.joint is None):
        raise UsageError("pass exactly one of --case or --joint FILE")
    joint = _PID_CASES[args.case]() if args.case else _load_joint_file(args.joint)
    r = pid_decompose(joint)
    print(f"unique1                          {r.unique1:+.6f} bits")
    print(f"unique2                          {r.unique2:+.6f} bits")
    print(f"redundancy                       {r.redundancy:+.6f} bits")
    print(f"synergy                          {r.synergy:+.6f} bits")
    print(f"total I(X1,X2;Y)                 {r.total:+.6f} bits")
    print(f"interaction (chain contrast)     {r.interaction:+.6f} bits")
    print(f"interaction (synergy-redundancy) {r.interaction_sr:+.6f} bits")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcvae")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train decoders on a paired dataset")
    p_train.add_argument("--config", help="key = value file; flags override")
    p_train.add_argument("--preset", help=f"one of {', '.join(list_presets())} or a decoder family")
    p_train.add_argument("--latent", type=int, help="expected latent length (validated)")
    p_train.add_argument("--mode", choices=("joint", "visual-only-input", "audio-only-input"))
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--batch-size", dest="batch_size", type=int)
    p_train.add_argument("--step-size", dest="step_size", type=float)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--synthetic", type=int, metavar="N")
    p_train.add_argument("--data", metavar="MANIFEST")
    p_train.add_argument("--ii", choices=("gaussian", "off"))
    p_train.add_argument("--ii-weight", dest="ii_weight", type=float)
    p_train.add_argument("--recon-weight", dest="recon_weight", type=float)
    p_train.add_argument("--projection-dim", dest="projection_dim", type=int)
    p_train.add_argument("--ridge", type=float)
    p_train.add_argument("--sigma-scope", dest="sigma_scope", choices=("batch", "dataset"))
    p_train.add_argument("--sample-interval", dest="sample_interval", type=int)
    p_train.add_argument("--out", default="run")
    p_train.add_argument("--dry-run", action="store_true", help="resolve and echo, no training")
    p_train.set_defaults(func=cmd_train)

    p_gen = sub.add_parser("generate", help="decode new samples from one or both modalities")
    p_gen.add_argument("--config", help="key = value file; flags override")
    p_gen.add_argument("--checkpoint", required=True)
    p_gen.add_argument("--from", dest="source", choices=("audio", "image", "both"), required=True)
    p_gen.add_argument("--in", dest="in_path", metavar="FILE")
    p_gen.add_argument("--in-image", dest="in_image", metavar="PPM")
    p_gen.add_argument("--in-audio", dest="in_audio", metavar="WAV")
    p_gen.add_argument("--count", type=int)
    p_gen.add_argument("--seed", type=int)
    p_gen.add_argument("--sample-rate", dest="sample_rate", type=int)
    p_gen.add_argument("--out", default="generated")
    p_gen.set_defaults(func=cmd_generate)

    p_eval = sub.add_parser("eval", help="metrics CSV for a checkpoint on a dataset")
    p_eval.add_argument("--config", help="key = value file; flags override")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--synthetic", type=int, metavar="N")
    p_eval.add_argument("--data", metavar="MANIFEST")
    p_eval.add_argument("--split", help="train, test, or all (default)")
    p_eval.add_argument("--seed", type=int)
    p_eval.add_argument("--ii", choices=("gaussian", "off"))
    p_eval.add_argument("--out", default="evaluation")
    p_eval.set_defaults(func=cmd_eval)

    p_pid = sub.add_parser("pid", help="decompose a three-variable joint distribution")
    p_pid.add_argument("--case", choices=tuple(_PID_CASES))
    p_pid.add_argument("--joint", metavar="FILE")
    p_pid.set_defaults(func=cmd_pid)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PcvaeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
