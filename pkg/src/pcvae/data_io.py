"""File formats and the synthetic paired dataset.

Images travel as binary PPM (P6, maxval 255) and load as float arrays in
[0, 1].  Audio travels as 16-bit PCM WAV; stereo collapses to channel 0 and
samples scale by 1/32768.  A dataset on disk is a manifest of whitespace
separated lines

    <id> <image path> <audio path> <split>

with paths relative to the manifest's directory.

The synthetic dataset draws a few shared factors per sample and renders them
twice: as a smooth colored pattern and as a mixture of sinusoids, plus small
independent noise per modality.  Both views depend on the same factors, so
the modalities carry measurable mutual information.
"""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, UsageError
from .numerics import Rng
from .tokenizer import AudioClip

_N_FACTORS = 3


@dataclass(frozen=True)
class PairedSample:
    sample_id: str
    image: np.ndarray  # (H, W, 3) float64 in [0, 1]
    audio: AudioClip
    split: str = "train"


def load_ppm(path) -> np.ndarray:
    """Binary PPM to (H, W, 3) float64 in [0, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] != b"P6":
        got = blob[:2].decode("latin-1", errors="replace")
        raise FormatError(f"{path}: expected P6 magic, got {got!r}")
    at = 2
    fields = []
    while len(fields) < 3:
        while at < len(blob) and blob[at : at + 1].isspace():
            at += 1
        if at < len(blob) and blob[at : at + 1] == b"#":
            while at < len(blob) and blob[at] != 0x0A:
                at += 1
            continue
        start = at
        while at < len(blob) and not blob[at : at + 1].isspace():
            at += 1
        if at == start:
            raise FormatError(f"{path}: truncated header")
        fields.append(blob[start:at])
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric header field") from exc
    if maxval != 255:
        raise FormatError(f"{path}: maxval must be 255, got {maxval}")
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad dimensions {width}x{height}")
    at += 1  # exactly one whitespace byte after maxval
    data = blob[at : at + 3 * width * height]
    if len(data) != 3 * width * height:
        raise FormatError(
            f"{path}: expected {3 * width * height} pixel bytes, got {len(data)}"
        )
    raw = np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)
    return raw.astype(np.float64) / 255.0


def write_ppm(path, image) -> None:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FormatError(f"image must be (H, W, 3), got {img.shape}")
    if img.min() < 0.0 or img.max() > 1.0:
        raise FormatError("image values must lie in [0, 1]")
    h, w = img.shape[:2]
    raw = np.rint(img * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(raw.tobytes())


def load_wav(path) -> AudioClip:
    """16-bit PCM WAV to an AudioClip; stereo keeps channel 0."""
    try:
        with wave.open(str(path), "rb") as fh:
            width = fh.getsampwidth()
            channels = fh.getnchannels()
            rate = fh.getframerate()
            frames = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if width != 2:
        raise FormatError(f"{path}: need 16-bit PCM, got sample width {width}")
    data = np.frombuffer(frames, dtype="<i2")
    if channels > 1:
        data = data[::channels]
    return AudioClip(data.astype(np.float64) / 32768.0, sample_rate=rate)


def write_wav(path, clip: AudioClip) -> None:
    # inverse of the load scaling; +1.0 saturates by one quantization step
    ints = np.clip(np.rint(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(clip.sample_rate)
        fh.writeframes(ints.tobytes())


def downsample_image(image, target=(32, 32)) -> np.ndarray:
    """Area-average to the target grid; source dims must be multiples."""
    img = np.asarray(image, dtype=np.float64)
    th, tw = target
    h, w = img.shape[:2]
    if th > h or tw > w:
        raise UsageError(f"cannot upsample {h}x{w} to {th}x{tw}")
    if h % th or w % tw:
        raise UsageError(f"{h}x{w} is not a multiple of target {th}x{tw}")
    fh, fw = h // th, w // tw
    return img.reshape(th, fh, tw, fw, 3).mean(axis=(1, 3))


def downsample_audio(samples, factor: int) -> np.ndarray:
    """Plain decimation: keep every factor-th sample."""
    if factor < 1:
        raise UsageError(f"decimation factor must be >= 1, got {factor}")
    return np.asarray(samples, dtype=np.float64)[::factor].copy()


def synth_dataset(n, img_hw=(8, 8), audio_len=64, seed=0, test_fraction=0.125):
    """Deterministic factor-driven paired samples; the tail is the test split."""
    if n < 1:
        raise UsageError(f"need at least one sample, got {n}")
    h, w = img_hw
    root = Rng(seed)
    factors = 2.0 * root.split(0).uniform(n * _N_FACTORS).reshape(n, _N_FACTORS) - 1.0
    img_noise = root.split(1).normal((n, h, w, 3)) * 0.02
    aud_noise = root.split(2).normal((n, audio_len)) * 0.03
    rows = np.cos(math.pi * np.arange(h) / max(h - 1, 1))
    cols = np.sin(math.pi * np.arange(w) / max(w - 1, 1))
    t = np.arange(audio_len) / audio_len
    tones = np.stack(
        [np.sin(2.0 * math.pi * k * t + phase) for k, phase in ((3, 0.0), (5, 1.0), (7, 2.0))]
    )
    samples = []
    n_test = int(round(n * test_fraction))
    for i in range(n):
        f = factors[i]
        img = np.empty((h, w, 3))
        img[:] = 0.5
        img += 0.22 * f[0] * rows[:, None, None]
        img += 0.22 * f[1] * cols[None, :, None]
        img += 0.18 * f[2] * np.array([1.0, -0.5, 0.5])[None, None, :]
        img = np.clip(img + img_noise[i], 0.0, 1.0)
        tone = (0.3 * f @ tones) + aud_noise[i]
        clip = AudioClip(np.clip(tone, -1.0, 1.0), sample_rate=22050)
        split = "test" if i >= n - n_test else "train"
        samples.append(PairedSample(f"synth-{i:05d}", img, clip, split))
    return samples


def write_dataset(samples, out_dir) -> Path:
    """Write PPM/WAV pairs plus manifest.txt into out_dir; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for s in samples:
        img_name = f"{s.sample_id}.ppm"
        wav_name = f"{s.sample_id}.wav"
        write_ppm(out / img_name, s.image)
        write_wav(out / wav_name, s.audio)
        lines.append(f"{s.sample_id} {img_name} {wav_name} {s.split}")
    manifest = out / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def load_dataset(manifest_path) -> list:
    """Read a manifest and its referenced files into PairedSamples."""
    manifest = Path(manifest_path)
    base = manifest.parent
    samples = []
    for ln, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 4:
            raise FormatError(f"{manifest}:{ln}: expected 4 fields, got {len(fields)}")
        sample_id, img_rel, wav_rel, split = fields
        samples.append(
            PairedSample(
                sample_id,
                load_ppm(base / img_rel),
                load_wav(base / wav_rel),
                split,
            )
        )
    if not samples:
        raise FormatError(f"{manifest}: no samples")
    return samples
