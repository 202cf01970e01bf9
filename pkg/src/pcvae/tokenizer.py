"""Stripe and segment tokenization.

Images are cut into per-channel column stripes (not square patches): each of
R, G, B is split into contiguous column blocks, and every block is vectorized
column by column.  A stripe therefore holds one channel's pixels from one
contiguous column range, so spatial relations inside the stripe survive the
flattening.  Audio is cut into contiguous equal segments in temporal order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TokenizationError


@dataclass(frozen=True)
class AudioClip:
    """1-D waveform in [-1, 1]; sample_rate is carried as metadata only."""

    samples: np.ndarray
    sample_rate: int = 44100

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise TokenizationError(f"waveform must be 1-D, got ndim={s.ndim}")
        if s.size and (s.min() < -1.0 or s.max() > 1.0):
            raise TokenizationError("waveform samples must lie in [-1, 1]")
        object.__setattr__(self, "samples", s)


@dataclass(frozen=True)
class TokenBundle:
    """Ordered equal-length token vectors for one modality."""

    modality: str  # "visual" | "audio"
    tokens: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.modality not in ("visual", "audio"):
            raise TokenizationError(f"unknown modality {self.modality!r}")
        toks = tuple(np.asarray(t, dtype=np.float64) for t in self.tokens)
        if not toks:
            raise TokenizationError("token bundle cannot be empty")
        lens = {t.shape for t in toks}
        if any(t.ndim != 1 for t in toks) or len(lens) != 1:
            raise TokenizationError(f"tokens must be equal-length vectors, got shapes {sorted(lens)}")
        object.__setattr__(self, "tokens", toks)

    @property
    def token_len(self) -> int:
        return self.tokens[0].size

    def __len__(self) -> int:
        return len(self.tokens)


def check_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise TokenizationError(f"image must be HxWx3, got shape {img.shape}")
    if img.min() < 0.0 or img.max() > 1.0:
        raise TokenizationError("image pixels must lie in [0, 1]")
    return img


def vectorize_columns(channel) -> np.ndarray:
    """Flatten an HxW matrix column-major: output[h + H*w] = channel[h, w]."""
    channel = np.asarray(channel, dtype=np.float64)
    if channel.ndim != 2:
        raise TokenizationError(f"expected a 2-D channel, got ndim={channel.ndim}")
    return channel.ravel(order="F")


def image_to_stripes(img, L: int) -> TokenBundle:
    """Split each channel into L/3 contiguous column blocks, vectorized.

    Token order is R blocks left to right, then G, then B; every token has
    length H*W*3/L.
    """
    img = check_image(img)
    h, w, _ = img.shape
    if L % 3 != 0 or L < 3:
        raise TokenizationError(f"L must be a positive multiple of 3, got L={L}")
    per_channel = L // 3
    if w % per_channel != 0:
        raise TokenizationError(
            f"width {w} not divisible by stripes-per-channel {per_channel}"
        )
    wb = w // per_channel
    tokens = []
    for c in range(3):  # R, G, B
        for b in range(per_channel):
            tokens.append(vectorize_columns(img[:, b * wb : (b + 1) * wb, c]))
    return TokenBundle("visual", tuple(tokens))


def audio_to_segments(clip, M: int) -> TokenBundle:
    """Split a waveform into M contiguous equal segments in temporal order."""
    samples = clip.samples if isinstance(clip, AudioClip) else AudioClip(clip).samples
    if M < 1:
        raise TokenizationError(f"M must be positive, got M={M}")
    n = samples.size
    if n % M != 0:
        raise TokenizationError(f"sample count {n} not divisible by M={M}")
    seg = n // M
    return TokenBundle("audio", tuple(samples[i * seg : (i + 1) * seg] for i in range(M)))


def reassemble_image(bundle: TokenBundle, H: int, W: int) -> np.ndarray:
    """Inverse of image_to_stripes; bit-exact roundtrip."""
    if bundle.modality != "visual":
        raise TokenizationError(f"expected a visual bundle, got {bundle.modality!r}")
    L = len(bundle)
    if L % 3 != 0:
        raise TokenizationError(f"visual bundle must have a multiple of 3 tokens, got {L}")
    per_channel = L // 3
    if W % per_channel != 0:
        raise TokenizationError(f"width {W} not divisible by stripes-per-channel {per_channel}")
    wb = W // per_channel
    if bundle.token_len != H * wb:
        raise TokenizationError(
            f"token length {bundle.token_len} does not match H*W*3/L = {H * wb}"
        )
    img = np.empty((H, W, 3), dtype=np.float64)
    for c in range(3):
        for b in range(per_channel):
            tok = bundle.tokens[c * per_channel + b]
            img[:, b * wb : (b + 1) * wb, c] = tok.reshape(wb, H).T
    return img
