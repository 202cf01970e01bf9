"""Frozen random-matrix encoder: compress, reparameterize, concatenate.

Each modality owns a bank of frozen Gaussian compression matrices, one per
token.  A sample's code is the fixed-order sum of matrix-times-token products;
the noise scale sigma is one scalar per modality per batch (population std
over every element of every mu in the batch); the latent vector is the serial
concatenation of the per-modality codes, visual first.

The banks are generated once from a seed (matrix ``i`` comes from child
generator ``i`` of ``Rng(seed)``) and never updated: training differentiates
through nothing in this module.  Per-stripe products may be computed on a
thread pool, but the final reduction always runs in token order, so threaded
and serial compression are bit-identical.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, NumericError
from .numerics import Rng, gaussian_matrix
from .tokenizer import TokenBundle, audio_to_segments, image_to_stripes


def _thread_count(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("PCVAE_THREADS", "1"))
    if threads == 0:  # 0 means auto
        threads = os.cpu_count() or 1
    if threads < 1:
        raise ConfigError(f"thread count must be positive, got {threads}")
    return threads


@dataclass(frozen=True)
class EncoderBank:
    """Immutable per-modality set of frozen compression matrices."""

    modality: str
    matrices: tuple
    out_dim: int
    in_dim: int
    seed: int

    def __len__(self) -> int:
        return len(self.matrices)

    def content_hash(self) -> str:
        """SHA-256 over shapes and raw float64 bytes of every matrix."""
        h = hashlib.sha256()
        for m in self.matrices:
            h.update(np.asarray(m.shape, dtype=np.int64).tobytes())
            h.update(m.tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class ModalityCode:
    mu: np.ndarray
    sigma: float
    z: np.ndarray

    def __post_init__(self):
        if self.sigma < 0.0:
            raise NumericError(f"sigma must be nonnegative, got {self.sigma}")
        if self.mu.shape != self.z.shape:
            raise DimensionError("mu and z must have the same length")


@dataclass(frozen=True)
class LatentVector:
    """Ordered (modality, vector) parts; visual precedes audio when both present."""

    parts: tuple

    @property
    def total_len(self) -> int:
        return sum(v.size for _, v in self.parts)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([v for _, v in self.parts])


def build_bank(modality: str, in_dim: int, out_dim: int, count: int, seed: int) -> EncoderBank:
    """`count` frozen out_dim x in_dim Gaussian matrices, deterministic in seed."""
    if modality not in ("visual", "audio"):
        raise ConfigError(f"unknown modality {modality!r}")
    if count < 1:
        raise ConfigError(f"matrix count must be positive, got {count}")
    if out_dim < 1:
        raise ConfigError(f"out_dim must be positive, got {out_dim}")
    if out_dim >= in_dim:
        raise ConfigError(f"compression requires out_dim < in_dim, got {out_dim} >= {in_dim}")
    root = Rng(seed)
    mats = []
    for i in range(count):
        m = gaussian_matrix(out_dim, in_dim, root.split(i))
        m.setflags(write=False)
        mats.append(m)
    return EncoderBank(modality, tuple(mats), out_dim, in_dim, seed)


def _check_tokens(bank: EncoderBank, tokens: TokenBundle) -> None:
    if tokens.modality != bank.modality:
        raise DimensionError(f"{bank.modality} bank fed {tokens.modality} tokens")
    if len(tokens) != len(bank):
        raise DimensionError(f"bank has {len(bank)} matrices but bundle has {len(tokens)} tokens")
    if tokens.token_len != bank.in_dim:
        raise DimensionError(f"token length {tokens.token_len} != bank in_dim {bank.in_dim}")


def compress(bank: EncoderBank, tokens: TokenBundle, *, threads: int | None = None) -> np.ndarray:
    """mu = sum_i matrices[i] @ tokens[i], reduced in index order.

    With threads > 1 the per-token products run on a pool, but the sum is
    still taken in index order, so the result is bit-identical to serial.
    """
    _check_tokens(bank, tokens)
    threads = _thread_count(threads)
    if threads == 1 or len(bank) == 1:
        products = [m @ t for m, t in zip(bank.matrices, tokens.tokens)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            products = list(pool.map(lambda mt: mt[0] @ mt[1], zip(bank.matrices, tokens.tokens)))
    mu = products[0].copy()
    for p in products[1:]:
        mu += p
    return mu


def compress_batch(bank: EncoderBank, stacked: np.ndarray) -> np.ndarray:
    """Batched compress: stacked has shape (B, count, in_dim) -> (B, out_dim).

    Same fixed token-order reduction as compress; the per-token product is a
    single matrix product over the whole batch.
    """
    stacked = np.asarray(stacked, dtype=np.float64)
    if stacked.ndim != 3 or stacked.shape[1] != len(bank) or stacked.shape[2] != bank.in_dim:
        raise DimensionError(
            f"expected (B, {len(bank)}, {bank.in_dim}) token array, got {stacked.shape}"
        )
    mu = stacked[:, 0, :] @ bank.matrices[0].T
    for i in range(1, len(bank)):
        mu += stacked[:, i, :] @ bank.matrices[i].T
    return mu


def stack_bundles(bundles) -> np.ndarray:
    """Token bundles (same modality and shape) -> (B, count, token_len) array."""
    return np.stack([np.stack(b.tokens) for b in bundles])


def batch_sigma(mus) -> float:
    """Population standard deviation over every element of every mu.

    Shifted two-pass with exactly rounded accumulation, so a batch of
    identical values yields exactly 0.
    """
    flat = np.concatenate([np.asarray(m, dtype=np.float64).ravel() for m in mus])
    if flat.size < 2:
        raise NumericError(f"sigma needs at least 2 elements, got {flat.size}")
    shifted = flat - flat[0]
    mean = math.fsum(shifted) / shifted.size
    dev = shifted - mean
    return math.sqrt(math.fsum(dev * dev) / dev.size)


def reparameterize(mu: np.ndarray, sigma: float, rng: Rng) -> np.ndarray:
    """z = mu + sigma * eps, eps ~ N(0, I) freshly drawn from rng."""
    if sigma < 0.0:
        raise NumericError(f"sigma must be nonnegative, got {sigma}")
    mu = np.asarray(mu, dtype=np.float64)
    return mu + sigma * rng.normal(mu.size)


def build_latent(visual: ModalityCode | None = None, audio: ModalityCode | None = None) -> LatentVector:
    """Serial concatenation of the present codes, visual first."""
    parts = []
    if visual is not None:
        parts.append(("visual", visual.z))
    if audio is not None:
        parts.append(("audio", audio.z))
    if not parts:
        raise ConfigError("at least one modality must be present")
    return LatentVector(tuple(parts))


def encode_pair(
    img,
    clip,
    visual_bank: EncoderBank | None,
    audio_bank: EncoderBank | None,
    rng: Rng,
    *,
    sigma_override: float | None = None,
    threads: int | None = None,
) -> LatentVector:
    """Full single-sample pipeline: tokenize, compress, reparameterize, concat.

    The batch here is the pair itself, so each modality's sigma is computed
    from its own mu (or forced via sigma_override, e.g. 0 for deterministic
    evaluation).  Noise is drawn from child generators: visual from
    rng.split(0), audio from rng.split(1), so the two draws stay decoupled
    and the result does not depend on modality evaluation order.
    """
    visual = audio = None
    if img is not None:
        if visual_bank is None:
            raise ConfigError("image given but no visual bank")
        mu = compress(visual_bank, image_to_stripes(img, len(visual_bank)), threads=threads)
        sigma = batch_sigma([mu]) if sigma_override is None else float(sigma_override)
        visual = ModalityCode(mu, sigma, reparameterize(mu, sigma, rng.split(0)))
    if clip is not None:
        if audio_bank is None:
            raise ConfigError("audio given but no audio bank")
        mu = compress(audio_bank, audio_to_segments(clip, len(audio_bank)), threads=threads)
        sigma = batch_sigma([mu]) if sigma_override is None else float(sigma_override)
        audio = ModalityCode(mu, sigma, reparameterize(mu, sigma, rng.split(1)))
    return build_latent(visual, audio)
