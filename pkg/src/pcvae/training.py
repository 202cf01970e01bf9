"""Loss, optimizer, and the training loop.  Encoders stay frozen throughout.

Per-decoder loss on a batch (the same form for both directions):

    ii_weight * II_gauss(x1, x2, y) + recon_weight * mean_b ||y_b - x1_b||^2

where x1 is the decoded modality's target, x2 the other modality, and y the
decoder output.  The visual loss uses images as x1 and audio as x2; the audio
loss is symmetric; in joint mode the total is their sum.  II_gauss is the
differentiable Gaussian surrogate in nats; reconstruction is a squared L2
norm per sample averaged over the batch, so a constant offset of 1 in every
dimension costs exactly the dimension count.

Optimization is the adaptive-moment method with fixed constants beta1 = 0.9,
beta2 = 0.999, eps = 1e-8.  Gradients flow into decoder parameters only:
compression banks, projections, and the per-batch sigma are constants.

Randomness is derived from TrainConfig.seed with documented child streams so
a run resumed from a checkpoint is bit-identical to an uninterrupted one:

    child 0          visual decoder init
    child 1          audio decoder init
    child 2, child e batch shuffling for epoch e
    child 3, child e reparameterization noise for epoch e

Within an epoch the noise stream is consumed visual-first per batch.  The
incomplete final batch, if any, is dropped so every step sees a full batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .decoder import DecoderParams, forward, init_decoder
from .encoder import EncoderBank, batch_sigma, compress_batch, stack_bundles
from .errors import ConfigError, DimensionError, NumericError, TrainingError
from .infotheory import (
    ProjectionSet,
    SampleBatch,
    build_projections,
    interaction_info_gaussian,
    interaction_info_plugin,
)
from .numerics import Rng, Tensor, autodiff as ops
from .tokenizer import audio_to_segments, image_to_stripes

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8

MODES = ("joint", "visual-only-input", "audio-only-input")


def derive_seed(seed: int, index: int) -> int:
    """Deterministic child seed: first word of the indexed child generator."""
    return int(Rng(seed).split(index).next_u64(1)[0])


@dataclass(frozen=True)
class LossConfig:
    ii_backend: str = "gaussian"  # "gaussian" | "off"
    ii_weight: float = 1.0
    recon_weight: float = 1.0
    projection_dim: int = 8
    ridge: float = 1e-6
    projection_seed: int = 7

    def __post_init__(self):
        if self.ii_backend not in ("gaussian", "off"):
            raise ConfigError(f"unknown ii backend {self.ii_backend!r}")
        if not (math.isfinite(self.ii_weight) and math.isfinite(self.recon_weight)):
            raise ConfigError("loss weights must be finite")
        if self.projection_dim < 1:
            raise ConfigError(f"projection dim must be >= 1, got {self.projection_dim}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    step_size: float = 1e-3
    seed: int = 0
    mode: str = "joint"
    sigma_scope: str = "batch"  # "batch" | "dataset"

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 4:
            raise ConfigError(f"batch size must be >= 4, got {self.batch_size}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.sigma_scope not in ("batch", "dataset"):
            raise ConfigError(f"unknown sigma scope {self.sigma_scope!r}")


@dataclass(frozen=True)
class EpochRecord:
    """One history row.  ii_plugin_bits is a monitor quantity from the
    epoch's final batch; the other terms are averaged over batches."""

    epoch: int
    total_loss: float
    ii_nats: float
    ii_plugin_bits: float
    mse_visual: float
    mse_audio: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    CSV_HEADER = "epoch,total_loss,ii_nats,ii_plugin_bits,mse_visual,mse_audio"

    def to_csv(self, path) -> None:
        lines = [self.CSV_HEADER]
        for r in self.records:
            lines.append(
                f"{r.epoch},{r.total_loss!r},{r.ii_nats!r},{r.ii_plugin_bits!r},"
                f"{r.mse_visual!r},{r.mse_audio!r}"
            )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


@dataclass
class ModelState:
    """Everything training evolves plus the frozen pieces it depends on."""

    mode: str
    visual_bank: EncoderBank | None
    audio_bank: EncoderBank | None
    visual_params: DecoderParams | None
    audio_params: DecoderParams | None
    proj_visual: ProjectionSet | None
    proj_audio: ProjectionSet | None
    loss_cfg: LossConfig
    train_cfg: TrainConfig
    epoch_done: int = 0
    opt_m: np.ndarray | None = None
    opt_v: np.ndarray | None = None
    opt_t: int = 0

    def latent_len(self) -> int:
        total = 0
        if self.mode != "audio-only-input":
            total += self.visual_bank.out_dim
        if self.mode != "visual-only-input":
            total += self.audio_bank.out_dim
        return total

    def trainable(self) -> list:
        params = []
        if self.visual_params is not None:
            params.append(self.visual_params)
        if self.audio_params is not None:
            params.append(self.audio_params)
        return params

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.flat() for p in self.trainable()])


def loss(x1_batch, x2_batch, y_batch, cfg: LossConfig, proj: ProjectionSet | None = None):
    """Differentiable per-decoder loss; see the module docstring for the form."""
    x1 = np.asarray(x1_batch, dtype=np.float64)
    x2 = np.asarray(x2_batch, dtype=np.float64)
    y = y_batch if isinstance(y_batch, Tensor) else Tensor(np.asarray(y_batch, dtype=np.float64))
    if x1.ndim != 2 or x2.ndim != 2 or y.data.ndim != 2:
        raise DimensionError("loss expects 2-D (batch, dim) arrays")
    n = x1.shape[0]
    if x2.shape[0] != n or y.data.shape[0] != n:
        raise DimensionError(f"batch sizes differ: {n}, {x2.shape[0]}, {y.data.shape[0]}")
    if y.data.shape[1] != x1.shape[1]:
        raise DimensionError(f"output dim {y.data.shape[1]} != target dim {x1.shape[1]}")
    total = _recon_term(x1, y, cfg.recon_weight)
    if cfg.ii_backend == "gaussian":
        if proj is None:
            proj = build_projections(
                cfg.projection_dim,
                (x1.shape[1], x2.shape[1], y.data.shape[1]),
                cfg.projection_seed,
            )
        ii = interaction_info_gaussian(SampleBatch(x1, x2, y), proj, cfg.ridge)
        total = ops.add(ops.scale(ii, cfg.ii_weight), total)
    return total


def _recon_term(x1, y, weight):
    diff = ops.add(y, Tensor(-x1))
    return ops.scale(ops.reduce_sum(ops.mul(diff, diff)), weight / x1.shape[0])


def _flatten_images(imgs: np.ndarray) -> np.ndarray:
    """(n, H, W, 3) -> (n, 3*H*W) in channel-major order, matching the
    decoder's output layout."""
    return np.transpose(imgs, (0, 3, 1, 2)).reshape(imgs.shape[0], -1)


def _dataset_arrays(samples, state: ModelState):
    imgs = np.stack([s.image for s in samples])
    waves = np.stack([s.audio.samples for s in samples])
    out = {"images_flat": _flatten_images(imgs), "waves": waves}
    if state.mode != "audio-only-input":
        bundles = [image_to_stripes(s.image, len(state.visual_bank)) for s in samples]
        out["mu_visual"] = compress_batch(state.visual_bank, stack_bundles(bundles))
    if state.mode != "visual-only-input":
        bundles = [audio_to_segments(s.audio, len(state.audio_bank)) for s in samples]
        out["mu_audio"] = compress_batch(state.audio_bank, stack_bundles(bundles))
    return out


def init_state(banks, decoder_cfgs, train_cfg: TrainConfig, loss_cfg: LossConfig) -> ModelState:
    """Fresh model state: initialized decoders, zeroed optimizer, epoch 0.

    banks is (visual_bank, audio_bank) and decoder_cfgs is (visual_cfg,
    audio_cfg).  Missing-modality modes encode from the present modality
    alone and train only the cross decoder, so the untrained decoder's
    config may be None; both banks are still required because the loss
    needs the other modality's raw dimension.
    """
    visual_bank, audio_bank = banks
    visual_cfg, audio_cfg = decoder_cfgs
    mode = train_cfg.mode
    if visual_bank is None or audio_bank is None:
        raise ConfigError("both banks are required; see init_state docstring")
    state = ModelState(
        mode=mode,
        visual_bank=visual_bank,
        audio_bank=audio_bank,
        visual_params=None,
        audio_params=None,
        proj_visual=None,
        proj_audio=None,
        loss_cfg=loss_cfg,
        train_cfg=train_cfg,
    )
    latent = state.latent_len()
    train_visual = mode in ("joint", "audio-only-input")
    train_audio = mode in ("joint", "visual-only-input")
    root = Rng(train_cfg.seed)
    if train_visual:
        if visual_cfg is None:
            raise ConfigError(f"mode {mode} trains the visual decoder; config missing")
        if visual_cfg.latent_len != latent:
            raise ConfigError(
                f"visual decoder expects latent {visual_cfg.latent_len}, mode gives {latent}"
            )
        state.visual_params = init_decoder(visual_cfg, root.split(0))
    if train_audio:
        if audio_cfg is None:
            raise ConfigError(f"mode {mode} trains the audio decoder; config missing")
        if audio_cfg.latent_len != latent:
            raise ConfigError(
                f"audio decoder expects latent {audio_cfg.latent_len}, mode gives {latent}"
            )
        state.audio_params = init_decoder(audio_cfg, root.split(1))
    if loss_cfg.ii_backend == "gaussian":
        d = loss_cfg.projection_dim
        if train_cfg.batch_size <= 3 * d + 2:
            raise ConfigError(
                f"batch size {train_cfg.batch_size} too small for projection dim {d}"
            )
        img_dim = visual_bank.in_dim * len(visual_bank)
        aud_dim = audio_bank.in_dim * len(audio_bank)
        if train_visual:
            state.proj_visual = build_projections(
                d, (img_dim, aud_dim, visual_cfg.output_dim), loss_cfg.projection_seed
            )
        if train_audio:
            state.proj_audio = build_projections(
                d, (aud_dim, img_dim, audio_cfg.output_dim),
                derive_seed(loss_cfg.projection_seed, 1),
            )
    n = int(sum(p.n_params() for p in state.trainable()))
    state.opt_m = np.zeros(n)
    state.opt_v = np.zeros(n)
    return state


def _epoch_latents(state, arrays, idx, eps_rng):
    """Latent batch for the samples at idx, visual part first."""
    parts = []
    for key, present in (
        ("mu_visual", state.mode != "audio-only-input"),
        ("mu_audio", state.mode != "visual-only-input"),
    ):
        if not present:
            continue
        mu = arrays[key]
        if state.train_cfg.sigma_scope == "batch":
            sigma = batch_sigma([mu[idx]])
        else:
            sigma = arrays["sigma_" + key]
        parts.append(mu[idx] + sigma * eps_rng.normal((idx.size, mu.shape[1])))
    return np.concatenate(parts, axis=1)


def _adam_step(state: ModelState, grad: np.ndarray) -> None:
    state.opt_t += 1
    state.opt_m = BETA1 * state.opt_m + (1.0 - BETA1) * grad
    state.opt_v = BETA2 * state.opt_v + (1.0 - BETA2) * grad * grad
    mhat = state.opt_m / (1.0 - BETA1**state.opt_t)
    vhat = state.opt_v / (1.0 - BETA2**state.opt_t)
    flat = state.flat_params() - state.train_cfg.step_size * mhat / (np.sqrt(vhat) + ADAM_EPS)
    at = 0
    for p in state.trainable():
        n = p.n_params()
        p.load_flat(flat[at : at + n])
        at += n


def _batch_terms(state, arrays, idx, z, monitor):
    """Total loss Tensor over the trained decoders plus history diagnostics."""
    lcfg = state.loss_cfg
    diag = {"ii": 0.0, "mse_v": 0.0, "mse_a": 0.0, "plugin_bits": 0.0}
    directions = []
    if state.visual_params is not None:
        directions.append(("v", arrays["images_flat"][idx], arrays["waves"][idx],
                           state.visual_params, state.proj_visual))
    if state.audio_params is not None:
        directions.append(("a", arrays["waves"][idx], arrays["images_flat"][idx],
                           state.audio_params, state.proj_audio))
    pieces = []
    for tag, x1, x2, params, proj in directions:
        y = forward(params, z)
        if y.data.ndim != 2:
            y = ops.reshape(y, (idx.size, params.config.output_dim))
        piece = _recon_term(x1, y, lcfg.recon_weight)
        diag["mse_" + tag] = float(np.mean(np.sum((y.data - x1) ** 2, axis=1)))
        if lcfg.ii_backend == "gaussian":
            ii = interaction_info_gaussian(SampleBatch(x1, x2, y), proj, lcfg.ridge)
            diag["ii"] += float(ii.data)
            piece = ops.add(ops.scale(ii, lcfg.ii_weight), piece)
            if monitor and tag == directions[0][0]:
                diag["plugin_bits"] = interaction_info_plugin(SampleBatch(x1, x2, y.data))
        pieces.append(piece)
    total = pieces[0]
    for piece in pieces[1:]:
        total = ops.add(total, piece)
    return total, diag


def train(dataset, banks=None, decoder_cfgs=None, train_cfg=None, loss_cfg=None, *, state=None):
    """Optimize decoder parameters; returns (ModelState, TrainHistory).

    Pass banks/decoder_cfgs/train_cfg/loss_cfg for a fresh run, or an
    existing state (e.g. from a checkpoint) to continue it; a continued run
    reproduces the uninterrupted one bit for bit.  The returned history
    covers only the epochs this call ran.
    """
    if state is None:
        state = init_state(banks, decoder_cfgs, train_cfg, loss_cfg)
    if not dataset:
        raise ConfigError("dataset is empty")
    cfg = state.train_cfg
    arrays = _dataset_arrays(dataset, state)
    if cfg.sigma_scope == "dataset":
        for key in ("mu_visual", "mu_audio"):
            if key in arrays:
                arrays["sigma_" + key] = batch_sigma([arrays[key]])
    n = len(dataset)
    bsz = min(cfg.batch_size, n)
    root = Rng(cfg.seed)
    history = TrainHistory()
    for epoch in range(state.epoch_done + 1, cfg.epochs + 1):
        perm_rng = root.split(2).split(epoch)
        eps_rng = root.split(3).split(epoch)
        order = np.argsort(perm_rng.uniform(n), kind="stable")
        n_batches = n // bsz
        if n_batches == 0:
            raise ConfigError(f"dataset of {n} too small for batch size {bsz}")
        sums = {"loss": 0.0, "ii": 0.0, "mse_v": 0.0, "mse_a": 0.0}
        plugin_bits = 0.0
        for b in range(n_batches):
            idx = order[b * bsz : (b + 1) * bsz]
            z = _epoch_latents(state, arrays, idx, eps_rng)
            try:
                total, diag = _batch_terms(state, arrays, idx, z, monitor=b == n_batches - 1)
                if not math.isfinite(float(total.data)):
                    raise NumericError("loss is not finite")
                total.backward()
            except NumericError as exc:
                raise TrainingError(
                    f"training diverged at epoch {epoch}, batch {b}: {exc}"
                ) from exc
            grads = [t.grad.ravel() for p in state.trainable() for t in p.tensors]
            _adam_step(state, np.concatenate(grads))
            for p in state.trainable():
                p.zero_grad()
            sums["loss"] += float(total.data)
            sums["ii"] += diag["ii"]
            sums["mse_v"] += diag["mse_v"]
            sums["mse_a"] += diag["mse_a"]
            if b == n_batches - 1:
                plugin_bits = diag["plugin_bits"]
        history.records.append(
            EpochRecord(
                epoch=epoch,
                total_loss=sums["loss"] / n_batches,
                ii_nats=sums["ii"] / n_batches,
                ii_plugin_bits=plugin_bits,
                mse_visual=sums["mse_v"] / n_batches,
                mse_audio=sums["mse_a"] / n_batches,
            )
        )
        state.epoch_done = epoch
    return state, history


def evaluate(dataset, state: ModelState, mean_image=None):
    """Deterministic metrics on a dataset: sigma is 0, no noise is drawn.

    Returns per-decoder reconstruction MSE (squared L2 per sample, averaged
    over samples), II diagnostics, and, when mean_image is given, the
    baseline MSE of predicting that constant image for every sample.
    """
    if not dataset:
        raise ConfigError("dataset is empty")
    arrays = _dataset_arrays(dataset, state)
    parts = []
    if state.mode != "audio-only-input":
        parts.append(arrays["mu_visual"])
    if state.mode != "visual-only-input":
        parts.append(arrays["mu_audio"])
    z = np.concatenate(parts, axis=1)
    out = {}
    ii_ok = (
        state.loss_cfg.ii_backend == "gaussian"
        and len(dataset) > 3 * state.loss_cfg.projection_dim + 2
    )
    if state.visual_params is not None:
        flat = forward(state.visual_params, z).data.reshape(len(dataset), -1)
        x1 = arrays["images_flat"]
        out["mse_visual"] = float(np.mean(np.sum((flat - x1) ** 2, axis=1)))
        if ii_ok:
            out["ii_visual_nats"] = interaction_info_gaussian(
                SampleBatch(x1, arrays["waves"], flat),
                state.proj_visual,
                state.loss_cfg.ridge,
            )
            out["ii_visual_plugin_bits"] = interaction_info_plugin(
                SampleBatch(x1, arrays["waves"], flat)
            )
    if state.audio_params is not None:
        y = forward(state.audio_params, z).data
        x1 = arrays["waves"]
        out["mse_audio"] = float(np.mean(np.sum((y - x1) ** 2, axis=1)))
        if ii_ok:
            out["ii_audio_nats"] = interaction_info_gaussian(
                SampleBatch(x1, arrays["images_flat"], y),
                state.proj_audio,
                state.loss_cfg.ridge,
            )
            out["ii_audio_plugin_bits"] = interaction_info_plugin(
                SampleBatch(x1, arrays["images_flat"], y)
            )
    if mean_image is not None:
        base = _flatten_images(np.asarray(mean_image, dtype=np.float64)[None])[0]
        x1 = arrays["images_flat"]
        out["baseline_mse_visual"] = float(np.mean(np.sum((x1 - base) ** 2, axis=1)))
    return out
