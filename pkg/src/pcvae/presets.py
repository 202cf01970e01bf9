"""Named experiment configurations.

Each preset fixes the data geometry (image size, audio length), the stripe
and segment counts, the per-modality latent widths, the decoder pair, and a
training step size tuned for that scale.  Joint presets encode both
modalities and concatenate visual-first; audio-only presets encode audio
alone and train the visual decoder from it.

    name            mode              image    audio  latent      banks
    desk            joint             8x8x3    64     16 = 8+8    6 of 8x32,   4 of 8x16
    paper-300       joint             32x32x3  2205   300=150+150 6 of 150x512, 5 of 150x441
    paper-400       joint             32x32x3  2205   400=200+200 6 of 200x512, 5 of 200x441
    paper-audio-200 audio-only-input  32x32x3  2205   200         audio 5 of 200x441
    paper-audio-250 audio-only-input  32x32x3  2205   250         audio 5 of 250x441
"""

from __future__ import annotations

from dataclasses import dataclass

from .decoder import decoder_preset
from .encoder import build_bank
from .errors import ConfigError
from .training import derive_seed


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    mode: str
    image_hw: tuple
    audio_len: int
    stripe_count: int
    segment_count: int
    visual_out: int
    audio_out: int
    visual_decoder: str
    audio_decoder: str | None
    step_size: float

    @property
    def visual_token_len(self) -> int:
        h, w = self.image_hw
        return 3 * h * w // self.stripe_count

    @property
    def audio_segment_len(self) -> int:
        return self.audio_len // self.segment_count

    @property
    def latent_len(self) -> int:
        if self.mode == "audio-only-input":
            return self.audio_out
        if self.mode == "visual-only-input":
            return self.visual_out
        return self.visual_out + self.audio_out

    def bank_shapes(self) -> dict:
        """Matrix shapes per modality: (count, out_dim, in_dim)."""
        return {
            "visual": (self.stripe_count, self.visual_out, self.visual_token_len),
            "audio": (self.segment_count, self.audio_out, self.audio_segment_len),
        }


_PRESETS = {
    "desk": ExperimentPreset(
        name="desk",
        mode="joint",
        image_hw=(8, 8),
        audio_len=64,
        stripe_count=6,
        segment_count=4,
        visual_out=8,
        audio_out=8,
        visual_decoder="desk-visual",
        audio_decoder="desk-audio",
        step_size=7e-4,
    ),
    "paper-300": ExperimentPreset(
        name="paper-300",
        mode="joint",
        image_hw=(32, 32),
        audio_len=2205,
        stripe_count=6,
        segment_count=5,
        visual_out=150,
        audio_out=150,
        visual_decoder="paper-visual",
        audio_decoder="paper-audio",
        step_size=1e-3,
    ),
    "paper-400": ExperimentPreset(
        name="paper-400",
        mode="joint",
        image_hw=(32, 32),
        audio_len=2205,
        stripe_count=6,
        segment_count=5,
        visual_out=200,
        audio_out=200,
        visual_decoder="paper-visual",
        audio_decoder="paper-audio",
        step_size=1e-3,
    ),
    "paper-audio-200": ExperimentPreset(
        name="paper-audio-200",
        mode="audio-only-input",
        image_hw=(32, 32),
        audio_len=2205,
        stripe_count=6,
        segment_count=5,
        visual_out=150,
        audio_out=200,
        visual_decoder="paper-visual",
        audio_decoder=None,
        step_size=1e-3,
    ),
    "paper-audio-250": ExperimentPreset(
        name="paper-audio-250",
        mode="audio-only-input",
        image_hw=(32, 32),
        audio_len=2205,
        stripe_count=6,
        segment_count=5,
        visual_out=150,
        audio_out=250,
        visual_decoder="paper-visual",
        audio_decoder=None,
        step_size=1e-3,
    ),
}


def list_presets() -> tuple:
    return tuple(sorted(_PRESETS))


def get_preset(name: str) -> ExperimentPreset:
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(list_presets())}")
    return _PRESETS[name]


def preset_banks(preset: ExperimentPreset, seed: int):
    """(visual_bank, audio_bank) with child seeds derived from one root seed."""
    visual = build_bank(
        "visual",
        in_dim=preset.visual_token_len,
        out_dim=preset.visual_out,
        count=preset.stripe_count,
        seed=derive_seed(seed, 0),
    )
    audio = build_bank(
        "audio",
        in_dim=preset.audio_segment_len,
        out_dim=preset.audio_out,
        count=preset.segment_count,
        seed=derive_seed(seed, 1),
    )
    return visual, audio


def preset_decoder_configs(preset: ExperimentPreset, mode: str | None = None):
    """(visual_cfg, audio_cfg) sized to the preset's latent; None if untrained.

    An explicit mode overrides the preset's, changing the latent length and
    which decoders exist: missing-modality modes train the cross decoder only.
    """
    mode = preset.mode if mode is None else mode
    if mode == "audio-only-input":
        latent = preset.audio_out
    elif mode == "visual-only-input":
        latent = preset.visual_out
    else:
        latent = preset.visual_out + preset.audio_out
    visual = (
        decoder_preset(preset.visual_decoder, latent)
        if mode != "visual-only-input"
        else None
    )
    audio = (
        decoder_preset(preset.audio_decoder, latent)
        if preset.audio_decoder is not None and mode != "audio-only-input"
        else None
    )
    return visual, audio
