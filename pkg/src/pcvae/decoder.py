"""Trainable decoders: latent vector in, image or waveform out.

The latent enters as a 1x1 feature map with one channel per latent entry and
is upsampled by a chain of transposed convolutions.  The visual network is
four transposed-conv layers with ReLU after the first three and a linear
final layer; the audio network reuses the same trunk but replaces the last
transposed convolution with a linear fully connected layer sized to the
waveform.  Weights start at N(0, 1/fan_in), biases at zero.

Preset registry (spatial chain / channels; latent length is a parameter for
the paper-* presets, fixed at 16 for the desk pair):

    paper-visual  1x1 -> 8 -> 16 -> 32 -> 32x32x3
                  kernels 7,3,3,3; strides 8,2,2,1; channels 64,64,32,3
    paper-audio   trunk of paper-visual through 32 channels at 32x32,
                  then fully connected 32768 -> 2205
    desk-visual   1x1 -> 2 -> 4 -> 8 -> 8x8x3
                  kernels 2,2,2,3; strides 2,2,2,1; channels 6,6,4,3
    desk-audio    desk trunk to 4 channels at 4x4, then 64 -> 64
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .numerics import Rng, Tensor, autodiff as ops
from .numerics.kernels import conv_transpose2d_shape


@dataclass(frozen=True)
class TConvSpec:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    padding: int
    output_padding: int
    relu: bool

    kind: str = field(default="tconv", init=False)


@dataclass(frozen=True)
class FCSpec:
    in_features: int
    out_features: int

    kind: str = field(default="fc", init=False)


@dataclass(frozen=True)
class DecoderConfig:
    """Layer list plus the output shape the chain must compose to.

    output is ("image", H, W) or ("audio", length).  Construction walks the
    shape arithmetic out = (in - 1)*stride + kernel - 2*padding +
    output_padding from a 1x1 input and refuses any chain that does not land
    exactly on the declared output.
    """

    name: str
    latent_len: int
    layers: tuple
    output: tuple

    def __post_init__(self):
        if self.latent_len < 1:
            raise ConfigError(f"latent length must be positive, got {self.latent_len}")
        if not self.layers:
            raise ConfigError("decoder needs at least one layer")
        kind = self.output[0]
        if kind not in ("image", "audio"):
            raise ConfigError(f"unknown output kind {kind!r}")
        hw, channels = (1, 1), self.latent_len
        flat_after_fc = None
        for i, layer in enumerate(self.layers):
            if flat_after_fc is not None:
                raise ConfigError("fully connected layer must be last")
            if isinstance(layer, TConvSpec):
                if layer.in_channels != channels:
                    raise ConfigError(
                        f"layer {i} expects {layer.in_channels} channels, chain has {channels}"
                    )
                if layer.output_padding >= layer.stride:
                    raise ConfigError(
                        f"layer {i}: output_padding {layer.output_padding} "
                        f"must be smaller than stride {layer.stride}"
                    )
                hw = conv_transpose2d_shape(
                    hw, layer.kernel, layer.stride, layer.padding, layer.output_padding
                )
                channels = layer.out_channels
            elif isinstance(layer, FCSpec):
                flat = channels * hw[0] * hw[1]
                if layer.in_features != flat:
                    raise ConfigError(
                        f"layer {i} expects {layer.in_features} features, chain has {flat}"
                    )
                flat_after_fc = layer.out_features
            else:
                raise ConfigError(f"unknown layer kind {layer!r}")
        if kind == "image":
            if flat_after_fc is not None:
                raise ConfigError("image decoder must end in a transposed convolution")
            h, w = self.output[1], self.output[2]
            if channels != 3 or hw != (h, w):
                raise ConfigError(
                    f"chain composes to {channels}x{hw[0]}x{hw[1]}, declared 3x{h}x{w}"
                )
        else:
            if flat_after_fc is None:
                raise ConfigError("audio decoder must end in a fully connected layer")
            if flat_after_fc != self.output[1]:
                raise ConfigError(
                    f"chain composes to length {flat_after_fc}, declared {self.output[1]}"
                )

    @property
    def output_dim(self) -> int:
        if self.output[0] == "image":
            return 3 * self.output[1] * self.output[2]
        return self.output[1]


def _paper_trunk(latent_len: int):
    return (
        TConvSpec(latent_len, 64, kernel=7, stride=8, padding=0, output_padding=1, relu=True),
        TConvSpec(64, 64, kernel=3, stride=2, padding=1, output_padding=1, relu=True),
        TConvSpec(64, 32, kernel=3, stride=2, padding=1, output_padding=1, relu=True),
    )


def _desk_trunk(latent_len: int):
    return (
        TConvSpec(latent_len, 6, kernel=2, stride=2, padding=0, output_padding=0, relu=True),
        TConvSpec(6, 6, kernel=2, stride=2, padding=0, output_padding=0, relu=True),
    )


def decoder_preset(name: str, latent_len: int) -> DecoderConfig:
    """Named decoder configurations; latent_len is the input length."""
    if name == "paper-visual":
        layers = _paper_trunk(latent_len) + (
            TConvSpec(32, 3, kernel=3, stride=1, padding=1, output_padding=0, relu=False),
        )
        return DecoderConfig(name, latent_len, layers, ("image", 32, 32))
    if name == "paper-audio":
        layers = _paper_trunk(latent_len) + (FCSpec(32 * 32 * 32, 2205),)
        return DecoderConfig(name, latent_len, layers, ("audio", 2205))
    if name == "desk-visual":
        layers = _desk_trunk(latent_len) + (
            TConvSpec(6, 4, kernel=2, stride=2, padding=0, output_padding=0, relu=True),
            TConvSpec(4, 3, kernel=3, stride=1, padding=1, output_padding=0, relu=False),
        )
        return DecoderConfig(name, latent_len, layers, ("image", 8, 8))
    if name == "desk-audio":
        layers = _desk_trunk(latent_len)[:1] + (
            TConvSpec(6, 4, kernel=2, stride=2, padding=0, output_padding=0, relu=True),
            FCSpec(4 * 4 * 4, 64),
        )
        return DecoderConfig(name, latent_len, layers, ("audio", 64))
    raise ConfigError(f"unknown decoder preset {name!r}")


@dataclass
class DecoderParams:
    """Per-layer weight and bias tensors, in layer order."""

    config: DecoderConfig
    tensors: list  # [w0, b0, w1, b1, ...]

    def n_params(self) -> int:
        return sum(t.data.size for t in self.tensors)

    def flat(self) -> np.ndarray:
        return np.concatenate([t.data.ravel() for t in self.tensors])

    def load_flat(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.size != self.n_params():
            raise DimensionError(
                f"expected {self.n_params()} parameters, got {values.size}"
            )
        at = 0
        for t in self.tensors:
            n = t.data.size
            t.data = values[at : at + n].reshape(t.data.shape).copy()
            at += n

    def zero_grad(self) -> None:
        for t in self.tensors:
            t.grad = None


def layer_shapes(layer):
    if isinstance(layer, TConvSpec):
        w = (layer.in_channels, layer.out_channels, layer.kernel, layer.kernel)
        return w, (layer.out_channels,), layer.in_channels * layer.kernel * layer.kernel
    w = (layer.in_features, layer.out_features)
    return w, (layer.out_features,), layer.in_features


def init_decoder(config: DecoderConfig, rng: Rng) -> DecoderParams:
    """Weights ~ N(0, 1/fan_in), biases zero; layer i draws from rng.split(i)."""
    tensors = []
    for i, layer in enumerate(config.layers):
        w_shape, b_shape, fan_in = layer_shapes(layer)
        w = rng.split(i).normal(w_shape) * math.sqrt(1.0 / fan_in)
        tensors.append(Tensor(w, requires_grad=True))
        tensors.append(Tensor(np.zeros(b_shape), requires_grad=True))
    return DecoderParams(config, tensors)


def params_from_flat(config: DecoderConfig, flat: Tensor) -> DecoderParams:
    """Parameters sliced out of one flat tensor, staying on its graph.

    Lets gradient checks differentiate a loss with respect to every weight
    and bias at once; load_flat is the ndarray counterpart for optimizers.
    """
    tensors = []
    at = 0
    for layer in config.layers:
        w_shape, b_shape, _ = layer_shapes(layer)
        for shape in (w_shape, b_shape):
            n = int(np.prod(shape))
            tensors.append(ops.reshape(ops.slice1d(flat, at, n), shape))
            at += n
    if at != flat.data.size:
        raise DimensionError(f"expected {at} parameters, got {flat.data.size}")
    return DecoderParams(config, tensors)


def forward(params: DecoderParams, z) -> Tensor:
    """Batched forward pass: (B, latent_len) -> (B, 3, H, W) or (B, length)."""
    x = z if isinstance(z, Tensor) else Tensor(np.asarray(z, dtype=np.float64))
    if x.data.ndim != 2 or x.data.shape[1] != params.config.latent_len:
        raise DimensionError(
            f"expected (B, {params.config.latent_len}) latent batch, got {x.data.shape}"
        )
    n = x.data.shape[0]
    x = ops.reshape(x, (n, params.config.latent_len, 1, 1))
    for i, layer in enumerate(params.config.layers):
        w, b = params.tensors[2 * i], params.tensors[2 * i + 1]
        if isinstance(layer, TConvSpec):
            x = ops.conv_transpose2d(x, w, layer.stride, layer.padding, layer.output_padding)
            x = ops.add(x, ops.reshape(b, (1, layer.out_channels, 1, 1)))
            if layer.relu:
                x = ops.relu(x)
        else:
            x = ops.reshape(x, (n, layer.in_features))
            x = ops.add(ops.matmul(x, w), ops.reshape(b, (1, layer.out_features)))
    return x


def _single_latent(latent, expected: int) -> np.ndarray:
    vec = latent.vector if hasattr(latent, "vector") else np.asarray(latent, dtype=np.float64)
    if vec.ndim != 1 or vec.size != expected:
        raise DimensionError(f"latent of length {vec.size}, decoder expects {expected}")
    return vec.reshape(1, expected)


def decode_visual(latent, params: DecoderParams) -> np.ndarray:
    """Single-sample image decode, returned H x W x 3."""
    if params.config.output[0] != "image":
        raise ConfigError(f"{params.config.name} is not an image decoder")
    out = forward(params, _single_latent(latent, params.config.latent_len))
    return np.transpose(out.data[0], (1, 2, 0))


def decode_audio(latent, params: DecoderParams) -> np.ndarray:
    """Single-sample waveform decode, returned 1-D."""
    if params.config.output[0] != "audio":
        raise ConfigError(f"{params.config.name} is not an audio decoder")
    out = forward(params, _single_latent(latent, params.config.latent_len))
    return out.data[0].copy()
