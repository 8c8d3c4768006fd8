"""Stub convolutional backbone, feature correlation, and tokenization.

Both branches run the same five conv layers (weight sharing is literal:
one parameter set).  Levels 3-5 share spatial size and channel count so
the three correlation token sequences are interchangeable downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .autodiff import Tensor
from .errors import ConfigError, ContractError
from .lec import Conv


@dataclass(frozen=True)
class ConvSpec:
    channels: int
    kernel: int
    stride: int
    pad: int


@dataclass(frozen=True)
class BackboneConfig:
    layers: tuple[ConvSpec, ...]

    def __post_init__(self):
        if len(self.layers) != 5:
            raise ConfigError(f"backbone needs 5 layers, got {len(self.layers)}")
        c3 = self.layers[2].channels
        for spec in self.layers[3:]:
            if spec.channels != c3:
                raise ConfigError("layers 3-5 must share a channel count")
            if spec.stride != 1 or 2 * spec.pad != spec.kernel - 1:
                raise ConfigError(
                    "layers 4-5 must preserve spatial size "
                    f"(stride 1, pad (k-1)/2), got {spec}")

    def feature_size(self, extent: int, upto: int = 5) -> int:
        """Spatial extent after the first ``upto`` layers (exactness enforced)."""
        for spec in self.layers[:upto]:
            span = extent + 2 * spec.pad - spec.kernel
            if span < 0 or span % spec.stride != 0:
                raise ConfigError(
                    f"input extent {extent} incompatible with {spec}")
            extent = span // spec.stride + 1
        return extent


# Template 32 -> 6x6 features; search 64 -> 14x14; correlation grid 9x9.
TOY_BACKBONE = BackboneConfig(layers=(
    ConvSpec(8, 4, 2, 1),
    ConvSpec(16, 4, 2, 1),
    ConvSpec(16, 3, 1, 0),
    ConvSpec(16, 3, 1, 1),
    ConvSpec(16, 3, 1, 1),
))

# Paper-scale preset: template 127 -> 13x13, search 287 -> 33x33 (grid 21x21).
PAPER_BACKBONE = BackboneConfig(layers=(
    ConvSpec(96, 11, 2, 0),
    ConvSpec(256, 5, 2, 0),
    ConvSpec(256, 4, 2, 0),
    ConvSpec(256, 3, 1, 1),
    ConvSpec(256, 3, 1, 1),
))


@dataclass
class BackboneParams:
    convs: tuple[Conv, ...]
    config: BackboneConfig


@dataclass
class FeaturePyramid:
    f3: Tensor
    f4: Tensor
    f5: Tensor

    def level(self, i: int) -> Tensor:
        return (self.f3, self.f4, self.f5)[i - 3]


def init_backbone_params(rng: np.random.Generator, config: BackboneConfig,
                         in_channels: int = 3, dtype=np.float64,
                         scale: float | None = None) -> BackboneParams:
    convs = []
    cin = in_channels
    for spec in config.layers:
        std = scale if scale is not None else math.sqrt(
            2.0 / (cin * spec.kernel ** 2))
        w = Tensor(rng.normal(0.0, std, size=(
            spec.channels, cin, spec.kernel, spec.kernel)).astype(dtype))
        b = Tensor(np.zeros(spec.channels, dtype=dtype))
        convs.append(Conv(w, b))
        cin = spec.channels
    return BackboneParams(convs=tuple(convs), config=config)


def backbone_forward(image: Tensor, params: BackboneParams) -> FeaturePyramid:
    """Run the five conv+ReLU stages; return the last three activations."""
    if image.ndim != 3:
        raise ContractError(f"image must be (C,H,W), got {image.shape}")
    x = image
    feats = []
    for spec, conv in zip(params.config.layers, params.convs):
        x = ops.relu(ops.conv2d(x, conv.w, conv.b, spec.stride, spec.pad))
        feats.append(x)
    return FeaturePyramid(f3=feats[2], f4=feats[3], f5=feats[4])


def correlation_pyramid(z_img: Tensor, x_img: Tensor,
                        params: BackboneParams) -> tuple[Tensor, Tensor, Tensor]:
    """Per-level depth-wise correlation tokens (m3, m4, m5), all n-by-C."""
    fz = backbone_forward(z_img, params)
    fx = backbone_forward(x_img, params)
    tokens = []
    for level in (3, 4, 5):
        corr = ops.dwc(fz.level(level), fx.level(level))
        tokens.append(ops.tokens_from_map(corr))
    m3, m4, m5 = tokens
    if not (m3.shape == m4.shape == m5.shape):
        raise ContractError(
            f"correlation levels disagree: {m3.shape}/{m4.shape}/{m5.shape}")
    return m3, m4, m5


def correlation_grid(config: BackboneConfig, template: int, search: int) -> int:
    """Side length of the correlation output grid for square inputs."""
    ft = config.feature_size(template)
    fs = config.feature_size(search)
    if ft > fs:
        raise ConfigError(
            f"template features {ft} exceed search features {fs}")
    return fs - ft + 1
