"""Local element correction: inception-style detail branches.

The correction map concatenates query and key features channel-wise,
projects back to c channels, and refines them through a residual
detail-inquiry net built from two multi-kernel element generators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .autodiff import Tensor
from .errors import ConfigError, ContractError


@dataclass
class Conv:
    """A conv kernel with bias; padding is chosen to preserve the grid."""
    w: Tensor
    b: Tensor

    @property
    def out_channels(self) -> int:
        return self.w.shape[0]

    @property
    def kernel(self) -> int:
        return self.w.shape[-1]


def _same_conv(x: Tensor, conv: Conv) -> Tensor:
    return ops.conv2d(x, conv.w, conv.b, stride=1, pad=conv.kernel // 2)


@dataclass
class ElementGeneratorParams:
    """Parallel conv paths, each a chain of convs with a rectifier after
    every conv; path outputs concatenate channel-wise."""

    paths: tuple[tuple[Conv, ...], ...]

    @property
    def out_channels(self) -> int:
        return sum(path[-1].out_channels for path in self.paths)


@dataclass
class DinParams:
    eg1: ElementGeneratorParams
    eg2: ElementGeneratorParams
    proj_out: Conv

    def __post_init__(self):
        feed = self.eg1.out_channels + self.eg2.out_channels
        if self.proj_out.w.shape[1] != feed:
            raise ConfigError(
                f"exit projection expects {self.proj_out.w.shape[1]} channels "
                f"but generators produce {feed}")


@dataclass
class LecParams:
    proj_in: Conv
    din: DinParams


def _conv_tensor(rng, cout, cin, k, dtype, std=None):
    std = std if std is not None else math.sqrt(2.0 / (cin * k * k))
    w = Tensor(rng.normal(0.0, std, size=(cout, cin, k, k)).astype(dtype))
    b = Tensor(np.zeros(cout, dtype=dtype))
    return Conv(w, b)


def init_eg_one(rng, channels: int, out_channels: int,
                dtype=np.float64) -> ElementGeneratorParams:
    """First generator: parallel 1x1 and 3x3 paths."""
    c1 = out_channels // 2
    c2 = out_channels - c1
    if c1 < 1:
        raise ConfigError(f"generator output {out_channels} too small to split")
    return ElementGeneratorParams(paths=(
        (_conv_tensor(rng, c1, channels, 1, dtype),),
        (_conv_tensor(rng, c2, channels, 3, dtype),),
    ))


def init_eg_two(rng, channels: int, out_channels: int,
                dtype=np.float64) -> ElementGeneratorParams:
    """Second generator: 1x1->3x3 and 1x1->5x5 reduce-then-conv paths."""
    c1 = out_channels // 2
    c2 = out_channels - c1
    if c1 < 1:
        raise ConfigError(f"generator output {out_channels} too small to split")
    return ElementGeneratorParams(paths=(
        (_conv_tensor(rng, c1, channels, 1, dtype),
         _conv_tensor(rng, c1, c1, 3, dtype)),
        (_conv_tensor(rng, c2, channels, 1, dtype),
         _conv_tensor(rng, c2, c2, 5, dtype)),
    ))


def init_din_params(rng, channels: int, generator_channels: int | None = None,
                    dtype=np.float64) -> DinParams:
    gc = generator_channels if generator_channels is not None else max(
        2, channels // 2)
    eg1 = init_eg_one(rng, channels, gc, dtype)
    eg2 = init_eg_two(rng, channels, gc, dtype)
    proj = _conv_tensor(rng, channels, eg1.out_channels + eg2.out_channels,
                        1, dtype)
    return DinParams(eg1=eg1, eg2=eg2, proj_out=proj)


def init_lec_params(rng, channels: int, generator_channels: int | None = None,
                    dtype=np.float64) -> LecParams:
    proj_in = _conv_tensor(rng, channels, 2 * channels, 1, dtype)
    return LecParams(proj_in=proj_in,
                     din=init_din_params(rng, channels, generator_channels, dtype))


def element_generator(x: Tensor, params: ElementGeneratorParams) -> Tensor:
    """Concatenation of the parallel conv paths (rectified after each conv)."""
    if x.ndim != 3:
        raise ContractError(f"element generator expects (C,H,W), got {x.shape}")
    outs = []
    for path in params.paths:
        h = x
        for conv in path:
            h = ops.relu(_same_conv(h, conv))
        outs.append(h)
    return ops.concat(outs, axis=0)


def din(x: Tensor, params: DinParams) -> Tensor:
    """Detail-inquiry net: x + Proj(Cat(EG_I(x), EG_II(x))), shape-preserving."""
    gen = ops.concat([element_generator(x, params.eg1),
                      element_generator(x, params.eg2)], axis=0)
    return ops.add(x, _same_conv(gen, params.proj_out))


def lec(q: Tensor, k: Tensor, params: LecParams, height: int,
        width: int) -> Tensor:
    """Detail-correction map over two token sequences of the same grid."""
    if q.shape != k.shape:
        raise ContractError(f"LEC inputs differ: {q.shape} vs {k.shape}")
    if q.ndim != 2 or q.shape[0] != height * width:
        raise ContractError(
            f"LEC tokens {q.shape} do not form a {height}x{width} grid")
    qm = ops.map_from_tokens(q, height, width)
    km = ops.map_from_tokens(k, height, width)
    merged = ops.concat([qm, km], axis=0)
    z = _same_conv(merged, params.proj_in)
    return ops.tokens_from_map(din(z, params.din))
