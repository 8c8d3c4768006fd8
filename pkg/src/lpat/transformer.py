"""Encoder/decoder wiring: windowed attention, correction maps, FFN, norms.

Two encoder layers fuse the correlation levels with local attention; one
decoder layer searches globally over the fused tokens.  Post-norm
residuals throughout.  The second encoder's residual uses its own query
sequence and the decoder's self-attention carries a residual; setting
``paper_literal_residual`` restores the formulation exactly as printed
(residual from the level-4 tokens, no self-attention residual).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .attention import (
    AttentionParams,
    GlobalAttentionParams,
    init_attention_params,
    init_global_attention_params,
    mh_lra,
    mha_global,
)
from .autodiff import Tensor
from .errors import ConfigError, ContractError
from .lec import DinParams, LecParams, din, init_din_params, init_lec_params, lec
from .scope import ScopeMask

NORM_EPS = 1e-5


@dataclass
class FfnParams:
    """Per-token two-layer channel mixer with a rectifier between."""
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class NormParams:
    gamma: Tensor
    beta: Tensor


@dataclass
class EncoderLayerParams:
    lra: AttentionParams
    lec: LecParams
    ffn: FfnParams
    norm_attn: NormParams
    norm_ffn: NormParams
    norm_out: NormParams


@dataclass
class DecoderLayerParams:
    din: DinParams
    self_attn: GlobalAttentionParams
    cross_attn: GlobalAttentionParams
    lec: LecParams
    ffn: FfnParams
    norm_query: NormParams
    norm_cross: NormParams
    norm_ffn: NormParams
    norm_out: NormParams


@dataclass
class TransformerParams:
    enc1: EncoderLayerParams
    enc2: EncoderLayerParams
    dec: DecoderLayerParams


def init_ffn_params(rng, channels: int, hidden: int, dtype=np.float64) -> FfnParams:
    s1 = math.sqrt(2.0 / channels)
    s2 = math.sqrt(2.0 / hidden)
    return FfnParams(
        w1=Tensor(rng.normal(0.0, s1, size=(channels, hidden)).astype(dtype)),
        b1=Tensor(np.zeros(hidden, dtype=dtype)),
        w2=Tensor(rng.normal(0.0, s2, size=(hidden, channels)).astype(dtype)),
        b2=Tensor(np.zeros(channels, dtype=dtype)),
    )


def init_norm_params(channels: int, dtype=np.float64) -> NormParams:
    return NormParams(gamma=Tensor(np.ones(channels, dtype=dtype)),
                      beta=Tensor(np.zeros(channels, dtype=dtype)))


def init_encoder_layer(rng, channels: int, heads: int, ffn_hidden: int,
                       generator_channels: int | None = None,
                       dtype=np.float64) -> EncoderLayerParams:
    return EncoderLayerParams(
        lra=init_attention_params(rng, channels, heads, dtype),
        lec=init_lec_params(rng, channels, generator_channels, dtype),
        ffn=init_ffn_params(rng, channels, ffn_hidden, dtype),
        norm_attn=init_norm_params(channels, dtype),
        norm_ffn=init_norm_params(channels, dtype),
        norm_out=init_norm_params(channels, dtype),
    )


def init_decoder_layer(rng, channels: int, heads: int, ffn_hidden: int,
                       generator_channels: int | None = None,
                       dtype=np.float64) -> DecoderLayerParams:
    return DecoderLayerParams(
        din=init_din_params(rng, channels, generator_channels, dtype),
        self_attn=init_global_attention_params(rng, channels, heads, dtype),
        cross_attn=init_global_attention_params(rng, channels, heads, dtype),
        lec=init_lec_params(rng, channels, generator_channels, dtype),
        ffn=init_ffn_params(rng, channels, ffn_hidden, dtype),
        norm_query=init_norm_params(channels, dtype),
        norm_cross=init_norm_params(channels, dtype),
        norm_ffn=init_norm_params(channels, dtype),
        norm_out=init_norm_params(channels, dtype),
    )


def init_transformer_params(rng, channels: int, heads: int, ffn_hidden: int,
                            generator_channels: int | None = None,
                            dtype=np.float64) -> TransformerParams:
    return TransformerParams(
        enc1=init_encoder_layer(rng, channels, heads, ffn_hidden,
                                generator_channels, dtype),
        enc2=init_encoder_layer(rng, channels, heads, ffn_hidden,
                                generator_channels, dtype),
        dec=init_decoder_layer(rng, channels, heads, ffn_hidden,
                               generator_channels, dtype),
    )


def ffn(x: Tensor, params: FfnParams) -> Tensor:
    """relu(x @ w1 + b1) @ w2 + b2, shape-preserving per token."""
    h = ops.relu(ops.add_bias(ops.matmul(x, params.w1), params.b1))
    return ops.add_bias(ops.matmul(h, params.w2), params.b2)


def norm(x: Tensor, params: NormParams, eps: float = NORM_EPS) -> Tensor:
    return ops.layer_norm(x, params.gamma, params.beta, eps)


def _check_tokens(name: str, x: Tensor, scope: ScopeMask):
    if x.ndim != 2 or x.shape[0] != scope.size:
        raise ContractError(
            f"{name} shape {x.shape} does not match grid "
            f"{scope.height}x{scope.width}")


def encoder_layer_1(m3: Tensor, m4: Tensor, params: EncoderLayerParams,
                    scope: ScopeMask) -> Tensor:
    """First fusion layer: level-4 tokens query level-3 tokens."""
    if m3.shape != m4.shape:
        raise ContractError(f"encoder inputs differ: {m3.shape} vs {m4.shape}")
    _check_tokens("m4", m4, scope)
    correction = lec(m3, m4, params.lec, scope.height, scope.width)
    attended = norm(ops.add(mh_lra(m4, m3, m3, params.lra, scope), m4),
                    params.norm_attn)
    fused = norm(ops.add(ffn(attended, params.ffn), attended), params.norm_ffn)
    return norm(ops.add(correction, fused), params.norm_out)


def encoder_layer_2(m5: Tensor, m_e1: Tensor, params: EncoderLayerParams,
                    scope: ScopeMask, residual: Tensor | None = None) -> Tensor:
    """Second fusion layer: level-5 tokens query the first layer's output.

    ``residual`` defaults to the layer's own query sequence; the caller
    may supply the level-4 tokens to reproduce the printed formulation.
    """
    if m5.shape != m_e1.shape:
        raise ContractError(f"encoder inputs differ: {m5.shape} vs {m_e1.shape}")
    _check_tokens("m5", m5, scope)
    res = residual if residual is not None else m5
    if res.shape != m5.shape:
        raise ContractError(f"residual shape {res.shape} vs {m5.shape}")
    correction = lec(m_e1, m_e1, params.lec, scope.height, scope.width)
    attended = norm(ops.add(mh_lra(m5, m_e1, m_e1, params.lra, scope), res),
                    params.norm_attn)
    fused = norm(ops.add(ffn(attended, params.ffn), attended), params.norm_ffn)
    return norm(ops.add(correction, fused), params.norm_out)


def decoder_layer(m5: Tensor, m_e2: Tensor, params: DecoderLayerParams,
                  height: int, width: int,
                  self_attn_residual: bool = True) -> Tensor:
    """Global-search layer: DIN-preset queries, self- then cross-attention."""
    if m5.shape != m_e2.shape:
        raise ContractError(f"decoder inputs differ: {m5.shape} vs {m_e2.shape}")
    if m5.shape[0] != height * width:
        raise ContractError(
            f"decoder tokens {m5.shape} do not form a {height}x{width} grid")
    preset = ops.tokens_from_map(
        din(ops.map_from_tokens(m5, height, width), params.din))
    attended = mha_global(preset, preset, preset, params.self_attn)
    if self_attn_residual:
        attended = ops.add(attended, preset)
    queries = norm(attended, params.norm_query)
    correction = lec(queries, m_e2, params.lec, height, width)
    crossed = norm(ops.add(mha_global(queries, m_e2, m_e2, params.cross_attn),
                           queries), params.norm_cross)
    fused = norm(ops.add(ffn(crossed, params.ffn), crossed), params.norm_ffn)
    return norm(ops.add(correction, fused), params.norm_out)


def transformer_forward(m3: Tensor, m4: Tensor, m5: Tensor,
                        params: TransformerParams,
                        scopes: tuple[ScopeMask, ScopeMask],
                        paper_literal_residual: bool = False) -> Tensor:
    """Full stack: two encoder layers then the decoder layer."""
    if not (m3.shape == m4.shape == m5.shape):
        raise ContractError(
            f"token levels disagree: {m3.shape}/{m4.shape}/{m5.shape}")
    scope1, scope2 = scopes
    if scope1.size != scope2.size:
        raise ConfigError("encoder scopes must cover the same grid")
    m_e1 = encoder_layer_1(m3, m4, params.enc1, scope1)
    m_e2 = encoder_layer_2(
        m5, m_e1, params.enc2, scope2,
        residual=m4 if paper_literal_residual else None)
    return decoder_layer(m5, m_e2, params.dec, scope2.height, scope2.width,
                         self_attn_residual=not paper_literal_residual)
