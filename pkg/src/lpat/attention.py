"""Scoped local attention, global multi-head attention, and the dense oracle.

Local attention embeds queries and keys with a shared spatial convolution
over the token grid and restricts every query's softmax to its window.
Scores are plain dot products (no 1/sqrt(d) scale); the global attention
used for cross-layer search applies the standard scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .autodiff import Tensor
from .errors import ConfigError, ContractError
from .scope import ScopeMask


@dataclass
class AttentionParams:
    """Weights of one windowed multi-head attention block.

    ``phi_q`` and ``phi_k`` are channel-preserving spatial convolutions
    (shared by all heads, no bias); each head owns a value projection
    ``w_v[j]`` of shape (c, c/h); ``w_o`` mixes the concatenated heads.
    """

    phi_q: Tensor
    phi_k: Tensor
    w_v: tuple[Tensor, ...]
    w_o: Tensor

    def __post_init__(self):
        c = self.w_o.shape[0]
        h = len(self.w_v)
        if c % h != 0:
            raise ConfigError(f"channels {c} not divisible by {h} heads")
        d = c // h
        for j, w in enumerate(self.w_v):
            if w.shape != (c, d):
                raise ConfigError(f"w_v[{j}] shape {w.shape}, expected {(c, d)}")
        if self.phi_q.shape[0] != c or self.phi_q.shape[1] != c:
            raise ConfigError(f"phi_q shape {self.phi_q.shape} not {c}->{c}")

    @property
    def heads(self) -> int:
        return len(self.w_v)

    @property
    def channels(self) -> int:
        return self.w_o.shape[0]

    @property
    def head_dim(self) -> int:
        return self.channels // self.heads


@dataclass
class GlobalAttentionParams:
    """Standard multi-head attention weights (c-by-c projections)."""

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    heads: int

    def __post_init__(self):
        c = self.w_q.shape[0]
        for name in ("w_q", "w_k", "w_v", "w_o"):
            if getattr(self, name).shape != (c, c):
                raise ConfigError(f"{name} must be {c}x{c}")
        if c % self.heads != 0:
            raise ConfigError(f"channels {c} not divisible by {self.heads} heads")

    @property
    def channels(self) -> int:
        return self.w_q.shape[0]

    @property
    def head_dim(self) -> int:
        return self.channels // self.heads


def init_attention_params(rng: np.random.Generator, channels: int, heads: int,
                          dtype=np.float64, conv_kernel: int = 3,
                          scale: float | None = None) -> AttentionParams:
    if conv_kernel % 2 == 0:
        raise ConfigError(f"embedding conv kernel must be odd, got {conv_kernel}")
    if channels % heads != 0:
        raise ConfigError(f"channels {channels} not divisible by {heads} heads")
    d = channels // heads
    conv_std = scale if scale is not None else math.sqrt(
        2.0 / (channels * conv_kernel ** 2))
    mat_std = scale if scale is not None else math.sqrt(2.0 / channels)

    def t(shape, std):
        return Tensor(rng.normal(0.0, std, size=shape).astype(dtype))

    return AttentionParams(
        phi_q=t((channels, channels, conv_kernel, conv_kernel), conv_std),
        phi_k=t((channels, channels, conv_kernel, conv_kernel), conv_std),
        w_v=tuple(t((channels, d), mat_std) for _ in range(heads)),
        w_o=t((channels, channels), mat_std),
    )


def init_global_attention_params(rng: np.random.Generator, channels: int,
                                 heads: int, dtype=np.float64,
                                 scale: float | None = None) -> GlobalAttentionParams:
    std = scale if scale is not None else math.sqrt(2.0 / channels)

    def t():
        return Tensor(rng.normal(0.0, std, size=(channels, channels)).astype(dtype))

    return GlobalAttentionParams(w_q=t(), w_k=t(), w_v=t(), w_o=t(), heads=heads)


def embed_tokens(tokens: Tensor, conv_w: Tensor, height: int, width: int) -> Tensor:
    """Spatially convolve a token sequence on its grid (same-size output)."""
    grid = ops.map_from_tokens(tokens, height, width)
    k = conv_w.shape[-1]
    emb = ops.conv2d(grid, conv_w, None, stride=1, pad=k // 2)
    return ops.tokens_from_map(emb)


def _check_lra_inputs(q: Tensor, k: Tensor, v: Tensor,
                      params: AttentionParams, scope: ScopeMask):
    n, c = scope.size, params.channels
    for name, t in (("Q", q), ("K", k), ("V", v)):
        if t.shape != (n, c):
            raise ContractError(
                f"{name} shape {t.shape} does not match scope grid "
                f"{scope.height}x{scope.width} with {c} channels")


def lra_head(q: Tensor, k: Tensor, v: Tensor, params: AttentionParams,
             head: int, scope: ScopeMask) -> Tensor:
    """One windowed attention head: conv-embedded scores, scoped softmax.

    Output is n-by-d.  Exactly sum_i |scope(i)| score dot products are
    executed (tracked by ``ops.score_counter``).
    """
    _check_lra_inputs(q, k, v, params, scope)
    if not 0 <= head < params.heads:
        raise ContractError(f"head {head} out of range for {params.heads}")
    qhat = embed_tokens(q, params.phi_q, scope.height, scope.width)
    khat = embed_tokens(k, params.phi_k, scope.height, scope.width)
    vhat = ops.matmul(v, params.w_v[head])
    return ops.local_attend(qhat, khat, vhat, scope)


def mh_lra(q: Tensor, k: Tensor, v: Tensor, params: AttentionParams,
           scope: ScopeMask) -> Tensor:
    """Channel-concatenated head outputs projected by w_o."""
    heads = [lra_head(q, k, v, params, j, scope) for j in range(params.heads)]
    return ops.matmul(ops.concat(heads, axis=1), params.w_o)


def mha_global(q: Tensor, k: Tensor, v: Tensor,
               params: GlobalAttentionParams) -> Tensor:
    """Standard scaled dot-product multi-head attention (full softmax).

    Supports cross attention: q is n_q-by-c while k and v share n_kv rows.
    """
    c = params.channels
    if q.ndim != 2 or q.shape[1] != c:
        raise ContractError(f"Q shape {q.shape} vs channels {c}")
    if k.shape != v.shape or k.ndim != 2 or k.shape[1] != c:
        raise ContractError(f"K/V shapes {k.shape}/{v.shape} vs channels {c}")
    d = params.head_dim
    scale = 1.0 / math.sqrt(d)
    outs = []
    for j in range(params.heads):
        j0, j1 = j * d, (j + 1) * d
        qj = ops.matmul(q, ops.cols(params.w_q, j0, j1))
        kj = ops.matmul(k, ops.cols(params.w_k, j0, j1))
        vj = ops.matmul(v, ops.cols(params.w_v, j0, j1))
        s = ops.mul_scalar(ops.matmul(qj, ops.transpose(kj)), scale)
        outs.append(ops.matmul(ops.softmax_rows(s), vj))
    return ops.matmul(ops.concat(outs, axis=1), params.w_o)


def masked_oracle(qhat: Tensor, khat: Tensor, vhat: Tensor,
                  scope: ScopeMask) -> Tensor:
    """Dense reference for the scoped attention: O(n^2) on purpose.

    Builds the full score matrix, writes the sentinel outside each
    window, row-softmaxes, and multiplies the values.  Inputs are the
    already-embedded sequences.
    """
    s = ops.matmul(qhat, ops.transpose(khat))
    masked = ops.apply_score_mask(s, scope.dense_mask())
    return ops.matmul(ops.softmax_rows(masked), vhat)


def lra_attention_weights(qhat: np.ndarray, khat: np.ndarray,
                          scope: ScopeMask) -> np.ndarray:
    """Materialize the scoped softmax as a dense matrix (tests only).

    Entries outside each window are exactly zero; inside they equal the
    weights the bucketed kernel uses.
    """
    n = scope.size
    weights = np.zeros((n, n), dtype=qhat.dtype)
    for q_idx, k_idx in scope.buckets:
        s = np.einsum("ic,imc->im", qhat[q_idx], khat[k_idx], optimize=True)
        s = s - s.max(axis=1, keepdims=True)
        e = np.exp(s)
        p = e / e.sum(axis=1, keepdims=True)
        for row, ki, pi in zip(q_idx, k_idx, p):
            weights[row, ki] = pi
    return weights
