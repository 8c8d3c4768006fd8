"""Differentiable primitives over :class:`lpat.autodiff.Tensor`.

Every function computes its value eagerly with numpy and, if a graph is
recording, registers a node whose ``bwd`` closure holds the saved
activations.  Adjoints are hand-derived; the independent check lives in
:mod:`lpat.gradcheck`.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import Tensor, neg_inf, record
from .errors import (
    ConfigError,
    ContractError,
    DegenerateRowError,
    ShapeMismatchError,
)


class ScoreCounter:
    """Counts attention score dot-products actually executed."""

    def __init__(self):
        self.count = 0

    def reset(self):
        self.count = 0

    def add(self, n: int):
        self.count += n


score_counter = ScoreCounter()


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_same_dtype(*ts: Tensor):
    dt = ts[0].dtype
    for t in ts[1:]:
        if t.dtype != dt:
            raise ContractError(
                f"mixed dtypes {dt.name} vs {t.dtype.name}; cast inputs first")


def _check_same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "add")
    _check_same_dtype(a, b)
    out = Tensor(a.data + b.data)
    return record("add", (a, b), out,
                  lambda x, y: x + y,
                  lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "sub")
    _check_same_dtype(a, b)
    out = Tensor(a.data - b.data)
    return record("sub", (a, b), out,
                  lambda x, y: x - y,
                  lambda g: (g, -g))


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    return record("neg", (a,), out, lambda x: -x, lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "mul")
    _check_same_dtype(a, b)
    out = Tensor(a.data * b.data)
    ad, bd = a.data, b.data
    return record("mul", (a, b), out,
                  lambda x, y: x * y,
                  lambda g: (g * bd, g * ad))


def divide(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "divide")
    _check_same_dtype(a, b)
    out = Tensor(a.data / b.data)
    ad, bd = a.data, b.data
    return record("divide", (a, b), out,
                  lambda x, y: x / y,
                  lambda g: (g / bd, -g * ad / (bd * bd)))


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; ties route the gradient to the first operand."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "minimum")
    _check_same_dtype(a, b)
    take_a = a.data <= b.data
    out = Tensor(np.where(take_a, a.data, b.data))
    return record("minimum", (a, b), out,
                  lambda x, y: np.where(x <= y, x, y),
                  lambda g: (g * take_a, g * ~take_a))


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; ties route the gradient to the first operand."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "maximum")
    _check_same_dtype(a, b)
    take_a = a.data >= b.data
    out = Tensor(np.where(take_a, a.data, b.data))
    return record("maximum", (a, b), out,
                  lambda x, y: np.where(x >= y, x, y),
                  lambda g: (g * take_a, g * ~take_a))


def add_scalar(a: Tensor, s: float) -> Tensor:
    s = a.dtype.type(s)
    out = Tensor(a.data + s)
    return record("add_scalar", (a,), out, lambda x: x + s, lambda g: (g,))


def mul_scalar(a: Tensor, s: float) -> Tensor:
    s = a.dtype.type(s)
    out = Tensor(a.data * s)
    return record("mul_scalar", (a,), out, lambda x: x * s, lambda g: (g * s,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out = Tensor(np.where(mask, a.data, 0))
    return record("relu", (a,), out,
                  lambda x: np.where(x > 0, x, 0),
                  lambda g: (g * mask,))


def exp(a: Tensor) -> Tensor:
    val = np.exp(a.data)
    out = Tensor(val)
    return record("exp", (a,), out, np.exp, lambda g: (g * val,))


# ---------------------------------------------------------------------------
# shape plumbing


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeMismatchError(f"cannot reshape {a.shape} to {shape}")
    old = a.shape
    out = Tensor(a.data.reshape(shape))
    return record("reshape", (a,), out,
                  lambda x: x.reshape(shape),
                  lambda g: (g.reshape(old),))


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeMismatchError(f"transpose expects a matrix, got {a.shape}")
    out = Tensor(np.ascontiguousarray(a.data.T))
    return record("transpose", (a,), out,
                  lambda x: np.ascontiguousarray(x.T),
                  lambda g: (np.ascontiguousarray(g.T),))


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ContractError("concat of an empty list")
    _check_same_dtype(*tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return record("concat", tuple(tensors), out,
                  lambda *xs: np.concatenate(xs, axis=axis),
                  lambda g: tuple(np.split(g, splits, axis=axis)))


def rows(a: Tensor, i0: int, i1: int) -> Tensor:
    if a.ndim != 2 or not (0 <= i0 < i1 <= a.shape[0]):
        raise ShapeMismatchError(f"rows[{i0}:{i1}] invalid for shape {a.shape}")
    out = Tensor(a.data[i0:i1].copy())
    n = a.shape[0]

    def bwd(g):
        full = np.zeros((n,) + g.shape[1:], dtype=g.dtype)
        full[i0:i1] = g
        return (full,)

    return record("rows", (a,), out, lambda x: x[i0:i1].copy(), bwd)


def cols(a: Tensor, j0: int, j1: int) -> Tensor:
    if a.ndim != 2 or not (0 <= j0 < j1 <= a.shape[1]):
        raise ShapeMismatchError(f"cols[{j0}:{j1}] invalid for shape {a.shape}")
    out = Tensor(a.data[:, j0:j1].copy())
    m = a.shape[1]

    def bwd(g):
        full = np.zeros((g.shape[0], m), dtype=g.dtype)
        full[:, j0:j1] = g
        return (full,)

    return record("cols", (a,), out, lambda x: x[:, j0:j1].copy(), bwd)


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)
    if a.ndim != 2:
        raise ShapeMismatchError(f"take_rows expects a matrix, got {a.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ContractError(f"take_rows index out of range for {a.shape}")
    out = Tensor(a.data[idx])
    n = a.shape[0]

    def bwd(g):
        full = np.zeros((n,) + g.shape[1:], dtype=g.dtype)
        np.add.at(full, idx, g)
        return (full,)

    return record("take_rows", (a,), out, lambda x: x[idx], bwd)


# ---------------------------------------------------------------------------
# reductions


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.asarray(a.data.sum(), dtype=a.dtype))
    shape = a.shape
    return record("sum_all", (a,), out,
                  lambda x: np.asarray(x.sum(), dtype=x.dtype),
                  lambda g: (np.full(shape, g, dtype=g.dtype),))


def mean_all(a: Tensor) -> Tensor:
    out = Tensor(np.asarray(a.data.mean(), dtype=a.dtype))
    shape, n = a.shape, a.size
    return record("mean_all", (a,), out,
                  lambda x: np.asarray(x.mean(), dtype=x.dtype),
                  lambda g: (np.full(shape, g / n, dtype=g.dtype),))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(
            f"matmul: inner dimensions disagree for {a.shape} x {b.shape}")
    _check_same_dtype(a, b)
    out = Tensor(a.data @ b.data)
    ad, bd = a.data, b.data
    return record("matmul", (a, b), out,
                  lambda x, y: x @ y,
                  lambda g: (g @ bd.T, ad.T @ g))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Row-broadcast add of a length-c bias onto an n-by-c matrix."""
    if x.ndim != 2 or b.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"add_bias: {x.shape} with bias {b.shape}")
    _check_same_dtype(x, b)
    out = Tensor(x.data + b.data[None, :])
    return record("add_bias", (x, b), out,
                  lambda xd, bd: xd + bd[None, :],
                  lambda g: (g, g.sum(axis=0)))


# ---------------------------------------------------------------------------
# normalizations


def softmax_rows(x: Tensor) -> Tensor:
    """Row softmax with exact zeros at masked entries.

    Entries at or below the sentinel (``neg_inf`` of the dtype) are
    excluded from the normalization and come out exactly 0; the rest are
    computed with row-max subtraction.
    """
    if x.ndim != 2:
        raise ShapeMismatchError(f"softmax_rows expects a matrix, got {x.shape}")
    xd = x.data
    sentinel = neg_inf(xd.dtype)
    masked = xd <= sentinel
    if masked.all(axis=1).any():
        bad = int(np.flatnonzero(masked.all(axis=1))[0])
        raise DegenerateRowError(f"row {bad} has no unmasked entry")
    rowmax = np.where(masked, -np.inf, xd).max(axis=1, keepdims=True)
    safe = np.where(masked, rowmax, xd)
    e = np.exp(safe - rowmax)
    e[masked] = 0.0
    p = e / e.sum(axis=1, keepdims=True)
    out = Tensor(p)

    def fwd(arr):
        m = arr <= sentinel
        rm = np.where(m, -np.inf, arr).max(axis=1, keepdims=True)
        ee = np.exp(np.where(m, rm, arr) - rm)
        ee[m] = 0.0
        return ee / ee.sum(axis=1, keepdims=True)

    def bwd(g):
        dot = (p * g).sum(axis=1, keepdims=True)
        return (p * (g - dot),)

    return record("softmax_rows", (x,), out, fwd, bwd)


def log_softmax_rows(x: Tensor) -> Tensor:
    """Numerically stable row log-softmax (no masking)."""
    if x.ndim != 2:
        raise ShapeMismatchError(
            f"log_softmax_rows expects a matrix, got {x.shape}")
    xd = x.data
    rowmax = xd.max(axis=1, keepdims=True)
    shifted = xd - rowmax
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    val = shifted - lse
    out = Tensor(val)
    p = np.exp(val)

    def fwd(arr):
        rm = arr.max(axis=1, keepdims=True)
        sh = arr - rm
        return sh - np.log(np.exp(sh).sum(axis=1, keepdims=True))

    def bwd(g):
        return (g - p * g.sum(axis=1, keepdims=True),)

    return record("log_softmax_rows", (x,), out, fwd, bwd)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-token normalization of an n-by-c matrix with channel affine."""
    if x.ndim != 2:
        raise ShapeMismatchError(f"layer_norm expects a matrix, got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeMismatchError(
            f"layer_norm affine shapes {gamma.shape}/{beta.shape} vs c={c}")
    if eps <= 0:
        raise ConfigError(f"layer_norm eps must be positive, got {eps}")
    _check_same_dtype(x, gamma, beta)
    xd, gd, bd = x.data, gamma.data, beta.data
    mu = xd.mean(axis=1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + xd.dtype.type(eps))
    xhat = xc * inv
    out = Tensor(xhat * gd[None, :] + bd[None, :])

    def fwd(xa, ga, ba):
        m = xa.mean(axis=1, keepdims=True)
        ctr = xa - m
        v = (ctr * ctr).mean(axis=1, keepdims=True)
        return ctr / np.sqrt(v + xa.dtype.type(eps)) * ga[None, :] + ba[None, :]

    def bwd(g):
        dgamma = (g * xhat).sum(axis=0)
        dbeta = g.sum(axis=0)
        dxhat = g * gd[None, :]
        dx = inv * (dxhat - dxhat.mean(axis=1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
        return dx, dgamma, dbeta

    return record("layer_norm", (x, gamma, beta), out, fwd, bwd)


# ---------------------------------------------------------------------------
# convolution and correlation


def _conv_geometry(extent: int, k: int, stride: int, pad: int) -> int:
    span = extent + 2 * pad - k
    if span < 0:
        raise ConfigError(
            f"kernel {k} exceeds padded extent {extent + 2 * pad}")
    if span % stride != 0:
        raise ConfigError(
            f"conv output size not exact: ({extent}+2*{pad}-{k}) % {stride} != 0")
    return span // stride + 1


def _im2col(xd: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    cin = xd.shape[0]
    xp = np.pad(xd, ((0, 0), (pad, pad), (pad, pad))) if pad else xd
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1], win.shape[2]
    cols = np.ascontiguousarray(win.transpose(1, 2, 0, 3, 4))
    return cols.reshape(ho * wo, cin * kh * kw), ho, wo


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1,
           pad: int = 0) -> Tensor:
    """2-D cross-correlation (no kernel flip) of a C_in-by-H-by-W map.

    Kernel layout is (C_out, C_in, kh, kw); output sizes must divide
    exactly, enforced by ``ConfigError``.
    """
    if x.ndim != 3 or w.ndim != 4:
        raise ShapeMismatchError(
            f"conv2d expects (C,H,W) and (Co,Ci,kh,kw), got {x.shape}, {w.shape}")
    if x.shape[0] != w.shape[1]:
        raise ShapeMismatchError(
            f"conv2d channel mismatch: input {x.shape} vs kernel {w.shape}")
    if stride < 1 or pad < 0:
        raise ConfigError(f"conv2d stride={stride}, pad={pad} invalid")
    parents = [x, w]
    if b is not None:
        if b.shape != (w.shape[0],):
            raise ShapeMismatchError(
                f"conv2d bias {b.shape} vs C_out={w.shape[0]}")
        _check_same_dtype(x, w, b)
        parents.append(b)
    else:
        _check_same_dtype(x, w)

    cin, h, wid = x.shape
    cout, _, kh, kw = w.shape
    ho = _conv_geometry(h, kh, stride, pad)
    wo = _conv_geometry(wid, kw, stride, pad)

    cols, _, _ = _im2col(x.data, kh, kw, stride, pad)
    w2 = w.data.reshape(cout, -1)
    out2 = cols @ w2.T
    if b is not None:
        out2 = out2 + b.data[None, :]
    out = Tensor(np.ascontiguousarray(out2.T.reshape(cout, ho, wo)))

    def fwd(*arrs):
        xa, wa = arrs[0], arrs[1]
        cls, _, _ = _im2col(xa, kh, kw, stride, pad)
        o2 = cls @ wa.reshape(cout, -1).T
        if len(arrs) == 3:
            o2 = o2 + arrs[2][None, :]
        return np.ascontiguousarray(o2.T.reshape(cout, ho, wo))

    def bwd(g):
        g2 = g.reshape(cout, ho * wo).T
        dw = (g2.T @ cols).reshape(w.shape)
        dcols = g2 @ w2
        dwin = dcols.reshape(ho, wo, cin, kh, kw)
        hp, wp = h + 2 * pad, wid + 2 * pad
        dxp = np.zeros((cin, hp, wp), dtype=g.dtype)
        for u in range(kh):
            for v in range(kw):
                dxp[:, u:u + (ho - 1) * stride + 1:stride,
                    v:v + (wo - 1) * stride + 1:stride] += \
                    dwin[:, :, :, u, v].transpose(2, 0, 1)
        dx = dxp[:, pad:pad + h, pad:pad + wid] if pad else dxp
        if b is not None:
            return dx, dw, g2.sum(axis=0)
        return dx, dw

    return record("conv2d", parents, out, fwd, bwd)


def dwc(fz: Tensor, fx: Tensor) -> Tensor:
    """Depth-wise valid cross-correlation of template over search.

    Each channel of the template map slides over the matching channel of
    the search map; output is (C, Hx-Hz+1, Wx-Wz+1).
    """
    if fz.ndim != 3 or fx.ndim != 3:
        raise ShapeMismatchError(
            f"dwc expects two (C,H,W) maps, got {fz.shape}, {fx.shape}")
    if fz.shape[0] != fx.shape[0]:
        raise ContractError(
            f"dwc channel mismatch: {fz.shape[0]} vs {fx.shape[0]}")
    if fz.shape[1] > fx.shape[1] or fz.shape[2] > fx.shape[2]:
        raise ContractError(
            f"template {fz.shape} larger than search {fx.shape}")
    _check_same_dtype(fz, fx)
    c, hz, wz = fz.shape
    ho = fx.shape[1] - hz + 1
    wo = fx.shape[2] - wz + 1

    win = sliding_window_view(fx.data, (hz, wz), axis=(1, 2))
    out = Tensor(np.einsum("chwuv,cuv->chw", win, fz.data, optimize=True))
    zd, xd = fz.data, fx.data

    def fwd(za, xa):
        wv = sliding_window_view(xa, (hz, wz), axis=(1, 2))
        return np.einsum("chwuv,cuv->chw", wv, za, optimize=True)

    def bwd(g):
        wv = sliding_window_view(xd, (hz, wz), axis=(1, 2))
        dz = np.einsum("chw,chwuv->cuv", g, wv, optimize=True)
        dx = np.zeros_like(xd)
        for u in range(hz):
            for v in range(wz):
                dx[:, u:u + ho, v:v + wo] += g * zd[:, u, v][:, None, None]
        return dz, dx

    return record("dwc", (fz, fx), out, fwd, bwd)


# ---------------------------------------------------------------------------
# attention kernels


def lra_attend_raw(qd: np.ndarray, kd: np.ndarray, vd: np.ndarray, scope,
                   saved: list | None = None) -> np.ndarray:
    """Scoped attention kernel over pre-embedded arrays.

    Scores are unscaled dot products computed only inside each query's
    window, bucketed by window size so no n-by-n buffer ever exists.
    The executed dot-product count is added to ``score_counter``.
    """
    out = np.empty((scope.size, vd.shape[1]), dtype=qd.dtype)
    for q_idx, k_idx in scope.buckets:
        qb = qd[q_idx]
        kb = kd[k_idx]
        s = np.einsum("ic,imc->im", qb, kb, optimize=True)
        score_counter.add(s.size)
        s = s - s.max(axis=1, keepdims=True)
        e = np.exp(s)
        p = e / e.sum(axis=1, keepdims=True)
        out[q_idx] = np.einsum("im,imd->id", p, vd[k_idx], optimize=True)
        if saved is not None:
            saved.append((q_idx, k_idx, p))
    return out


def global_attend_raw(qd: np.ndarray, kd: np.ndarray, vd: np.ndarray,
                      scale: float) -> np.ndarray:
    """Dense softmax attention kernel (the O(n^2) counterpart)."""
    s = (qd @ kd.T) * scale
    s = s - s.max(axis=1, keepdims=True)
    e = np.exp(s)
    p = e / e.sum(axis=1, keepdims=True)
    return p @ vd


def local_attend(q: Tensor, k: Tensor, v: Tensor, scope) -> Tensor:
    """Differentiable scoped attention: softmax(q.k within scope) @ v.

    ``q`` and ``k`` are n-by-c embedded sequences over the scope's grid;
    ``v`` is n-by-d.  Never materializes an n-by-n score buffer.
    """
    n = scope.size
    if q.ndim != 2 or q.shape[0] != n:
        raise ContractError(
            f"query shape {q.shape} does not match scope grid of {n} tokens")
    _check_same_shape(q, k, "local_attend(q,k)")
    if k.shape[0] != v.shape[0]:
        raise ContractError(
            f"key/value token counts differ: {k.shape} vs {v.shape}")
    _check_same_dtype(q, k, v)

    saved: list = []
    out = Tensor(lra_attend_raw(q.data, k.data, v.data, scope, saved))
    qd, kd, vd = q.data, k.data, v.data

    def fwd(qa, ka, va):
        return lra_attend_raw(qa, ka, va, scope)

    def bwd(g):
        dq = np.zeros_like(qd)
        dk = np.zeros_like(kd)
        dv = np.zeros_like(vd)
        for q_idx, k_idx, p in saved:
            go = g[q_idx]
            vb = vd[k_idx]
            dp = np.einsum("id,imd->im", go, vb, optimize=True)
            np.add.at(dv, k_idx, p[:, :, None] * go[:, None, :])
            ds = p * (dp - (p * dp).sum(axis=1, keepdims=True))
            dq[q_idx] += np.einsum("im,imc->ic", ds, kd[k_idx], optimize=True)
            np.add.at(dk, k_idx, ds[:, :, None] * qd[q_idx][:, None, :])
        return dq, dk, dv

    return record("local_attend", (q, k, v), out, fwd, bwd)


def apply_score_mask(s: Tensor, allowed: np.ndarray) -> Tensor:
    """Replace disallowed score entries with the masking sentinel."""
    allowed = np.asarray(allowed, dtype=bool)
    if allowed.shape != s.shape:
        raise ShapeMismatchError(
            f"mask shape {allowed.shape} vs scores {s.shape}")
    sentinel = neg_inf(s.dtype)
    out = Tensor(np.where(allowed, s.data, sentinel))
    return record("apply_score_mask", (s,), out,
                  lambda x: np.where(allowed, x, sentinel),
                  lambda g: (g * allowed,))


# ---------------------------------------------------------------------------
# losses


def _sigmoid(z: np.ndarray) -> np.ndarray:
    pos = z >= 0
    out = np.empty_like(z)
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_with_logits(z: Tensor, y: np.ndarray) -> Tensor:
    """Elementwise binary cross-entropy against constant targets.

    Stable form max(z,0) - z*y + log1p(exp(-|z|)); gradient is
    sigmoid(z) - y.
    """
    y = np.asarray(y, dtype=z.dtype)
    if y.shape != z.shape:
        raise ShapeMismatchError(f"targets {y.shape} vs logits {z.shape}")
    zd = z.data
    val = np.maximum(zd, 0) - zd * y + np.log1p(np.exp(-np.abs(zd)))
    out = Tensor(val)
    sig = _sigmoid(zd)

    def fwd(za):
        return np.maximum(za, 0) - za * y + np.log1p(np.exp(-np.abs(za)))

    def bwd(g):
        return (g * (sig - y),)

    return record("bce_with_logits", (z,), out, fwd, bwd)


# ---------------------------------------------------------------------------
# token / map conversions (composed, differentiable)


def tokens_from_map(x: Tensor) -> Tensor:
    """(C, H, W) feature map -> (H*W, C) row-major token sequence."""
    if x.ndim != 3:
        raise ShapeMismatchError(f"tokens_from_map expects (C,H,W), got {x.shape}")
    c, h, w = x.shape
    return transpose(reshape(x, (c, h * w)))


def map_from_tokens(x: Tensor, h: int, w: int) -> Tensor:
    """(H*W, C) token sequence -> (C, H, W) feature map."""
    if x.ndim != 2 or x.shape[0] != h * w:
        raise ShapeMismatchError(
            f"map_from_tokens: {x.shape} does not hold a {h}x{w} grid")
    return reshape(transpose(x), (x.shape[1], h, w))


# ---------------------------------------------------------------------------
# operator sugar on Tensor

Tensor.__add__ = add
Tensor.__sub__ = sub
Tensor.__mul__ = mul
Tensor.__neg__ = neg
Tensor.__matmul__ = matmul
Tensor.__truediv__ = divide
