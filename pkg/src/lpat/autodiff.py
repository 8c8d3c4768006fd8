"""Dense tensors with a reverse-mode tape.

Values are numpy arrays in row-major (C) layout, float32 or float64.
Operations from :mod:`lpat.ops` evaluate eagerly; they are additionally
recorded when (and only when) a ``Graph`` is active::

    with Graph() as g:
        loss = ops.sum_all(ops.matmul(a, b))
    grads = g.backward(loss)

Recorded tensors must never be mutated.  Leaf buffers (parameters) may
be updated in place between tapes; that is how the optimizer and the
finite-difference checker work.  Only one graph records at a time.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError

DEFAULT_DTYPE = np.float32

_SUPPORTED = (np.dtype(np.float32), np.dtype(np.float64))


def neg_inf(dtype) -> float:
    """Masking sentinel: the most negative finite value of ``dtype``.

    Score entries at or below this value are treated as masked by
    ``ops.softmax_rows`` and become exactly zero after normalization.
    """
    return float(np.finfo(np.dtype(dtype)).min)


class Tensor:
    """A dense value, optionally attached to the recording graph."""

    __slots__ = ("data", "node")

    def __init__(self, data, dtype=None):
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        else:
            arr = np.asarray(data)
            if arr.dtype not in _SUPPORTED:
                arr = arr.astype(np.float64)
        if arr.dtype not in _SUPPORTED:
            raise ContractError(f"unsupported dtype {arr.dtype}; use f32 or f64")
        self.data = arr
        self.node: Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        kind = "leaf" if self.node is None else self.node.op
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, {kind})"

    # Arithmetic dunders are attached by lpat.ops at import time.


class Node:
    """One recorded operation: output, parents, and its adjoint."""

    __slots__ = ("op", "parents", "out", "fwd", "bwd", "graph")

    def __init__(self, op: str, parents: tuple[Tensor, ...], out: Tensor,
                 fwd: Callable, bwd: Callable, graph: "Graph"):
        self.op = op
        self.parents = parents
        self.out = out
        self.fwd = fwd
        self.bwd = bwd
        self.graph = graph


_active: list["Graph"] = []


class Graph:
    """Tape of operations in forward execution order.

    The recording order is a valid topological order of the compute
    DAG, so the backward pass is a single reverse sweep.  Saved
    activations are held eagerly by each node's closures.
    """

    def __init__(self):
        self.entries: list[Node] = []

    def __enter__(self) -> "Graph":
        if _active:
            raise ContractError("a graph is already recording")
        _active.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _active.pop()
        return False

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        return backward(self, loss)

    def replay(self) -> list[np.ndarray]:
        """Re-execute every recorded op on the current leaf values.

        Returns the recomputed output arrays in recording order without
        touching the recorded tensors.  With unchanged leaves the replay
        is bit-identical to the original forward pass.
        """
        env: dict[int, np.ndarray] = {}
        outs = []
        for node in self.entries:
            args = [env.get(id(p), p.data) for p in node.parents]
            val = node.fwd(*args)
            env[id(node.out)] = val
            outs.append(val)
        return outs


def active_graph() -> Graph | None:
    return _active[-1] if _active else None


def record(op: str, parents: Sequence[Tensor], out: Tensor,
           fwd: Callable, bwd: Callable) -> Tensor:
    g = active_graph()
    if g is not None:
        node = Node(op, tuple(parents), out, fwd, bwd, g)
        out.node = node
        g.entries.append(node)
    return out


def backward(graph: Graph, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse-accumulate gradients of a scalar loss over ``graph``.

    Returns a map from each reachable leaf tensor to its gradient
    (same shape as the leaf).  The seed d(loss)/d(loss) is 1.
    """
    if loss.node is None or loss.node.graph is not graph:
        raise ContractError("loss is not a node recorded on this graph")
    if loss.data.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    grads: dict[Tensor, np.ndarray] = {loss: np.ones_like(loss.data)}
    for node in reversed(graph.entries):
        gout = grads.get(node.out)
        if gout is None:
            continue
        pgrads = node.bwd(gout)
        for parent, g in zip(node.parents, pgrads):
            if g is None:
                continue
            acc = grads.get(parent)
            grads[parent] = g if acc is None else acc + g
    return {t: g for t, g in grads.items()
            if t.node is None or t.node.graph is not graph}
