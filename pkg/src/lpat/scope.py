"""Per-query local windows on a token grid.

Tokens index an H-by-W grid row-major: token i sits at
(row, col) = (i // W, i % W).  The scope of a query is the set of tokens
whose cell lies inside the k-by-k window centered on the query's cell,
clipped at the borders (no padding tokens).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ContractError


class ScopeMask:
    """Window membership for every token of an H-by-W grid.

    ``buckets`` groups queries by window size so attention kernels can
    run rectangular gathers: each entry is ``(q_idx, k_idx)`` with
    ``q_idx`` of shape (n_b,) and ``k_idx`` of shape (n_b, m_b).
    ``total_scope`` is the exact number of (query, key) pairs.
    """

    def __init__(self, height: int, width: int, window: int):
        if height < 1 or width < 1:
            raise ConfigError(f"grid {height}x{width} must be at least 1x1")
        if window < 1 or window % 2 == 0:
            raise ConfigError(f"window size must be odd and >= 1, got {window}")
        self.height = height
        self.width = width
        self.window = window
        self.size = height * width

        half = window // 2
        row_lo = [max(0, r - half) for r in range(height)]
        row_hi = [min(height - 1, r + half) for r in range(height)]
        col_lo = [max(0, c - half) for c in range(width)]
        col_hi = [min(width - 1, c + half) for c in range(width)]

        self._scopes: list[np.ndarray] = []
        sizes = np.empty(self.size, dtype=np.intp)
        for i in range(self.size):
            r, c = divmod(i, width)
            rr = np.arange(row_lo[r], row_hi[r] + 1, dtype=np.intp)
            cc = np.arange(col_lo[c], col_hi[c] + 1, dtype=np.intp)
            idx = (rr[:, None] * width + cc[None, :]).ravel()
            self._scopes.append(idx)
            sizes[i] = idx.size
        self.sizes = sizes
        self.total_scope = int(sizes.sum())

        self.buckets: list[tuple[np.ndarray, np.ndarray]] = []
        for m in np.unique(sizes):
            q_idx = np.flatnonzero(sizes == m)
            k_idx = np.stack([self._scopes[i] for i in q_idx])
            self.buckets.append((q_idx, k_idx))

    def scope(self, i: int) -> np.ndarray:
        """Sorted token indices visible to query ``i``."""
        if not 0 <= i < self.size:
            raise ContractError(f"token {i} outside grid of {self.size}")
        return self._scopes[i]

    def dense_mask(self) -> np.ndarray:
        """Boolean n-by-n membership matrix (for oracles and tests)."""
        mask = np.zeros((self.size, self.size), dtype=bool)
        for i, idx in enumerate(self._scopes):
            mask[i, idx] = True
        return mask

    def covers_grid(self) -> bool:
        """True when every window spans the whole grid."""
        return self.window >= 2 * max(self.height, self.width) - 1

    def __repr__(self) -> str:
        return (f"ScopeMask({self.height}x{self.width}, k={self.window}, "
                f"pairs={self.total_scope})")


def build_scope(height: int, width: int, window: int) -> ScopeMask:
    """Construct the k-by-k clipped window scope for an H-by-W grid."""
    return ScopeMask(height, width, window)
