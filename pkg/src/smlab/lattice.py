"""Integer-lattice helpers shared by the mesh, basis and matrix modules.

All geometry lives on the ``2**R`` lattice of the unit hypercube.  Rows of
non-negative integers are packed into sortable keys so that membership and
lookup reduce to ``np.searchsorted``.
"""
from __future__ import annotations

import itertools

import numpy as np


def pack_rows(rows: np.ndarray, bits: int) -> np.ndarray:
    """Pack an ``(n, m)`` array of non-negative ints into one key per row.

    Each column must be ``< 2**bits``.  Rows fit in an ``int64`` when
    ``m * bits <= 62``; otherwise big-endian bytes are viewed as a void
    dtype, which numpy sorts and searches lexicographically.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.ndim != 2:
        raise ValueError("rows must be two-dimensional")
    n, m = rows.shape
    bits = max(int(bits), 1)
    if m * bits <= 62 and bits < 64:
        key = np.zeros(n, dtype=np.int64)
        for col in range(m):
            key |= rows[:, col] << (bits * (m - 1 - col))
        return key
    be = np.ascontiguousarray(rows.astype(">i8"))
    return be.view(np.dtype((np.void, 8 * m))).ravel()


def pack_fields(cols: np.ndarray, widths) -> np.ndarray:
    """Like :func:`pack_rows` with a separate bit width per column."""
    cols = np.asarray(cols, dtype=np.int64)
    widths = [max(int(w), 1) for w in widths]
    if sum(widths) <= 62:
        key = np.zeros(len(cols), dtype=np.int64)
        shift = sum(widths)
        for c, w in enumerate(widths):
            shift -= w
            key |= cols[:, c] << shift
        return key
    return pack_rows(cols, 64)


def adjacent_differ(sorted_keys: np.ndarray) -> np.ndarray:
    """``sorted_keys[1:] != sorted_keys[:-1]`` for int or void keys."""
    if sorted_keys.dtype.kind == "V":
        raw = sorted_keys.view(np.uint8).reshape(len(sorted_keys), -1)
        return np.any(raw[1:] != raw[:-1], axis=1)
    return sorted_keys[1:] != sorted_keys[:-1]


def corner_offsets(d: int) -> np.ndarray:
    """All ``2**d`` 0/1 offset vectors, first axis varying slowest."""
    if d == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.int64)


class LeafIndex:
    """Point location over the leaves of a dyadic mesh.

    ``locate(points, sides)`` returns, for each query, the leaf that covers
    ``point + eps * sides`` (``sides`` entries are +1 or -1), or -1 when the
    shifted point leaves the domain.
    """

    def __init__(self, levels: np.ndarray, anchors: np.ndarray, R: int):
        self.R = int(R)
        self.d = anchors.shape[1]
        self._levels = {}
        for lev in np.unique(levels):
            lev = int(lev)
            ids = np.flatnonzero(levels == lev)
            idx = anchors[ids] >> (self.R - lev)
            keys = pack_rows(idx, lev)
            order = np.argsort(keys, kind="stable")
            self._levels[lev] = (keys[order], ids[order])

    @property
    def present_levels(self) -> list[int]:
        return sorted(self._levels)

    def lookup(self, lev: int, idx: np.ndarray) -> np.ndarray:
        """Element ids of level-``lev`` leaves with index coords ``idx`` (-1 if absent)."""
        out = np.full(len(idx), -1, dtype=np.int64)
        if lev not in self._levels or len(idx) == 0:
            return out
        keys, ids = self._levels[lev]
        inside = np.all((idx >= 0) & (idx < (1 << lev)), axis=1)
        if not inside.any():
            return out
        q = pack_rows(idx[inside], lev)
        pos = np.searchsorted(keys, q)
        pos_c = np.minimum(pos, len(keys) - 1)
        hit = keys[pos_c] == q
        sub = np.full(len(q), -1, dtype=np.int64)
        sub[hit] = ids[pos_c[hit]]
        out[inside] = sub
        return out

    def locate(self, points: np.ndarray, sides: np.ndarray,
               max_level: np.ndarray | None = None,
               min_level: np.ndarray | None = None) -> np.ndarray:
        points = np.asarray(points, dtype=np.int64)
        sides = np.asarray(sides, dtype=np.int64)
        n = len(points)
        result = np.full(n, -1, dtype=np.int64)
        if n == 0:
            return result
        shifted = points - (sides < 0)
        pending = np.ones(n, dtype=bool)
        for lev in sorted(self._levels, reverse=True):
            cand = pending.copy()
            if max_level is not None:
                cand &= max_level >= lev
            if min_level is not None:
                cand &= min_level <= lev
            if not cand.any():
                continue
            sel = np.flatnonzero(cand)
            found = self.lookup(lev, shifted[sel] >> (self.R - lev))
            ok = found >= 0
            result[sel[ok]] = found[ok]
            pending[sel[ok]] = False
            if not pending.any():
                break
        return result
