"""Element face-adjacency and FEM sparsity patterns, MatrixMarket I/O."""
from __future__ import annotations

import io
import itertools
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .basis import OverlapGraph
from .mesh import Mesh

MM_HEADER_SYM = "%%MatrixMarket matrix coordinate pattern symmetric"
MM_HEADER_GEN = "%%MatrixMarket matrix coordinate pattern general"


@dataclass(frozen=True, eq=False)
class SparsePattern:
    """Boolean sparsity pattern; ``rows``/``cols`` sorted row-major, diagonal included."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    symmetric: bool

    @classmethod
    def from_pairs(cls, n: int, rows, cols, symmetric: bool | None = None) -> "SparsePattern":
        """Deduplicate, add the diagonal and optionally symmetrize.

        With ``symmetric=None`` the flag is detected from the entries.
        """
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        if len(rows) != len(cols):
            raise ValueError("rows and cols differ in length")
        if len(rows) and (min(rows.min(), cols.min()) < 0 or max(rows.max(), cols.max()) >= n):
            raise ValueError("entry out of range")
        diag = np.arange(n, dtype=np.int64)
        if symmetric:
            rows, cols = np.concatenate([rows, cols]), np.concatenate([cols, rows])
        key = np.unique(np.concatenate([rows, diag]) * n + np.concatenate([cols, diag]))
        r, c = np.divmod(key, n) if n else (key, key)
        if symmetric is None:
            tkey = np.sort(c * n + r)
            symmetric = bool(np.array_equal(tkey, key))
        r.setflags(write=False)
        c.setflags(write=False)
        return cls(int(n), r, c, bool(symmetric))

    @property
    def nnz(self) -> int:
        return len(self.rows)

    @property
    def entries(self) -> np.ndarray:
        return np.column_stack([self.rows, self.cols])

    def is_symmetric(self) -> bool:
        key = self.rows * self.n + self.cols
        return bool(np.array_equal(np.sort(self.cols * self.n + self.rows), key))

    def has_full_diagonal(self) -> bool:
        return int(np.count_nonzero(self.rows == self.cols)) == self.n

    def to_scipy(self) -> sparse.csr_matrix:
        data = np.ones(self.nnz, dtype=np.int8)
        return sparse.csr_matrix((data, (self.rows, self.cols)), shape=(self.n, self.n))

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n), dtype=bool)
        out[self.rows, self.cols] = True
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparsePattern):
            return NotImplemented
        return (self.n == other.n and self.symmetric == other.symmetric
                and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.cols, other.cols))


def element_adjacency_matrix(m: Mesh) -> SparsePattern:
    """Elements joined when their boxes share a (d-1)-face piece of positive measure.

    Each leaf looks across each of its 2d faces for a leaf at most as fine
    as itself; finer neighbours find the pair from their side.
    """
    n, d = len(m), m.d
    sizes = m.sizes
    idx = m.leaf_index
    rows, cols = [], []
    for a, side in itertools.product(range(d), (-1, 1)):
        pts = m.anchors.copy()
        if side > 0:
            pts[:, a] += sizes
        sides = np.ones((n, d), dtype=np.int64)
        sides[:, a] = side
        found = idx.locate(pts, sides, max_level=m.levels)
        ok = found >= 0
        rows.append(np.flatnonzero(ok))
        cols.append(found[ok])
    return SparsePattern.from_pairs(n, np.concatenate(rows), np.concatenate(cols), symmetric=True)


def fem_pattern(g: OverlapGraph) -> SparsePattern:
    """Initial matrix pattern: overlap edges plus the diagonal."""
    e = g.edges()
    return SparsePattern.from_pairs(g.n, e[:, 0], e[:, 1], symmetric=True)


def matrix_market_text(p: SparsePattern) -> str:
    """MatrixMarket coordinate text, entries sorted by (col, row), 1-based."""
    if p.symmetric:
        keep = p.rows >= p.cols
        r, c = p.rows[keep], p.cols[keep]
        header = MM_HEADER_SYM
    else:
        r, c = p.rows, p.cols
        header = MM_HEADER_GEN
    order = np.lexsort((r, c))
    r, c = r[order] + 1, c[order] + 1
    buf = io.StringIO()
    buf.write(f"{header}\n{p.n} {p.n} {len(r)}\n")
    if len(r):
        np.savetxt(buf, np.column_stack([r, c]), fmt="%d")
    return buf.getvalue()


def export_matrix_market(p: SparsePattern, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(matrix_market_text(p))


def read_matrix_market(path) -> SparsePattern:
    """Read a coordinate pattern file written by :func:`export_matrix_market`."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("%%MatrixMarket matrix coordinate pattern"):
            raise ValueError(f"unsupported MatrixMarket header: {header!r}")
        symmetric = header.split()[-1] == "symmetric"
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        nr, nc, nnz = (int(v) for v in line.split())
        if nr != nc:
            raise ValueError("pattern must be square")
        data = np.loadtxt(fh, dtype=np.int64, ndmin=2) if nnz else np.zeros((0, 2), np.int64)
    if len(data) != nnz:
        raise ValueError(f"expected {nnz} entries, read {len(data)}")
    return SparsePattern.from_pairs(nr, data[:, 0] - 1, data[:, 1] - 1,
                                    symmetric=True if symmetric else False)
