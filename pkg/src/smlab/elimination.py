"""Symbolic elimination with exact per-pivot work, fill and the tree cost model.

Eliminating a pivot with ``z - 1`` uneliminated neighbours costs ``(z-1) z``
subtractions and joins those neighbours into a clique.  The uneliminated
neighbours of a pivot are exactly its later neighbours in the filled graph,
so ``z - 1`` is the column count of the symbolic Cholesky factor; it is
computed from the elimination tree and row subtrees.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .basis import OverlapGraph


@dataclass(frozen=True, eq=False)
class EliminationReport:
    order: np.ndarray
    per_pivot_z: np.ndarray
    fill_edges: int
    total_subtractions: int
    peak_front: int
    n_vars: int

    def __eq__(self, other) -> bool:
        if not isinstance(other, EliminationReport):
            return NotImplemented
        return (np.array_equal(self.order, other.order)
                and np.array_equal(self.per_pivot_z, other.per_pivot_z)
                and self.fill_edges == other.fill_edges
                and self.total_subtractions == other.total_subtractions
                and self.peak_front == other.peak_front)

    def mismatch(self, other: "EliminationReport") -> list[str]:
        out = []
        for name in ("fill_edges", "total_subtractions", "peak_front"):
            a, b = getattr(self, name), getattr(other, name)
            if a != b:
                out.append(f"{name}: {a} != {b}")
        if not np.array_equal(self.per_pivot_z, other.per_pivot_z):
            out.append("per-pivot z sequences differ")
        return out

    def csv_row(self, mesh_id: str, strategy: str) -> list:
        return [mesh_id, strategy, self.n_vars, self.fill_edges,
                self.total_subtractions, self.peak_front]


CSV_HEADER = ["mesh_id", "strategy", "n_vars", "fill", "total_subtractions", "peak_front"]


def report_csv(rows, header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _check_order(order, n) -> np.ndarray:
    order = np.asarray(order, dtype=np.int64).ravel()
    if len(order) != n:
        raise ValueError(f"ordering has length {len(order)}, graph has {n} variables")
    seen = np.zeros(n, dtype=bool)
    if n and (order.min() < 0 or order.max() >= n):
        raise ValueError("ordering entry out of range")
    seen[order] = True
    if not seen.all():
        raise ValueError("ordering is not a permutation")
    return order


def _factor(g: OverlapGraph, order: np.ndarray, node_of_pos=None, n_nodes: int = 0):
    pos = np.empty(g.n, dtype=np.int64)
    pos[order] = np.arange(g.n)
    cp = pos[g.clq_vars]
    if node_of_pos is None:
        node_of_pos = np.full(g.n, -1, dtype=np.int64)
    return _kernels.symbolic_factor(g.n, g.clq_ptr, cp, node_of_pos, n_nodes)


def symbolic_eliminate(g: OverlapGraph, order) -> EliminationReport:
    """Exact elimination statistics of ``g`` under ``order``."""
    order = _check_order(order, g.n)
    _, colcount, _ = _factor(g, order)
    z = colcount + 1
    nnz_l = int(colcount.sum())
    fill = nnz_l - g.n_edges
    total = int(np.sum(colcount * (colcount + 1)))
    order.setflags(write=False)
    z.setflags(write=False)
    return EliminationReport(order, z, fill, total, int(z.max()) if g.n else 0, g.n)


def flops_removal(a: int, b: int) -> int:
    """Sum over ``i = 1..a`` of ``(b - i)(b - i + 1)``, in closed form."""
    a, b = int(a), int(b)
    if a < 0 or b < 0:
        raise ValueError("a and b must be non-negative")
    if a > b:
        raise ValueError(f"a = {a} exceeds b = {b}")
    # sum_{k=m}^{b-1} k(k+1) with m = b - a, and sum_{k=0}^{n-1} k(k+1) = (n-1)n(n+1)/3
    return ((b - 1) * b * (b + 1) - (b - a - 1) * (b - a) * (b - a + 1)) // 3


def tree_cost(t, g: OverlapGraph) -> int:
    """Recursive cost: every node adds ``flops_removal(a, a + b_ext)``.

    ``a`` counts variables assigned to the node, ``b_ext`` the variables
    outside the node adjacent to its variables once its subtree has been
    eliminated (filled-graph neighbours).  Leaves are charged like any other
    node.
    """
    if g.n != t.n_vars:
        raise ValueError("tree and graph disagree on the number of variables")
    from .partition import ordering_from_tree
    order = ordering_from_tree(t, g)
    node_of_pos = t.var_node[order]
    _, _, bext = _factor(g, order, node_of_pos, t.n_nodes)
    a = t.assigned_counts
    b = a + bext[: t.n_nodes]
    return int(sum(flops_removal(int(x), int(y)) for x, y in zip(a, b) if x))


def tree_cost_terms(t, g: OverlapGraph) -> tuple[np.ndarray, np.ndarray]:
    """Per-node ``(a, b)`` pairs used by :func:`tree_cost`."""
    from .partition import ordering_from_tree
    order = ordering_from_tree(t, g)
    _, _, bext = _factor(g, order, t.var_node[order], t.n_nodes)
    a = t.assigned_counts
    return a, a + bext[: t.n_nodes]


def dense_oracle_eliminate(pattern, order) -> EliminationReport:
    """Pivot-by-pivot elimination on a dense boolean matrix.

    An entry once set stays non-zero.  Intended for a few hundred variables.
    """
    M = np.array(pattern, dtype=bool)
    n = M.shape[0]
    if M.ndim != 2 or M.shape[1] != n:
        raise ValueError("pattern must be square")
    if not np.array_equal(M, M.T):
        raise ValueError("pattern must be symmetric")
    order = _check_order(order, n)
    np.fill_diagonal(M, True)
    alive = np.ones(n, dtype=bool)
    z = np.zeros(n, dtype=np.int64)
    fill = 0
    for k, v in enumerate(order):
        alive[v] = False
        nb = np.flatnonzero(M[v] & alive)
        z[k] = 1 + len(nb)
        if len(nb) > 1:
            block = M[np.ix_(nb, nb)]
            fill += int((~block).sum()) // 2
            M[np.ix_(nb, nb)] = True
    total = int(np.sum((z - 1) * z))
    return EliminationReport(order, z, fill, total, int(z.max()) if n else 0, n)
