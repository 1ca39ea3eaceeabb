"""Basis-function carriers (vertices, edges, faces, ..., interiors) and the overlap graph.

Every k-dimensional face of every leaf is an entity.  An entity lying inside
a face of a coarser leaf is *hanging*: it carries no variable of its own and
its would-be support is absorbed into the supports of the entities that
constrain it (the variable-carrying faces of the smallest face of the
coarsest leaf containing it, resolved recursively).

Faces are encoded per axis as 0 (fixed at the low side), 1 (fixed at the
high side) or 2 (extended).  An entity is keyed by ``(level, mask, lo)``
where ``mask`` marks the extended axes.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import numpy as np

from . import _kernels
from .lattice import adjacent_differ, pack_fields
from .mesh import Mesh, MeshError


@dataclass(frozen=True)
class NodeEntity:
    """One basis-function carrier.

    ``lo``/``hi`` give the closed extent in lattice units; ``support`` the
    sorted element ids of the (absorbed) support.
    """

    kind: int
    lo: tuple[int, ...]
    hi: tuple[int, ...]
    support: tuple[int, ...]
    var_count: int
    first_var: int

    @property
    def extent(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return self.lo, self.hi


def _patterns(d: int, with_extended: bool) -> np.ndarray:
    vals = (0, 1, 2) if with_extended else (0, 1)
    return np.array(list(itertools.product(vals, repeat=d)), dtype=np.int64).reshape(-1, d)


def _key_widths(R: int, d: int) -> list[int]:
    return [6, d] + [R + 1] * d


def _entity_keys(levels, masks, los, R, d):
    return pack_fields(np.column_stack([levels, masks, los]), _key_widths(R, d))


def _var_count(kind: np.ndarray, p: int) -> np.ndarray:
    out = np.where(kind == 0, 1, (p - 1) ** kind.astype(np.int64))
    return out.astype(np.int64)


class NodeSet:
    """All unconstrained entities of a mesh with their absorbed supports.

    Array fields (one row per entity, sorted by kind then ``lo`` then extent):
    ``kind``, ``lo``, ``hi``, ``var_count``, ``var_offset``.  The
    entity-element incidence is kept per element (``elem_ptr``/``elem_ents``)
    and transposed on demand into supports (``sup_ptr``/``sup_elems``).
    """

    def __init__(self, mesh: Mesh, kind, lo, hi, elem_ptr, elem_ents, n_hanging: int,
                 geo_ents=None):
        self.mesh = mesh
        self.p = mesh.p
        self.kind = kind
        self.lo = lo
        self.hi = hi
        self.elem_ptr = elem_ptr
        self.elem_ents = elem_ents
        self.n_hanging = n_hanging
        # per element, the unconstrained entities that are exact faces of it (-1 = hanging)
        self.geo_ents = geo_ents
        self.var_count = _var_count(kind, mesh.p)
        self.var_offset = np.concatenate([[0], np.cumsum(self.var_count)]).astype(np.int64)
        for arr in (kind, lo, hi, elem_ptr, elem_ents, self.var_count, self.var_offset):
            arr.setflags(write=False)

    @cached_property
    def _supports(self) -> tuple[np.ndarray, np.ndarray]:
        elem = np.repeat(np.arange(len(self.elem_ptr) - 1, dtype=np.int64),
                         np.diff(self.elem_ptr))
        o = np.argsort(self.elem_ents, kind="stable")
        ptr = np.searchsorted(self.elem_ents[o], np.arange(len(self) + 1)).astype(np.int64)
        return ptr, elem[o]

    @cached_property
    def geometric_cliques(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR (ptr, entities) of each element's own unconstrained faces, before absorption."""
        if self.geo_ents is None:
            raise ValueError("node set was built without geometric incidence")
        keep = self.geo_ents >= 0
        ptr = np.concatenate([[0], np.cumsum(keep.sum(axis=1))]).astype(np.int64)
        return ptr, self.geo_ents[keep]

    @property
    def sup_ptr(self) -> np.ndarray:
        return self._supports[0]

    @property
    def sup_elems(self) -> np.ndarray:
        return self._supports[1]

    def __len__(self) -> int:
        return len(self.kind)

    @property
    def n_vars(self) -> int:
        return int(self.var_offset[-1])

    def support(self, i: int) -> np.ndarray:
        return self.sup_elems[self.sup_ptr[i]:self.sup_ptr[i + 1]]

    def __getitem__(self, i: int) -> NodeEntity:
        return NodeEntity(int(self.kind[i]), tuple(int(v) for v in self.lo[i]),
                          tuple(int(v) for v in self.hi[i]),
                          tuple(int(v) for v in self.support(i)),
                          int(self.var_count[i]), int(self.var_offset[i]))

    def __iter__(self) -> Iterator[NodeEntity]:
        for i in range(len(self)):
            yield self[i]

    @cached_property
    def var_entity(self) -> np.ndarray:
        return np.repeat(np.arange(len(self), dtype=np.int64), self.var_count)

    def on_domain_boundary(self, skip_low_axes: tuple[int, ...] = ()) -> np.ndarray:
        """Entities lying in a domain-boundary hyperplane.

        Hyperplanes ``x_a = 0`` for ``a`` in ``skip_low_axes`` are ignored.
        """
        top = 1 << self.mesh.R
        flat = self.lo == self.hi
        low = flat & (self.lo == 0)
        if skip_low_axes:
            low[:, list(skip_low_axes)] = False
        high = flat & (self.hi == top)
        return (low | high).any(axis=1)


def _instance_keys(m: Mesh, pats: np.ndarray) -> np.ndarray:
    """Entity key of every (element, face pattern) pair, element-major."""
    d, R = m.d, m.R
    ext = pats == 2
    kind = ext.sum(axis=1)
    mask = (ext * (1 << np.arange(d - 1, -1, -1))).sum(axis=1)
    sizes = m.sizes
    widths = _key_widths(R, d)
    if sum(widths) <= 62:
        # packing is linear in the fields, so keys add up
        lo_key = pack_fields(m.anchors, widths[2:])
        off_key = pack_fields((pats == 1).astype(np.int64), widths[2:])
        head = (mask << (d * (R + 1))).astype(np.int64)
        lev_key = m.levels << (d * (R + 1) + d)
        keys = lo_key[:, None] + sizes[:, None] * off_key[None, :] + head[None, :]
        keys += np.where(kind[None, :] > 0, lev_key[:, None], 0)
        return keys.ravel()
    parts = []
    for i, pat in enumerate(pats):
        lo = m.anchors + (pat == 1) * sizes[:, None]
        lev = m.levels if kind[i] > 0 else np.zeros(len(m), dtype=np.int64)
        parts.append(_entity_keys(lev, np.full(len(m), mask[i]), lo, R, d))
    return np.stack(parts, axis=1).ravel()


def enumerate_nodes(m: Mesh, check: bool = False) -> NodeSet:
    """Unconstrained entities of ``m`` with supports after hanging-node absorption.

    For ``p == 1`` only vertices carry variables, so only vertices are
    enumerated.
    """
    if check:
        from .mesh import validate_mesh
        rep = validate_mesh(m)
        if not rep.ok:
            raise MeshError("invalid mesh: " + "; ".join(rep.violations))
    d, R, p = m.d, m.R, m.p
    ne = len(m)
    pats = _patterns(d, p >= 2)
    npat = len(pats)
    sizes = m.sizes

    keys = _instance_keys(m, pats)
    perm = np.argsort(keys, kind="stable")
    ks = keys[perm]
    del keys
    new = np.empty(len(ks), dtype=bool)
    new[0] = True
    new[1:] = adjacent_differ(ks)
    ukeys = ks[new]
    del ks
    sorted_ent = np.cumsum(new) - 1
    inst_ent = np.empty(len(perm), dtype=np.int64)
    inst_ent[perm] = sorted_ent
    first = perm[new]
    del perm, new
    owners = np.bincount(sorted_ent)
    del sorted_ent
    nent = len(ukeys)

    f_elem, f_pat = first // npat, first % npat
    P = pats[f_pat]
    ent_kind = (P == 2).sum(axis=1)
    ent_ext = P == 2
    ent_lo = m.anchors[f_elem] + (P == 1) * sizes[f_elem][:, None]
    ent_hi = ent_lo + ent_ext * sizes[f_elem][:, None]
    ent_level = m.levels[f_elem]

    # hanging detection; containers = leaves holding the entity without owning it
    top = 1 << R
    hanging = np.zeros(nent, dtype=bool)
    is_v = ent_kind == 0
    on_b = ((ent_lo == 0) | (ent_lo == top)).sum(axis=1)
    hanging[is_v] = owners[is_v] < (1 << (d - on_b[is_v]))
    cont_ent, cont_elem = [], []
    index = m.leaf_index
    face_ids = np.flatnonzero(~is_v)
    if len(face_ids):
        for sgn in itertools.product((-1, 1), repeat=d):
            sgn = np.array(sgn, dtype=np.int64)
            # extended axes are probed on the + side only
            ids = face_ids[~(ent_ext[face_ids] & (sgn < 0)).any(axis=1)]
            if len(ids) == 0:
                continue
            found = index.locate(ent_lo[ids], np.broadcast_to(sgn, (len(ids), d)),
                                 max_level=ent_level[ids])
            ok = found >= 0
            ids, found = ids[ok], found[ok]
            coarser = m.levels[found] < ent_level[ids]
            hanging[ids[coarser]] = True
            cont_ent.append(ids[coarser])
            cont_elem.append(found[coarser])
    hv = np.flatnonzero(hanging & is_v)
    for sgn in itertools.product((-1, 1), repeat=d):
        if len(hv) == 0:
            break
        sgn = np.array(sgn, dtype=np.int64)
        found = index.locate(ent_lo[hv], np.broadcast_to(sgn, (len(hv), d)))
        ok = found >= 0
        # leaves having the vertex as a corner are owners already
        corner = np.all((ent_lo[hv[ok]] - m.anchors[found[ok]]) % sizes[found[ok]][:, None] == 0,
                        axis=1)
        cont_ent.append(hv[ok][~corner])
        cont_elem.append(found[ok][~corner])
    empty = np.zeros(0, dtype=np.int64)
    cont_ent = np.concatenate(cont_ent) if cont_ent else empty
    cont_elem = np.concatenate(cont_elem) if cont_elem else empty

    hang_ids = np.flatnonzero(hanging)
    c_src, c_dst = _constrainers(m, hang_ids, ent_lo, ent_hi, cont_ent, cont_elem,
                                 pats, ukeys, nent)
    c_src, c_dst = _resolve_chains(c_src, c_dst, hanging, nent)
    c_ptr = np.searchsorted(c_src, np.arange(nent + 1)).astype(np.int64)

    # renumber unconstrained entities by (kind, lo, hi)
    alive = np.flatnonzero(~hanging)
    cols = [ent_hi[alive, a] for a in range(d - 1, -1, -1)]
    cols += [ent_lo[alive, a] for a in range(d - 1, -1, -1)]
    cols += [ent_kind[alive]]
    order = alive[np.lexsort(cols)]
    newid = np.full(nent, -1, dtype=np.int64)
    newid[order] = np.arange(len(order))

    o = np.argsort(cont_elem, kind="stable")
    x_ptr = np.searchsorted(cont_elem[o], np.arange(ne + 1)).astype(np.int64)
    x_ent = cont_ent[o]
    elem_ptr, elem_ents = _kernels.element_cliques(ne, npat, inst_ent, hanging, c_ptr, c_dst,
                                                   x_ptr, x_ent, newid)
    geo = newid[inst_ent].reshape(ne, npat)
    return NodeSet(m, ent_kind[order].astype(np.int64), ent_lo[order], ent_hi[order],
                   elem_ptr, elem_ents, int(hanging.sum()), geo)


def _constrainers(m, hang_ids, ent_lo, ent_hi, cont_ent, cont_elem, pats, ukeys, nent):
    """Pairs (hanging entity, constraining entity), constrainers possibly hanging."""
    d, R = m.d, m.R
    if len(hang_ids) == 0:
        z = np.zeros(0, dtype=np.int64)
        return z, z
    # coarsest container per hanging entity
    best = np.full(nent, -1, dtype=np.int64)
    lev = m.levels[cont_elem]
    o = np.lexsort([-lev, cont_ent])  # per entity, coarsest last
    ce, cl = cont_ent[o], cont_elem[o]
    last = np.flatnonzero(np.r_[ce[1:] != ce[:-1], True]) if len(ce) else ce
    best[ce[last]] = cl[last]
    L = best[hang_ids]
    if np.any(L < 0):
        raise MeshError("hanging entity without a coarser container")
    Llo = m.anchors[L]
    Lhi = Llo + m.sizes[L][:, None]
    flo, fhi = ent_lo[hang_ids], ent_hi[hang_ids]
    # smallest face of L containing F, per axis: 0 low, 1 high, 2 extended
    g = np.full((len(hang_ids), d), 2, dtype=np.int64)
    g[(flo == fhi) & (flo == Llo)] = 0
    g[(flo == fhi) & (flo == Lhi)] = 1
    src, dst = [], []
    Llev = m.levels[L]
    for pat in pats:
        ok = np.all((g == 2) | (g == pat), axis=1)
        if not ok.any():
            continue
        ids = np.flatnonzero(ok)
        k = int((pat == 2).sum())
        lo = Llo[ids] + (pat == 1) * (Lhi[ids] - Llo[ids])
        mask = int(((pat == 2) * (1 << np.arange(d - 1, -1, -1))).sum())
        levs = np.zeros(len(ids), dtype=np.int64) if k == 0 else Llev[ids]
        keys = _entity_keys(levs, np.full(len(ids), mask, dtype=np.int64), lo, R, d)
        pos = np.searchsorted(ukeys, keys)
        pos = np.minimum(pos, len(ukeys) - 1)
        if np.any(ukeys[pos] != keys):
            raise MeshError("constraining face not found among mesh entities")
        src.append(hang_ids[ids])
        dst.append(pos.astype(np.int64))
    return np.concatenate(src), np.concatenate(dst)


def _resolve_chains(src, dst, hanging, nent):
    """Replace hanging constrainers by their own constrainers until none remain."""
    for _ in range(64):
        bad = hanging[dst]
        if not bad.any():
            o = np.unique(src * nent + dst)
            return o // nent, o % nent
        o = np.argsort(src, kind="stable")
        s_sorted, d_sorted = src[o], dst[o]
        ptr = np.searchsorted(s_sorted, np.arange(nent + 1))
        bsrc, bdst = src[bad], dst[bad]
        cnt = ptr[bdst + 1] - ptr[bdst]
        starts = np.repeat(ptr[bdst], cnt)
        within = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        nsrc = np.repeat(bsrc, cnt)
        ndst = d_sorted[starts + within]
        src = np.concatenate([src[~bad], nsrc])
        dst = np.concatenate([dst[~bad], ndst])
        o = np.unique(src * nent + dst)
        src, dst = o // nent, o % nent
    raise MeshError("constraint chain did not terminate")


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def corner_variable_count(d: int, p: int, r: int) -> int:
    """Variables of a mesh refined ``r`` times toward a domain corner."""
    if r < 1:
        raise ValueError("corner variable formula needs r >= 1")
    if d < 1 or p < 1:
        raise ValueError("need d >= 1 and p >= 1")
    return (2 * p + 1) ** d + (r - 1) * ((1 << d) - 1) * p ** d


def variable_bounds(d: int, q: int, p: int, r: int) -> tuple[int, int]:
    """Bracket on the variable count of a mesh refined toward a q-dim singularity."""
    if q < 1:
        raise ValueError("q = 0 has an exact count, use corner_variable_count")
    if q > d or r < 0 or p < 1:
        raise ValueError(f"invalid (d, q, p, r) = {(d, q, p, r)}")
    scale = 1 << (q * r)
    return (1 << (d - 1)) * p ** d * scale, (1 << d) * (p + 1) ** d * scale


# ---------------------------------------------------------------------------
# overlap graph
# ---------------------------------------------------------------------------

class OverlapGraph:
    """Variables joined when their supports share an element.

    Stored as a clique cover: clique ``c`` lists the variables whose support
    contains element ``c`` (CSR ``clq_ptr``/``clq_vars``).  Every edge of the
    graph lies in at least one clique; self-edges are implicit.
    """

    def __init__(self, n: int, clq_ptr: np.ndarray, clq_vars: np.ndarray,
                 nodes: NodeSet | None = None):
        self.n = int(n)
        self.clq_ptr = np.asarray(clq_ptr, dtype=np.int64)
        self.clq_vars = np.asarray(clq_vars, dtype=np.int64)
        self.nodes = nodes
        if len(self.clq_vars) and (self.clq_vars.min() < 0 or self.clq_vars.max() >= self.n):
            raise ValueError("clique member out of range")

    @classmethod
    def from_edges(cls, n: int, edges) -> "OverlapGraph":
        """Graph with the given undirected edges; each edge becomes a 2-clique."""
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(e) and (e.min() < 0 or e.max() >= n):
            raise ValueError("edge endpoint out of range")
        e = e[e[:, 0] != e[:, 1]]
        return cls(n, np.arange(0, 2 * len(e) + 1, 2), e.ravel())

    @classmethod
    def from_dense(cls, pattern) -> "OverlapGraph":
        a = np.asarray(pattern, dtype=bool)
        if a.shape[0] != a.shape[1] or np.any(a != a.T):
            raise ValueError("pattern must be square and symmetric")
        i, j = np.nonzero(np.triu(a, 1))
        return cls.from_edges(a.shape[0], np.column_stack([i, j]))

    @property
    def n_cliques(self) -> int:
        return len(self.clq_ptr) - 1

    def clique(self, c: int) -> np.ndarray:
        return self.clq_vars[self.clq_ptr[c]:self.clq_ptr[c + 1]]

    @cached_property
    def var_cliques(self) -> tuple[np.ndarray, np.ndarray]:
        """Transpose of the clique cover: CSR (variable -> cliques)."""
        cid = np.repeat(np.arange(self.n_cliques, dtype=np.int64), np.diff(self.clq_ptr))
        o = np.argsort(self.clq_vars, kind="stable")
        ptr = np.searchsorted(self.clq_vars[o], np.arange(self.n + 1)).astype(np.int64)
        return ptr, cid[o]

    @cached_property
    def degrees(self) -> np.ndarray:
        vptr, vcl = self.var_cliques
        return _kernels.clique_degrees(self.n, self.clq_ptr, self.clq_vars, vptr, vcl)

    @property
    def n_edges(self) -> int:
        return int(self.degrees.sum() // 2)

    def edges(self) -> np.ndarray:
        """Sorted ``(m, 2)`` array of edges ``u < v``."""
        sizes = np.diff(self.clq_ptr)
        total = int((sizes * sizes).sum())
        if total > 200_000_000:
            raise MemoryError("graph too large to list edges explicitly")
        vptr, vcl = self.var_cliques
        return _kernels.clique_edges(self.n, self.clq_ptr, self.clq_vars, vptr, vcl,
                                     int(self.degrees.sum() // 2))

    def adjacency(self):
        """Symmetric scipy CSR adjacency without diagonal."""
        import scipy.sparse as sp
        e = self.edges()
        data = np.ones(2 * len(e), dtype=np.int8)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        e = self.edges()
        a[e[:, 0], e[:, 1]] = True
        a[e[:, 1], e[:, 0]] = True
        return a

    def neighbours(self, v: int) -> np.ndarray:
        vptr, vcl = self.var_cliques
        parts = [self.clique(c) for c in vcl[vptr[v]:vptr[v + 1]]]
        if not parts:
            return np.zeros(0, dtype=np.int64)
        u = np.unique(np.concatenate(parts))
        return u[u != v]

    def dump_edges(self, path) -> None:
        """Edge list text file, one ``u v`` pair per line (0-based, u < v)."""
        with open(path, "w") as fh:
            for u, v in self.edges():
                fh.write(f"{u} {v}\n")


def overlap_graph(nodes: NodeSet) -> OverlapGraph:
    """Clique cover by elements: element ``e`` gathers all variables supported on it."""
    ptr, ents = nodes.elem_ptr, nodes.elem_ents
    if nodes.p == 1:
        return OverlapGraph(nodes.n_vars, ptr, ents, nodes)
    cnt = nodes.var_count[ents]
    elem_of = np.repeat(np.arange(len(ptr) - 1), np.diff(ptr))
    per_elem = np.bincount(elem_of, weights=cnt, minlength=len(ptr) - 1).astype(np.int64)
    within = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    var = nodes.var_offset[np.repeat(ents, cnt)] + within
    vptr = np.concatenate([[0], np.cumsum(per_elem)]).astype(np.int64)
    return OverlapGraph(nodes.n_vars, vptr, var, nodes)
