"""Element partition trees, variable assignment and post-order orderings.

A tree is stored as flat arrays.  Every node owns a contiguous range
``perm[start:stop]`` of the element permutation; internal nodes have exactly
two children splitting that range.  A variable lives at the deepest node
whose range covers its whole support, which is the lowest common ancestor
of its support elements.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .basis import NodeSet, OverlapGraph, enumerate_nodes
from .mesh import Mesh, MeshError

STRATEGIES = ("layered", "plane", "greedy")

# builder modes
_LAYERED_ROOT = 0
_PLANE_ROOT = 1
_BISECT = 2
_PLANE0 = 3  # _PLANE0 + j cuts the j-th extended singularity axis


@dataclass(frozen=True, eq=False)
class PartitionTree:
    strategy: str
    perm: np.ndarray
    start: np.ndarray
    stop: np.ndarray
    left: np.ndarray
    right: np.ndarray
    parent: np.ndarray
    depth: np.ndarray
    var_node: np.ndarray
    hoisted: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.start)

    @property
    def n_vars(self) -> int:
        return len(self.var_node)

    @property
    def height(self) -> int:
        return int(self.depth.max()) if self.n_nodes else 0

    def is_leaf(self, t: int) -> bool:
        return self.left[t] < 0

    def elements(self, t: int) -> np.ndarray:
        return self.perm[self.start[t]:self.stop[t]]

    def children(self, t: int) -> tuple[int, ...]:
        return () if self.left[t] < 0 else (int(self.left[t]), int(self.right[t]))

    @cached_property
    def postorder(self) -> np.ndarray:
        """Nodes in post-order (left subtree, right subtree, node)."""
        return _kernels.postorder(self.left, self.right)

    @cached_property
    def post_index(self) -> np.ndarray:
        idx = np.empty(self.n_nodes, dtype=np.int64)
        idx[self.postorder] = np.arange(self.n_nodes)
        return idx

    @cached_property
    def assigned_counts(self) -> np.ndarray:
        return np.bincount(self.var_node, minlength=self.n_nodes)

    def node_vars(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.var_node == t)

    def subtree_vars(self, t: int) -> np.ndarray:
        s, e = self.start[t], self.stop[t]
        inside = (self.start[self.var_node] >= s) & (self.stop[self.var_node] <= e)
        return np.flatnonzero(inside)

    def dump_text(self) -> str:
        """Pre-order, one line per node: indentation, id, element count, assigned count."""
        lines = []
        stack = [0]
        counts = self.assigned_counts
        while stack:
            t = stack.pop()
            lines.append(f"{'  ' * int(self.depth[t])}{t} elems={int(self.stop[t] - self.start[t])} "
                         f"vars={int(counts[t])}")
            if self.left[t] >= 0:
                stack.append(int(self.right[t]))
                stack.append(int(self.left[t]))
        return "\n".join(lines) + "\n"

    def validate(self) -> list[str]:
        """Structural checks: root covers all, children split parents, singleton leaves."""
        errs = []
        n = len(self.perm)
        if sorted(self.perm.tolist()) != list(range(n)):
            errs.append("perm is not a permutation of the elements")
        if self.start[0] != 0 or self.stop[0] != n:
            errs.append("root does not hold all elements")
        internal = np.flatnonzero(self.left >= 0)
        leaves = np.flatnonzero(self.left < 0)
        L, Rr = self.left[internal], self.right[internal]
        if np.any(self.start[L] != self.start[internal]) or np.any(self.stop[L] != self.start[Rr]) \
                or np.any(self.stop[Rr] != self.stop[internal]):
            errs.append("children do not split their parent's element range")
        if np.any(self.stop[L] <= self.start[L]) or np.any(self.stop[Rr] <= self.start[Rr]):
            errs.append("empty child")
        if np.any(self.stop[leaves] - self.start[leaves] != 1):
            errs.append("leaf with more than one element")
        return errs


# ---------------------------------------------------------------------------
# variable assignment
# ---------------------------------------------------------------------------

def _entity_pos_range(nodes: NodeSet, inv_perm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pos = inv_perm[nodes.sup_elems]
    ptr = nodes.sup_ptr
    starts = ptr[:-1]
    lo = np.minimum.reduceat(pos, starts)
    hi = np.maximum.reduceat(pos, starts)
    return lo, hi


def _assign(nodes: NodeSet, perm, start, stop, left, parent) -> np.ndarray:
    n = len(perm)
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)
    lo, hi = _entity_pos_range(nodes, inv)
    leaves = np.flatnonzero(left < 0)
    leaf_of_pos = np.empty(n, dtype=np.int64)
    leaf_of_pos[start[leaves]] = leaves
    ent_node = _kernels.lca_assign(lo, hi, leaf_of_pos, parent, stop)
    return np.repeat(ent_node, nodes.var_count)


def _finish(strategy, m, nodes, perm, start, stop, left, right, parent, depth,
            hoist_mask=None, meta=None) -> PartitionTree:
    var_node = _assign(nodes, perm, start, stop, left, parent)
    hoisted = 0
    if hoist_mask is not None:
        hv = np.repeat(hoist_mask, nodes.var_count)
        hoisted = int(np.count_nonzero(var_node[hv] != 0))
        var_node[hv] = 0
    arrs = [np.ascontiguousarray(a, dtype=np.int64) for a in
            (perm, start, stop, left, right, parent, depth, var_node)]
    for a in arrs:
        a.setflags(write=False)
    return PartitionTree(strategy, *arrs, hoisted=hoisted, meta=meta or {})


# ---------------------------------------------------------------------------
# level-synchronous builder for the layered and dividing-plane trees
# ---------------------------------------------------------------------------

def _build_sync(m: Mesh, root_mode: int, plane_axes: tuple[int, ...]):
    """Split all active segments of one depth at once.

    Segment modes: ``_LAYERED_ROOT`` peels the coarsest layer (inner part
    first) or, on a single level, separates elements touching the
    singularity; ``_PLANE_ROOT`` peels the coarsest layer (layer first) and
    sends the rest to the plane chain; ``_PLANE0 + j`` cuts at the middle of
    the singularity along ``plane_axes[j]``; ``_BISECT`` peels the coarsest
    level of a mixed segment or halves the longest side.
    """
    d, R = m.d, m.R
    ne = len(m)
    levels = m.levels
    sizes = m.sizes
    over = np.zeros(ne, dtype=bool)
    for lev in np.unique(levels):
        sel = levels == lev
        over[sel] = m.singularity.overlaps(m.anchors[sel], 1 << (R - int(lev)), R)
    q = len(plane_axes)
    if q:
        slo, shi = m.singularity.lattice_bbox(R)
        pax = np.array(plane_axes, dtype=np.int64)

    cap = max(2 * ne - 1, 1)
    start = np.zeros(cap, dtype=np.int64)
    stop = np.zeros(cap, dtype=np.int64)
    left = np.full(cap, -1, dtype=np.int64)
    right_c = np.full(cap, -1, dtype=np.int64)
    parent = np.full(cap, -1, dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)
    stop[0] = ne
    n_nodes = 1
    perm = np.arange(ne, dtype=np.int64)
    act = np.array([0], dtype=np.int64)
    mode = np.array([root_mode], dtype=np.int64)
    while len(act):
        cnt = stop[act] - start[act]
        keep = cnt > 1
        act, mode, cnt = act[keep], mode[keep], cnt[keep]
        if not len(act):
            break
        nseg = len(act)
        ar = np.arange(nseg)
        offsets = np.concatenate([[0], np.cumsum(cnt)[:-1]])
        sid = np.repeat(ar, cnt)
        idx = np.arange(cnt.sum()) - offsets[sid] + start[act][sid]
        el = perm[idx]
        lev = levels[el]
        an = m.anchors[el]
        sz = sizes[el]
        ov = over[el]
        lev_min = np.minimum.reduceat(lev, offsets)
        lev_max = np.maximum.reduceat(lev, offsets)
        lo = np.minimum.reduceat(an, offsets, axis=0)
        hi = np.maximum.reduceat(an + sz[:, None], offsets, axis=0)
        n_over = np.add.reduceat(ov.astype(np.int64), offsets)
        mixed = lev_min != lev_max
        big = np.left_shift(1, R - lev_min)
        coarsest = lev == lev_min[sid]
        rows = np.arange(len(el))

        # default: bisection
        s1 = sz[offsets]
        ext = hi - lo
        axis = np.argmax(ext, axis=1)
        cut = lo[ar, axis] + (ext[ar, axis] // (2 * s1)) * s1
        right = np.where(mixed[sid], coarsest, an[rows, axis[sid]] >= cut[sid])
        lmode = np.full(nseg, _BISECT, dtype=np.int64)
        rmode = np.full(nseg, _BISECT, dtype=np.int64)

        sel = mode == _LAYERED_ROOT
        if sel.any():
            lmode[sel & mixed] = _LAYERED_ROOT
            split_over = sel & ~mixed & (n_over > 0) & (n_over < cnt)
            e = split_over[sid]
            right[e] = ~ov[e]

        sel = mode == _PLANE_ROOT
        if sel.any():
            mx = sel & mixed
            e = mx[sid]
            right[e] = ~coarsest[e]
            rmode[mx] = _PLANE0

        if q:
            j = np.where(mode >= _PLANE0, mode - _PLANE0, 0)
            todo = (mode >= _PLANE0) | ((mode == _PLANE_ROOT) & ~mixed)
            while todo.any():
                valid = todo & (j < q)
                if not valid.any():
                    break
                ax = pax[np.minimum(j, q - 1)]
                a = np.maximum(slo[ax], lo[ar, ax])
                b = np.minimum(shi[ax], hi[ar, ax])
                pl = np.floor((a + b) / 2.0 / big + 0.5).astype(np.int64) * big
                good = valid & (b >= a) & (pl > lo[ar, ax]) & (pl < hi[ar, ax])
                if good.any():
                    e = good[sid]
                    right[e] = (an[rows, ax[sid]] >= pl[sid])[e]
                    nxt = np.where(j + 1 < q, _PLANE0 + j + 1, _PLANE_ROOT)
                    lmode[good] = nxt[good]
                    rmode[good] = nxt[good]
                todo &= ~good
                j = j + 1

        # stable partition of every segment
        nright = np.add.reduceat(right.astype(np.int64), offsets)
        nleft = cnt - nright
        if np.any((nleft == 0) | (nright == 0)):
            raise MeshError("degenerate split while building partition tree")
        rint = right.astype(np.int64)
        cr = np.cumsum(rint) - rint  # rights strictly before, global
        cl = np.cumsum(1 - rint) - (1 - rint)
        rank_r = cr - cr[offsets][sid]
        rank_l = cl - cl[offsets][sid]
        base = start[act][sid]
        newpos = np.where(right, base + nleft[sid] + rank_r, base + rank_l)
        perm[newpos] = el

        lid = n_nodes + 2 * ar
        rid = lid + 1
        n_nodes += 2 * nseg
        left[act], right_c[act] = lid, rid
        start[lid], stop[lid] = start[act], start[act] + nleft
        start[rid], stop[rid] = start[act] + nleft, stop[act]
        parent[lid] = parent[rid] = act
        depth[lid] = depth[rid] = depth[act] + 1
        nact = np.empty(2 * nseg, dtype=np.int64)
        nact[0::2], nact[1::2] = lid, rid
        nmode = np.empty(2 * nseg, dtype=np.int64)
        nmode[0::2], nmode[1::2] = lmode, rmode
        act, mode = nact, nmode

    k = n_nodes
    return perm, start[:k], stop[:k], left[:k], right_c[:k], parent[:k], depth[:k]


def _nodes_for(m: Mesh, nodes: NodeSet | None) -> NodeSet:
    if nodes is None:
        return enumerate_nodes(m)
    if nodes.mesh is not m and len(nodes.mesh) != len(m):
        raise MeshError("node set belongs to a different mesh")
    return nodes


def build_layered_tree(m: Mesh, nodes: NodeSet | None = None) -> PartitionTree:
    """Comb of refinement layers around a point singularity.

    Each comb node splits off the current least-refined layer; the inner
    remainder is the first child so that post-order runs from the innermost
    layer outward.  Layers themselves are bisected down to single elements.
    """
    if m.q != 0:
        raise MeshError("layered trees need a point singularity (q = 0)")
    nodes = _nodes_for(m, nodes)
    arrs = _build_sync(m, _LAYERED_ROOT, ())
    return _finish("layered", m, nodes, *arrs)


def _hoist_mask(m: Mesh, nodes: NodeSet) -> np.ndarray:
    """Entities on a domain-boundary hyperplane that does not hold the singularity."""
    top = 1 << m.R
    flat = nodes.lo == nodes.hi
    low = flat & (nodes.lo == 0)
    high = flat & (nodes.hi == top)
    boxes = m.singularity.boxes
    for a in range(m.d):
        if all(b.lo[a] == b.hi[a] == 0 for b in boxes):
            low[:, a] = False
        if all(b.lo[a] == b.hi[a] == 1 for b in boxes):
            high[:, a] = False
    return (low | high).any(axis=1)


def build_dividing_plane_tree(m: Mesh, nodes: NodeSet | None = None,
                              hoist: bool = True) -> PartitionTree:
    """Peel the least-refined layer, then cut the rest by planes through the
    middle of the singularity, one extended axis at a time; recurse.

    Variables on domain-boundary hyperplanes other than those holding the
    singularity are moved to the root (only when ``q < d``).
    """
    if m.q < 1:
        raise MeshError("dividing-plane trees need q >= 1")
    nodes = _nodes_for(m, nodes)
    axes = m.singularity.extended_axes
    arrs = _build_sync(m, _PLANE_ROOT, axes)
    # a singularity filling the domain leaves no boundary hyperplane outside it
    mask = _hoist_mask(m, nodes) if hoist and m.q < m.d else None
    return _finish("plane", m, nodes, *arrs, hoist_mask=mask, meta={"plane_axes": axes})


# ---------------------------------------------------------------------------
# greedy plane tree
# ---------------------------------------------------------------------------

def build_greedy_plane_tree(m: Mesh, nodes: NodeSet | None = None) -> PartitionTree:
    """Recursive bisection by the plane crossing the fewest supports.

    Planes are perpendicular to the singularity (any axis for a point, and
    any axis once the singular ones no longer separate the elements).  A
    plane may cut through elements; each element goes to the side holding
    its centre, and a variable crosses the plane when its support has
    elements on both sides.  A plane is admissible when at most half of the
    still-unassigned variables lie entirely on either side.  Ties go to the
    more even element split, then the lowest axis, then the lowest
    coordinate.  When no plane is admissible the most balanced one is taken.
    """
    nodes = _nodes_for(m, nodes)
    d = m.d
    ne = len(m)
    # doubled centres keep everything integral
    cen = 2 * m.anchors + m.sizes[:, None]
    ptr = nodes.sup_ptr
    se = nodes.sup_elems
    v_lo = np.minimum.reduceat(cen[se], ptr[:-1], axis=0)
    v_hi = np.maximum.reduceat(cen[se], ptr[:-1], axis=0)
    v_w = nodes.var_count
    sing_axes = m.singularity.extended_axes if m.q >= 1 else tuple(range(d))

    cap = max(2 * ne - 1, 1)
    start = np.zeros(cap, dtype=np.int64)
    stop = np.zeros(cap, dtype=np.int64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    parent = np.full(cap, -1, dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)
    perm = np.arange(ne, dtype=np.int64)
    stop[0] = ne
    n_nodes = 1
    # stack items: (node, element ids, entity ids whose support lies inside)
    stack = [(0, np.arange(ne, dtype=np.int64), np.arange(len(nodes), dtype=np.int64))]
    while stack:
        t, els, ents = stack.pop()
        if len(els) == 1:
            perm[start[t]] = els[0]
            continue
        n_active = int(v_w[ents].sum())
        choice = None
        for axes in (sing_axes, tuple(range(d))):
            choice = _greedy_plane(axes, cen[els], v_lo[ents], v_hi[ents], v_w[ents], n_active)
            if choice is not None:
                break
        if choice is None:
            raise MeshError("no separating plane (overlapping elements?)")
        a, c = choice
        go_left = cen[els, a] <= c
        lel, rel = els[go_left], els[~go_left]
        l_ent = ents[v_hi[ents, a] <= c]
        r_ent = ents[v_lo[ents, a] > c]
        lid, rid = n_nodes, n_nodes + 1
        n_nodes += 2
        left[t], right[t] = lid, rid
        start[lid], stop[lid] = start[t], start[t] + len(lel)
        start[rid], stop[rid] = start[t] + len(lel), stop[t]
        parent[lid] = parent[rid] = t
        depth[lid] = depth[rid] = depth[t] + 1
        stack.append((rid, rel, r_ent))
        stack.append((lid, lel, l_ent))
    k = n_nodes
    arrs = (perm, start[:k], stop[:k], left[:k], right[:k], parent[:k], depth[:k])
    return _finish("greedy", m, nodes, *arrs)


def _greedy_plane(axes, cen, v_lo, v_hi, v_w, n_active):
    """Best ``(axis, doubled coordinate)`` over ``axes`` or None if none separates."""
    best = fallback = None
    ne = len(cen)
    for a in axes:
        cs = np.sort(cen[:, a])
        cand = np.unique(cs)[:-1]
        if not len(cand):
            continue
        o_lo = np.argsort(v_lo[:, a], kind="stable")
        o_hi = np.argsort(v_hi[:, a], kind="stable")
        lo_s, hi_s = v_lo[o_lo, a], v_hi[o_hi, a]
        w_lo = np.concatenate([[0], np.cumsum(v_w[o_lo])])
        w_hi = np.concatenate([[0], np.cumsum(v_w[o_hi])])
        left_only = w_hi[np.searchsorted(hi_s, cand, "right")]
        right_only = n_active - w_lo[np.searchsorted(lo_s, cand, "right")]
        cross = n_active - left_only - right_only
        n_left = np.searchsorted(cs, cand, "right")
        el_bal = np.maximum(n_left, ne - n_left)
        feas = (2 * left_only <= n_active) & (2 * right_only <= n_active)
        if feas.any():
            f = np.flatnonzero(feas)
            i = f[np.lexsort((cand[f], el_bal[f], cross[f]))[0]]
            key = (int(cross[i]), int(el_bal[i]), a, int(cand[i]))
            if best is None or key < best:
                best = key
        bal = np.maximum(left_only, right_only)
        i = int(np.lexsort((cand, el_bal, bal))[0])
        key = (int(bal[i]), int(el_bal[i]), a, int(cand[i]))
        if fallback is None or key < fallback:
            fallback = key
    choice = best if best is not None else fallback
    return None if choice is None else (choice[2], choice[3])


def build_tree(m: Mesh, strategy: str, nodes: NodeSet | None = None) -> PartitionTree:
    if strategy == "layered":
        return build_layered_tree(m, nodes)
    if strategy == "plane":
        return build_dividing_plane_tree(m, nodes)
    if strategy == "greedy":
        return build_greedy_plane_tree(m, nodes)
    raise ValueError(f"unknown tree strategy {strategy!r}")


# ---------------------------------------------------------------------------
# orderings and audits
# ---------------------------------------------------------------------------

def ordering_from_tree(t: PartitionTree, g: OverlapGraph) -> np.ndarray:
    """Variables in post-order of their nodes, by id within a node."""
    if g.n != t.n_vars:
        raise ValueError(f"graph has {g.n} variables, tree assigns {t.n_vars}")
    if np.any(t.var_node < 0):
        raise ValueError("variable without an assigned tree node")
    key = t.post_index[t.var_node]
    return np.argsort(key, kind="stable").astype(np.int64)


def natural_ordering(g: OverlapGraph) -> np.ndarray:
    return np.arange(g.n, dtype=np.int64)


def ancestor_descendant_ok(t: PartitionTree, g: OverlapGraph) -> bool:
    """Every clique's variables sit on one root-to-leaf path of the tree.

    Node ranges form a laminar family, so pairwise nesting is equivalent to
    a common point: ``max(start) < min(stop)`` over the clique.
    """
    sizes = np.diff(g.clq_ptr)
    nz = sizes > 0
    if not nz.any():
        return True
    nd = t.var_node[g.clq_vars]
    offs = g.clq_ptr[:-1][nz]
    mx = np.maximum.reduceat(t.start[nd], offs)
    mn = np.minimum.reduceat(t.stop[nd], offs)
    return bool(np.all(mx < mn))


@dataclass
class QuasiOptimalityReport:
    n_layers: int
    R: int
    layers_ok: bool
    per_layer_counts: dict[int, int]
    per_layer_bound: int
    per_layer_ok: bool
    M_overlap_span: int
    span_ok: bool
    M_constrained_span: int
    L_max: int
    height: int
    fitted_Q: float
    hoisted: int
    ancestor_descendant: bool

    @property
    def ok(self) -> bool:
        return self.layers_ok and self.per_layer_ok and self.span_ok and self.ancestor_descendant

    def violations(self) -> list[str]:
        out = []
        if not self.layers_ok:
            out.append(f"{self.n_layers} layers > R+1 = {self.R + 1}")
        if not self.per_layer_ok:
            worst = max(self.per_layer_counts.values())
            out.append(f"layer with {worst} variables > bound {self.per_layer_bound}")
        if not self.span_ok:
            out.append(f"overlapping variables {self.M_overlap_span} layers apart")
        if not self.ancestor_descendant:
            out.append("overlapping variables on unrelated tree nodes")
        return out


def entity_layers(nodes: NodeSet) -> np.ndarray:
    """Layer of each entity: the coarsest level among the elements it is a face of.

    Supports are taken before hanging-node absorption, so around any
    element of level L every own entity lands in layers L-2..L.
    """
    ptr, ents = nodes.geometric_cliques
    lv = np.repeat(nodes.mesh.levels, np.diff(ptr))
    out = np.full(len(nodes), np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(out, ents, lv)
    return out


def variable_layers(nodes: NodeSet) -> np.ndarray:
    return np.repeat(entity_layers(nodes), nodes.var_count)


def _clique_span(layer, ptr, members) -> int:
    nz = np.diff(ptr) > 0
    if not nz.any():
        return 0
    ly = layer[members]
    offs = ptr[:-1][nz]
    return int((np.maximum.reduceat(ly, offs) - np.minimum.reduceat(ly, offs)).max())


def quasi_optimality_report(t: PartitionTree, g: OverlapGraph) -> QuasiOptimalityReport:
    if g.nodes is None:
        raise ValueError("audit needs a graph built from mesh nodes")
    nodes = g.nodes
    m = nodes.mesh
    d, p, q = m.d, m.p, m.q
    ent_layer = entity_layers(nodes)
    layer = np.repeat(ent_layer, nodes.var_count)
    lv, cnt = np.unique(layer, return_counts=True)
    per_layer = {int(a): int(b) for a, b in zip(lv, cnt)}
    bound = 4 ** d * (p + 1) ** d
    span = _clique_span(ent_layer, *nodes.geometric_cliques)
    constrained = _clique_span(layer, g.clq_ptr, g.clq_vars)
    counts = t.assigned_counts
    h = t.depth.astype(float)
    if q >= 2:
        Q = float(np.max(counts / 2.0 ** (h * (q - 1) / q)))
    else:
        Q = float(np.max(counts / np.maximum(h, 1.0)))
    return QuasiOptimalityReport(
        n_layers=len(per_layer), R=m.R, layers_ok=len(per_layer) <= m.R + 1,
        per_layer_counts=per_layer, per_layer_bound=bound,
        per_layer_ok=max(per_layer.values(), default=0) <= bound,
        M_overlap_span=span, span_ok=span <= 2, M_constrained_span=constrained, L_max=int(counts.max()),
        height=t.height, fitted_Q=Q, hoisted=t.hoisted,
        ancestor_descendant=ancestor_descendant_ok(t, g))
