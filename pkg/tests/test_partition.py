import math
from fractions import Fraction as F

import numpy as np
import pytest

from smlab.basis import OverlapGraph, enumerate_nodes, overlap_graph
from smlab.mesh import MeshError, SingularitySpec, refine_toward_singularity
from smlab.partition import (ancestor_descendant_ok, build_dividing_plane_tree,
                             build_greedy_plane_tree, build_layered_tree, build_tree,
                             natural_ordering, ordering_from_tree, quasi_optimality_report,
                             variable_layers)

POLY = SingularitySpec.polyline([[F(1, 5), F(1, 7)], [F(1, 5), F(3, 4)],
                                 [F(5, 6), F(3, 4)], [F(5, 6), F(1)]])


def setup(d, r, s, p=1):
    m = refine_toward_singularity(d, r, s, p)
    ns = enumerate_nodes(m)
    return m, ns, overlap_graph(ns)


def comb(t):
    """(assigned at spine node, layer subtree element count) down the layered spine."""
    out, node = [], 0
    while t.left[node] >= 0:
        out.append((int(t.assigned_counts[node]), int(t.stop[t.right[node]] - t.start[t.right[node]])))
        node = int(t.left[node])
    return out, node


# -- layered -------------------------------------------------------------------

def test_layered_corner_shape():
    m, ns, g = setup(2, 3, SingularitySpec.corner(2))
    t = build_layered_tree(m, ns)
    spine, inner = comb(t)
    assert len(spine) == 3
    assert [n for _, n in spine] == [3, 3, 3]
    assert t.stop[inner] - t.start[inner] == 1
    assert not t.validate()


def test_layered_r0_single_node():
    m, ns, g = setup(2, 0, SingularitySpec.corner(2))
    t = build_layered_tree(m, ns)
    assert t.n_nodes == 1 and t.assigned_counts.tolist() == [4]


def test_layered_rejects_edges():
    m = refine_toward_singularity(2, 2, SingularitySpec.boundary(2, 1))
    with pytest.raises(MeshError):
        build_layered_tree(m)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("p", [1, 2, 3])
def test_layered_interface_sizes(d, p):
    r = 6
    m, ns, g = setup(d, r, SingularitySpec.corner(d), p)
    t = build_layered_tree(m, ns)
    # the spine node above layer i holds If(s_{i-1}, s_i); the layer subtree holds If(s_i)
    node, rows = 0, []
    while t.left[node] >= 0:
        rows.append((int(t.assigned_counts[node]), len(t.subtree_vars(int(t.right[node])))))
        node = int(t.left[node])
    for shared, own in rows[1:-1]:
        assert shared == (p + 1) ** d - p ** d
        assert own == (2 * p) ** d - (p + 1) ** d


def test_layered_order_inner_first():
    m, ns, g = setup(2, 5, SingularitySpec.corner(2))
    order = ordering_from_tree(build_layered_tree(m, ns), g)
    layer = variable_layers(ns)[order]
    # deepest layers go first, the outer boundary last
    assert layer[0] == m.R and layer[-1] == layer.min()
    assert np.all(np.diff(layer) <= 0)


# -- dividing plane ------------------------------------------------------------

def test_plane_tree_first_level_shape():
    m, ns, g = setup(2, 2, SingularitySpec.boundary(2, 1))
    t = build_dividing_plane_tree(m, ns)
    layer, rest = t.children(0)
    assert set(m.levels[t.elements(layer)].tolist()) == {1}
    halves = t.children(rest)
    assert len(halves) == 2
    assert [len(t.elements(h)) for h in halves] == [4, 4]
    assert t.meta["plane_axes"] == (1,)


def test_plane_tree_rejects_points():
    m = refine_toward_singularity(2, 2, SingularitySpec.corner(2))
    with pytest.raises(MeshError):
        build_dividing_plane_tree(m)


def test_plane_removed_counts_grow_linearly_for_edges():
    # largest non-root node count grows by a bounded step per level
    counts = []
    for r in range(4, 10):
        m, ns, g = setup(2, r, SingularitySpec.boundary(2, 1))
        t = build_dividing_plane_tree(m, ns, hoist=False)
        counts.append(int(t.assigned_counts[1:].max()))
    steps = np.diff(counts)
    assert steps.max() <= 4 and counts[-1] < 4 * 9


def test_plane_removed_counts_double_for_faces():
    counts = []
    for r in range(3, 7):
        m, ns, g = setup(3, r, SingularitySpec.boundary(3, 2))
        t = build_dividing_plane_tree(m, ns, hoist=False)
        counts.append(int(t.assigned_counts[1:].max()))
    ratios = np.array(counts[1:]) / np.array(counts[:-1])
    assert np.all((ratios > 1.6) & (ratios < 2.6))


def test_hoisting_moves_boundary_to_root():
    m, ns, g = setup(3, 3, SingularitySpec.boundary(3, 1))
    t = build_dividing_plane_tree(m, ns)
    t0 = build_dividing_plane_tree(m, ns, hoist=False)
    assert t.hoisted > 0 and t0.hoisted == 0
    assert t.assigned_counts[0] >= t.hoisted


# -- greedy --------------------------------------------------------------------

def test_greedy_uniform_first_cut_is_midplane():
    m, ns, g = setup(2, 2, SingularitySpec.boundary(2, 2))
    t = build_greedy_plane_tree(m, ns)
    a, b = t.children(0)
    assert len(t.elements(a)) == len(t.elements(b)) == 8
    # lowest axis: the left half is x < 1/2
    assert np.all(m.anchors[t.elements(a), 0] < 2)


def test_greedy_1d_path_is_balanced():
    m, ns, g = setup(1, 4, SingularitySpec.boundary(1, 1))
    t = build_greedy_plane_tree(m, ns)
    assert t.height == 4


def test_greedy_height_on_irregular_edge():
    for r in range(3, 10):
        m, ns, g = setup(2, r, POLY)
        t = build_greedy_plane_tree(m, ns)
        assert t.height <= math.ceil(math.log2(ns.n_vars)) + 3
        assert ancestor_descendant_ok(t, g)


def test_two_element_order():
    m, ns, g = setup(1, 1, SingularitySpec.boundary(1, 1))
    t = build_greedy_plane_tree(m, ns)
    assert ordering_from_tree(t, g).tolist() == [0, 2, 1]


# -- shared properties ---------------------------------------------------------

TREES = [
    ("layered", 2, 4, SingularitySpec.corner(2), 2),
    ("layered", 3, 3, SingularitySpec.point([F(1, 3)] * 3), 1),
    ("plane", 2, 5, SingularitySpec.boundary(2, 1), 2),
    ("plane", 3, 3, SingularitySpec.boundary(3, 2), 1),
    ("plane", 3, 2, SingularitySpec.boundary(3, 3), 1),
    ("plane", 2, 5, POLY, 1),
    ("greedy", 2, 5, POLY, 2),
    ("greedy", 3, 3, SingularitySpec.boundary(3, 1), 1),
    ("greedy", 2, 4, SingularitySpec.corner(2), 1),
]


@pytest.mark.parametrize("strategy,d,r,s,p", TREES)
def test_tree_invariants(strategy, d, r, s, p):
    m, ns, g = setup(d, r, s, p)
    t = build_tree(m, strategy, ns)
    assert not t.validate()
    assert t.n_vars == g.n and np.all(t.var_node >= 0)
    assert ancestor_descendant_ok(t, g)
    order = ordering_from_tree(t, g)
    assert sorted(order.tolist()) == list(range(g.n))
    # each non-hoisted variable sits at the deepest node containing its support
    hoisted = t.hoisted
    for v in range(0, g.n, max(1, g.n // 50)):
        ent = ns.var_entity[v]
        sup = set(ns.support(ent).tolist())
        node = int(t.var_node[v])
        assert sup <= set(t.elements(node).tolist())
        if node != 0 or not hoisted:
            for c in t.children(node):
                assert not sup <= set(t.elements(c).tolist())


def test_dump_text_format():
    m, ns, g = setup(2, 1, SingularitySpec.corner(2))
    text = build_layered_tree(m, ns).dump_text()
    lines = text.splitlines()
    assert lines[0].startswith("0 elems=4 vars=")
    assert all(line.split()[1].startswith("elems=") for line in lines)


def test_natural_ordering():
    g = OverlapGraph.from_edges(3, [(0, 1)])
    assert natural_ordering(g).tolist() == [0, 1, 2]


def test_ordering_rejects_mismatched_graph():
    m, ns, g = setup(2, 2, SingularitySpec.corner(2))
    t = build_layered_tree(m, ns)
    with pytest.raises(ValueError):
        ordering_from_tree(t, OverlapGraph.from_edges(3, []))


# -- quasi-optimality audit ----------------------------------------------------

@pytest.mark.parametrize("d,r,s,p", [
    (2, 8, SingularitySpec.corner(2), 1),
    (2, 6, SingularitySpec.corner(2), 3),
    (3, 5, SingularitySpec.corner(3), 2),
    (2, 7, SingularitySpec.point([F(1, 3), F(2, 5)]), 2),
    (3, 4, SingularitySpec.point([F(1, 3), F(1, 2), F(3, 7)]), 1),
])
def test_point_meshes_are_quasi_optimal(d, r, s, p):
    m, ns, g = setup(d, r, s, p)
    rep = quasi_optimality_report(build_layered_tree(m, ns), g)
    assert rep.ok, rep.violations()
    assert rep.n_layers <= r + 1
    assert rep.M_overlap_span <= 2


def test_face_tree_node_sizes_grow_like_sqrt_nv():
    # q=2 in 3D: the largest separator roughly doubles per refinement step
    top = []
    for r in range(3, 7):
        m, ns, g = setup(3, r, SingularitySpec.boundary(3, 2))
        rep = quasi_optimality_report(build_dividing_plane_tree(m, ns, hoist=False), g)
        top.append(rep.L_max)
    growth = np.array(top[1:]) / np.array(top[:-1])
    assert np.all((growth > 1.5) & (growth < 2.6)), top


def test_constrained_span_is_reported():
    m, ns, g = setup(2, 7, SingularitySpec.point([F(1, 3), F(2, 5)]), 1)
    rep = quasi_optimality_report(build_layered_tree(m, ns), g)
    # absorbing hanging nodes may widen supports by one level
    assert rep.M_overlap_span <= rep.M_constrained_span <= 3
