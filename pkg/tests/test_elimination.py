import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from smlab.basis import OverlapGraph, enumerate_nodes, overlap_graph
from smlab.elimination import (CSV_HEADER, dense_oracle_eliminate, flops_removal, report_csv,
                               symbolic_eliminate, tree_cost, tree_cost_terms)
from smlab.mesh import SingularitySpec, refine_toward_singularity
from smlab.partition import (build_dividing_plane_tree, build_greedy_plane_tree,
                             build_layered_tree, natural_ordering, ordering_from_tree)

PATH = OverlapGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
STAR = OverlapGraph.from_edges(5, [(0, k) for k in range(1, 5)])
K5 = OverlapGraph.from_edges(5, list(itertools.combinations(range(5), 2)))


def random_graph(rng, n, prob):
    a = np.triu(rng.random((n, n)) < prob, 1)
    return a | a.T


def check_against_oracles(g, order):
    rep = symbolic_eliminate(g, order)
    dense = dense_oracle_eliminate(g.dense(), order)
    assert rep == dense, rep.mismatch(dense)
    zs, fill, total = oracles.eliminate(g.n, [tuple(e) for e in g.edges()], list(order))
    assert rep.per_pivot_z.tolist() == zs
    assert rep.fill_edges == fill and rep.total_subtractions == total
    return rep


# -- worked small cases --------------------------------------------------------

def test_path_end_first():
    rep = symbolic_eliminate(PATH, [0, 1, 2, 3])
    assert rep.per_pivot_z.tolist() == [2, 2, 2, 1]
    assert rep.total_subtractions == 6 and rep.fill_edges == 0
    assert rep.peak_front == 2


def test_path_middle_first_fills():
    rep = check_against_oracles(PATH, [1, 2, 0, 3])
    assert rep.fill_edges == 2  # 0-2, then 0-3


def test_star_center_first_vs_leaves_first():
    assert symbolic_eliminate(STAR, [0, 1, 2, 3, 4]).fill_edges == 6
    leaves = symbolic_eliminate(STAR, [1, 2, 3, 4, 0])
    assert leaves.fill_edges == 0
    assert leaves.total_subtractions == 4 * 2


def test_complete_graph():
    rep = symbolic_eliminate(K5, range(5))
    assert rep.per_pivot_z.tolist() == [5, 4, 3, 2, 1]
    assert rep.total_subtractions == 40 and rep.fill_edges == 0


def test_edgeless_and_empty_graphs():
    rep = symbolic_eliminate(OverlapGraph.from_edges(6, []), range(6))
    assert rep.total_subtractions == 0 and rep.fill_edges == 0
    assert np.all(rep.per_pivot_z == 1)
    empty = symbolic_eliminate(OverlapGraph.from_edges(0, []), [])
    assert empty.n_vars == 0 and empty.peak_front == 0


def test_identity_pattern_has_no_work():
    rep = dense_oracle_eliminate(np.eye(7, dtype=bool), np.arange(7)[::-1])
    assert rep.total_subtractions == 0 and rep.fill_edges == 0


@pytest.mark.parametrize("bad", [[0, 1, 2], [0, 0, 1, 2], [0, 1, 2, 4]])
def test_bad_orderings_rejected(bad):
    with pytest.raises(ValueError):
        symbolic_eliminate(PATH, bad)


def test_dense_oracle_rejects_asymmetric():
    a = np.zeros((3, 3), dtype=bool)
    a[0, 1] = True
    with pytest.raises(ValueError):
        dense_oracle_eliminate(a, [0, 1, 2])


def test_csv():
    rep = symbolic_eliminate(PATH, range(4))
    text = report_csv([rep.csv_row("path", "natural")])
    assert text.splitlines() == [",".join(CSV_HEADER), "path,natural,4,0,6,2"]


# -- flops_removal -------------------------------------------------------------

def test_flops_removal_values():
    assert flops_removal(0, 5) == 0
    assert flops_removal(1, 1) == 0
    assert flops_removal(2, 3) == 6 + 2
    assert flops_removal(5, 5) == 40


@given(st.integers(0, 60), st.integers(0, 60))
def test_flops_removal_matches_sum(a, b):
    if a > b:
        with pytest.raises(ValueError):
            flops_removal(a, b)
    else:
        assert flops_removal(a, b) == oracles.flops_removal(a, b)


# -- random graphs -------------------------------------------------------------

def test_random_graphs_match_oracles(rng):
    for _ in range(100):
        n = int(rng.integers(1, 61))
        g = OverlapGraph.from_dense(random_graph(rng, n, 0.2))
        check_against_oracles(g, rng.permutation(n))


@given(st.integers(2, 25), st.floats(0.05, 0.6), st.integers(0, 2 ** 32 - 1))
def test_fill_invariants(n, prob, seed):
    rng = np.random.default_rng(seed)
    g = OverlapGraph.from_dense(random_graph(rng, n, prob))
    rep = symbolic_eliminate(g, rng.permutation(n))
    # filled graph edges = sum of later-neighbour counts
    assert int((rep.per_pivot_z - 1).sum()) == g.n_edges + rep.fill_edges
    assert rep.fill_edges <= n * (n - 1) // 2 - g.n_edges
    assert rep.per_pivot_z[-1] == 1
    assert np.all(rep.per_pivot_z <= n - np.arange(n))


# -- meshes --------------------------------------------------------------------

MESHES = [
    (1, 6, SingularitySpec.corner(1), 2),
    (2, 4, SingularitySpec.corner(2), 1),
    (2, 3, SingularitySpec.corner(2), 3),
    (2, 4, SingularitySpec.boundary(2, 1), 1),
    (2, 3, SingularitySpec.boundary(2, 1), 2),
    (2, 2, SingularitySpec.boundary(2, 2), 2),
    (3, 2, SingularitySpec.corner(3), 1),
    (3, 2, SingularitySpec.boundary(3, 1), 1),
    (3, 2, SingularitySpec.boundary(3, 2), 1),
    (2, 4, SingularitySpec.interior(2, 1), 1),
]


@pytest.mark.parametrize("d,r,s,p", MESHES)
def test_mesh_orderings_match_dense_oracle(d, r, s, p):
    m = refine_toward_singularity(d, r, s, p)
    ns = enumerate_nodes(m)
    g = overlap_graph(ns)
    assert g.n <= 500
    orders = [natural_ordering(g), np.random.default_rng(3).permutation(g.n)]
    if s.q == 0:
        orders.append(ordering_from_tree(build_layered_tree(m, ns), g))
    else:
        orders.append(ordering_from_tree(build_dividing_plane_tree(m, ns), g))
        orders.append(ordering_from_tree(build_greedy_plane_tree(m, ns), g))
    for order in orders:
        check_against_oracles(g, order)


# -- tree cost -----------------------------------------------------------------

def test_tree_cost_single_element():
    m = refine_toward_singularity(2, 0, SingularitySpec.corner(2), 3)
    ns = enumerate_nodes(m)
    g = overlap_graph(ns)
    t = build_layered_tree(m, ns)
    assert t.n_nodes == 1
    assert tree_cost(t, g) == flops_removal(g.n, g.n)
    # one clique: tree cost equals the elimination total
    assert tree_cost(t, g) == symbolic_eliminate(g, ordering_from_tree(t, g)).total_subtractions


@pytest.mark.parametrize("d,r,s,p", MESHES[:6])
def test_tree_cost_bounds_elimination(d, r, s, p):
    # b = a + b_ext treats every node as a dense clique, so it bounds the exact count
    m = refine_toward_singularity(d, r, s, p)
    ns = enumerate_nodes(m)
    g = overlap_graph(ns)
    t = build_layered_tree(m, ns) if s.q == 0 else build_dividing_plane_tree(m, ns)
    rep = symbolic_eliminate(g, ordering_from_tree(t, g))
    cost = tree_cost(t, g)
    assert cost >= rep.total_subtractions
    a, b = tree_cost_terms(t, g)
    assert a.sum() == g.n and np.all(b >= a)
