import itertools
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from smlab.cost_models import (CostClass, compare, compare_classes, direct_cost_spacetime,
                               direct_cost_time_marching, fit_exponent, iterative_costs,
                               iterative_crossover, mesh_size_class, static_condensation_costs,
                               static_condensation_ops)

# (d, q): (size exponent c, direct space-time c)
SPACETIME_DIRECT = {
    (4, 4): (4, 9), (4, 3): (3, 6), (4, 2): (2, 3), (4, 1): (1, 1),
    (3, 3): (3, 6), (3, 2): (2, 3), (3, 1): (1, 1),
}

# (d, q): (per-step size as (c, k), marching direct total as (c, k))
MARCHING_DIRECT = {
    (4, 4): ((3, 0), (7, 0)), (4, 3): ((2, 0), (4, 0)),
    (4, 2): ((1, 0), (2, 0)), (4, 1): ((0, 1), (1, 1)),
    (3, 3): ((2, 0), (4, 0)), (3, 2): ((1, 0), (2, 0)), (3, 1): ((0, 1), (1, 1)),
}

# (d, q): (space-time (c, k), marching (c, k)) for the iterative solver
ITERATIVE = {
    (4, 4): ((4, 0), (4, 0)), (4, 3): ((3, 0), (3, 0)),
    (4, 2): ((2, 0), (2, 0)), (4, 1): ((1, 0), (1, 1)),
    (3, 3): ((3, 0), (3, 0)), (3, 2): ((2, 0), (2, 0)), (3, 1): ((1, 0), (1, 1)),
}

# (d, q): (space-time (c, k, p power), marching (c, k, p power)) for static condensation
STATIC = {
    (4, 4): ((4, 0, 12), (4, 0, 9)), (4, 3): ((3, 0, 12), (3, 0, 9)),
    (4, 2): ((2, 0, 12), (2, 0, 9)), (4, 1): ((1, 0, 12), (1, 1, 9)),
    (3, 3): ((3, 0, 9), (3, 0, 6)), (3, 2): ((2, 0, 9), (2, 0, 6)), (3, 1): ((1, 0, 9), (1, 1, 6)),
}


def ck(c):
    return (c.c, c.k)


# -- CostClass -----------------------------------------------------------------

def test_costclass_algebra():
    a = CostClass(F(3, 2), 1, 2, "x", label="a")
    b = CostClass(1, 0, 1, "w")
    prod = a * b
    assert (prod.c, prod.k, prod.p_exp, prod.factor) == (F(5, 2), 1, 3, "w*x")
    assert a == CostClass(F(3, 2), 1, 2, "x", label="other")
    assert a.steps() == CostClass(F(5, 2), 1, 2, "x")
    assert CostClass(3).evaluate(2) == 64.0
    assert CostClass(1, 1, factor="n").evaluate(3, n=5) == 3 * 8 * 5
    assert CostClass(F(3, 2), 1).exponent_str() == "3/2;r^1"
    assert str(CostClass(2, 1, 3, "N_iter")) == "O(N_iter p^3 r 2^(2r))"
    with pytest.raises(ValueError):
        CostClass(-1)


def test_compare_classes():
    assert compare_classes(CostClass(1), CostClass(2)) == -1
    assert compare_classes(CostClass(1, 1), CostClass(1)) == 1
    assert compare_classes(CostClass(1, 0, 2), CostClass(1, 0, 3)) == -1
    assert compare_classes(CostClass(2), CostClass(2)) == 0
    assert compare_classes(CostClass(1, factor="a"), CostClass(1, factor="b")) is None
    assert compare_classes(CostClass(1, factor="a"), CostClass(2, factor="b")) == -1


@given(st.fractions(0, 10), st.integers(0, 3), st.integers(0, 12),
       st.fractions(0, 10), st.integers(0, 3), st.integers(0, 12))
def test_compare_antisymmetric(c1, k1, p1, c2, k2, p2):
    a, b = CostClass(c1, k1, p1), CostClass(c2, k2, p2)
    assert compare_classes(a, b) == -compare_classes(b, a)
    assert (compare_classes(a, b) == 0) == (a == b)


# -- direct solver -------------------------------------------------------------

def test_direct_examples():
    assert ck(direct_cost_spacetime(4, 2, 5)) == (3, 0)
    assert ck(direct_cost_spacetime(3, 1, 5)) == (1, 0)
    assert ck(direct_cost_spacetime(4, 4, 5)) == (9, 0)
    assert ck(direct_cost_spacetime(2, 0)) == (0, 1)
    assert ck(direct_cost_time_marching(4, 2, 5)) == (2, 0)
    assert ck(direct_cost_time_marching(4, 1, 5)) == (1, 1)
    assert ck(direct_cost_time_marching(3, 3, 5)) == (4, 0)


@pytest.mark.parametrize("dq", sorted(SPACETIME_DIRECT))
def test_spacetime_rows(dq):
    size, direct = SPACETIME_DIRECT[dq]
    assert mesh_size_class(*dq) == CostClass(size)
    assert direct_cost_spacetime(*dq) == CostClass(direct)


@pytest.mark.parametrize("dq", sorted(MARCHING_DIRECT))
def test_marching_rows(dq):
    d, q = dq
    step, total = MARCHING_DIRECT[dq]
    assert ck(mesh_size_class(d - 1, q - 1)) == step
    assert ck(direct_cost_time_marching(d, q)) == total


@pytest.mark.parametrize("d,q", [(d, q) for d in range(2, 5) for q in range(1, d + 1)])
def test_marching_is_steps_times_spacetime(d, q):
    assert direct_cost_time_marching(d, q) == direct_cost_spacetime(d - 1, q - 1) * CostClass(1)


def test_direct_errors():
    for args in [(5, 1), (0, 0), (2, 3)]:
        with pytest.raises(ValueError):
            direct_cost_spacetime(*args)
    with pytest.raises(ValueError):
        direct_cost_time_marching(3, 0)
    with pytest.raises(ValueError):
        direct_cost_time_marching(1, 1)


# -- iterative -----------------------------------------------------------------

@pytest.mark.parametrize("dq", sorted(ITERATIVE))
def test_iterative_rows(dq):
    st_, mk = iterative_costs(*dq)
    assert (ck(st_), ck(mk)) == ITERATIVE[dq]
    assert st_.factor == "N_iter" and mk.factor == "n_iter"


def test_iterative_crossover():
    assert iterative_crossover(4, 1, 8) == "space-time cheaper iff N_iter < r * n_iter"
    assert iterative_crossover(3, 2, 8) == "space-time cheaper iff N_iter < n_iter"
    # with equal counts and q >= 2 the exponents coincide
    for d, q in [(3, 2), (4, 3), (4, 4)]:
        a, b = iterative_costs(d, q, 6, N_iter="k", n_iter="k")
        assert compare_classes(a, b) == 0
    with pytest.raises(ValueError):
        iterative_costs(3, 0)


# -- static condensation -------------------------------------------------------

@pytest.mark.parametrize("dq", sorted(STATIC))
def test_static_rows(dq):
    st_, mk = static_condensation_costs(*dq, p=3)
    assert (st_.c, st_.k, st_.p_exp) == STATIC[dq][0]
    assert (mk.c, mk.k, mk.p_exp) == STATIC[dq][1]


def test_static_examples_and_errors():
    st_, mk = static_condensation_costs(4, 2, 5, p=2)
    assert st_ == CostClass(2, 0, 12) and mk == CostClass(2, 0, 9)
    with pytest.raises(ValueError):
        static_condensation_costs(3, 2, 5, p=1)
    with pytest.raises(ValueError):
        static_condensation_costs(3, 0, 5, p=2)


@pytest.mark.parametrize("d,p", [(1, 2), (1, 5), (2, 3), (2, 4), (3, 3)])
def test_static_ops_match_dense_elimination(d, p):
    n = (p - 1) ** d
    _, _, total = oracles.eliminate(n, list(itertools.combinations(range(n), 2)), list(range(n)))
    assert static_condensation_ops(d, p) == total


def test_static_ops_single_element():
    assert static_condensation_ops(2, 3) == 20
    # cubic in the interior block size
    n = np.array([(p - 1) ** 2 for p in range(6, 12)])
    ops = np.array([static_condensation_ops(2, p) for p in range(6, 12)])
    assert np.allclose(ops / n ** 3, 1 / 3, rtol=0.25)


# -- comparator ----------------------------------------------------------------

def test_compare_4d_edge_and_face():
    rep = compare(4, 1, 10)
    assert rep.time_marching["steps"] == 1024
    assert rep.ratios["direct_model"] == pytest.approx(10.0)
    assert rep.favours["direct"] == "space-time"
    face = compare(4, 2, 10)
    assert face.ratios["direct_model"] == pytest.approx(2.0 ** -10)
    assert face.favours["direct"] == "time-marching"
    assert face.favours["static"] == "time-marching"
    assert face.favours["iterative"] == "depends"


@pytest.mark.parametrize("d", [2, 3, 4])
def test_compare_uniform(d):
    rep = compare(d, d, 4)
    st_, mk = rep.space_time["direct"], rep.time_marching["direct"]
    assert mk.c < st_.c
    assert rep.space_time["N"] == 2 ** (d * 4)
    assert rep.time_marching["n"] == 2 ** ((d - 1) * 4)


def test_compare_measured_small():
    rep = compare(3, 1, 4, measure=True)
    m = rep.measured
    assert m["space_time_ops"] > 0 and m["marching_ops"] > 0
    assert m["ratio"] == m["marching_ops"] / m["space_time_ops"]


def test_compare_iterative_numbers():
    rep = compare(4, 1, 8, N_iter=100, n_iter=10)
    assert rep.ratios["iterative_model"] == pytest.approx(8 * 10 / 100)


# -- fitting -------------------------------------------------------------------

def test_fit_examples():
    assert fit_exponent([(2, 4), (4, 16), (8, 64)]).slope == pytest.approx(2.0)
    res = fit_exponent([(2, 2), (4, 4), (8, 8)])
    assert res.slope == pytest.approx(1.0) and res.r_squared == pytest.approx(1.0)
    lin = fit_exponent([(1, 2), (2, 4), (3, 8)], log_x=False)
    assert lin.slope == pytest.approx(1.0) and lin.intercept == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("pts", [[(1, 1), (2, 2)], [(2, 1), (2, 3), (2, 5)],
                                 [(1, 0), (2, 1), (3, 2)], [(0, 1), (1, 1), (2, 1)]])
def test_fit_errors(pts):
    with pytest.raises(ValueError):
        fit_exponent(pts)


@given(st.floats(0.1, 4), st.floats(-5, 5), st.lists(st.floats(1, 1e6), min_size=3,
                                                     max_size=8, unique=True))
def test_fit_recovers_power_law(k, c, xs):
    xs = sorted(xs)
    if np.log2(xs[-1]) - np.log2(xs[0]) < 0.5:
        return
    pts = [(x, 2.0 ** c * x ** k) for x in xs]
    assert fit_exponent(pts).slope == pytest.approx(k, rel=1e-6)
