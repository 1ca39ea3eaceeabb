from fractions import Fraction as F

import numpy as np
import pytest

import oracles
from conftest import explicit
from smlab.mesh import (Mesh, MeshError, SingularitySpec, predicted_element_count,
                        refine_toward_singularity, slice_at_time, time_marching_sequence,
                        validate_mesh, vertex_level_spread)


def boxes(s):
    return [(b.lo, b.hi) for b in s.boxes]


# -- construction ------------------------------------------------------------

def test_no_refinement_gives_one_element():
    m = refine_toward_singularity(2, 0, SingularitySpec.corner(2))
    assert len(m) == 1
    assert m.levels.tolist() == [0]


@pytest.mark.parametrize("d,q,r,expected", [
    (2, 0, 4, 13),
    (3, 1, 5, 218),
    (4, 0, 3, 46),
    (3, 2, 2, 36),
    (3, 3, 2, 64),
])
def test_frozen_element_counts(d, q, r, expected):
    assert predicted_element_count(d, q, r) == expected
    assert len(refine_toward_singularity(d, r, SingularitySpec.boundary(d, q))) == expected


@pytest.mark.parametrize("d,r", [(1, 5), (2, 3), (3, 2)])
def test_uniform_is_full_refinement(d, r):
    assert predicted_element_count(d, d, r) == 2 ** (d * r)


SPECS = [
    (2, 4, SingularitySpec.corner(2)),
    (2, 4, SingularitySpec.point([F(1, 3), F(2, 5)])),
    (2, 4, SingularitySpec.point([F(1, 2), F(1, 2)])),
    (2, 5, SingularitySpec.boundary(2, 1)),
    (2, 4, SingularitySpec.interior(2, 1)),
    (3, 3, SingularitySpec.boundary(3, 2)),
    (3, 3, SingularitySpec.interior(3, 1)),
    (2, 5, SingularitySpec.polyline([[F(1, 5), F(1, 7)], [F(1, 5), F(3, 4)], [F(5, 6), F(3, 4)]])),
    (4, 2, SingularitySpec.boundary(4, 1)),
]


@pytest.mark.parametrize("d,R,s", SPECS)
def test_matches_literal_algorithm(d, R, s):
    m = refine_toward_singularity(d, R, s)
    assert explicit(m) == oracles.construct_mesh(d, R, boxes(s))
    assert validate_mesh(m).ok


def test_interior_point_fig_mesh():
    s = SingularitySpec.point([F(1, 3), F(1, 3)])
    m = refine_toward_singularity(2, 4, s)
    assert len(m) == len(oracles.construct_mesh(2, 4, boxes(s)))
    assert m.singularity.placement == "interior"


def test_growth_ratio_tends_to_two_to_q():
    for q in (1, 2):
        a = predicted_element_count(3, q, 8)
        b = len(refine_toward_singularity(3, 9, SingularitySpec.boundary(3, q)))
        assert abs(b / a / 2 ** q - 1) < 0.05


def test_singular_leaves_are_finest():
    s = SingularitySpec.boundary(3, 1)
    m = refine_toward_singularity(3, 6, s)
    for lev in np.unique(m.levels):
        sel = m.levels == lev
        hit = s.overlaps(m.anchors[sel], 1 << (m.R - int(lev)), m.R)
        assert not hit.any() or lev == m.R


def test_vertex_levels_differ_by_at_most_two():
    m = refine_toward_singularity(3, 5, SingularitySpec.point([F(1, 3)] * 3))
    _, lo, hi = vertex_level_spread(m)
    assert (hi - lo).max() <= 2


@pytest.mark.parametrize("bad", [
    lambda: refine_toward_singularity(6, 2, SingularitySpec.corner(6)),
    lambda: refine_toward_singularity(2, -1, SingularitySpec.corner(2)),
    lambda: refine_toward_singularity(2, 61, SingularitySpec.corner(2)),
    lambda: refine_toward_singularity(2, 2, SingularitySpec.point([F(3, 2), F(0)])),
    lambda: SingularitySpec.boundary(2, 3),
    lambda: SingularitySpec.polyline([[0, 0], [1, 1]]),
])
def test_invalid_inputs_raise(bad):
    with pytest.raises(MeshError):
        bad()


# -- validation ----------------------------------------------------------------

def test_validate_flags_level_jump():
    s = SingularitySpec.corner(2)
    levels = [1, 1, 1, 2, 2, 2, 3, 3, 3, 3]
    anchors = [(4, 0), (0, 4), (4, 4), (2, 0), (0, 2), (2, 2), (0, 0), (1, 0), (0, 1), (1, 1)]
    m = Mesh(2, 3, levels, anchors, s)
    assert validate_mesh(m).ok
    # three level-1 quadrants beside a quadrant tiled at level 4: spread 3
    anchors = [(8, 0), (0, 8), (8, 8)] + [(x, y) for x in range(8) for y in range(8)]
    m = Mesh(2, 4, [1, 1, 1] + [4] * 64, anchors, s)
    rep = validate_mesh(m)
    assert rep.irregularity and not rep.tiling


def test_validate_flags_missing_leaf():
    m = refine_toward_singularity(2, 3, SingularitySpec.corner(2))
    keep = np.arange(1, len(m))
    broken = Mesh(2, 3, m.levels[keep], m.anchors[keep], m.singularity)
    rep = validate_mesh(broken)
    assert rep.tiling
    assert rep


def test_validate_flags_coarse_singular_leaf():
    m = refine_toward_singularity(2, 0, SingularitySpec.corner(2))
    bad = Mesh(2, 2, [0], [(0, 0)], m.singularity)
    assert validate_mesh(bad).depth


# -- slicing and time marching -----------------------------------------------

def test_slice_of_moving_point_is_point_mesh():
    # space-time edge: the point (1/3, 1/3) held for all time
    s = SingularitySpec.interior(3, 1)
    m = refine_toward_singularity(3, 5, s)
    sl = slice_at_time(m, F(1, 2))
    ref = refine_toward_singularity(2, 5, SingularitySpec.point([F(1, 3), F(1, 3)]))
    assert len(sl) == len(ref)
    assert explicit(sl) == explicit(ref)


def test_uniform_slice():
    m = refine_toward_singularity(3, 3, SingularitySpec.boundary(3, 3))
    for t in (0, F(3, 8), 1):
        assert len(slice_at_time(m, t)) == 2 ** (3 * 2)


def test_slices_match_oracle_and_total_bound():
    s = SingularitySpec.polyline([[F(1, 3), F(0)], [F(1, 3), F(1, 2)]])
    R = 4
    m = refine_toward_singularity(2, R, s)
    els = explicit(m)
    counts = []
    for T in range(2 ** R + 1):
        sl = slice_at_time(m, F(T, 2 ** R))
        assert explicit(sl) == oracles.slice_elements(els, R, T)
        counts.append(len(sl))
    # slices past the end of the singularity are no finer than the singular ones
    assert max(counts[2 ** (R - 1) + 2:]) <= max(counts[: 2 ** (R - 1)])
    assert sum(counts[:-1]) <= 2 ** R * max(counts)


def test_slice_off_lattice():
    m = refine_toward_singularity(2, 2, SingularitySpec.boundary(2, 1))
    with pytest.raises(MeshError):
        slice_at_time(m, F(1, 3))


@pytest.mark.parametrize("d,q,r,steps,count", [(4, 2, 3, 8, 50), (3, 1, 5, 32, 16), (2, 2, 2, 4, 4)])
def test_time_marching_sequence(d, q, r, steps, count):
    seq = time_marching_sequence(d, q, r)
    assert len(seq) == steps
    assert all(len(s) == count and s.d == d - 1 for s in seq)


def test_time_marching_rejects_point():
    with pytest.raises(MeshError):
        time_marching_sequence(3, 0, 4)


# -- serialization -------------------------------------------------------------

def test_json_round_trip(tmp_path):
    s = SingularitySpec.polyline([[F(1, 5), F(1, 7)], [F(1, 5), F(3, 4)]])
    m = refine_toward_singularity(2, 4, s, p=2)
    path = tmp_path / "m.json"
    m.save(path)
    back = Mesh.load(path)
    assert explicit(back) == explicit(m)
    assert back.p == 2 and back.singularity == m.singularity
    again = tmp_path / "again.json"
    back.save(again)
    assert path.read_bytes() == again.read_bytes()
