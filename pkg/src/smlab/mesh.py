"""Hypercubic meshes h-refined toward a q-dimensional singularity.

Elements are dyadic cells of the unit ``d``-cube stored on the integer
lattice of resolution ``2**R``: an element of level ``l`` has side
``2**(R - l)`` lattice units and its anchor (lower corner) is a multiple of
that side.  The last axis is the time axis.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .lattice import LeafIndex, corner_offsets, pack_rows

MAX_DIM = 5
MAX_LEVEL = 60
PLACEMENTS = ("corner", "boundary", "interior")


class MeshError(ValueError):
    pass


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x)
    return Fraction(x)


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box in the unit cube (may be degenerate)."""

    lo: tuple[Fraction, ...]
    hi: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(_frac(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(_frac(v) for v in self.hi))
        if len(self.lo) != len(self.hi):
            raise MeshError("box corners differ in dimension")
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise MeshError(f"box has lo > hi: {self.lo} {self.hi}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def extended_axes(self) -> tuple[int, ...]:
        return tuple(a for a in range(self.dim) if self.hi[a] > self.lo[a])


@dataclass(frozen=True)
class SingularitySpec:
    """A q-dimensional target set made of axis-aligned degenerate boxes."""

    q: int
    boxes: tuple[Box, ...]
    placement: str = "boundary"

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if self.placement not in PLACEMENTS:
            raise MeshError(f"unknown placement {self.placement!r}")

    # -- factories -----------------------------------------------------
    @classmethod
    def corner(cls, d: int, corner: Sequence[int] | None = None) -> "SingularitySpec":
        c = tuple(Fraction(v) for v in (corner or (0,) * d))
        return cls(0, (Box(c, c),), "corner")

    @classmethod
    def boundary(cls, d: int, q: int) -> "SingularitySpec":
        """Face of the unit cube spanned by the last ``q`` axes at the origin.

        ``q == 0`` gives the origin corner and ``q == d`` the whole cube
        (uniform refinement).
        """
        if not 0 <= q <= d:
            raise MeshError(f"need 0 <= q <= d, got q={q}, d={d}")
        if q == 0:
            return cls.corner(d)
        lo = (Fraction(0),) * d
        hi = tuple(Fraction(1) if a >= d - q else Fraction(0) for a in range(d))
        return cls(q, (Box(lo, hi),), "boundary")

    @classmethod
    def interior(cls, d: int, q: int, at=Fraction(1, 3)) -> "SingularitySpec":
        """Like :meth:`boundary` but pinned at ``at`` on the non-extended axes.

        The default 1/3 is never a dyadic lattice point, so the set never
        sits on an element face.
        """
        if not 0 <= q < d:
            raise MeshError(f"interior placement needs 0 <= q < d, got q={q}, d={d}")
        at = _frac(at)
        if not 0 < at < 1:
            raise MeshError("interior offset must lie strictly inside (0, 1)")
        lo = tuple(Fraction(0) if a >= d - q else at for a in range(d))
        hi = tuple(Fraction(1) if a >= d - q else at for a in range(d))
        return cls(q, (Box(lo, hi),), "interior")

    @classmethod
    def point(cls, coords: Sequence) -> "SingularitySpec":
        c = tuple(_frac(v) for v in coords)
        on_corner = all(v in (0, 1) for v in c)
        on_bdry = any(v in (0, 1) for v in c)
        placement = "corner" if on_corner else ("boundary" if on_bdry else "interior")
        return cls(0, (Box(c, c),), placement)

    @classmethod
    def polyline(cls, points: Sequence[Sequence], placement: str = "interior") -> "SingularitySpec":
        """Chain of axis-aligned segments through consecutive ``points``."""
        pts = [tuple(_frac(v) for v in p) for p in points]
        if len(pts) < 2:
            raise MeshError("polyline needs at least two points")
        boxes = []
        for a, b in zip(pts, pts[1:]):
            diff = [i for i in range(len(a)) if a[i] != b[i]]
            if len(diff) != 1:
                raise MeshError(f"segment {a}->{b} is not axis-aligned")
            boxes.append(Box(tuple(map(min, a, b)), tuple(map(max, a, b))))
        return cls(1, tuple(boxes), placement)

    # -- queries -------------------------------------------------------
    @property
    def extended_axes(self) -> tuple[int, ...]:
        axes = set()
        for b in self.boxes:
            axes.update(b.extended_axes)
        return tuple(sorted(axes))

    def validate(self, d: int) -> None:
        if not 0 <= self.q <= d:
            raise MeshError(f"singularity dimension q={self.q} outside [0, {d}]")
        for b in self.boxes:
            if b.dim != d:
                raise MeshError(f"singularity box has dimension {b.dim}, mesh has {d}")
            if any(v < 0 or v > 1 for v in b.lo + b.hi):
                raise MeshError("singularity box outside the unit hypercube")
            if len(b.extended_axes) != self.q:
                raise MeshError(
                    f"box {b} has {len(b.extended_axes)} extended axes, expected q={self.q}")
        if self.placement == "corner":
            if self.q != 0 or any(v not in (0, 1) for b in self.boxes for v in b.lo):
                raise MeshError("corner placement needs a point on a domain corner")

    def lattice_bbox(self, R: int) -> tuple[np.ndarray, np.ndarray]:
        """Bounding box of all boxes in lattice units (floats)."""
        scale = 1 << R
        lo = np.array([float(min(b.lo[a] for b in self.boxes) * scale)
                       for a in range(self.boxes[0].dim)])
        hi = np.array([float(max(b.hi[a] for b in self.boxes) * scale)
                       for a in range(self.boxes[0].dim)])
        return lo, hi

    def overlaps(self, anchors: np.ndarray, size: int, R: int) -> np.ndarray:
        """Mask of elements (given anchors and common side) overlapping the set.

        Extended axes need an overlap of positive length, degenerate axes
        closed containment.
        """
        n = len(anchors)
        hit = np.zeros(n, dtype=bool)
        if n == 0:
            return hit
        scale = 1 << R
        for b in self.boxes:
            ok = np.ones(n, dtype=bool)
            for a in range(b.dim):
                lo, hi = b.lo[a] * scale, b.hi[a] * scale
                x = anchors[:, a]
                if hi > lo:
                    ok &= x <= math.ceil(hi) - 1
                    ok &= x + size >= math.floor(lo) + 1
                else:
                    ok &= x <= math.floor(lo)
                    ok &= x + size >= math.ceil(lo)
            hit |= ok
        return hit

    def slice_time(self, t: Fraction) -> "SingularitySpec":
        """Cross-section at time ``t`` (last axis), dimension reduced by one."""
        boxes = []
        q = self.q
        for b in self.boxes:
            if b.lo[-1] <= t <= b.hi[-1]:
                boxes.append(Box(b.lo[:-1], b.hi[:-1]))
        if self.boxes and self.boxes[0].hi[-1] > self.boxes[0].lo[-1]:
            q = self.q - 1
        placement = self.placement
        if q == 0 and boxes and all(v in (0, 1) for bx in boxes for v in bx.lo):
            placement = "corner"
        elif placement == "corner" and q == 0 and boxes:
            placement = "boundary"
        return SingularitySpec(max(q, 0), tuple(boxes), placement)

    def to_json(self) -> dict:
        def num(v: Fraction):
            if v.denominator & (v.denominator - 1) == 0 and v.denominator < (1 << 52):
                return float(v)
            return f"{v.numerator}/{v.denominator}"
        return {"q": self.q, "placement": self.placement,
                "boxes": [[[num(v) for v in b.lo], [num(v) for v in b.hi]] for b in self.boxes]}

    @classmethod
    def from_json(cls, obj: dict) -> "SingularitySpec":
        boxes = tuple(Box(tuple(Fraction(v) for v in lo), tuple(Fraction(v) for v in hi))
                      for lo, hi in obj["boxes"])
        return cls(int(obj["q"]), boxes, obj.get("placement", "boundary"))


@dataclass(frozen=True)
class Element:
    level: int
    anchor: tuple[int, ...]
    R: int

    @property
    def d(self) -> int:
        return len(self.anchor)

    @property
    def size(self) -> int:
        return 1 << (self.R - self.level)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Leaf elements of a refinement tree, sorted by (level, anchor)."""

    d: int
    R: int
    levels: np.ndarray
    anchors: np.ndarray
    singularity: SingularitySpec
    p: int = 1
    _index: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.int64).reshape(-1)
        anchors = np.asarray(self.anchors, dtype=np.int64).reshape(len(levels), self.d)
        keys = [anchors[:, a] for a in range(self.d - 1, -1, -1)] + [levels]
        order = np.lexsort(keys) if len(levels) else np.arange(0)
        levels, anchors = levels[order], anchors[order]
        levels.setflags(write=False)
        anchors.setflags(write=False)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "anchors", anchors)

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def n_elements(self) -> int:
        return len(self.levels)

    @property
    def sizes(self) -> np.ndarray:
        return np.left_shift(1, self.R - self.levels)

    @property
    def q(self) -> int:
        return self.singularity.q

    def element(self, i: int) -> Element:
        return Element(int(self.levels[i]), tuple(int(v) for v in self.anchors[i]), self.R)

    def __iter__(self) -> Iterator[Element]:
        for i in range(len(self)):
            yield self.element(i)

    def with_p(self, p: int) -> "Mesh":
        return Mesh(self.d, self.R, self.levels, self.anchors, self.singularity, p)

    @property
    def leaf_index(self) -> LeafIndex:
        if not self._index:
            self._index.append(LeafIndex(self.levels, self.anchors, self.R))
        return self._index[0]

    def level_counts(self) -> dict[int, int]:
        lv, cnt = np.unique(self.levels, return_counts=True)
        return {int(a): int(b) for a, b in zip(lv, cnt)}

    # -- serialization -------------------------------------------------
    def to_json(self) -> dict:
        return {
            "d": self.d, "R": self.R, "p": self.p,
            "singularity": self.singularity.to_json(),
            "elements": [{"level": int(l), "anchor": [int(v) for v in a]}
                         for l, a in zip(self.levels, self.anchors)],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Mesh":
        d = int(obj["d"])
        els = obj["elements"]
        levels = np.array([e["level"] for e in els], dtype=np.int64)
        anchors = np.array([e["anchor"] for e in els], dtype=np.int64).reshape(len(els), d)
        return cls(d, int(obj["R"]), levels, anchors,
                   SingularitySpec.from_json(obj["singularity"]), int(obj.get("p", 1)))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Mesh":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def _refine(anchors: np.ndarray, child_size: int, d: int) -> np.ndarray:
    if len(anchors) == 0:
        return anchors.reshape(0, d)
    kids = anchors[:, None, :] + corner_offsets(d)[None, :, :] * child_size
    return kids.reshape(-1, d)


def _vertex_neighbours(coarse: np.ndarray, fine: np.ndarray, lev_coarse: int,
                       R: int, d: int) -> np.ndarray:
    """Mask of level-``lev_coarse`` cells sharing a point with any level+1 cell."""
    if len(coarse) == 0 or len(fine) == 0:
        return np.zeros(len(coarse), dtype=bool)
    big = 1 << (R - lev_coarse)
    h = big >> 1
    # closed boxes [f, f+2h] and [e, e+h] meet iff f in [e-2h, e+h]
    base = ((fine + h) // big) * big
    cands = [base, base - big]
    rows = []
    for pick in corner_offsets(d):
        rows.append(np.stack([cands[pick[a]][:, a] for a in range(d)], axis=1))
    cand = np.concatenate(rows, axis=0)
    cand = cand[np.all((cand >= 0) & (cand < (1 << R)), axis=1)]
    ckeys = np.unique(pack_rows(cand >> (R - lev_coarse), lev_coarse))
    return np.isin(pack_rows(coarse >> (R - lev_coarse), lev_coarse), ckeys)


def refine_toward_singularity(d: int, R: int, s: SingularitySpec, p: int = 1) -> Mesh:
    """Build the mesh refined ``R`` times toward ``s`` with the 1-irregularity closure.

    At every step the level ``r-1`` elements overlapping the singularity are
    split; level ``r-2`` elements sharing a vertex with one of them are split
    first so that neighbours never differ by more than two levels.
    """
    if not 1 <= d <= MAX_DIM:
        raise MeshError(f"dimension d={d} outside [1, {MAX_DIM}]")
    if not 0 <= R <= MAX_LEVEL:
        raise MeshError(f"refinement level R={R} outside [0, {MAX_LEVEL}]")
    if p < 1:
        raise MeshError("polynomial order p must be >= 1")
    s.validate(d)

    G: dict[int, np.ndarray] = {0: np.zeros((1, d), dtype=np.int64)}
    for r in range(1, R + 1):
        H = G[r - 1]
        size = 1 << (R - (r - 1))
        over = s.overlaps(H, size, R)
        hit = H[over]
        kept = H[~over]
        if r > 1 and len(hit):
            K = G[r - 2]
            touch = _vertex_neighbours(K, hit, r - 2, R, d)
            G[r - 2] = K[~touch]
            kept = np.concatenate([kept, _refine(K[touch], size, d)], axis=0)
        G[r - 1] = kept
        G[r] = _refine(hit, size >> 1, d)

    levels = np.concatenate([np.full(len(G[r]), r, dtype=np.int64) for r in range(R + 1)])
    anchors = np.concatenate([G[r] for r in range(R + 1)], axis=0)
    return Mesh(d, R, levels, anchors, s, p)


def predicted_element_count(d: int, q: int, r: int) -> int:
    """Closed-form element count of a boundary/corner singularity mesh."""
    if not (0 <= q <= d) or r < 0:
        raise MeshError(f"invalid (d, q, r) = {(d, q, r)}")
    full = (1 << d) - 1
    if q == 0:
        return full * r + 1
    num = full * (1 << (r * q)) - ((1 << d) - (1 << q))
    den = (1 << q) - 1
    assert num % den == 0
    return num // den


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    tiling: list[str] = field(default_factory=list)
    irregularity: list[str] = field(default_factory=list)
    depth: list[str] = field(default_factory=list)

    @property
    def violations(self) -> list[str]:
        return self.tiling + self.irregularity + self.depth

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        # truthy when something is wrong, so ``assert not report`` reads well
        return not self.ok


def vertex_level_spread(m: Mesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """For every distinct leaf vertex: coarsest and finest level of leaves touching it.

    Returns ``(vertex_rows, min_level, max_level)``.  Leaves containing the
    vertex without having it as a corner (hanging configurations) are found
    by point location.
    """
    d, R = m.d, m.R
    offs = corner_offsets(d)
    sizes = m.sizes
    verts = (m.anchors[:, None, :] + offs[None] * sizes[:, None, None]).reshape(-1, d)
    lev_inst = np.repeat(m.levels, len(offs))
    keys = pack_rows(verts, R + 1)
    uniq, first, inv = np.unique(keys, return_index=True, return_inverse=True)
    rows = verts[first]
    lo = np.full(len(uniq), MAX_LEVEL + 1, dtype=np.int64)
    hi = np.full(len(uniq), -1, dtype=np.int64)
    np.minimum.at(lo, inv, lev_inst)
    np.maximum.at(hi, inv, lev_inst)
    counts = np.bincount(inv, minlength=len(uniq))
    on_bdry = ((rows == 0) | (rows == (1 << R))).sum(axis=1)
    hanging = np.flatnonzero(counts < (1 << (d - on_bdry)))
    if len(hanging):
        pts = np.repeat(rows[hanging], len(offs), axis=0)
        sides = np.tile(offs * 2 - 1, (len(hanging), 1))
        leaf = m.leaf_index.locate(pts, sides)
        ok = leaf >= 0
        owner = np.repeat(hanging, len(offs))[ok]
        np.minimum.at(lo, owner, m.levels[leaf[ok]])
        np.maximum.at(hi, owner, m.levels[leaf[ok]])
    return rows, lo, hi


def validate_mesh(m: Mesh) -> ValidationReport:
    rep = ValidationReport()
    d, R = m.d, m.R
    if len(m) == 0:
        rep.tiling.append("mesh has no elements")
        return rep
    sizes = m.sizes
    if np.any(m.levels < 0) or np.any(m.levels > R):
        rep.tiling.append("element level outside [0, R]")
        return rep
    if np.any(m.anchors % sizes[:, None] != 0):
        rep.tiling.append("anchor not a multiple of the element side")
    if np.any(m.anchors < 0) or np.any(m.anchors + sizes[:, None] > (1 << R)):
        rep.tiling.append("element outside the unit hypercube")
    volume = sum(int(c) << ((R - l) * d) for l, c in m.level_counts().items())
    if volume != 1 << (R * d):
        rep.tiling.append(f"leaf volume {volume} != domain volume {1 << (R * d)}")
    keys = pack_rows(np.column_stack([m.levels, m.anchors]), max(R + 1, 7))
    if len(np.unique(keys)) != len(keys):
        rep.tiling.append("duplicate leaves")
    # dyadic cells overlap only if one is an ancestor of the other
    index = m.leaf_index
    for lev in index.present_levels:
        sel = np.flatnonzero(m.levels > lev)
        if len(sel) == 0:
            continue
        anc = index.lookup(lev, m.anchors[sel] >> (R - lev))
        bad = sel[anc >= 0]
        if len(bad):
            rep.tiling.append(
                f"{len(bad)} leaves lie inside level-{lev} leaves (first: {m.element(int(bad[0]))})")
    if rep.tiling:
        return rep

    rows, lo, hi = vertex_level_spread(m)
    bad = np.flatnonzero(hi - lo > 2)
    if len(bad):
        v = rows[bad[0]]
        rep.irregularity.append(
            f"{len(bad)} vertices shared by leaves more than two levels apart "
            f"(first at {tuple(int(x) for x in v)}: levels {int(lo[bad[0]])}..{int(hi[bad[0]])})")

    if m.singularity.boxes:
        for lev in index.present_levels:
            if lev == R:
                continue
            sel = np.flatnonzero(m.levels == lev)
            over = m.singularity.overlaps(m.anchors[sel], 1 << (R - lev), R)
            if over.any():
                rep.depth.append(f"{int(over.sum())} level-{lev} leaves overlap the singularity")
    return rep


# ---------------------------------------------------------------------------
# time slicing
# ---------------------------------------------------------------------------

def slice_at_time(m: Mesh, t) -> Mesh:
    """Cross-section of a space-time mesh at time ``t`` (last axis).

    On a shared time face the later element wins; at ``t == 1`` the last
    elements are taken.
    """
    if m.d < 2:
        raise MeshError("slicing needs d >= 2")
    t = _frac(t)
    if not 0 <= t <= 1:
        raise MeshError("t must lie in [0, 1]")
    T = t * (1 << m.R)
    if T.denominator != 1:
        raise MeshError(f"t={t} is not on the 2^{m.R} lattice")
    T = int(T)
    lo = m.anchors[:, -1]
    hi = lo + m.sizes
    if T == 1 << m.R:
        keep = hi == T
    else:
        keep = (lo <= T) & (T < hi)
    return Mesh(m.d - 1, m.R, m.levels[keep], m.anchors[keep][:, :-1],
                m.singularity.slice_time(t), m.p)


def time_marching_sequence(d: int, q: int, r: int, placement: str = "boundary",
                           p: int = 1) -> tuple[Mesh, ...]:
    """The ``2**r`` spatial meshes replacing a (d, q) space-time mesh.

    Every step uses the same (d-1)-dimensional mesh refined toward a
    (q-1)-dimensional singularity, so the mesh object is shared.
    """
    if d < 2:
        raise MeshError("time marching needs d >= 2")
    if q < 1:
        raise MeshError("a point singularity has no time-marching counterpart (q must be >= 1)")
    if q > d:
        raise MeshError(f"q={q} > d={d}")
    if placement == "interior":
        raise MeshError("time marching sequences are defined for boundary placements")
    step = refine_toward_singularity(d - 1, r, SingularitySpec.boundary(d - 1, q - 1), p)
    return (step,) * (1 << r)
