"""Closed-form cost classes for direct, iterative and static-condensation solvers.

A :class:`CostClass` stands for ``factor * p**p_exp * r**k * 2**(c*r)``
with exact rational ``c``; equality is symbolic so model tables compare
exactly.  Measured operation counts are attached separately.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import stats

from .mesh import predicted_element_count


@dataclass(frozen=True)
class CostClass:
    c: Fraction
    k: int = 0
    p_exp: int = 0
    factor: str = ""
    label: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "c", Fraction(self.c))
        if self.c < 0 or self.k < 0 or self.p_exp < 0:
            raise ValueError("cost exponents must be non-negative")

    def __mul__(self, other: "CostClass") -> "CostClass":
        factor = "*".join(sorted(f for f in (self.factor, other.factor) if f))
        return CostClass(self.c + other.c, self.k + other.k, self.p_exp + other.p_exp, factor)

    def steps(self) -> "CostClass":
        """Repeat ``2**r`` times (one solve per time step)."""
        return CostClass(self.c + 1, self.k, self.p_exp, self.factor, self.label)

    def with_label(self, label: str) -> "CostClass":
        return CostClass(self.c, self.k, self.p_exp, self.factor, label)

    def evaluate(self, r: int, p: int = 1, **factors: float) -> float:
        val = float(p) ** self.p_exp * float(r) ** self.k * 2.0 ** (float(self.c) * r)
        for f in filter(None, self.factor.split("*")):
            val *= factors.get(f, 1.0)
        return val

    def exponent_str(self) -> str:
        """Compact machine-readable exponent: ``c`` or ``c;r^k``."""
        c = str(self.c) if self.c.denominator != 1 else str(self.c.numerator)
        return c if self.k == 0 else f"{c};r^{self.k}"

    def __str__(self) -> str:
        parts = []
        if self.factor:
            parts.append(self.factor)
        if self.p_exp:
            parts.append(f"p^{self.p_exp}")
        if self.k:
            parts.append("r" if self.k == 1 else f"r^{self.k}")
        if self.c:
            parts.append(f"2^({self.c}r)")
        return "O(" + (" ".join(parts) or "1") + ")"


def compare_classes(a: CostClass, b: CostClass) -> int | None:
    """-1 if ``a`` grows slower than ``b`` in r, 1 if faster, 0 if equal.

    ``None`` when symbolic factors or the ``p`` power decide the answer.
    """
    if a.factor != b.factor:
        if (a.c, a.k) == (b.c, b.k):
            return None
    if (a.c, a.k) != (b.c, b.k):
        return -1 if (a.c, a.k) < (b.c, b.k) else 1
    if a.p_exp != b.p_exp:
        return -1 if a.p_exp < b.p_exp else 1
    return 0


def _check_dq(d: int, q: int) -> None:
    if not 1 <= d <= 4:
        raise ValueError(f"cost models cover 1 <= d <= 4, got d={d}")
    if not 0 <= q <= d:
        raise ValueError(f"need 0 <= q <= d, got q={q}, d={d}")


def mesh_size_class(d: int, q: int) -> CostClass:
    """Growth of the element (and variable) count: ``2**(q r)``, or ``r`` for a point."""
    _check_dq(d, q)
    if q == 0:
        return CostClass(0, 1, label=f"{d}D point size")
    return CostClass(q, 0, label=f"{d}D q={q} size")


def direct_cost_spacetime(d: int, q: int, r: int | None = None) -> CostClass:
    """Direct solver on a mesh refined toward a q-dimensional singularity.

    ``O(r)`` for a point, otherwise ``O(2**(max(q, 3(q-1)) r))``, i.e.
    linear in the size for edges and ``N**(3(q-1)/q)`` beyond.
    """
    _check_dq(d, q)
    if q == 0:
        return CostClass(0, 1, label=f"{d}D point direct")
    return CostClass(max(q, 3 * (q - 1)), 0, label=f"{d}D q={q} direct")


def direct_cost_time_marching(d: int, q: int, r: int | None = None) -> CostClass:
    """``2**r`` direct solves on the (d-1)-dimensional mesh refined toward q-1."""
    _check_dq(d, q)
    if q < 1:
        raise ValueError("a point singularity has no time-marching counterpart")
    if d < 2:
        raise ValueError("time marching needs d >= 2")
    return direct_cost_spacetime(d - 1, q - 1).steps().with_label(f"{d}D q={q} marching direct")


def iterative_costs(d: int, q: int, r: int | None = None,
                    N_iter: str = "N_iter", n_iter: str = "n_iter") -> tuple[CostClass, CostClass]:
    """``N_iter * N`` for space-time against ``2**r * n_iter * n`` for marching."""
    _check_dq(d, q)
    if q < 1:
        raise ValueError("a point singularity has no time-marching counterpart")
    st = CostClass(0, 0, factor=N_iter) * mesh_size_class(d, q)
    mk = (CostClass(0, 0, factor=n_iter) * mesh_size_class(d - 1, q - 1)).steps()
    return (st.with_label(f"{d}D q={q} space-time iterative"),
            mk.with_label(f"{d}D q={q} marching iterative"))


def iterative_crossover(d: int, q: int, r: int) -> str:
    """Condition under which the space-time iterative solve is cheaper."""
    st, mk = iterative_costs(d, q, r)
    extra = CostClass(mk.c - st.c, mk.k - st.k) if (mk.c >= st.c and mk.k >= st.k) else None
    if extra is None:
        return "N_iter * N vs 2^r * n_iter * n: marching never asymptotically worse"
    if extra.c == 0 and extra.k == 0:
        return "space-time cheaper iff N_iter < n_iter"
    return f"space-time cheaper iff N_iter < {str(extra)[2:-1]} * n_iter"


def static_condensation_costs(d: int, q: int, r: int | None = None,
                              p: int = 2) -> tuple[CostClass, CostClass]:
    """Element-interior elimination: ``N_e p**(3d)`` against ``2**r n_e p**(3(d-1))``."""
    _check_dq(d, q)
    if p < 2:
        raise ValueError("static condensation needs p >= 2 (interior dofs)")
    if q < 1:
        raise ValueError("a point singularity has no time-marching counterpart")
    st = CostClass(0, 0, 3 * d) * mesh_size_class(d, q)
    mk = (CostClass(0, 0, 3 * (d - 1)) * mesh_size_class(d - 1, q - 1)).steps()
    return (st.with_label(f"{d}D q={q} space-time static"),
            mk.with_label(f"{d}D q={q} marching static"))


def static_condensation_ops(d: int, p: int) -> int:
    """Subtractions to eliminate one element's dense interior block of ``(p-1)**d`` dofs."""
    n = (p - 1) ** d
    return sum((n - i) * (n - i + 1) for i in range(1, n + 1))


@dataclass
class ComparisonReport:
    d: int
    q: int
    r: int
    space_time: dict
    time_marching: dict
    ratios: dict
    favours: dict
    notes: list = field(default_factory=list)
    measured: dict | None = None


def _verdict(st: CostClass, mk: CostClass) -> str:
    cmp = compare_classes(st, mk)
    if cmp is None:
        return "depends"
    return {-1: "space-time", 1: "time-marching", 0: "tie"}[cmp]


def compare(d: int, q: int, r: int, p: int = 2, N_iter: float | None = None,
            n_iter: float | None = None, measure: bool = False) -> ComparisonReport:
    """Space-time against time-marching for direct, iterative and static solvers.

    With ``measure=True`` exact operation counts of both formulations are
    attached (p = 1 meshes, tree orderings).
    """
    if q < 1:
        raise ValueError("a point singularity has no time-marching counterpart")
    st_d = direct_cost_spacetime(d, q, r)
    mk_d = direct_cost_time_marching(d, q, r)
    st_i, mk_i = iterative_costs(d, q, r)
    st_s, mk_s = static_condensation_costs(d, q, r, max(p, 2))
    N = predicted_element_count(d, q, r)
    n = predicted_element_count(d - 1, q - 1, r)
    space_time = {"N": N, "direct": st_d, "iterative": st_i, "static": st_s}
    marching = {"steps": 1 << r, "n": n, "direct": mk_d, "iterative": mk_i, "static": mk_s}
    ratios = {
        "direct_model": mk_d.evaluate(r) / st_d.evaluate(r),
        "static_model": mk_s.evaluate(r, p) / st_s.evaluate(r, p),
    }
    if N_iter is not None and n_iter is not None:
        ratios["iterative_model"] = (mk_i.evaluate(r, n_iter=n_iter)
                                     / st_i.evaluate(r, N_iter=N_iter))
    favours = {"direct": _verdict(st_d, mk_d), "iterative": _verdict(st_i, mk_i),
               "static": _verdict(st_s, mk_s)}
    notes = [iterative_crossover(d, q, r)]
    if favours["static"] == "depends" or q == 1:
        notes.append("static: space-time p^3 factor against marching r factor")
    rep = ComparisonReport(d, q, r, space_time, marching, ratios, favours, notes)
    if measure:
        from .experiments import marching_ops, measure as run
        st = run(d, q, r)
        mk_ops = marching_ops(d, q, r)
        rep.measured = {"space_time_ops": st.total_subtractions, "marching_ops": mk_ops,
                        "ratio": mk_ops / st.total_subtractions if st.total_subtractions else math.inf}
    return rep


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float


def fit_exponent(points: Sequence[tuple[float, float]], log_x: bool = True) -> FitResult:
    """Least squares on ``(log2 x, log2 y)``; ``log_x=False`` keeps ``x`` linear."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("need at least three (x, y) points")
    if np.any(pts[:, 1] <= 0) or (log_x and np.any(pts[:, 0] <= 0)):
        raise ValueError("values must be positive")
    x = np.log2(pts[:, 0]) if log_x else pts[:, 0]
    y = np.log2(pts[:, 1])
    if np.ptp(x) == 0:
        raise ValueError("degenerate x range")
    res = stats.linregress(x, y)
    return FitResult(float(res.slope), float(res.intercept), float(res.rvalue ** 2))
