"""End-to-end pipeline: mesh -> nodes -> overlap graph -> ordering -> elimination."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .basis import corner_variable_count, enumerate_nodes, overlap_graph
from .elimination import EliminationReport, symbolic_eliminate
from .mesh import (PLACEMENTS, Mesh, MeshError, SingularitySpec, predicted_element_count,
                   refine_toward_singularity)
from .partition import build_tree, natural_ordering, ordering_from_tree

ORDERINGS = ("layered", "plane", "greedy", "natural")
DEFAULT_NV_CAP = 5_000_000


@dataclass(frozen=True)
class ExperimentConfig:
    d: int
    q: int
    r: int
    p: int = 1
    placement: str = "boundary"
    strategy: str = "auto"
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.d <= 5:
            raise MeshError(f"d={self.d} outside 1..5")
        if not 0 <= self.q <= self.d:
            raise MeshError(f"need 0 <= q <= d, got q={self.q}, d={self.d}")
        if self.r < 0 or self.p < 1:
            raise MeshError("need r >= 0 and p >= 1")
        if self.placement not in PLACEMENTS:
            raise MeshError(f"unknown placement {self.placement!r}")
        if self.placement == "corner" and self.q != 0:
            raise MeshError("corner placement needs q = 0")
        if self.placement == "interior" and self.q == self.d:
            raise MeshError("a singularity filling the domain cannot be interior")
        strategy = resolve_strategy(self.q, self.strategy)
        object.__setattr__(self, "strategy", strategy)

    @property
    def mesh_id(self) -> str:
        return f"d{self.d}q{self.q}r{self.r}p{self.p}-{self.placement}"


def resolve_strategy(q: int, strategy: str) -> str:
    if strategy == "auto":
        return "layered" if q == 0 else "plane"
    if strategy not in ORDERINGS:
        raise MeshError(f"unknown strategy {strategy!r}")
    if strategy == "layered" and q != 0:
        raise MeshError("layered trees need q = 0")
    if strategy == "plane" and q == 0:
        raise MeshError("plane trees need q >= 1")
    return strategy


def singularity_for(d: int, q: int, placement: str = "boundary") -> SingularitySpec:
    if placement == "interior":
        return SingularitySpec.interior(d, q)
    if placement == "corner":
        return SingularitySpec.corner(d)
    return SingularitySpec.boundary(d, q)


def build_mesh(cfg: ExperimentConfig) -> Mesh:
    return refine_toward_singularity(cfg.d, cfg.r, singularity_for(cfg.d, cfg.q, cfg.placement),
                                     cfg.p)


def estimated_n_vars(d: int, q: int, r: int, p: int = 1) -> int:
    """Rough variable count (exact for corner points) used by the memory guardrail."""
    if q == 0 and r >= 1:
        return corner_variable_count(d, p, r)
    return predicted_element_count(d, q, r) * p ** d


def ordering_for(m: Mesh, g, strategy: str):
    if strategy == "natural":
        return natural_ordering(g)
    return ordering_from_tree(build_tree(m, strategy, g.nodes), g)


def eliminate_mesh(m: Mesh, strategy: str = "auto") -> tuple[EliminationReport, object]:
    """Elimination report of a mesh under a tree (or natural) ordering; also returns the graph."""
    strategy = resolve_strategy(m.q, strategy)
    g = overlap_graph(enumerate_nodes(m))
    return symbolic_eliminate(g, ordering_for(m, g, strategy)), g


@dataclass(frozen=True)
class Measurement:
    config: ExperimentConfig
    n_elements: int
    n_vars: int
    fill: int
    total_subtractions: int
    peak_front: int
    extra: dict = field(default_factory=dict, compare=False)

    def as_dict(self) -> dict:
        out = asdict(self.config)
        out.update(n_elements=self.n_elements, n_vars=self.n_vars, fill=self.fill,
                   total_subtractions=self.total_subtractions, peak_front=self.peak_front)
        return out


def run(cfg: ExperimentConfig, nv_cap: int = DEFAULT_NV_CAP) -> Measurement:
    est = estimated_n_vars(cfg.d, cfg.q, cfg.r, cfg.p)
    if est > nv_cap:
        raise MemoryError(f"{cfg.mesh_id}: estimated {est} variables exceeds cap {nv_cap}")
    m = build_mesh(cfg)
    rep, _ = eliminate_mesh(m, cfg.strategy)
    return Measurement(cfg, len(m), rep.n_vars, rep.fill_edges, rep.total_subtractions,
                       rep.peak_front)


def measure(d: int, q: int, r: int, p: int = 1, placement: str = "boundary",
            strategy: str = "auto", nv_cap: int = DEFAULT_NV_CAP) -> Measurement:
    return run(ExperimentConfig(d, q, r, p, placement, strategy), nv_cap)


def marching_ops(d: int, q: int, r: int, p: int = 1, nv_cap: int = DEFAULT_NV_CAP) -> int:
    """Total subtractions of ``2**r`` solves on the (d-1, q-1) boundary mesh.

    All steps share one mesh, so one elimination is scaled by the step count.
    """
    if q < 1 or d < 2:
        raise MeshError("time marching needs d >= 2 and q >= 1")
    step = measure(d - 1, q - 1, r, p, "boundary", "auto", nv_cap)
    return (1 << r) * step.total_subtractions

