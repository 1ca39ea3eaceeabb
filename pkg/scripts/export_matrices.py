"""Write element-adjacency MatrixMarket files for a range of refinement levels.

    python3 scripts/export_matrices.py --d 3 --q 2 --r 4..8 --out matrices/
"""
import argparse
import sys
from pathlib import Path

from smlab.cli import parse_range
from smlab.experiments import ExperimentConfig, build_mesh
from smlab.matrices import element_adjacency_matrix, export_matrix_market


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, required=True)
    ap.add_argument("--q", type=int, required=True)
    ap.add_argument("--r", required=True, help="range A..B")
    ap.add_argument("--placement", default="boundary")
    ap.add_argument("--out", default="matrices")
    args = ap.parse_args(argv)
    lo, hi = parse_range(args.r)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prev = None
    for r in range(lo, hi + 1):
        cfg = ExperimentConfig(args.d, args.q, r, placement=args.placement)
        pat = element_adjacency_matrix(build_mesh(cfg))
        path = out / f"{cfg.mesh_id}.mtx"
        export_matrix_market(pat, path)
        growth = f"{pat.n / prev:.4f}" if prev else "-"
        print(f"{path} n={pat.n} nnz={pat.nnz} growth={growth}")
        prev = pat.n
    return 0


if __name__ == "__main__":
    sys.exit(main())
