"""Command-line front end: ``smlab mesh | solve | sweep | matrix``.

Exit codes: 0 success, 1 failed sweep rows, 2 usage, 3 verification
failure, 4 tolerance failure.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cost_models as cm
from .basis import corner_variable_count, enumerate_nodes, overlap_graph, variable_bounds
from .elimination import dense_oracle_eliminate, report_csv
from .experiments import (DEFAULT_NV_CAP, ORDERINGS, ExperimentConfig, build_mesh,
                          eliminate_mesh, measure)
from .matrices import element_adjacency_matrix, export_matrix_market, fem_pattern
from .mesh import PLACEMENTS, Mesh, MeshError, predicted_element_count, validate_mesh
from .partition import build_tree

EXIT_OK, EXIT_ROWS, EXIT_USAGE, EXIT_VERIFY, EXIT_TOL = 0, 1, 2, 3, 4
VERIFY_MAX_VARS = 500
SWEEP_HEADER = ["d", "q", "r", "formulation", "solver_kind", "model_exponent",
                "measured_ops", "N_vars", "fill"]


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def parse_range(text: str) -> tuple[int, int]:
    """``"4..9"`` -> (4, 9); a single integer gives a one-point range."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
        else:
            lo = hi = int(text)
    except ValueError:
        raise UsageError(f"bad range {text!r}, expected A..B") from None
    if lo > hi or lo < 0:
        raise UsageError(f"empty or negative range {text!r}")
    return lo, hi


def worker_count(n_jobs: int) -> int:
    cap = os.cpu_count() or 1
    env = os.environ.get("SML_THREADS")
    if env:
        try:
            cap = min(cap, max(1, int(env)))
        except ValueError:
            raise UsageError(f"SML_THREADS must be an integer, got {env!r}") from None
    return max(1, min(cap, n_jobs))


def _config(args, r: int | None = None) -> ExperimentConfig:
    try:
        return ExperimentConfig(args.d, args.q, args.r if r is None else r, args.p,
                                args.placement, getattr(args, "strategy", "auto"))
    except MeshError as exc:
        raise UsageError(str(exc)) from None


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


# ---------------------------------------------------------------------------
# mesh
# ---------------------------------------------------------------------------

def cmd_mesh(args) -> int:
    cfg = _config(args)
    m = build_mesh(cfg)
    n_vars = enumerate_nodes(m).n_vars
    if cfg.placement == "interior":
        pred = "n/a"
    else:
        pred = str(predicted_element_count(cfg.d, cfg.q, cfg.r))
    print(f"elements={len(m)} predicted={pred}")
    if cfg.placement != "interior" and cfg.q == 0 and cfg.r >= 1:
        print(f"variables={n_vars} predicted={corner_variable_count(cfg.d, cfg.p, cfg.r)}")
    elif cfg.placement != "interior" and cfg.q >= 1:
        lo, hi = variable_bounds(cfg.d, cfg.q, cfg.p, cfg.r)
        print(f"variables={n_vars} bounds=[{lo},{hi}]")
    else:
        print(f"variables={n_vars}")
    if args.validate:
        rep = validate_mesh(m)
        for v in rep.violations:
            print(f"violation: {v}", file=sys.stderr)
        if not rep.ok:
            return EXIT_VERIFY
        print("valid")
    if args.out:
        m.save(args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def _load_mesh(args) -> tuple[Mesh, str]:
    if args.mesh:
        path = Path(args.mesh)
        if not path.is_file():
            raise UsageError(f"mesh file not found: {path}")
        try:
            m = Mesh.load(path)
        except (ValueError, KeyError) as exc:
            raise UsageError(f"cannot read mesh {path}: {exc}") from None
        return m, args.mesh_id or path.stem
    if args.d is None or args.q is None or args.r is None:
        raise UsageError("give a mesh file or --d, --q and --r")
    cfg = ExperimentConfig(args.d, args.q, args.r, args.p, args.placement)
    return build_mesh(cfg), args.mesh_id or cfg.mesh_id


def cmd_solve(args) -> int:
    m, mesh_id = _load_mesh(args)
    strategy = args.strategy
    try:
        rep, g = eliminate_mesh(m, strategy)
    except MeshError as exc:
        raise UsageError(str(exc)) from None
    if strategy == "auto":
        strategy = "layered" if m.q == 0 else "plane"
    out, close = _open_out(args.out)
    try:
        out.write(report_csv([rep.csv_row(mesh_id, strategy)]))
    finally:
        if close:
            out.close()
    if args.dump_tree and strategy != "natural":
        Path(args.dump_tree).write_text(build_tree(m, strategy, g.nodes).dump_text())
    if args.dump_edges:
        g.dump_edges(args.dump_edges)
    if args.verify:
        if g.n > VERIFY_MAX_VARS:
            print(f"verify skipped: {g.n} variables > {VERIFY_MAX_VARS}", file=sys.stderr)
            return EXIT_OK
        oracle = dense_oracle_eliminate(g.dense(), rep.order)
        bad = rep.mismatch(oracle)
        if bad:
            for line in bad:
                print(f"verify mismatch: {line}", file=sys.stderr)
            return EXIT_VERIFY
        print("verify ok", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    d: int
    q: int
    r: int
    formulation: str
    solver_kind: str
    model_exponent: str
    measured_ops: int
    n_vars: int
    fill: int

    def cells(self) -> list:
        return [self.d, self.q, self.r, self.formulation, self.solver_kind,
                self.model_exponent, self.measured_ops, self.n_vars, self.fill]


def _model(solver: str, d: int, q: int, p: int) -> tuple[cm.CostClass, cm.CostClass | None]:
    """(space-time, marching) class for a solver kind; marching is None for points."""
    if solver == "direct":
        st = cm.direct_cost_spacetime(d, q)
        mk = cm.direct_cost_time_marching(d, q) if q >= 1 and d >= 2 else None
    elif solver == "iterative":
        if q == 0 or d < 2:
            return cm.mesh_size_class(d, q) * cm.CostClass(0, 0, factor="N_iter"), None
        st, mk = cm.iterative_costs(d, q)
    else:
        if q == 0 or d < 2:
            return cm.mesh_size_class(d, q) * cm.CostClass(0, 0, 3 * d), None
        st, mk = cm.static_condensation_costs(d, q, p=max(p, 2))
    return st, mk


def _ops(solver: str, meas, d: int, p: int, iters: float) -> int:
    """Counted work: elimination subtractions, iteration sweeps or interior condensation."""
    if solver == "direct":
        return meas.total_subtractions
    if solver == "iterative":
        return int(round(iters * meas.n_vars))
    return meas.n_elements * cm.static_condensation_ops(d, max(p, 2))


def _sweep_job(job):
    d, q, r, p, placement, strategy, cap = job
    try:
        return job, measure(d, q, r, p, placement, strategy, cap), None
    except (MemoryError, MeshError) as exc:
        return job, None, str(exc)


def _run_jobs(jobs: list) -> dict:
    jobs = sorted(set(jobs))
    n = worker_count(len(jobs))
    if n == 1:
        results = map(_sweep_job, jobs)
    else:
        pool = ProcessPoolExecutor(max_workers=n)
        results = pool.map(_sweep_job, jobs)
    out = {job: (meas, err) for job, meas, err in results}
    if n > 1:
        pool.shutdown()
    return out


def expected_fit(d: int, q: int) -> tuple[str, float]:
    """(x-axis, expected slope) for the growth law of a (d, q) sweep."""
    if q == 0:
        return "log2(r)", 1.0
    if q == 1:
        return "r", 1.0
    return "log2(N_v)", 3 * (q - 1) / q


def cmd_sweep(args) -> int:
    if args.r is not None:
        r_lo, r_hi = parse_range(args.r)
    elif args.r_min is not None and args.r_max is not None:
        r_lo, r_hi = args.r_min, args.r_max
        if r_lo > r_hi or r_lo < 0:
            raise UsageError("need 0 <= --r-min <= --r-max")
    else:
        raise UsageError("give --r A..B or --r-min and --r-max")
    emit = {e.strip() for e in args.emit.split(",") if e.strip()}
    if not emit <= {"csv", "plot"}:
        raise UsageError(f"--emit accepts csv and plot, got {args.emit!r}")
    if "plot" in emit and not args.out:
        raise UsageError("--emit plot needs --out for the CSV path")
    if args.compare and args.q < 1:
        raise UsageError("--compare needs q >= 1")
    if args.compare and args.placement != "boundary":
        raise UsageError("--compare is defined for boundary placements")
    rs = range(r_lo, r_hi + 1)
    for r in rs:
        _config(args, r)
    d, q, p = args.d, args.q, args.p

    jobs = [(d, q, r, p, args.placement, args.strategy, args.cap) for r in rs]
    if args.compare:
        jobs += [(d - 1, q - 1, r, p, "boundary", "auto", args.cap) for r in rs]
    results = _run_jobs(jobs)

    st_cls, mk_cls = _model(args.solver, d, q, p)
    rows, failed = [], []
    for r in rs:
        meas, err = results[(d, q, r, p, args.placement, args.strategy, args.cap)]
        if err:
            failed.append(f"d={d} q={q} r={r} space-time: {err}")
        else:
            rows.append(SweepRow(d, q, r, "space-time", args.solver, st_cls.exponent_str(),
                                 _ops(args.solver, meas, d, p, args.N_iter),
                                 meas.n_vars, meas.fill))
        if args.compare:
            step, err = results[(d - 1, q - 1, r, p, "boundary", "auto", args.cap)]
            if err:
                failed.append(f"d={d} q={q} r={r} time-marching: {err}")
                continue
            rows.append(SweepRow(d, q, r, "time-marching", args.solver, mk_cls.exponent_str(),
                                 (1 << r) * _ops(args.solver, step, d - 1, p, args.n_iter),
                                 step.n_vars, step.fill))
    rows.sort(key=lambda x: (x.d, x.q, x.r, x.formulation))

    if "csv" in emit:
        out, close = _open_out(args.out)
        try:
            w = csv.writer(out, lineterminator="\n")
            w.writerow(SWEEP_HEADER)
            for row in rows:
                w.writerow(row.cells())
        finally:
            if close:
                out.close()
    if "plot" in emit:
        gp = Path(args.out).with_suffix(".gp")
        gp.write_text(gnuplot_script(Path(args.out).name, d, q, args.compare))

    status = EXIT_ROWS if failed else EXIT_OK
    for f in failed:
        print(f"row failed: {f}", file=sys.stderr)
    report = sys.stderr if "csv" in emit and not args.out else sys.stdout
    if args.action == "fit":
        status = max(status, _fit_check(rows, d, q, args.tolerance, report))
    if args.compare:
        status = max(status, _compare_check(rows, d, q, args.tolerance, report))
    return status


def _fit_check(rows, d, q, tol, out) -> int:
    pts = [(x.r, x.n_vars, x.measured_ops) for x in rows if x.formulation == "space-time"]
    if len(pts) < 3:
        print("fit needs at least three successful rows", file=out)
        return EXIT_TOL
    axis, expected = expected_fit(d, q)
    if tol is None:
        tol = 0.25 if q == d else 0.15
    if axis == "r":
        fit = cm.fit_exponent([(r, ops) for r, _, ops in pts], log_x=False)
    elif axis == "log2(r)":
        if any(r < 1 for r, _, _ in pts):
            print("fit against log2(r) needs r >= 1", file=out)
            return EXIT_TOL
        fit = cm.fit_exponent([(r, ops) for r, _, ops in pts])
    else:
        fit = cm.fit_exponent([(nv, ops) for _, nv, ops in pts])
    ok = abs(fit.slope - expected) <= tol
    print(f"fit d={d} q={q} x={axis} slope={fit.slope:.4f} intercept={fit.intercept:.4f} "
          f"r2={fit.r_squared:.4f} expected={expected:.4f} tol={tol:.2f} "
          f"{'PASS' if ok else 'FAIL'}", file=out)
    return EXIT_OK if ok else EXIT_TOL


def _compare_check(rows, d, q, tol, out) -> int:
    st = {x.r: x.measured_ops for x in rows if x.formulation == "space-time"}
    mk = {x.r: x.measured_ops for x in rows if x.formulation == "time-marching"}
    rs = sorted(set(st) & set(mk))
    if len(rs) < 2:
        print("compare needs at least two complete r values", file=out)
        return EXIT_TOL
    ratio = np.array([mk[r] / st[r] for r in rs])
    for r, v in zip(rs, ratio):
        print(f"compare d={d} q={q} r={r} marching/space-time={v:.6g} per_r={v / r:.6g}", file=out)
    if q == 1:
        per_r = ratio / np.array(rs)
        dev = float(np.max(np.abs(per_r / per_r.mean() - 1)))
        band = 0.20 if tol is None else tol
        ok = dev <= band
        print(f"compare ratio/r max deviation={dev:.4f} band={band:.2f} "
              f"{'PASS' if ok else 'FAIL'}", file=out)
    else:
        if len(rs) < 3:
            print("compare slope needs at least three r values", file=out)
            return EXIT_TOL
        st_c = cm.direct_cost_spacetime(d, q)
        mk_c = cm.direct_cost_time_marching(d, q)
        expected = float(mk_c.c - st_c.c)
        fit = cm.fit_exponent(list(zip(rs, ratio)), log_x=False)
        band = 0.25 if tol is None else tol
        ok = abs(fit.slope - expected) <= band
        print(f"compare log2(ratio) slope={fit.slope:.4f} expected={expected:.4f} "
              f"tol={band:.2f} {'PASS' if ok else 'FAIL'}", file=out)
    return EXIT_OK if ok else EXIT_TOL


def gnuplot_script(csv_name: str, d: int, q: int, compare: bool) -> str:
    x = "3" if q <= 1 else "8"
    xlabel = "r" if q <= 1 else "N_vars"
    lines = [
        "set datafile separator ','",
        "set key left top",
        "set logscale y 2",
        *([] if q <= 1 else ["set logscale x 2"]),
        f"set xlabel '{xlabel}'",
        "set ylabel 'operations'",
        f"set title 'd={d} q={q}'",
        "set terminal pngcairo size 800,600",
        f"set output '{Path(csv_name).with_suffix('.png')}'",
        f"plot '{csv_name}' using {x}:(stringcolumn(4) eq 'space-time' ? $7 : 1/0) "
        "skip 1 with linespoints title 'space-time'"
        + (f", '{csv_name}' using {x}:(stringcolumn(4) eq 'time-marching' ? $7 : 1/0) "
           "skip 1 with linespoints title 'time-marching'" if compare else ""),
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# matrix
# ---------------------------------------------------------------------------

def cmd_matrix(args) -> int:
    cfg = _config(args)
    m = build_mesh(cfg)
    if args.kind == "element":
        pat = element_adjacency_matrix(m)
    else:
        pat = fem_pattern(overlap_graph(enumerate_nodes(m)))
    export_matrix_market(pat, args.out)
    print(f"n={pat.n} nnz={pat.nnz} symmetric={int(pat.symmetric)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_config(sp, required: bool = True) -> None:
    sp.add_argument("--d", type=int, required=required, help="space-time dimension")
    sp.add_argument("--q", type=int, required=required, help="singularity dimension")
    sp.add_argument("--r", type=int, required=required, help="refinement depth")
    sp.add_argument("--p", type=int, default=1, help="polynomial order")
    sp.add_argument("--placement", choices=PLACEMENTS, default="boundary")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="smlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("mesh", help="generate a refined mesh")
    _add_config(sp)
    sp.add_argument("--out", help="write mesh JSON here")
    sp.add_argument("--validate", action="store_true", help="check tiling and 1-irregularity")
    sp.set_defaults(func=cmd_mesh)

    sp = sub.add_parser("solve", help="symbolic elimination of one mesh")
    sp.add_argument("mesh", nargs="?", help="mesh JSON written by 'smlab mesh'")
    _add_config(sp, required=False)
    sp.add_argument("--strategy", choices=("auto",) + ORDERINGS, default="auto")
    sp.add_argument("--verify", action="store_true",
                    help=f"compare with the dense oracle (N_v <= {VERIFY_MAX_VARS})")
    sp.add_argument("--mesh-id", help="label for the CSV row")
    sp.add_argument("--out", help="CSV path (default stdout)")
    sp.add_argument("--dump-tree", help="write the partition tree as indented text")
    sp.add_argument("--dump-edges", help="write overlap-graph edges")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("sweep", help="measured operation counts over a range of r")
    sp.add_argument("action", nargs="?", choices=("run", "fit"), default="run")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--r", help="range A..B")
    sp.add_argument("--r-min", type=int)
    sp.add_argument("--r-max", type=int)
    sp.add_argument("--p", type=int, default=1)
    sp.add_argument("--placement", choices=PLACEMENTS, default="boundary")
    sp.add_argument("--strategy", choices=("auto",) + ORDERINGS, default="auto")
    sp.add_argument("--solver", choices=("direct", "iterative", "static"), default="direct")
    sp.add_argument("--emit", default="csv", help="csv, plot or csv,plot")
    sp.add_argument("--out", help="CSV path (default stdout)")
    sp.add_argument("--compare", action="store_true", help="add time-marching rows")
    sp.add_argument("--tolerance", type=float, default=None)
    sp.add_argument("--cap", type=int, default=DEFAULT_NV_CAP, help="variable-count guardrail")
    sp.add_argument("--N-iter", dest="N_iter", type=float, default=1.0,
                    help="space-time iteration count (iterative model)")
    sp.add_argument("--n-iter", dest="n_iter", type=float, default=1.0,
                    help="per-step iteration count (iterative model)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("matrix", help="export a sparsity pattern as MatrixMarket")
    _add_config(sp)
    sp.add_argument("--kind", choices=("element", "fem"), default="element")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_matrix)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"smlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MeshError as exc:
        print(f"smlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
