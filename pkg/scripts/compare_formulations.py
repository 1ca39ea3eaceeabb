"""Print model classes and measured operation counts, space-time against time-marching.

    python3 scripts/compare_formulations.py --d 4 --q 1 --r 8 [--measure]
"""
import argparse
import sys

from smlab.cost_models import compare


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, required=True)
    ap.add_argument("--q", type=int, required=True)
    ap.add_argument("--r", type=int, required=True)
    ap.add_argument("--p", type=int, default=2, help="order used by the static-condensation model")
    ap.add_argument("--N-iter", dest="N_iter", type=float)
    ap.add_argument("--n-iter", dest="n_iter", type=float)
    ap.add_argument("--measure", action="store_true", help="also count exact eliminations")
    args = ap.parse_args(argv)
    rep = compare(args.d, args.q, args.r, args.p, args.N_iter, args.n_iter, args.measure)
    print(f"d={rep.d} q={rep.q} r={rep.r}  N={rep.space_time['N']}  "
          f"steps={rep.time_marching['steps']} n={rep.time_marching['n']}")
    print(f"{'solver':<10} {'space-time':<28} {'time-marching':<28} favours")
    for kind in ("direct", "iterative", "static"):
        print(f"{kind:<10} {str(rep.space_time[kind]):<28} {str(rep.time_marching[kind]):<28} "
              f"{rep.favours[kind]}")
    for k, v in rep.ratios.items():
        print(f"{k}: marching/space-time = {v:.6g}")
    for note in rep.notes:
        print(f"note: {note}")
    if rep.measured:
        m = rep.measured
        print(f"measured: space-time {m['space_time_ops']}  marching {m['marching_ops']}  "
              f"ratio {m['ratio']:.6g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
