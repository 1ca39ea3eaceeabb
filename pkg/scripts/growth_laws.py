"""Sweep the growth-law configurations and write CSV plus gnuplot scripts.

    python3 scripts/growth_laws.py --out results/ [--quick]
"""
import argparse
import sys
from pathlib import Path

from smlab import cli

# (label, sweep arguments)
FULL = [
    ("edge_d2", ["--d", "2", "--q", "1", "--r", "6..14", "fit"]),
    ("edge_d3", ["--d", "3", "--q", "1", "--r", "6..14", "fit"]),
    ("face_d3", ["--d", "3", "--q", "2", "--r", "4..9", "fit"]),
    ("face_d4", ["--d", "4", "--q", "2", "--r", "4..9", "fit"]),
    ("uniform_d3", ["--d", "3", "--q", "3", "--r", "2..5", "fit"]),
    ("compare_4d_edge", ["--d", "4", "--q", "1", "--r", "8..14", "--compare"]),
    ("compare_4d_face", ["--d", "4", "--q", "2", "--r", "3..7", "--compare"]),
]
QUICK = [
    ("edge_d2", ["--d", "2", "--q", "1", "--r", "6..10", "fit"]),
    ("face_d3", ["--d", "3", "--q", "2", "--r", "4..7", "fit"]),
    ("uniform_d3", ["--d", "3", "--q", "3", "--r", "2..4", "fit", "--tolerance", "0.4"]),
]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results", help="output directory")
    ap.add_argument("--quick", action="store_true", help="small ranges only")
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    worst = 0
    for label, sweep in QUICK if args.quick else FULL:
        csv_path = out / f"{label}.csv"
        print(f"== {label}", flush=True)
        code = cli.main(["sweep", *sweep, "--emit", "csv,plot", "--out", str(csv_path)])
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
