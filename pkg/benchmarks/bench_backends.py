"""Compare the compiled and pure-Python assignment kernels on the loss benchmark grid.

    python benchmarks/bench_backends.py [--reps 10] [--out bench_backends.csv]
"""

import argparse
import csv
import sys

from ngram_oaxe import assignment, bench


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--out", default="bench_backends.csv")
    args = ap.parse_args(argv)

    backends = assignment.available_backends()
    if "cython" not in backends:
        print("compiled kernel not built; only the Python backend is available", file=sys.stderr)
    results = {b: bench.run(reps=args.reps, backend=b) for b in backends}

    fields = ["n", "length", "batch"] + [f"{b}_hungarian_s" for b in backends]
    if len(backends) == 2:
        fields.append("speedup")
    rows = []
    for cells in zip(*results.values()):
        row = {k: cells[0][k] for k in ("n", "length", "batch")}
        for b, cell in zip(backends, cells):
            row[f"{b}_hungarian_s"] = cell["hungarian_median_s"]
        if len(backends) == 2:
            row["speedup"] = row["python_hungarian_s"] / row["cython_hungarian_s"]
        rows.append(row)
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)

    for r in rows:
        line = f"n={r['n']} I={r['length']:>2} B={r['batch']:>2}"
        for b in backends:
            line += f"  {b} {1e3 * r[f'{b}_hungarian_s']:8.3f} ms"
        if "speedup" in r:
            line += f"  x{r['speedup']:.1f}"
        print(line)
    for b in backends:
        print(f"{b}: hungarian log-log slope {bench.loglog_slope(results[b]):.2f}, "
              f"N=2/N=1 loss ratio {bench.overhead_ratio(results[b]):.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
