"""Wall-time benchmark of loss evaluation and of the assignment solver."""

from __future__ import annotations

import csv
import io
import math
import statistics
import time

import numpy as np

from . import assignment
from .core import log_softmax
from .loss import NgramSpec, _token_costs, lift_to_ngram_cost, ngram_oaxe_loss

NS = (1, 2, 4)
LENGTHS = (8, 16, 32, 64)
BATCHES = (1, 32)
FIELDS = ("n", "length", "batch", "loss_median_s", "hungarian_median_s", "reps", "backend")


def _instance(rng, batch: int, length: int, vocab: int):
    lp = log_softmax(rng.normal(0.0, 2.0, (batch, length, vocab)))
    y = rng.integers(2, vocab, (batch, length))
    return lp, y


def run(ns=NS, lengths=LENGTHS, batches=BATCHES, reps: int = 30, vocab: int = 128,
        seed: int = 0, backend: str | None = None) -> list[dict]:
    """One row per (n, length, batch); medians over ``reps`` repetitions.

    Repetitions for different ``n`` are interleaved so slow drift in machine
    load hits every ngram size equally.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    backend = backend or assignment.BACKEND
    prev = assignment.BACKEND
    assignment.BACKEND = backend
    rng = np.random.default_rng(seed)
    rows = []
    try:
        for length in lengths:
            for batch in batches:
                lp, y = _instance(rng, batch, length, vocab)
                costs, _, _ = _token_costs(lp, y)
                mats = {
                    n: [np.ascontiguousarray(m) for m in lift_to_ngram_cost(costs, n)]
                    for n in ns
                }
                loss_t = {n: [] for n in ns}
                hung_t = {n: [] for n in ns}
                for _ in range(reps):
                    for n in ns:
                        t0 = time.perf_counter()
                        ngram_oaxe_loss(lp, y, NgramSpec(n))
                        loss_t[n].append(time.perf_counter() - t0)
                        t0 = time.perf_counter()
                        for m in mats[n]:
                            assignment.solve_perm(m, backend)
                        hung_t[n].append(time.perf_counter() - t0)
                for n in ns:
                    rows.append(
                        {
                            "n": n,
                            "length": length,
                            "batch": batch,
                            "loss_median_s": statistics.median(loss_t[n]),
                            "hungarian_median_s": statistics.median(hung_t[n]),
                            "reps": reps,
                            "backend": backend,
                        }
                    )
    finally:
        assignment.BACKEND = prev
    rows.sort(key=lambda r: (r["n"], r["length"], r["batch"]))
    return rows


def to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def overhead_ratio(rows, length: int = 32, batch: int = 32, n: int = 2, base: int = 1) -> float:
    """Median loss time of ``n`` relative to ``base`` at one (length, batch) cell."""
    pick = {r["n"]: r["loss_median_s"] for r in rows if r["length"] == length and r["batch"] == batch}
    return pick[n] / pick[base]


def loglog_slope(rows, n: int = 1, batch: int = 32, key: str = "hungarian_median_s") -> float:
    """Least-squares slope of log(time) against log(length)."""
    sel = sorted((r["length"], r[key]) for r in rows if r["n"] == n and r["batch"] == batch)
    xs = [math.log(l) for l, _ in sel]
    ys = [math.log(t) for _, t in sel]
    return float(np.polyfit(xs, ys, 1)[0])
