import math

import pytest

from ngram_oaxe import assignment, bench


def test_run_rows_and_fields():
    rows = bench.run(ns=(1, 2), lengths=(4, 8), batches=(2,), reps=2, backend="python")
    assert len(rows) == 4
    assert all(set(r) == set(bench.FIELDS) for r in rows)
    assert all(r["loss_median_s"] > 0 and r["hungarian_median_s"] > 0 for r in rows)
    assert assignment.BACKEND in assignment.available_backends()


def test_backend_restored_after_run():
    before = assignment.BACKEND
    bench.run(ns=(1,), lengths=(4,), batches=(1,), reps=1, backend="python")
    assert assignment.BACKEND == before


def test_reps_validated():
    with pytest.raises(ValueError):
        bench.run(reps=0)


def test_csv_header():
    rows = bench.run(ns=(1,), lengths=(4,), batches=(1,), reps=1)
    assert bench.to_csv(rows).splitlines()[0] == ",".join(bench.FIELDS)


def test_slope_and_ratio_helpers():
    rows = [{"n": 1, "length": l, "batch": 32, "hungarian_median_s": l ** 3 * 1e-9,
             "loss_median_s": 1.0} for l in (8, 16, 32, 64)]
    rows.append({"n": 2, "length": 32, "batch": 32, "hungarian_median_s": 1.0, "loss_median_s": 1.08})
    assert bench.loglog_slope(rows) == pytest.approx(3.0)
    assert bench.overhead_ratio(rows) == pytest.approx(1.08)
