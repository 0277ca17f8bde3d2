"""Randomized oracle suites behind ``ngram-oaxe verify``.

Each suite returns a :class:`SuiteResult`; the first failing instance is kept
as a JSON-serializable counterexample.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import figure1
from .assignment import brute_force_solve, hungarian_solve
from .core import as_target_batch, log_softmax
from .loss import (
    NgramSpec,
    TruncationConfig,
    build_token_cost,
    compute_loss,
    lift_to_ngram_cost,
    ngram_oaxe_loss,
    oaxe_loss,
    truncate_matches,
)
from .model import ModelParams, backward, forward

MARGIN_GRID = (0.0, 0.05, 0.10, 0.15, 0.20)


@dataclass
class SuiteResult:
    name: str
    passed: int = 0
    total: int = 0
    counterexample: dict | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.passed == self.total

    def record(self, ok: bool, example: dict | None = None) -> None:
        self.total += 1
        if ok:
            self.passed += 1
        elif self.counterexample is None:
            self.counterexample = example


def random_instance(rng, batch: int, length: int, vocab: int, scale: float = 2.0):
    lp = log_softmax(rng.normal(0.0, scale, (batch, length, vocab)))
    y = rng.integers(2, vocab, (batch, length))
    return lp, y


def enumerate_min(c: np.ndarray) -> float:
    """Brute-force min over all permutations; independent of the solver."""
    n = c.shape[0]
    return min(sum(c[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


def hungarian_suite(trials: int = 500, sizes=range(2, 8), seed: int = 0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    res = SuiteResult("hungarian")
    for n in sizes:
        for _ in range(trials):
            c = rng.uniform(0.0, 10.0, (n, n))
            h = hungarian_solve(c)
            b = brute_force_solve(c)
            res.record(abs(h.total_cost - b.total_cost) <= 1e-9,
                       {"cost": c.tolist(), "hungarian": h.total_cost, "brute_force": b.total_cost})
    return res


def reduction_suite(trials: int = 200, seed: int = 0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    res = SuiteResult("reduction")
    for _ in range(trials):
        length = int(rng.integers(1, 10))
        lp, y = random_instance(rng, int(rng.integers(1, 4)), length, 12)
        a = ngram_oaxe_loss(lp, y, NgramSpec(1)).value
        b = oaxe_loss(lp, y).value
        res.record(abs(a - b) <= 1e-12, {"ngram_n1": a, "oaxe": b})
    return res


def oracle_suite(trials: int = 100, lengths=range(4, 9), ns=(1, 2, 3), seed: int = 0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    res = SuiteResult("oracle")
    for length in lengths:
        for n in ns:
            for _ in range(trials):
                lp, y = random_instance(rng, 1, length, 10)
                got = ngram_oaxe_loss(lp, y, NgramSpec(n)).value
                c = lift_to_ngram_cost(build_token_cost(lp, y, 0), n)
                want = enumerate_min(c)
                res.record(abs(got - want) <= 1e-9,
                           {"length": length, "n": n, "loss": got, "enumerated": want})
    return res


def frozen_loss(values: np.ndarray, ids: np.ndarray, matches) -> float:
    """Kept matched costs re-evaluated on ``values`` with ordering and mask held fixed."""
    total = 0.0
    for b, m in enumerate(matches):
        for w, g, kept in zip(m.windows, m.ngrams, m.kept):
            if kept:
                total -= sum(values[b, w + k, ids[b, g + k]] for k in range(m.n))
    return total


def _rel_err(num: np.ndarray, ana: np.ndarray) -> float:
    scale = max(np.abs(num).max(), np.abs(ana).max(), 1e-12)
    return float(np.abs(num - ana).max() / scale)


def loss_fd_error(lp, y, kind: str, n: int = 2, margin: float = 0.0, step: float = 1e-5) -> float:
    """Relative error of the analytic loss gradient against central differences."""
    out = compute_loss(kind, lp, y, n, margin)
    ids, _ = as_target_batch(y, lp.shape[1])
    v = lp.values
    num = np.zeros_like(v)
    for idx in np.ndindex(v.shape):
        plus, minus = v.copy(), v.copy()
        plus[idx] += step
        minus[idx] -= step
        num[idx] = (frozen_loss(plus, ids, out.matches) - frozen_loss(minus, ids, out.matches)) / (2 * step)
    return _rel_err(num, out.grad)


def model_fd_error(params, src, tgt, kind: str, n: int = 2, margin: float = 0.0,
                   step: float = 1e-6) -> float:
    """Relative error of backprop parameter gradients, ordering frozen at ``params``."""
    lengths = np.full(tgt.shape[0], tgt.shape[1])
    lp, cache = forward(params, src, lengths)
    out = compute_loss(kind, lp, tgt, n, margin)
    grads = backward(params, cache, out.grad)
    worst = 0.0
    for name, g in grads.arrays().items():
        num = np.zeros_like(g)
        for idx in np.ndindex(g.shape):
            vals = []
            for sign in (1.0, -1.0):
                p = params.copy()
                getattr(p, name)[idx] += sign * step
                vals.append(frozen_loss(forward(p, src, lengths)[0].values, tgt, out.matches))
            num[idx] = (vals[0] - vals[1]) / (2 * step)
        worst = max(worst, _rel_err(num, g))
    return worst


GRADIENT_CASES = (("xe", 1, 0.0), ("oaxe", 1, 0.0), ("ngram_oaxe", 2, 0.0), ("ngram_oaxe", 3, 0.2))


def gradient_suite(trials: int = 20, seed: int = 0, tol: float = 1e-4) -> SuiteResult:
    rng = np.random.default_rng(seed)
    res = SuiteResult("gradient")
    for kind, n, margin in GRADIENT_CASES:
        for _ in range(trials):
            lp, y = random_instance(rng, 2, 5, 7)
            err = loss_fd_error(lp, y, kind, n, margin)
            res.record(err < tol, {"level": "loss", "kind": kind, "n": n, "rel_err": err})
        for _ in range(trials):
            params = ModelParams.init(rng, 9, 8, 5, d=4, h=5)
            src = rng.integers(2, 9, (2, 3))
            tgt = rng.integers(2, 8, (2, 5))
            err = model_fd_error(params, src, tgt, kind, n, margin)
            res.record(err < tol, {"level": "model", "kind": kind, "n": n, "rel_err": err})
    return res


def truncation_suite(seed: int = 0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    res = SuiteResult("truncation")
    for _ in range(50):
        lp, y = random_instance(rng, 4, 8, 10, scale=3.0)
        base = ngram_oaxe_loss(lp, y, NgramSpec(2))
        counts = []
        for margin in MARGIN_GRID:
            tc = TruncationConfig(margin)
            counts.append(sum(int(truncate_matches(m.costs, m.n, tc).sum()) for m in base.matches))
        ok = counts[0] == base.n_pairs and all(a >= b for a, b in zip(counts, counts[1:]))
        res.record(ok, {"kept_counts": counts, "pairs": base.n_pairs})
    return res


def figure1_suite() -> SuiteResult:
    res = SuiteResult("figure1")
    p = figure1.bigram_prob(0, 0)
    res.record(abs(p - 0.02) <= 1e-12, {"P(I ate|Pos:1,2)": p})
    result = figure1.run(figure1.MARGIN)
    kept = [(r["bigram"], tuple(r["positions"])) for r in result["selected"]]
    dropped = [(r["bigram"], tuple(r["positions"])) for r in result["truncated"]]
    want_kept = [("this afternoon", (1, 2)), ("I ate", (3, 4)), ("ate pizza", (4, 5))]
    want_dropped = [("pizza this", (2, 3))]
    res.record(kept == want_kept and dropped == want_dropped,
               {"selected": kept, "truncated": dropped})
    res.notes.append(figure1.format_report(result))
    return res


SUITES = {
    "hungarian": hungarian_suite,
    "reduction": reduction_suite,
    "oracle": oracle_suite,
    "gradient": gradient_suite,
    "truncation": truncation_suite,
    "figure1": figure1_suite,
}


def run(suite: str, trials: int | None = None, size: int | None = None, seed: int = 0) -> SuiteResult:
    """Run one named suite; ``trials`` and ``size`` override the suite defaults where they apply."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    kw: dict = {}
    if suite != "figure1":
        kw["seed"] = seed
    if trials is not None and suite not in ("figure1", "truncation"):
        kw["trials"] = trials
    if size is not None:
        if suite == "hungarian":
            kw["sizes"] = range(2, size + 1)
        elif suite == "oracle":
            kw["lengths"] = range(4, size + 1)
    return SUITES[suite](**kw)
