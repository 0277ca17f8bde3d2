"""XE, OaXE and ngram-OaXE losses with envelope gradients w.r.t. log-probs.

All losses return a :class:`LossOutput` whose ``grad`` is d(value)/d(lp.values),
computed with the selected ordering and truncation mask held fixed.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .assignment import COST_CAP, solve_perm
from .core import LogProbBatch, as_target_batch, gather_target_logprobs

MAX_NGRAM = 8


@dataclass(frozen=True)
class NgramSpec:
    n: int = 2

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or not 1 <= self.n <= MAX_NGRAM:
            raise ValueError(f"ngram size must be an integer in [1, {MAX_NGRAM}], got {self.n!r}")


@dataclass(frozen=True)
class TruncationConfig:
    """Drop matched ngrams whose per-token geometric-mean probability is below ``margin``."""

    margin: float = 0.0
    enabled: bool = True

    def __post_init__(self):
        if not 0.0 <= self.margin <= 1.0:
            raise ValueError(f"truncation margin must lie in [0, 1], got {self.margin}")

    @property
    def active(self) -> bool:
        return self.enabled and self.margin > 0.0


NO_TRUNCATION = TruncationConfig(0.0, enabled=False)


@dataclass(frozen=True, eq=False)
class SentenceMatch:
    """Matched (window, ngram) pairs of one sentence, in window order."""

    n: int
    windows: np.ndarray
    ngrams: np.ndarray
    costs: np.ndarray
    kept: np.ndarray

    @property
    def pairs(self) -> list[tuple[int, int, float]]:
        return [
            (int(w), int(g), float(c)) for w, g, c in zip(self.windows, self.ngrams, self.costs)
        ]

    @property
    def value(self) -> float:
        return float(self.costs[self.kept].sum())


@dataclass(frozen=True, eq=False)
class LossOutput:
    value: float
    matches: list[SentenceMatch]
    grad: np.ndarray

    @property
    def matched_pairs(self) -> list[list[tuple[int, int, float]]]:
        return [m.pairs for m in self.matches]

    @property
    def kept_mask(self) -> list[np.ndarray]:
        return [m.kept for m in self.matches]

    @property
    def n_pairs(self) -> int:
        return sum(len(m.kept) for m in self.matches)

    @property
    def n_kept(self) -> int:
        return sum(int(m.kept.sum()) for m in self.matches)

    @property
    def keep_rate(self) -> float:
        total = self.n_pairs
        return self.n_kept / total if total else 1.0


def _thread_count(work: int) -> int:
    """Worker threads for per-sentence solves; ``NGRAM_OAXE_THREADS=0`` means auto."""
    raw = os.environ.get("NGRAM_OAXE_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"NGRAM_OAXE_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError("NGRAM_OAXE_THREADS must be >= 0")
    if n == 0:
        # small batches are cheaper serially than the pool handoff
        n = (os.cpu_count() or 1) if work >= 200_000 else 1
    return n


def _solve_all(mats: Sequence[np.ndarray]) -> list[np.ndarray]:
    threads = _thread_count(sum(m.shape[0] ** 3 for m in mats))
    if threads <= 1 or len(mats) < 2:
        return [solve_perm(m) for m in mats]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(solve_perm, mats))


def _token_costs(lp: LogProbBatch, y):
    ids, lengths = as_target_batch(y, lp.shape[1])
    costs = np.clip(-gather_target_logprobs(lp, ids), 0.0, COST_CAP)
    return costs, ids, lengths


def build_token_cost(lp: LogProbBatch, y, b: int) -> np.ndarray:
    """Cost matrix ``[i, j] = -lp[b, i, y_j]`` for one sentence, shape (I_b, I_b)."""
    B = lp.shape[0]
    if not 0 <= b < B:
        raise IndexError(f"sentence index {b} out of range for batch of {B}")
    costs, _, lengths = _token_costs(lp, y)
    n = int(lengths[b])
    return np.ascontiguousarray(costs[b, :n, :n])


def lift_to_ngram_cost(c, spec: NgramSpec | int) -> np.ndarray:
    """``out[i, j] = sum_k c[i+k, j+k]``: window i scored against target ngram j."""
    n = spec.n if isinstance(spec, NgramSpec) else NgramSpec(spec).n
    c = np.asarray(c, dtype=np.float64)
    size = c.shape[-1]
    if size < n:
        raise ValueError(f"sequence length {size} is shorter than ngram size {n}")
    m = size - n + 1
    out = c[..., :m, :m].copy()
    for k in range(1, n):
        out += c[..., k : k + m, k : k + m]
    return out


def truncate_matches(costs, spec: NgramSpec | int, tc: TruncationConfig) -> np.ndarray:
    """Keep mask for one sentence's matched ngram costs (in window order).

    A pair is dropped when exp(-cost / N) < margin; the lowest-cost pair is
    always kept.
    """
    n = spec.n if isinstance(spec, NgramSpec) else int(spec)
    costs = np.asarray(costs, dtype=np.float64)
    if not tc.active or costs.size == 0:
        return np.ones(costs.shape, dtype=bool)
    kept = np.exp(-costs / n) >= tc.margin
    kept[int(np.argmin(costs))] = True
    return kept


def loss_gradient(lp: LogProbBatch, y, matches: Sequence[SentenceMatch]) -> np.ndarray:
    """-1 at (b, window + k, y[ngram + k]) for every kept pair and offset k."""
    B, T, V = lp.shape
    ids, lengths = as_target_batch(y, T)
    if len(matches) != B or ids.shape[0] != B:
        raise ValueError(f"expected {B} sentence matches, got {len(matches)}")
    flat = []
    for b, m in enumerate(matches):
        expected = max(int(lengths[b]) - m.n + 1, 0)
        if len(m.windows) != expected:
            raise ValueError(
                f"stale assignment for sentence {b}: {len(m.windows)} pairs, "
                f"expected {expected}"
            )
        w = m.windows[m.kept]
        g = m.ngrams[m.kept]
        offs = np.arange(m.n)
        pos = (w[:, None] + offs).ravel()
        tok = ids[b, (g[:, None] + offs).ravel()]
        flat.append((b * T + pos) * V + tok)
    grad = np.zeros(B * T * V)
    if flat:
        idx = np.concatenate(flat)
        grad -= np.bincount(idx, minlength=B * T * V)
    return grad.reshape(B, T, V)


def _finish(lp, ids, matches) -> LossOutput:
    value = float(sum(m.value for m in matches))
    return LossOutput(value, matches, loss_gradient(lp, ids, matches))


def xe_loss(lp: LogProbBatch, y) -> LossOutput:
    """Position-aligned cross entropy, summed over valid tokens."""
    costs, ids, lengths = _token_costs(lp, y)
    matches = []
    for b, n in enumerate(lengths):
        n = int(n)
        idx = np.arange(n)
        c = costs[b, idx, idx]
        matches.append(SentenceMatch(1, idx, idx.copy(), c, np.ones(n, dtype=bool)))
    return _finish(lp, ids, matches)


def ngram_oaxe_loss(
    lp: LogProbBatch,
    y,
    spec: NgramSpec | int = NgramSpec(2),
    tc: TruncationConfig = NO_TRUNCATION,
) -> LossOutput:
    """Minimum over window-to-ngram orderings of the summed ngram cross entropy."""
    spec = spec if isinstance(spec, NgramSpec) else NgramSpec(spec)
    costs, ids, lengths = _token_costs(lp, y)
    T = lp.shape[1]
    full = lift_to_ngram_cost(costs, spec) if T >= spec.n else None

    mats, sizes = [], []
    for b, length in enumerate(lengths):
        length = int(length)
        n = min(spec.n, length) if length else spec.n
        if length == 0:
            mat = np.zeros((0, 0))
        elif n == spec.n:
            m = length - n + 1
            mat = np.ascontiguousarray(full[b, :m, :m])
        else:
            mat = np.ascontiguousarray(lift_to_ngram_cost(costs[b, :length, :length], n))
        mats.append(mat)
        sizes.append(n)

    perms = _solve_all(mats)
    matches = []
    for mat, perm, n in zip(mats, perms, sizes):
        windows = np.arange(mat.shape[0])
        c = mat[windows, perm]
        matches.append(SentenceMatch(n, windows, perm, c, truncate_matches(c, n, tc)))
    return _finish(lp, ids, matches)


def oaxe_loss(lp: LogProbBatch, y, tc: TruncationConfig = NO_TRUNCATION) -> LossOutput:
    """Order-agnostic cross entropy: the unigram case of :func:`ngram_oaxe_loss`."""
    return ngram_oaxe_loss(lp, y, NgramSpec(1), tc)


def compute_loss(kind: str, lp: LogProbBatch, y, n: int = 2, margin: float = 0.0) -> LossOutput:
    """Dispatch by name: ``xe``, ``oaxe`` or ``ngram_oaxe``."""
    tc = TruncationConfig(margin, enabled=margin > 0)
    if kind == "xe":
        return xe_loss(lp, y)
    if kind == "oaxe":
        return oaxe_loss(lp, y, tc)
    if kind == "ngram_oaxe":
        return ngram_oaxe_loss(lp, y, NgramSpec(n), tc)
    raise ValueError(f"unknown loss kind {kind!r}")
