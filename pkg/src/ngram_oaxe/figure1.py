"""Worked bigram example on "I ate pizza this afternoon".

Only four token probabilities are fixed by the example:
P(I|pos1) = 0.2, P(ate|pos2) = 0.1 (so P("I ate"|pos1,2) = 0.02) and
P(ate|pos4) = 0.4. The rest of the table is filled in so the rows are proper
distributions and the optimal bigram ordering is the intended one.
"""

from __future__ import annotations

import numpy as np

from .core import LogProbBatch, Vocab
from .loss import NgramSpec, TruncationConfig, build_token_cost, lift_to_ngram_cost, ngram_oaxe_loss

SENTENCE = ["I", "ate", "pizza", "this", "afternoon"]
FILLER = ["the", "a", "we", "noon"]

# rows: positions 1..5; columns: I, ate, pizza, this, afternoon
TARGET_PROBS = np.array(
    [
        [0.20, 0.05, 0.05, 0.50, 0.05],
        [0.05, 0.10, 0.10, 0.05, 0.50],
        [0.50, 0.05, 0.05, 0.15, 0.05],
        [0.05, 0.40, 0.10, 0.05, 0.05],
        [0.05, 0.05, 0.50, 0.05, 0.10],
    ]
)

MARGIN = 0.15


def vocab() -> Vocab:
    return Vocab(SENTENCE + FILLER)


def batch() -> tuple[LogProbBatch, np.ndarray, Vocab]:
    """The completed (1, 5, V) distribution and the target id row."""
    v = vocab()
    ids = np.array([v.encode(SENTENCE)])
    probs = np.zeros((1, len(SENTENCE), v.size))
    probs[0][:, ids[0]] = TARGET_PROBS
    rest = 1.0 - TARGET_PROBS.sum(axis=1)
    filler = v.encode(FILLER)
    probs[0][:, filler] = rest[:, None] / len(filler)
    return LogProbBatch.from_probs(probs), ids, v


def bigram_prob(window: int, ngram: int) -> float:
    """P(y_ngram y_ngram+1 | positions window, window+1), 0-based."""
    lp, ids, _ = batch()
    lifted = lift_to_ngram_cost(build_token_cost(lp, ids, 0), NgramSpec(2))
    return float(np.exp(-lifted[window, ngram]))


def run(margin: float = MARGIN) -> dict:
    """Solve the bigram ordering and report selected and truncated bigrams."""
    lp, ids, _ = batch()
    out = ngram_oaxe_loss(lp, ids, NgramSpec(2), TruncationConfig(margin))
    m = out.matches[0]
    rows = []
    for (w, g, cost), kept in zip(m.pairs, m.kept):
        rows.append(
            {
                "bigram": " ".join(SENTENCE[g : g + 2]),
                "positions": [w + 1, w + 2],
                "prob": float(np.exp(-cost)),
                "per_token_prob": float(np.exp(-cost / 2)),
                "kept": bool(kept),
            }
        )
    return {
        "margin": margin,
        "selected": [r for r in rows if r["kept"]],
        "truncated": [r for r in rows if not r["kept"]],
        "loss": out.value,
    }


def format_report(result: dict) -> str:
    lines = [f"bigram ordering (margin {result['margin']:.2f}):"]
    for r in result["selected"]:
        lines.append(
            f'  kept       ("{r["bigram"]}" | Pos:{r["positions"][0]},{r["positions"][1]})'
            f"  p={r['prob']:.4f}"
        )
    for r in result["truncated"]:
        lines.append(
            f'  truncated  ("{r["bigram"]}" | Pos:{r["positions"][0]},{r["positions"][1]})'
            f"  p={r['prob']:.4f}"
        )
    lines.append(f"  loss = {result['loss']:.6f}")
    return "\n".join(lines)
