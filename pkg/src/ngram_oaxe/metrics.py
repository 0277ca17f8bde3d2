"""Output-analysis metrics: repetition, clipped ngram precision, mode match."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .core import PAD_ID

LENGTH_BUCKETS = ((1, 4), (5, 8), (9, 12), (13, None))
ORDERS = (1, 2, 3, 4)


def _strip(seq) -> list[int]:
    return [int(t) for t in seq if int(t) != PAD_ID]


def _dedup(seq) -> list[int]:
    out: list[int] = []
    for t in seq:
        if not out or out[-1] != t:
            out.append(t)
    return out


def repetition_rate(outputs: Sequence[Sequence[int]]) -> float:
    """Fraction of tokens identical to their immediate predecessor."""
    if len(outputs) == 0:
        raise ValueError("repetition_rate of an empty batch")
    repeats = total = 0
    for seq in outputs:
        seq = _strip(seq)
        total += len(seq)
        repeats += sum(1 for a, b in zip(seq, seq[1:]) if a == b)
    return repeats / total if total else 0.0


def _ngrams(seq: Sequence[int], n: int) -> Counter:
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


def ngram_counts(output, refs, n: int) -> tuple[int, int]:
    """(clipped matches, output ngram count) for one output against its references."""
    out = _ngrams(_strip(output), n)
    best: Counter = Counter()
    for ref in refs:
        best |= _ngrams(_strip(ref), n)
    matched = sum(min(c, best[g]) for g, c in out.items())
    return matched, sum(out.values())


def ngram_precision(outputs, refs, n: int) -> float:
    """Corpus-level clipped ngram precision with per-ngram max over references."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(outputs) != len(refs):
        raise ValueError("one reference set per output is required")
    matched = total = 0
    for out, rs in zip(outputs, refs):
        m, t = ngram_counts(out, rs, n)
        matched += m
        total += t
    if total == 0:
        raise ValueError(f"no output is long enough to contain a {n}-gram")
    return matched / total


def mode_match_rate(outputs, refs) -> float:
    """Fraction of outputs equal, after de-duplication, to some reference."""
    if len(outputs) != len(refs):
        raise ValueError("one reference set per output is required")
    if not outputs:
        return 0.0
    hits = 0
    for out, rs in zip(outputs, refs):
        o = _dedup(_strip(out))
        hits += any(o == _dedup(_strip(r)) for r in rs)
    return hits / len(outputs)


def bucket_name(lo: int, hi: int | None) -> str:
    return f"{lo}-{hi}" if hi is not None else f"{lo}+"


def _bucket_of(length: int) -> str:
    for lo, hi in LENGTH_BUCKETS:
        if length >= lo and (hi is None or length <= hi):
            return bucket_name(lo, hi)
    return bucket_name(*LENGTH_BUCKETS[0])


def _safe_precision(outputs, refs, n):
    try:
        return ngram_precision(outputs, refs, n)
    except ValueError:
        return None


@dataclass
class EvalReport:
    repetition_rate: float
    ngram_precision: dict[str, float | None]
    mode_match_rate: float
    per_length_buckets: dict[str, dict] = field(default_factory=dict)
    n_examples: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))


REPORT_SCHEMA = {
    "type": "object",
    "required": ["repetition_rate", "ngram_precision", "mode_match_rate",
                 "per_length_buckets", "n_examples"],
    "additionalProperties": False,
    "properties": {
        "repetition_rate": {"type": "number", "minimum": 0, "maximum": 1},
        "ngram_precision": {
            "type": "object",
            "required": ["1", "2", "3", "4"],
            "additionalProperties": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
        },
        "mode_match_rate": {"type": "number", "minimum": 0, "maximum": 1},
        "per_length_buckets": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["count", "ngram_precision"],
                "properties": {
                    "count": {"type": "integer", "minimum": 0},
                    "ngram_precision": {"type": "object"},
                },
            },
        },
        "n_examples": {"type": "integer", "minimum": 0},
    },
}


def evaluate(outputs, refs) -> EvalReport:
    """All metrics on already-decoded outputs (pass de-duplicated outputs to score those)."""
    if len(outputs) != len(refs):
        raise ValueError("one reference set per output is required")
    buckets: dict[str, tuple[list, list]] = {bucket_name(lo, hi): ([], []) for lo, hi in LENGTH_BUCKETS}
    for out, rs in zip(outputs, refs):
        ref_len = len(_strip(rs[0])) if rs else 0
        o, r = buckets[_bucket_of(ref_len)]
        o.append(out)
        r.append(rs)
    per_bucket = {
        name: {
            "count": len(o),
            "ngram_precision": {str(n): _safe_precision(o, r, n) for n in ORDERS},
        }
        for name, (o, r) in buckets.items()
    }
    return EvalReport(
        repetition_rate=repetition_rate(outputs),
        ngram_precision={str(n): _safe_precision(outputs, refs, n) for n in ORDERS},
        mode_match_rate=mode_match_rate(outputs, refs),
        per_length_buckets=per_bucket,
        n_examples=len(outputs),
    )
