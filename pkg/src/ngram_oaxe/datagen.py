"""Synthetic multimodal corpus: each source admits several phrase orderings.

A source lists phrase identifiers (sorted, then a separator marker), so the
bag of phrases is recoverable but the ordering is not. Each example gets its
own ``mode_count`` phrase orderings; one of them is sampled uniformly as the
training target and all of them are kept as references. Phrases may share
tokens, which is what lets blended orderings surface as repeated tokens.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import PAD_ID, Vocab

SEP = "<sep>"


@dataclass(frozen=True)
class PhraseInventory:
    phrases: tuple[tuple[int, ...], ...]
    ids: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.phrases)) != len(self.phrases):
            raise ValueError("phrases must be pairwise distinct")
        if any(PAD_ID in p or not 1 <= len(p) <= 4 for p in self.phrases):
            raise ValueError("phrases hold 1-4 non-pad tokens")
        if len(self.ids) != len(self.phrases):
            raise ValueError("one source id per phrase is required")


@dataclass(frozen=True)
class SyntheticExample:
    src: tuple[int, ...]
    target: tuple[int, ...]
    refs: tuple[tuple[int, ...], ...]
    phrases: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        for name in ("src", "target"):
            object.__setattr__(self, name, tuple(int(t) for t in getattr(self, name)))
        object.__setattr__(self, "refs", tuple(tuple(int(t) for t in r) for r in self.refs))
        object.__setattr__(self, "phrases", tuple(tuple(int(t) for t in p) for p in self.phrases))

    def to_json(self) -> dict:
        return {
            "src": list(self.src),
            "target": list(self.target),
            "refs": [list(r) for r in self.refs],
            "phrases": [list(p) for p in self.phrases],
        }


@dataclass(frozen=True)
class CorpusConfig:
    n_examples: int = 2000
    n_phrases: int = 3
    mode_count: int = 2
    seed: int = 0
    n_eval: int = 500
    phrase_len: int = 2
    n_src_phrases: int = 64
    n_tgt_tokens: int = 30
    shared_modes: bool = False

    def validate(self) -> None:
        k = self.n_phrases
        if k < 1:
            raise ValueError("n_phrases must be >= 1")
        if self.mode_count < 1:
            raise ValueError("mode_count must be >= 1")
        if self.mode_count > math.factorial(k):
            raise ValueError(f"mode_count exceeds {k}! = {math.factorial(k)}")
        if self.n_examples < 1 or self.n_eval < 0:
            raise ValueError("n_examples must be >= 1 and n_eval >= 0")
        if not 1 <= self.phrase_len <= 4:
            raise ValueError("phrase_len must be in [1, 4]")
        if k > self.n_src_phrases:
            raise ValueError("n_phrases exceeds the phrase inventory")
        if self.phrase_len > self.n_tgt_tokens:
            raise ValueError("phrase_len exceeds the target token count")
        if self.n_src_phrases > math.perm(self.n_tgt_tokens, self.phrase_len):
            raise ValueError("inventory larger than the number of distinct phrases")


def source_vocab(n_src_phrases: int = 64) -> Vocab:
    return Vocab([SEP] + [f"p{i}" for i in range(n_src_phrases)])


def target_vocab(n_tgt_tokens: int = 30) -> Vocab:
    return Vocab([f"w{i}" for i in range(n_tgt_tokens)])


def build_inventory(rng: np.random.Generator, n_phrases: int, phrase_len: int,
                    n_tokens: int) -> PhraseInventory:
    first_tok = 2  # after pad and unk
    seen, phrases = set(), []
    while len(phrases) < n_phrases:
        p = tuple(int(t) for t in rng.choice(n_tokens, phrase_len, replace=False) + first_tok)
        if p not in seen:
            seen.add(p)
            phrases.append(p)
    ids = tuple(range(3, 3 + n_phrases))  # after pad, unk, <sep>
    return PhraseInventory(tuple(phrases), ids)


def mode_patterns(rng: np.random.Generator, k: int, mode_count: int) -> list[tuple[int, ...]]:
    """``mode_count`` distinct slot orderings drawn uniformly from all ``k!``, in lexicographic order."""
    perms = list(itertools.permutations(range(k)))
    return [perms[int(i)] for i in sorted(rng.choice(len(perms), mode_count, replace=False))]


def sample_mode(n_modes: int, rng: np.random.Generator) -> int:
    return int(rng.integers(0, n_modes))


def is_valid_ref(ref: Sequence[int], phrases: Sequence[Sequence[int]]) -> bool:
    """True if ``ref`` concatenates every phrase exactly once, each kept in order."""
    ref = tuple(ref)
    remaining = [tuple(p) for p in phrases]

    def walk(pos: int, left: list) -> bool:
        if not left:
            return pos == len(ref)
        for i, p in enumerate(left):
            if ref[pos : pos + len(p)] == p and walk(pos + len(p), left[:i] + left[i + 1 :]):
                return True
        return False

    return walk(0, remaining)


def _draw_combo(rng, inv: PhraseInventory, k: int) -> tuple[int, ...]:
    return tuple(sorted(int(i) for i in rng.choice(len(inv.phrases), k, replace=False)))


def gen_corpus(n_examples: int = 2000, n_phrases_per_example: int = 3, mode_count: int = 2,
               seed: int = 0, **kwargs):
    """Return ``(train, eval)`` lists of :class:`SyntheticExample`.

    Eval phrase combinations never occur in train. Extra keyword arguments
    go to :class:`CorpusConfig`.
    """
    cfg = CorpusConfig(n_examples, n_phrases_per_example, mode_count, seed, **kwargs)
    cfg.validate()
    k = cfg.n_phrases
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(3)[0])
    inv = build_inventory(rng, cfg.n_src_phrases, cfg.phrase_len, cfg.n_tgt_tokens)
    patterns = mode_patterns(rng, k, cfg.mode_count) if cfg.shared_modes else None

    def draw():
        # references never contain adjacent duplicates, so any repetition in
        # a decoded output comes from the model
        while True:
            combo = _draw_combo(rng, inv, k)
            phrases = [inv.phrases[i] for i in combo]
            pats = patterns or mode_patterns(rng, k, cfg.mode_count)
            refs = [tuple(t for slot in pat for t in phrases[slot]) for pat in pats]
            if all(a != b for r in refs for a, b in zip(r, r[1:])):
                return combo, phrases, refs

    def make(combo, phrases, refs) -> SyntheticExample:
        target = refs[sample_mode(len(refs), rng)]
        src = tuple(inv.ids[i] for i in combo) + (2,)
        return SyntheticExample(src, target, tuple(refs), tuple(phrases))

    n_combos = math.comb(cfg.n_src_phrases, k)
    n_eval = min(cfg.n_eval, n_combos // 2)
    eval_set: list = []
    seen: set = set()
    attempts = 0
    while len(eval_set) < n_eval and attempts < 100 * (n_eval + 1):
        attempts += 1
        combo, phrases, refs = draw()
        if combo not in seen:
            seen.add(combo)
            eval_set.append(make(combo, phrases, refs))

    train = []
    while len(train) < cfg.n_examples:
        combo, phrases, refs = draw()
        if combo not in seen:
            train.append(make(combo, phrases, refs))
    return train, eval_set


def copy_task(n_examples: int, length: int = 4, n_tokens: int = 30, seed: int = 0):
    """Unimodal control: target equals the (sorted, distinct) source tokens."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_examples):
        toks = tuple(sorted(int(t) + 2 for t in rng.choice(n_tokens, length, replace=False)))
        out.append(SyntheticExample(toks, toks, (toks,), tuple((t,) for t in toks)))
    return out


REQUIRED_FIELDS = ("src", "target", "refs", "phrases")


class CorpusFormatError(ValueError):
    pass


def write_jsonl(corpus: Sequence[SyntheticExample], path) -> None:
    from .model import atomic_write_text

    text = "".join(json.dumps(ex.to_json(), separators=(",", ":")) + "\n" for ex in corpus)
    atomic_write_text(path, text)


def _int_list(value, where: str) -> list[int]:
    if not isinstance(value, list) or not all(isinstance(t, int) and not isinstance(t, bool)
                                              for t in value):
        raise CorpusFormatError(f"{where}: expected a list of integers")
    return value


def read_jsonl(path) -> list[SyntheticExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise CorpusFormatError(f"{path}:{lineno}: expected a JSON object")
            for name in REQUIRED_FIELDS:
                if name not in obj:
                    raise CorpusFormatError(f"{path}:{lineno}: missing field {name!r}")
            where = f"{path}:{lineno}"
            src = _int_list(obj["src"], f"{where}: field 'src'")
            target = _int_list(obj["target"], f"{where}: field 'target'")
            for key in ("refs", "phrases"):
                if not isinstance(obj[key], list):
                    raise CorpusFormatError(f"{where}: field {key!r} must be a list of lists")
            refs = [_int_list(r, f"{where}: field 'refs'") for r in obj["refs"]]
            phrases = [_int_list(p, f"{where}: field 'phrases'") for p in obj["phrases"]]
            out.append(SyntheticExample(src, target, refs, phrases))
    return out
