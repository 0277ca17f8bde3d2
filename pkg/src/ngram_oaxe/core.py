"""Vocabularies, token batches and log-domain tensors shared by every module."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

PAD_ID = 0
UNK_ID = 1
PAD = "<pad>"
UNK = "<unk>"

PROB_FLOOR = 1e-30
LOG_FLOOR = float(np.log(PROB_FLOOR))


class Vocab:
    """Bidirectional token/id map. Ids 0 and 1 are always pad and unk."""

    def __init__(self, tokens: Iterable[str] = ()):
        self._itos: list[str] = [PAD, UNK]
        for tok in tokens:
            if tok in (PAD, UNK):
                continue
            if tok in self._itos:
                raise ValueError(f"duplicate token {tok!r}")
            self._itos.append(tok)
        self._stoi = {tok: i for i, tok in enumerate(self._itos)}

    def __len__(self) -> int:
        return len(self._itos)

    @property
    def size(self) -> int:
        return len(self._itos)

    @property
    def tokens(self) -> list[str]:
        return list(self._itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self._itos == other._itos

    def __repr__(self) -> str:
        return f"Vocab(size={self.size})"

    def id(self, token: str) -> int:
        return self._stoi.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self._itos[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self._itos[i] for i in ids if i != PAD_ID]


@dataclass(frozen=True)
class TokenSeq:
    """Padded id sequence; ``length`` counts the non-pad prefix."""

    ids: tuple[int, ...]

    def __post_init__(self):
        ids = tuple(int(i) for i in self.ids)
        object.__setattr__(self, "ids", ids)
        if any(i < 0 for i in ids):
            raise ValueError("negative token id")
        n = len(ids)
        while n and ids[n - 1] == PAD_ID:
            n -= 1
        if PAD_ID in ids[:n]:
            raise ValueError("pad ids must form a contiguous suffix")

    @property
    def length(self) -> int:
        n = len(self.ids)
        while n and self.ids[n - 1] == PAD_ID:
            n -= 1
        return n

    def check_vocab(self, vocab_size: int) -> None:
        if any(i >= vocab_size for i in self.ids):
            raise ValueError(f"token id out of range for vocab of size {vocab_size}")


def pad_batch(seqs: Sequence[Sequence[int]], width: int | None = None):
    """Stack id lists into a right-padded ``(B, width)`` int array plus lengths."""
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    if width is None:
        width = int(lengths.max()) if len(seqs) else 0
    if len(seqs) and lengths.max() > width:
        raise ValueError(f"sequence longer than padded width {width}")
    ids = np.zeros((len(seqs), width), dtype=np.int64)
    for b, s in enumerate(seqs):
        ids[b, : len(s)] = s
        if PAD_ID in list(s):
            raise ValueError(f"sentence {b} contains a pad id inside its valid span")
    return ids, lengths


@dataclass(frozen=True, eq=False)
class LogProbBatch:
    """Per-position log distributions, shape (B, T, V), plus valid lengths."""

    values: np.ndarray
    lengths: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise ValueError(f"expected a rank-3 array, got shape {values.shape}")
        B, T, _ = values.shape
        lengths = self.lengths
        if lengths is None:
            lengths = np.full(B, T, dtype=np.int64)
        lengths = np.array(lengths, dtype=np.int64).reshape(-1)
        if lengths.shape != (B,):
            raise ValueError(f"expected {B} lengths, got {lengths.shape[0]}")
        if (lengths < 0).any() or (lengths > T).any():
            raise ValueError(f"lengths must lie in [0, {T}]")
        if not np.isfinite(values).all():
            b, t, _ = np.argwhere(~np.isfinite(values))[0]
            raise ValueError(f"non-finite log-probability at (b={b}, t={t})")
        values.setflags(write=False)
        lengths.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "lengths", lengths)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def valid_mask(self) -> np.ndarray:
        """Boolean (B, T) mask of positions inside each sentence."""
        T = self.values.shape[1]
        return np.arange(T)[None, :] < self.lengths[:, None]

    @classmethod
    def from_probs(cls, probs, lengths=None, atol: float = 1e-9) -> "LogProbBatch":
        """Build from probability rows; valid rows must sum to one."""
        probs = np.asarray(probs, dtype=np.float64)
        out = cls(np.log(np.maximum(probs, PROB_FLOOR)), lengths)
        sums = probs.sum(axis=-1)[out.valid_mask]
        if (probs < 0).any() or not np.allclose(sums, 1.0, atol=atol):
            raise ValueError("probability rows must be nonnegative and sum to 1")
        return out


def logsumexp(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    return (m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))).squeeze(axis)


def log_softmax(logits, lengths=None) -> LogProbBatch:
    """Normalize logits over the vocab axis, then clamp at the log floor.

    Rows past a sentence's length are normalized too (they are masked
    downstream, never dropped).
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 3:
        raise ValueError(f"expected logits of shape (B, T, V), got {logits.shape}")
    bad = ~np.isfinite(logits)
    if bad.any():
        b, t, _ = np.argwhere(bad)[0]
        raise ValueError(f"non-finite logit at (b={b}, t={t})")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    return LogProbBatch(np.maximum(out, LOG_FLOOR), lengths)


def as_target_batch(y, T: int | None = None):
    """Normalize targets to a padded ``(B, T)`` id array and lengths.

    Accepts a 2-D int array (pad = 0), or a sequence of ``TokenSeq`` / id lists.
    """
    if isinstance(y, np.ndarray) and y.ndim == 2:
        ids = y.astype(np.int64, copy=False)
        valid = ids != PAD_ID
        lengths = valid.sum(axis=1)
        pos = np.arange(ids.shape[1])[None, :]
        if (valid != (pos < lengths[:, None])).any():
            raise ValueError("pad ids must form a contiguous suffix")
        if T is not None and ids.shape[1] != T:
            if ids.shape[1] > T and (lengths > T).any():
                raise ValueError(f"target longer than {T} positions")
            wide = np.zeros((ids.shape[0], T), dtype=np.int64)
            k = min(T, ids.shape[1])
            wide[:, :k] = ids[:, :k]
            ids = wide
        return ids, lengths
    seqs = [s.ids[: s.length] if isinstance(s, TokenSeq) else list(s) for s in y]
    return pad_batch(seqs, T)


def gather_target_logprobs(lp: LogProbBatch, y) -> np.ndarray:
    """out[b, t, i] = lp[b, t, y[b, i]]; entries outside the sentence get the floor."""
    B, T, V = lp.shape
    ids, lengths = as_target_batch(y, T)
    if ids.shape[0] != B:
        raise ValueError(f"batch size mismatch: {ids.shape[0]} targets for {B} rows")
    if not np.array_equal(lengths, lp.lengths):
        raise ValueError(
            f"target lengths {lengths.tolist()} do not match lp lengths {lp.lengths.tolist()}"
        )
    if (ids >= V).any():
        raise ValueError(f"target id out of range for vocab of size {V}")
    idx = np.broadcast_to(ids[:, None, :], (B, T, T))
    out = np.take_along_axis(lp.values, idx, axis=2)
    mask = lp.valid_mask
    out = np.where(mask[:, :, None] & mask[:, None, :], out, LOG_FLOOR)
    return out
