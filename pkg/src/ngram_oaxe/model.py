"""Tiny non-autoregressive model with hand-written backprop and Adam.

Every target position is predicted independently from a mean-pooled source
embedding plus a position embedding, through one tanh layer.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import LOG_FLOOR, PAD_ID, LogProbBatch, Vocab, log_softmax, pad_batch
from .loss import compute_loss

PARAM_NAMES = ("src_embed", "pos_embed", "w_hidden", "b_hidden", "w_out", "b_out")
LOSS_KINDS = ("xe", "oaxe", "ngram_oaxe")
CHECKPOINT_FORMAT = "ngram-oaxe-checkpoint/1"


class DivergenceError(RuntimeError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step
        self.value = value


@dataclass
class ModelParams:
    src_embed: np.ndarray
    pos_embed: np.ndarray
    w_hidden: np.ndarray
    b_hidden: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self):
        d = self.src_embed.shape[1]
        h = self.w_hidden.shape[1]
        v = self.w_out.shape[1]
        expected = {
            "pos_embed": (self.pos_embed.shape[0], d),
            "w_hidden": (d, h),
            "b_hidden": (h,),
            "w_out": (h, v),
            "b_out": (v,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        for name in PARAM_NAMES:
            if not np.isfinite(getattr(self, name)).all():
                raise ValueError(f"{name} contains non-finite values")

    @property
    def d(self) -> int:
        return self.src_embed.shape[1]

    @property
    def h(self) -> int:
        return self.w_hidden.shape[1]

    @property
    def max_len(self) -> int:
        return self.pos_embed.shape[0]

    @property
    def src_vocab_size(self) -> int:
        return self.src_embed.shape[0]

    @property
    def tgt_vocab_size(self) -> int:
        return self.w_out.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.arrays().items()})

    @classmethod
    def zeros(cls, src_vocab: int, tgt_vocab: int, max_len: int, d: int, h: int) -> "ModelParams":
        return cls(
            np.zeros((src_vocab, d)),
            np.zeros((max_len, d)),
            np.zeros((d, h)),
            np.zeros(h),
            np.zeros((h, tgt_vocab)),
            np.zeros(tgt_vocab),
        )

    @classmethod
    def init(cls, rng: np.random.Generator, src_vocab: int, tgt_vocab: int, max_len: int,
             d: int = 64, h: int = 128) -> "ModelParams":
        return cls(
            rng.normal(0.0, 1.0, (src_vocab, d)),
            rng.normal(0.0, 1.0, (max_len, d)),
            rng.normal(0.0, 1.0 / math.sqrt(d), (d, h)),
            np.zeros(h),
            rng.normal(0.0, 1.0 / math.sqrt(h), (h, tgt_vocab)),
            np.zeros(tgt_vocab),
        )


@dataclass
class ForwardCache:
    src: np.ndarray
    src_mask: np.ndarray
    lengths: np.ndarray
    x: np.ndarray
    act: np.ndarray
    lp: LogProbBatch


def forward(params: ModelParams, src, target_len) -> tuple[LogProbBatch, ForwardCache]:
    """Per-position log distributions, shape (B, max(target_len), V)."""
    if not isinstance(src, np.ndarray):
        src, _ = pad_batch(src)
    src = np.asarray(src, dtype=np.int64)
    lengths = np.asarray(target_len, dtype=np.int64).reshape(-1)
    if lengths.shape[0] != src.shape[0]:
        raise ValueError("one target length per source sentence is required")
    if (src >= params.src_vocab_size).any() or (src < 0).any():
        raise ValueError(f"source id out of range for vocab of size {params.src_vocab_size}")
    T = int(lengths.max()) if lengths.size else 0
    if T > params.max_len:
        raise ValueError(f"target length {T} exceeds the model's {params.max_len} positions")
    src_mask = src != PAD_ID
    counts = np.maximum(src_mask.sum(axis=1, keepdims=True), 1)
    pooled = (params.src_embed[src] * src_mask[..., None]).sum(axis=1) / counts
    x = pooled[:, None, :] + params.pos_embed[None, :T, :]
    act = np.tanh(x @ params.w_hidden + params.b_hidden)
    logits = act @ params.w_out + params.b_out
    lp = log_softmax(logits, lengths)
    return lp, ForwardCache(src, src_mask, lengths, x, act, lp)


def backward(params: ModelParams, cache: ForwardCache, grad_lp: np.ndarray) -> ModelParams:
    """Gradients of a scalar loss, given its gradient w.r.t. ``cache.lp.values``."""
    grad_lp = np.asarray(grad_lp, dtype=np.float64)
    if grad_lp.shape != cache.lp.shape or cache.act.shape[-1] != params.h:
        raise ValueError(
            f"gradient shape {grad_lp.shape} does not match the cached forward pass {cache.lp.shape}"
        )
    lpv = cache.lp.values
    # floored entries are constants; invalid positions never reach a loss
    g = np.where(lpv > LOG_FLOOR, grad_lp, 0.0) * cache.lp.valid_mask[..., None]
    probs = np.exp(lpv)
    d_logits = g - probs * g.sum(axis=-1, keepdims=True)

    B, T, _ = d_logits.shape
    act2 = cache.act.reshape(B * T, -1)
    dl2 = d_logits.reshape(B * T, -1)
    gw_out = act2.T @ dl2
    gb_out = dl2.sum(axis=0)
    d_pre = (dl2 @ params.w_out.T) * (1.0 - act2 * act2)
    gw_hidden = cache.x.reshape(B * T, -1).T @ d_pre
    gb_hidden = d_pre.sum(axis=0)
    d_x = (d_pre @ params.w_hidden.T).reshape(B, T, -1)

    g_pos = np.zeros_like(params.pos_embed)
    g_pos[:T] = d_x.sum(axis=0)
    d_pooled = d_x.sum(axis=1)
    counts = np.maximum(cache.src_mask.sum(axis=1, keepdims=True), 1)
    d_tok = (d_pooled / counts)[:, None, :] * cache.src_mask[..., None]
    g_src = np.zeros_like(params.src_embed)
    np.add.at(g_src, cache.src, d_tok)
    return ModelParams(g_src, g_pos, gw_hidden, gb_hidden, gw_out, gb_out)


@dataclass
class AdamState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        return cls(
            0,
            {k: np.zeros_like(a) for k, a in params.arrays().items()},
            {k: np.zeros_like(a) for k, a in params.arrays().items()},
        )


@dataclass
class TrainConfig:
    loss_kind: str = "ngram_oaxe"
    n: int = 2
    margin: float = 0.15
    pretrain_steps: int = 500
    steps: int = 5000
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    d: int = 64
    h: int = 128
    eval_every: int = 0

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if not 1 <= self.n <= 8:
            raise ValueError(f"n must be in [1, 8], got {self.n}")
        if not 0.0 <= self.margin <= 1.0:
            raise ValueError(f"margin (pi) must be in [0, 1], got {self.margin}")
        if self.steps < 0 or self.pretrain_steps < 0:
            raise ValueError("steps and pretrain_steps must be nonnegative")
        if self.pretrain_steps > self.steps:
            raise ValueError(f"pretrain_steps ({self.pretrain_steps}) exceeds steps ({self.steps})")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1 or self.d < 1 or self.h < 1:
            raise ValueError("batch_size, d and h must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState,
              config: TrainConfig) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update; returns new params and state."""
    t = state.step + 1
    b1, b2 = config.beta1, config.beta2
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.arrays().items():
        g = getattr(grads, name)
        if g.shape != p.shape or state.m[name].shape != p.shape:
            raise ValueError(f"shape mismatch for {name}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_p[name] = p - config.lr * m_hat / (np.sqrt(v_hat) + config.eps)
        new_m[name], new_v[name] = m, v
    return ModelParams(**new_p), AdamState(t, new_m, new_v)


def _streams(seed: int) -> dict[str, np.random.Generator]:
    names = ("datagen", "init", "sampling")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(ss) for name, ss in zip(names, children)}


def init_rng(seed: int) -> np.random.Generator:
    return _streams(seed)["init"]


@dataclass
class History:
    steps: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    keep_rate: list[float] = field(default_factory=list)
    evals: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    def to_csv(self) -> str:
        lines = ["step,loss,keep_rate"]
        for s, l, k in zip(self.steps, self.loss, self.keep_rate):
            lines.append(f"{s},{l!r},{k!r}")
        return "\n".join(lines) + "\n"


def train(config: TrainConfig, corpus, eval_fn: Callable[[ModelParams], dict] | None = None,
          src_vocab_size: int | None = None, tgt_vocab_size: int | None = None,
          on_step: Callable[[int, float, float], None] | None = None):
    """Train from scratch; XE for the first ``pretrain_steps`` updates, then the configured loss.

    ``corpus`` is a sequence of objects with ``src`` and ``target`` id lists.
    Returns ``(params, history)``. Raises :class:`DivergenceError` (with the
    partial history attached as ``.history``) on a non-finite loss.
    """
    if len(corpus) == 0:
        raise ValueError("training corpus is empty")
    src_all = [list(ex.src) for ex in corpus]
    tgt_all = [list(ex.target) for ex in corpus]
    max_len = max(len(t) for t in tgt_all)
    if src_vocab_size is None:
        src_vocab_size = max(max(s) for s in src_all) + 1
    if tgt_vocab_size is None:
        tgt_vocab_size = max(max(t) for t in tgt_all) + 1

    rngs = _streams(config.seed)
    params = ModelParams.init(rngs["init"], src_vocab_size, tgt_vocab_size, max_len,
                              config.d, config.h)
    state = AdamState.zeros_like(params)
    history = History()
    for step in range(config.steps):
        idx = rngs["sampling"].integers(0, len(corpus), config.batch_size)
        src, _ = pad_batch([src_all[i] for i in idx])
        tgt, lengths = pad_batch([tgt_all[i] for i in idx])
        lp, cache = forward(params, src, lengths)
        kind = "xe" if step < config.pretrain_steps else config.loss_kind
        out = compute_loss(kind, lp, tgt, config.n, config.margin)
        value = out.value / config.batch_size
        if not math.isfinite(value):
            err = DivergenceError(step, value)
            err.history = history
            raise err
        grads = backward(params, cache, out.grad / config.batch_size)
        params, state = adam_step(params, grads, state, config)
        history.steps.append(step)
        history.loss.append(value)
        history.keep_rate.append(out.keep_rate)
        if on_step is not None:
            on_step(step, value, out.keep_rate)
        if eval_fn is not None and config.eval_every and (step + 1) % config.eval_every == 0:
            history.evals.append({"step": step + 1, **eval_fn(params)})
    return params, history


def dedup(ids: Sequence[int]) -> list[int]:
    """Collapse runs of identical adjacent tokens."""
    out: list[int] = []
    for tok in ids:
        if not out or out[-1] != tok:
            out.append(int(tok))
    return out


def decode(params: ModelParams, src, target_len, dedup_output: bool = False) -> list[list[int]]:
    """Argmax at every position up to each sentence's target length."""
    lp, _ = forward(params, src, target_len)
    best = lp.values.argmax(axis=-1)
    outs = []
    for b, n in enumerate(lp.lengths):
        row = [int(t) for t in best[b, : int(n)]]
        outs.append(dedup(row) if dedup_output else row)
    return outs


def save_checkpoint(path, params: ModelParams, config: TrainConfig | None = None,
                    src_vocab: Vocab | None = None, tgt_vocab: Vocab | None = None) -> None:
    """JSON checkpoint; floats are written with repr precision so reload is exact."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(config) if config is not None else None,
        "src_vocab": src_vocab.tokens if src_vocab is not None else None,
        "tgt_vocab": tgt_vocab.tokens if tgt_vocab is not None else None,
        "params": {
            name: {"shape": list(a.shape), "data": a.ravel().tolist()}
            for name, a in params.arrays().items()
        },
    }
    atomic_write_text(path, json.dumps(payload))


def load_checkpoint(path):
    """Returns ``(params, config, src_vocab, tgt_vocab)``; missing parts are None."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    arrays = {
        name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in payload["params"].items()
    }
    params = ModelParams(**arrays)
    config = TrainConfig(**payload["config"]) if payload.get("config") else None
    src_vocab = Vocab(payload["src_vocab"]) if payload.get("src_vocab") else None
    tgt_vocab = Vocab(payload["tgt_vocab"]) if payload.get("tgt_vocab") else None
    return params, config, src_vocab, tgt_vocab


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
