"""ngram order-agnostic cross entropy for non-autoregressive sequence models."""

try:
    from importlib.metadata import version as _version

    __version__ = _version("ngram-oaxe")
except Exception:  # noqa: BLE001 - not installed
    __version__ = "0.1.0"

from .assignment import BACKEND, Assignment, available_backends, brute_force_solve, hungarian_solve
from .core import LogProbBatch, TokenSeq, Vocab, log_softmax, pad_batch
from .loss import (
    LossOutput,
    NgramSpec,
    TruncationConfig,
    build_token_cost,
    compute_loss,
    lift_to_ngram_cost,
    ngram_oaxe_loss,
    oaxe_loss,
    truncate_matches,
    xe_loss,
)
from .metrics import EvalReport, evaluate, mode_match_rate, ngram_precision, repetition_rate

__all__ = [
    "BACKEND",
    "Assignment",
    "EvalReport",
    "LogProbBatch",
    "LossOutput",
    "NgramSpec",
    "TokenSeq",
    "TruncationConfig",
    "Vocab",
    "available_backends",
    "brute_force_solve",
    "build_token_cost",
    "compute_loss",
    "evaluate",
    "hungarian_solve",
    "lift_to_ngram_cost",
    "log_softmax",
    "mode_match_rate",
    "ngram_oaxe_loss",
    "ngram_precision",
    "oaxe_loss",
    "pad_batch",
    "repetition_rate",
    "truncate_matches",
    "xe_loss",
]
