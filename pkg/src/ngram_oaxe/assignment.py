"""Exact minimum-cost perfect matching on square cost matrices.

The solver kernel is compiled (``_lap_ext``) when available and pure Python
otherwise. Set ``NGRAM_OAXE_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _lap_py

COST_CAP = 1e4
BRUTE_FORCE_MAX_N = 9

_kernels = {"python": _lap_py.solve}
try:
    from . import _lap_ext
except ImportError:  # pragma: no cover - depends on the build
    _lap_ext = None
else:
    _kernels["cython"] = _lap_ext.solve

if os.environ.get("NGRAM_OAXE_BACKEND", "").lower() == "python" or _lap_ext is None:
    BACKEND = "python"
else:
    BACKEND = "cython"


def available_backends() -> list[str]:
    return sorted(_kernels)


def as_cost_matrix(c) -> np.ndarray:
    """Validate and normalize a cost matrix: square, finite, nonnegative, capped."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {c.shape}")
    if not np.isfinite(c).all():
        i, j = np.argwhere(~np.isfinite(c))[0]
        raise ValueError(f"non-finite cost at ({i}, {j})")
    if (c < 0).any():
        i, j = np.argwhere(c < 0)[0]
        raise ValueError(f"negative cost {c[i, j]} at ({i}, {j})")
    return np.ascontiguousarray(np.minimum(c, COST_CAP))


@dataclass(frozen=True)
class Assignment:
    """Row-to-column permutation and the summed cost of the selected entries."""

    perm: tuple[int, ...]
    total_cost: float

    def pairs(self):
        return list(enumerate(self.perm))


def _check_perm(perm, n: int) -> list[int]:
    perm = [int(p) for p in perm]
    if len(perm) != n or sorted(perm) != list(range(n)):
        raise ValueError(f"not a permutation of 0..{n - 1}: {perm}")
    return perm


def assignment_cost(c, perm: Sequence[int]) -> float:
    """Sum of ``c[i, perm[i]]`` accumulated in row order."""
    c = np.asarray(c, dtype=np.float64)
    perm = _check_perm(perm, c.shape[0])
    total = 0.0
    for i, j in enumerate(perm):
        total += float(c[i, j])
    return total


def _tolerance(c: np.ndarray) -> float:
    scale = float(c.max()) if c.size else 0.0
    return 1e-9 * (1.0 + scale)


def solve_perm(c: np.ndarray, backend: str | None = None) -> np.ndarray:
    """Kernel call without validation; ``c`` must already be a valid cost matrix."""
    return np.asarray(_kernels[backend or BACKEND](c, _tolerance(c)), dtype=np.intp)


def hungarian_solve(c, backend: str | None = None) -> Assignment:
    """Optimal assignment in O(n^3); ties go to the lexicographically smallest perm."""
    c = as_cost_matrix(c)
    kernel = _kernels[backend or BACKEND]
    perm = tuple(int(p) for p in kernel(c, _tolerance(c)))
    return Assignment(perm, assignment_cost(c, perm))


def brute_force_solve(c) -> Assignment:
    """Exhaustive search over all n! permutations (n <= 9)."""
    c = as_cost_matrix(c)
    n = c.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(
            f"brute force limited to n <= {BRUTE_FORCE_MAX_N} "
            f"({math.factorial(BRUTE_FORCE_MAX_N)} permutations), got n = {n}"
        )
    rows = c.tolist()
    best, best_cost = None, math.inf
    # permutations() yields lexicographic order, so strict < keeps the smallest tie
    for perm in itertools.permutations(range(n)):
        total = 0.0
        for i in range(n):
            total += rows[i][perm[i]]
        if total < best_cost:
            best, best_cost = perm, total
    return Assignment(tuple(best), best_cost)
