import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ngram_oaxe import assignment
from ngram_oaxe.assignment import (
    BRUTE_FORCE_MAX_N,
    COST_CAP,
    as_cost_matrix,
    assignment_cost,
    available_backends,
    brute_force_solve,
    hungarian_solve,
)

BACKENDS = available_backends()


def test_python_backend_always_present():
    assert "python" in BACKENDS
    assert assignment.BACKEND in BACKENDS


@pytest.mark.parametrize("backend", BACKENDS)
def test_hand_checked_matrices(backend):
    a = hungarian_solve([[1, 2], [3, 0]], backend)
    assert a.perm == (0, 1) and a.total_cost == 1.0
    # anti-diagonal is the unique optimum
    c = [[9, 9, 1], [9, 1, 9], [1, 9, 9]]
    assert hungarian_solve(c, backend).perm == (2, 1, 0)
    assert hungarian_solve(np.zeros((0, 0)), backend).perm == ()
    assert hungarian_solve([[7.5]], backend).total_cost == 7.5


@pytest.mark.parametrize("backend", BACKENDS)
def test_all_equal_matrix_gives_identity(backend):
    a = hungarian_solve(np.full((4, 4), 2.5), backend)
    assert a.perm == (0, 1, 2, 3) and a.total_cost == 10.0


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("n", range(1, 8))
def test_matches_brute_force(backend, n):
    rng = np.random.default_rng(n)
    for _ in range(100):
        c = rng.uniform(0, 10, (n, n))
        h, b = hungarian_solve(c, backend), brute_force_solve(c)
        assert abs(h.total_cost - b.total_cost) <= 1e-9


@pytest.mark.parametrize("backend", BACKENDS)
def test_ties_resolve_to_lexicographically_smallest(backend):
    rng = np.random.default_rng(7)
    for _ in range(500):
        c = rng.integers(0, 3, (6, 6)).astype(float)
        assert hungarian_solve(c, backend).perm == brute_force_solve(c).perm


def test_backends_agree_bitwise():
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernel not built")
    rng = np.random.default_rng(3)
    for n in (5, 17, 40):
        for _ in range(20):
            c = -np.log(rng.dirichlet(np.ones(n), n))
            assert hungarian_solve(c, "cython") == hungarian_solve(c, "python")


def test_agrees_with_scipy():
    scipy_opt = pytest.importorskip("scipy.optimize")
    rng = np.random.default_rng(11)
    for n in (10, 30, 64):
        c = rng.exponential(size=(n, n))
        r, col = scipy_opt.linear_sum_assignment(c)
        assert hungarian_solve(c).total_cost == pytest.approx(c[r, col].sum(), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6)).map(lambda t: (t[0], t[0])),
              elements=st.floats(0, 100, allow_nan=False)))
def test_property_optimal_and_permutation(c):
    a = hungarian_solve(c)
    n = c.shape[0]
    assert sorted(a.perm) == list(range(n))
    assert a.total_cost == pytest.approx(assignment_cost(c, a.perm))
    best = min(sum(c[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))
    assert a.total_cost <= best + 1e-9 * (1 + c.max())


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10**6), st.floats(0.1, 50))
def test_property_row_shift_preserves_perm(n, seed, shift):
    c = np.random.default_rng(seed).uniform(0, 10, (n, n))
    shifted = c.copy()
    shifted[0] += shift
    assert hungarian_solve(c).perm == hungarian_solve(shifted).perm


def test_validation_errors():
    with pytest.raises(ValueError, match="square"):
        hungarian_solve(np.zeros((2, 3)))
    with pytest.raises(ValueError, match=r"non-finite cost at \(0, 1\)"):
        hungarian_solve([[0, np.inf], [0, 0]])
    with pytest.raises(ValueError, match="negative"):
        hungarian_solve([[0, -1], [0, 0]])
    with pytest.raises(ValueError, match="not a permutation"):
        assignment_cost(np.zeros((2, 2)), [0, 0])


def test_cost_cap_applies():
    assert as_cost_matrix([[1e9]])[0, 0] == COST_CAP


def test_brute_force_size_limit():
    n = BRUTE_FORCE_MAX_N + 1
    with pytest.raises(ValueError, match=f"got n = {n}"):
        brute_force_solve(np.zeros((n, n)))
