# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled square assignment kernel.

Same algorithm and floating-point operation order as ``_lap_py.solve``.
"""

import numpy as np

from libc.math cimport INFINITY
from libc.stdlib cimport free, malloc


cdef void _lex_smallest(const char* tight, Py_ssize_t* col4row, Py_ssize_t* row4col,
                        Py_ssize_t n, Py_ssize_t* work) noexcept nogil:
    cdef Py_ssize_t* parent = work
    cdef Py_ssize_t* stack = work + n
    cdef Py_ssize_t* seen = work + 2 * n
    cdef Py_ssize_t* fixed = work + 3 * n
    cdef Py_ssize_t i, j, k, c, c2, r, rr, prev, owner, target, top
    cdef bint found
    for k in range(n):
        fixed[k] = 0
    for i in range(n):
        target = col4row[i]
        for j in range(target):
            if fixed[j] or not tight[i * n + j]:
                continue
            r = row4col[j]
            for k in range(n):
                parent[k] = -1
                seen[k] = 0
            seen[j] = 1
            top = 0
            for c in range(n):
                if tight[r * n + c] and not seen[c] and not fixed[c]:
                    seen[c] = 1
                    parent[c] = -1
                    stack[top] = c
                    top += 1
            found = False
            while top > 0:
                top -= 1
                c = stack[top]
                if c == target:
                    found = True
                    break
                rr = row4col[c]
                for c2 in range(n):
                    if tight[rr * n + c2] and not seen[c2] and not fixed[c2]:
                        seen[c2] = 1
                        parent[c2] = c
                        stack[top] = c2
                        top += 1
            if not found:
                continue
            c = target
            while c != -1:
                prev = parent[c]
                if prev == -1:
                    owner = r
                else:
                    owner = row4col[prev]
                col4row[owner] = c
                row4col[c] = owner
                c = prev
            col4row[i] = j
            row4col[j] = i
            break
        fixed[col4row[i]] = 1


cdef int _solve(const double* a, Py_ssize_t n, double tol,
                Py_ssize_t* col4row) noexcept nogil:
    cdef Py_ssize_t m = n + 1
    cdef double* u = <double*> malloc(m * sizeof(double))
    cdef double* v = <double*> malloc(m * sizeof(double))
    cdef double* minv = <double*> malloc(m * sizeof(double))
    cdef Py_ssize_t* p = <Py_ssize_t*> malloc(m * sizeof(Py_ssize_t))
    cdef Py_ssize_t* way = <Py_ssize_t*> malloc(m * sizeof(Py_ssize_t))
    cdef char* used = <char*> malloc(m * sizeof(char))
    cdef Py_ssize_t* row4col = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    cdef char* tight = <char*> malloc(n * n * sizeof(char))
    cdef Py_ssize_t* work = <Py_ssize_t*> malloc(4 * n * sizeof(Py_ssize_t))
    cdef Py_ssize_t i, j, j0, j1, i0, ntight
    cdef double delta, cur, ui0
    if (u == NULL or v == NULL or minv == NULL or p == NULL or way == NULL
            or used == NULL or row4col == NULL or tight == NULL or work == NULL):
        free(u); free(v); free(minv); free(p); free(way); free(used)
        free(row4col); free(tight); free(work)
        return -1

    for j in range(m):
        u[j] = 0.0
        v[j] = 0.0
        p[j] = 0
        way[j] = 0

    for i in range(1, m):
        p[0] = i
        j0 = 0
        for j in range(m):
            minv[j] = INFINITY
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            ui0 = u[i0]
            delta = INFINITY
            j1 = 0
            for j in range(1, m):
                if not used[j]:
                    cur = a[(i0 - 1) * n + (j - 1)] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break

    for j in range(1, m):
        col4row[p[j] - 1] = j - 1
        row4col[j - 1] = p[j] - 1

    ntight = 0
    for i in range(n):
        for j in range(n):
            if a[i * n + j] - u[i + 1] - v[j + 1] <= tol:
                tight[i * n + j] = 1
                ntight += 1
            else:
                tight[i * n + j] = 0
    if ntight != n:
        _lex_smallest(tight, col4row, row4col, n, work)

    free(u); free(v); free(minv); free(p); free(way); free(used)
    free(row4col); free(tight); free(work)
    return 0


def solve(const double[:, ::1] cost, double tol):
    """Minimum-cost perfect matching; returns ``perm`` with ``perm[row] = col``."""
    cdef Py_ssize_t n = cost.shape[0]
    out = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] perm = out
    cdef int status = 0
    if n == 0:
        return out
    with nogil:
        status = _solve(&cost[0, 0], n, tol, &perm[0])
    if status != 0:
        raise MemoryError("assignment workspace allocation failed")
    return out
