"""Pure-Python square assignment kernel.

Mirrors ``_lap_ext.pyx`` operation for operation so both backends return
bit-identical permutations. Used when the compiled extension is missing or
``NGRAM_OAXE_BACKEND=python`` is set.
"""

import math


def solve(cost, tol):
    """Minimum-cost perfect matching of a square matrix.

    ``cost`` is a C-contiguous float64 ndarray of shape (n, n). Returns a
    list ``perm`` with ``perm[row] = col``. Among optimal matchings (reduced
    cost within ``tol`` of zero) the lexicographically smallest is returned.
    """
    n = cost.shape[0]
    if n == 0:
        return []
    a = cost.tolist()
    inf = math.inf
    # 1-based potentials; index 0 is the virtual root column/row
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)
    way = [0] * (n + 1)

    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = a[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
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

    col4row = [0] * n
    row4col = [0] * n
    for j in range(1, n + 1):
        col4row[p[j] - 1] = j - 1
        row4col[j - 1] = p[j] - 1

    tight = [
        [a[i][j] - u[i + 1] - v[j + 1] <= tol for j in range(n)] for i in range(n)
    ]
    if sum(map(sum, tight)) == n:
        return col4row
    _lex_smallest(tight, col4row, row4col, n)
    return col4row


def _lex_smallest(tight, col4row, row4col, n):
    # Greedy row by row: take the smallest tight column that still admits a
    # perfect matching of the remaining rows (alternating-path test).
    fixed = [False] * n
    for i in range(n):
        target = col4row[i]
        for j in range(target):
            if fixed[j] or not tight[i][j]:
                continue
            r = row4col[j]
            parent = [-1] * n  # column -> column it was reached from (-1: start)
            seen = [False] * n
            seen[j] = True
            stack = []
            for c in range(n):
                if tight[r][c] and not seen[c] and not fixed[c]:
                    seen[c] = True
                    parent[c] = -1
                    stack.append(c)
            found = False
            while stack:
                c = stack.pop()
                if c == target:
                    found = True
                    break
                rr = row4col[c]
                for c2 in range(n):
                    if tight[rr][c2] and not seen[c2] and not fixed[c2]:
                        seen[c2] = True
                        parent[c2] = c
                        stack.append(c2)
            if not found:
                continue
            # walk back from target: each column's owner moves to it
            c = target
            while c != -1:
                prev = parent[c]
                owner = r if prev == -1 else row4col[prev]
                col4row[owner] = c
                row4col[c] = owner
                c = prev
            col4row[i] = j
            row4col[j] = i
            break
        fixed[col4row[i]] = True
