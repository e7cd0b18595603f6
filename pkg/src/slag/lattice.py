"""Exact integer linear algebra: Hermite and Smith normal forms.

Matrices are lists of lists of Python ints.  Every elementary operation is
checked against the signed 64-bit range so results agree with a fixed-width
implementation; ``OverflowError`` is raised otherwise.
"""
from __future__ import annotations

from typing import Sequence

INT64_MAX = 2**63 - 1

Matrix = list[list[int]]


def _check(x: int) -> int:
    if x > INT64_MAX or x < -INT64_MAX - 1:
        raise OverflowError("integer entry exceeds 64-bit range")
    return x


def as_matrix(a: Sequence[Sequence[int]]) -> Matrix:
    return [[_check(int(x)) for x in row] for row in a]


def identity(n: int) -> Matrix:
    return [[int(i == j) for j in range(n)] for i in range(n)]


def matmul(a: Matrix, b: Matrix) -> Matrix:
    inner = len(b)
    cols = len(b[0]) if b else 0
    return [[_check(sum(a[i][k] * b[k][j] for k in range(inner))) for j in range(cols)]
            for i in range(len(a))]


def xgcd(a: int, b: int) -> tuple[int, int, int]:
    """Return ``(g, x, y)`` with ``a x + b y = g = gcd(a, b) >= 0``."""
    x0, y0, x1, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    if a < 0:
        a, x0, y0 = -a, -x0, -y0
    return a, x0, y0


def _col_combine(m: Matrix, i: int, j: int, a: int, b: int, c: int, d: int) -> None:
    """Columns (i, j) <- (a*ci + b*cj, c*ci + d*cj)."""
    for row in m:
        ri, rj = row[i], row[j]
        row[i] = _check(a * ri + b * rj)
        row[j] = _check(c * ri + d * rj)


def _row_combine(m: Matrix, i: int, j: int, a: int, b: int, c: int, d: int) -> None:
    ri, rj = m[i], m[j]
    m[i] = [_check(a * x + b * y) for x, y in zip(ri, rj)]
    m[j] = [_check(c * x + d * y) for x, y in zip(ri, rj)]


def hermite_normal_form(a: Sequence[Sequence[int]]) -> tuple[Matrix, Matrix, int]:
    """Column-style HNF.

    Returns ``(H, U, rank)`` with ``H = A U`` lower-triangular column echelon,
    ``U`` unimodular.  Pivots are positive and entries left of a pivot are
    reduced into ``[0, pivot)``.  Columns ``rank:`` of ``H`` vanish, so the
    corresponding columns of ``U`` span the integer kernel of ``A``.
    """
    h = as_matrix(a)
    rows = len(h)
    cols = len(h[0]) if rows else 0
    u = identity(cols)
    piv_col = 0
    pivots: list[tuple[int, int]] = []
    for r in range(rows):
        if piv_col >= cols:
            break
        for j in range(piv_col + 1, cols):
            if h[r][j] == 0:
                continue
            x, y = h[r][piv_col], h[r][j]
            g, p, q = xgcd(x, y)
            # [p, -y/g; q, x/g] has determinant 1
            coeffs = (p, q, -y // g, x // g)
            _col_combine(h, piv_col, j, *coeffs)
            _col_combine(u, piv_col, j, *coeffs)
        if h[r][piv_col] == 0:
            continue
        if h[r][piv_col] < 0:
            _col_combine(h, piv_col, piv_col, -1, 0, -1, 0)
            _col_combine(u, piv_col, piv_col, -1, 0, -1, 0)
        pv = h[r][piv_col]
        for k in range(piv_col):
            q = h[r][k] // pv
            if q:
                for m in (h, u):
                    for row in m:
                        row[k] = _check(row[k] - q * row[piv_col])
        pivots.append((r, piv_col))
        piv_col += 1
    return h, u, piv_col


def smith_normal_form(a: Sequence[Sequence[int]]) -> tuple[Matrix, Matrix, Matrix]:
    """Return ``(D, S, T)`` with ``D = S A T`` diagonal, ``d_1 | d_2 | ...``,
    all ``d_i >= 0`` and ``S``, ``T`` unimodular."""
    d = as_matrix(a)
    rows = len(d)
    cols = len(d[0]) if rows else 0
    s, t = identity(rows), identity(cols)
    k = 0
    while k < min(rows, cols):
        # pick the smallest nonzero entry of the trailing block as pivot
        best = None
        for i in range(k, rows):
            for j in range(k, cols):
                if d[i][j] and (best is None or abs(d[i][j]) < abs(d[best[0]][best[1]])):
                    best = (i, j)
        if best is None:
            break
        i, j = best
        if i != k:
            d[i], d[k] = d[k], d[i]
            s[i], s[k] = s[k], s[i]
        if j != k:
            for m in (d, t):
                for row in m:
                    row[j], row[k] = row[k], row[j]
        done = False
        while not done:
            done = True
            for i in range(k + 1, rows):
                if d[i][k] and d[i][k] % d[k][k] == 0:
                    f = d[i][k] // d[k][k]
                    _row_combine(d, k, i, 1, 0, -f, 1)
                    _row_combine(s, k, i, 1, 0, -f, 1)
                elif d[i][k]:
                    g, p, q = xgcd(d[k][k], d[i][k])
                    x, y = d[k][k] // g, d[i][k] // g
                    _row_combine(d, k, i, p, q, -y, x)
                    _row_combine(s, k, i, p, q, -y, x)
            for j in range(k + 1, cols):
                if d[k][j] and d[k][j] % d[k][k] == 0:
                    f = d[k][j] // d[k][k]
                    _col_combine(d, k, j, 1, 0, -f, 1)
                    _col_combine(t, k, j, 1, 0, -f, 1)
                elif d[k][j]:
                    g, p, q = xgcd(d[k][k], d[k][j])
                    x, y = d[k][k] // g, d[k][j] // g
                    _col_combine(d, k, j, p, q, -y, x)
                    _col_combine(t, k, j, p, q, -y, x)
                    done = False
            if any(d[i][k] for i in range(k + 1, rows)):
                done = False
                continue
            # divisibility: fold an offending row into row k
            pv = d[k][k]
            bad = next(((i, j) for i in range(k + 1, rows) for j in range(k + 1, cols)
                        if d[i][j] % pv), None)
            if bad is not None:
                i = bad[0]
                d[k] = [_check(x + y) for x, y in zip(d[k], d[i])]
                s[k] = [_check(x + y) for x, y in zip(s[k], s[i])]
                done = False
        if d[k][k] < 0:
            d[k] = [-x for x in d[k]]
            s[k] = [-x for x in s[k]]
        k += 1
    return d, s, t


def elementary_divisors(a: Sequence[Sequence[int]]) -> list[int]:
    d, _, _ = smith_normal_form(a)
    return [d[i][i] for i in range(min(len(d), len(d[0]) if d else 0))]
