"""Exact rational matrix arithmetic: kernel bases and rank.

Plain Gaussian elimination over ``fractions.Fraction``.  Matrices at this
scale are tiny (one row per clustered lemma, one column per bounded literal),
so no attempt is made at sparsity or fancy pivoting beyond determinism.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

Row = list[Fraction]
Matrix = list[Row]


def to_matrix(rows: Sequence[Sequence[int | Fraction]]) -> Matrix:
    return [[Fraction(x) for x in row] for row in rows]


def augment_ones(rows: Sequence[Sequence[int | Fraction]]) -> Matrix:
    """[N ; 1]: append a column of ones."""
    return [[Fraction(x) for x in row] + [Fraction(1)] for row in rows]


def _rref(m: Matrix, col_order: Sequence[int]) -> tuple[Matrix, list[int]]:
    """Reduced row echelon form visiting columns in the given order.

    Returns the reduced matrix and the pivot columns (in visit order).
    """
    m = [row[:] for row in m]
    n_rows = len(m)
    pivots: list[int] = []
    r = 0
    for c in col_order:
        pr = None
        for i in range(r, n_rows):
            if m[i][c] != 0:
                pr = i
                break
        if pr is None:
            continue
        m[r], m[pr] = m[pr], m[r]
        pv = m[r][c]
        m[r] = [x / pv for x in m[r]]
        for i in range(n_rows):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == n_rows:
            break
    return m, pivots


def rank(rows: Sequence[Sequence[int | Fraction]]) -> int:
    m = to_matrix(rows)
    if not m:
        return 0
    _, pivots = _rref(m, range(len(m[0])))
    return len(pivots)


def kernel_basis(rows: Sequence[Sequence[int | Fraction]]) -> list[list[Fraction]]:
    """A basis of { v : M v = 0 }.  len(basis) = cols - rank."""
    m = to_matrix(rows)
    if not m:
        return []
    n_cols = len(m[0])
    red, pivots = _rref(m, range(n_cols))
    pivot_set = set(pivots)
    free = [c for c in range(n_cols) if c not in pivot_set]
    basis = []
    for f in free:
        v = [Fraction(0)] * n_cols
        v[f] = Fraction(1)
        for r_idx, p in enumerate(pivots):
            v[p] = -red[r_idx][f]
        basis.append(v)
    return basis


def independent_columns(
    n_cols: int, basis: Sequence[Sequence[int | Fraction]]
) -> list[int]:
    """Coordinates not determined by the kernel equalities of ``[N ; 1]``.

    ``basis`` holds kernel vectors of length ``n_cols + 1`` (last slot is the
    constant-ones coordinate).  Each vector y gives the equality
    ``sum(v_j * y_j) + y_last = 0``.  Row-reducing that system with pivots
    chosen right-to-left leaves the leftmost coordinates independent, which
    matches keeping v1 when v2, v3 are functions of it.
    """
    if not basis:
        return list(range(n_cols))
    m = to_matrix(basis)
    # Never pivot on the constant column; a pure-constant row would mean the
    # ones column is in the kernel, which is impossible for [N ; 1].
    for row in m:
        assert any(x != 0 for x in row[:n_cols])
    _, pivots = _rref(m, range(n_cols - 1, -1, -1))
    dependent = set(pivots)
    return [c for c in range(n_cols) if c not in dependent]


def mat_vec(rows: Sequence[Sequence[int | Fraction]], v: Sequence[Fraction]) -> list[Fraction]:
    return [sum((Fraction(a) * b for a, b in zip(row, v)), Fraction(0)) for row in rows]


def in_span(basis: Sequence[Sequence[int | Fraction]], v: Sequence[int | Fraction]) -> bool:
    """Is v in the span of the given vectors?  (Used by tests.)"""
    if not basis:
        return all(Fraction(x) == 0 for x in v)
    m = to_matrix(basis)
    return rank(m) == rank(m + [list(map(Fraction, v))])
