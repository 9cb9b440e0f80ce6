"""Exact rational linear solves for the gain/bias systems.

Fraction-free Bareiss elimination over a row-scaled integer matrix keeps
intermediate bit growth linear in the dimension, and a final exact
residual check guards the whole pipeline: a returned solution is not a
candidate answer, it *is* the answer.
"""
from __future__ import annotations

from typing import Sequence

import gmpy2
from gmpy2 import mpq, mpz

from .scalars import NumericError

__all__ = ["solve_exact"]


def solve_exact(matrix: Sequence[Sequence[object]], rhs: Sequence[object]) -> list[mpq]:
    """Solve A x = b exactly over the rationals.

    Raises :class:`NumericError` if the matrix is singular (reporting the
    pivot column that failed) or if dimensions are inconsistent.
    """
    n = len(rhs)
    if len(matrix) != n:
        raise NumericError(f"matrix has {len(matrix)} rows but rhs has {n} entries")
    # row-scale to integers (scaling a row and its rhs entry preserves solutions)
    rows: list[list[mpz]] = []
    for i in range(n):
        row = [mpq(v) for v in matrix[i]]
        if len(row) != n:
            raise NumericError(f"row {i} has {len(row)} entries, expected {n}")
        bi = mpq(rhs[i])
        den = mpz(bi.denominator)
        for v in row:
            den = gmpy2.lcm(den, v.denominator)
        rows.append([mpz(v * den) for v in row] + [mpz(bi * den)])

    prev = mpz(1)
    for k in range(n):
        pivot_row = next((r for r in range(k, n) if rows[r][k] != 0), None)
        if pivot_row is None:
            raise NumericError(f"singular matrix: no pivot in column {k}")
        if pivot_row != k:
            rows[k], rows[pivot_row] = rows[pivot_row], rows[k]
        pk = rows[k][k]
        for i in range(k + 1, n):
            rik = rows[i][k]
            ri, rk = rows[i], rows[k]
            for j in range(k + 1, n + 1):
                ri[j] = (pk * ri[j] - rik * rk[j]) // prev
            ri[k] = mpz(0)
        prev = pk

    x = [mpq(0)] * n
    for i in range(n - 1, -1, -1):
        acc = mpq(rows[i][n])
        for j in range(i + 1, n):
            acc -= rows[i][j] * x[j]
        x[i] = acc / rows[i][i]

    for i in range(n):
        resid = sum((mpq(v) * x[j] for j, v in enumerate(matrix[i])), mpq(0)) - mpq(rhs[i])
        if resid != 0:
            raise NumericError(f"residual check failed in row {i}")  # pragma: no cover
    return x
