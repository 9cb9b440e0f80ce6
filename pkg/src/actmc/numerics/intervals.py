"""Directed-rounding interval arithmetic over MPFR.

A thin layer used wherever exact rational arithmetic would blow up bit
sizes: polynomial evaluation at high-precision grid points, root
refinement, and kernel evaluation.  Intervals are plain (lo, hi) pairs of
``mpfr`` values at the context's working precision; conversions back to
``mpq`` are exact (every mpfr is a dyadic rational).

All Horner loops here assume a nonnegative evaluation point, which holds
throughout the solver: delays live in [lower, upper] with lower > 0.
"""
from __future__ import annotations

from typing import Sequence

import gmpy2
from gmpy2 import mpfr, mpq

from .scalars import NumericError

__all__ = ["IvCtx"]


class IvCtx:
    """Paired round-down/round-up contexts at a fixed precision."""

    __slots__ = ("precision", "down", "up", "_zero")

    def __init__(self, precision: int):
        if precision < 2:
            raise NumericError(f"precision must be >= 2, got {precision}")
        self.precision = precision
        self.down = gmpy2.context(precision=precision, round=gmpy2.RoundDown)
        self.up = gmpy2.context(precision=precision, round=gmpy2.RoundUp)
        self._zero = mpfr(0)

    # -- conversions -------------------------------------------------------

    def from_q(self, q: object) -> tuple[mpfr, mpfr]:
        """Enclose a rational in a one-ulp interval at this precision."""
        q = mpq(q)
        return (self.down.add(q, self._zero), self.up.add(q, self._zero))

    def coeffs_from_q(self, coeffs: Sequence[object]) -> tuple[list[mpfr], list[mpfr]]:
        lo = []
        hi = []
        down_add, up_add, zero = self.down.add, self.up.add, self._zero
        for c in coeffs:
            q = mpq(c)
            lo.append(down_add(q, zero))
            hi.append(up_add(q, zero))
        return lo, hi

    @staticmethod
    def to_q(iv: tuple[mpfr, mpfr]) -> tuple[mpq, mpq]:
        return (mpq(iv[0]), mpq(iv[1]))

    # -- arithmetic --------------------------------------------------------

    def add(self, a, b):
        return (self.down.add(a[0], b[0]), self.up.add(a[1], b[1]))

    def sub(self, a, b):
        return (self.down.sub(a[0], b[1]), self.up.sub(a[1], b[0]))

    def mul(self, a, b):
        alo, ahi = a
        blo, bhi = b
        products_lo = (
            self.down.mul(alo, blo),
            self.down.mul(alo, bhi),
            self.down.mul(ahi, blo),
            self.down.mul(ahi, bhi),
        )
        products_hi = (
            self.up.mul(alo, blo),
            self.up.mul(alo, bhi),
            self.up.mul(ahi, blo),
            self.up.mul(ahi, bhi),
        )
        return (min(products_lo), max(products_hi))

    def div(self, a, b):
        blo, bhi = b
        if blo <= 0 <= bhi:
            raise NumericError("interval division by an interval containing zero")
        alo, ahi = a
        quots_lo = (
            self.down.div(alo, blo),
            self.down.div(alo, bhi),
            self.down.div(ahi, blo),
            self.down.div(ahi, bhi),
        )
        quots_hi = (
            self.up.div(alo, blo),
            self.up.div(alo, bhi),
            self.up.div(ahi, blo),
            self.up.div(ahi, bhi),
        )
        return (min(quots_lo), max(quots_hi))

    # -- Horner evaluation (nonnegative argument) ---------------------------

    def horner_point(
        self,
        coeffs_lo: Sequence[mpfr],
        coeffs_hi: Sequence[mpfr],
        x: tuple[mpfr, mpfr],
    ) -> tuple[mpfr, mpfr]:
        """Interval Horner at a point interval x.

        For a nonnegative multiplier only the sign of the accumulator
        endpoint decides which x endpoint realizes the extreme, so each
        step costs two directed multiplies instead of eight; arguments
        straddling or below zero fall back to full interval products.
        """
        xlo, xhi = x
        if xlo < 0:
            return self._horner_general(coeffs_lo, coeffs_hi, x)
        down_mul, up_mul = self.down.mul, self.up.mul
        down_add, up_add = self.down.add, self.up.add
        acc_lo = self._zero
        acc_hi = self._zero
        for clo, chi in zip(reversed(coeffs_lo), reversed(coeffs_hi)):
            t_lo = down_mul(acc_lo, xlo if acc_lo >= 0 else xhi)
            t_hi = up_mul(acc_hi, xhi if acc_hi >= 0 else xlo)
            acc_lo = down_add(t_lo, clo)
            acc_hi = up_add(t_hi, chi)
        return (acc_lo, acc_hi)

    def _horner_general(
        self,
        coeffs_lo: Sequence[mpfr],
        coeffs_hi: Sequence[mpfr],
        x: tuple[mpfr, mpfr],
    ) -> tuple[mpfr, mpfr]:
        acc = (self._zero, self._zero)
        for clo, chi in zip(reversed(coeffs_lo), reversed(coeffs_hi)):
            t = self.mul(acc, x)
            acc = (self.down.add(t[0], clo), self.up.add(t[1], chi))
        return acc

    def poly_point_q(self, coeffs: Sequence[object], x: object) -> tuple[mpq, mpq]:
        """One-shot certified rational bracket of p(x) for rational x >= 0."""
        clo, chi = self.coeffs_from_q(coeffs)
        return self.to_q(self.horner_point(clo, chi, self.from_q(x)))

    def range_nonneg(
        self,
        coeffs_lo: Sequence[mpfr],
        coeffs_hi: Sequence[mpfr],
        lo: tuple[mpfr, mpfr],
        hi: tuple[mpfr, mpfr],
    ) -> tuple[mpfr, mpfr]:
        """Range enclosure of p over the box [lo, hi], 0 <= lo <= hi."""
        return self.horner_point(coeffs_lo, coeffs_hi, (lo[0], hi[1]))

    # -- predicates ---------------------------------------------------------

    @staticmethod
    def excludes_zero(iv) -> bool:
        return iv[0] > 0 or iv[1] < 0

    @staticmethod
    def sign(iv) -> int:
        """+1 / -1 when the interval is sign-definite, else 0."""
        if iv[0] > 0:
            return 1
        if iv[1] < 0:
            return -1
        return 0
