"""Dense univariate polynomials over exact rationals, and exp-polynomial forms.

The kernel constructions produce polynomials of degree in the thousands whose
coefficients are rationals with a large shared denominator structure
(k! times rate powers).  Multiplication and Taylor shifts therefore run over
integer-normalized coefficient vectors (one common denominator per operand)
so the inner loops are pure big-integer work without per-step gcds.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import gmpy2
from gmpy2 import mpq, mpz

from .scalars import NumericError, Rational, exp_bracket

__all__ = ["Poly", "ExpPoly", "poly_x"]

_DIRECT_MUL_LIMIT = 48 * 48  # below this many coefficient products, plain mpq is fine


class Poly:
    """Immutable dense polynomial; ``coeffs`` ascending, trailing zeros trimmed."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable[object] = ()):
        cs = [mpq(c) for c in coeffs]
        while cs and cs[-1] == 0:
            cs.pop()
        object.__setattr__(self, "coeffs", tuple(cs))

    def __setattr__(self, name, value):  # immutability guard
        raise AttributeError("Poly is immutable")

    @property
    def degree(self) -> int:
        """Degree; -1 for the zero polynomial."""
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    def __eq__(self, other) -> bool:
        return isinstance(other, Poly) and self.coeffs == other.coeffs

    def __hash__(self) -> int:
        return hash(self.coeffs)

    def __repr__(self) -> str:
        if self.is_zero:
            return "Poly(0)"
        terms = ", ".join(str(c) for c in self.coeffs)
        return f"Poly([{terms}])"

    def __add__(self, other: "Poly") -> "Poly":
        a, b = self.coeffs, other.coeffs
        if len(a) < len(b):
            a, b = b, a
        out = list(a)
        for i, c in enumerate(b):
            out[i] += c
        return Poly(out)

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def __neg__(self) -> "Poly":
        return Poly([-c for c in self.coeffs])

    def scale(self, factor: object) -> "Poly":
        factor = mpq(factor)
        if factor == 0:
            return Poly()
        return Poly([c * factor for c in self.coeffs])

    def __mul__(self, other: "Poly") -> "Poly":
        if not isinstance(other, Poly):
            return NotImplemented
        if self.is_zero or other.is_zero:
            return Poly()
        la, lb = len(self.coeffs), len(other.coeffs)
        if la * lb <= _DIRECT_MUL_LIMIT:
            out = [mpq(0)] * (la + lb - 1)
            for i, a in enumerate(self.coeffs):
                if a == 0:
                    continue
                for j, b in enumerate(other.coeffs):
                    out[i + j] += a * b
            return Poly(out)
        ai, da = _int_form(self.coeffs)
        bi, db = _int_form(other.coeffs)
        out_i = [mpz(0)] * (la + lb - 1)
        for i, a in enumerate(ai):
            if a == 0:
                continue
            for j, b in enumerate(bi):
                out_i[i + j] += a * b
        den = da * db
        return Poly([mpq(v, den) for v in out_i])

    def derivative(self) -> "Poly":
        return Poly([i * c for i, c in enumerate(self.coeffs) if i > 0])

    def antiderivative(self) -> "Poly":
        """Antiderivative with zero constant term."""
        return Poly([mpq(0)] + [c / (i + 1) for i, c in enumerate(self.coeffs)])

    def eval_q(self, x: object) -> mpq:
        """Exact Horner evaluation."""
        x = mpq(x)
        acc = mpq(0)
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    def shift(self, a: object) -> "Poly":
        """Taylor shift: returns the polynomial q with q(x) = p(x + a)."""
        a = mpq(a)
        if a == 0 or self.is_zero:
            return self
        ci, den = _int_form(self.coeffs)
        an, ad = mpz(a.numerator), mpz(a.denominator)
        n = len(ci)
        pow_an = [mpz(1)]
        pow_ad = [mpz(1)]
        for _ in range(1, n):
            pow_an.append(pow_an[-1] * an)
            pow_ad.append(pow_ad[-1] * ad)
        out_den = den * pow_ad[n - 1]
        out = []
        for j in range(n):
            acc = mpz(0)
            for m in range(j, n):
                if ci[m] == 0:
                    continue
                acc += ci[m] * gmpy2.bincoef(m, j) * pow_an[m - j] * pow_ad[n - 1 - (m - j)]
            out.append(mpq(acc, out_den))
        return Poly(out)

    def abs_coeff_bound(self, radius: object) -> mpq:
        """Certified bound of |p(x)| for |x| <= radius: sum |c_i| radius^i."""
        radius = max(mpq(radius), mpq(0))
        acc = mpq(0)
        for c in reversed(self.coeffs):
            acc = acc * radius + abs(c)
        return acc


def poly_x() -> Poly:
    """The identity polynomial x."""
    return Poly([0, 1])


def _int_form(coeffs: Sequence[mpq]) -> tuple[list[mpz], mpz]:
    den = mpz(1)
    for c in coeffs:
        den = gmpy2.lcm(den, c.denominator)
    return [mpz(c * den) for c in coeffs], den


@dataclass(frozen=True, eq=True)
class ExpPoly:
    """Closed-form kernel component: exp(-rate*d) * poly(d), optionally / d.

    ``rate == 0`` degenerates to a plain polynomial; ``over_d`` marks the
    V(d)/d shape produced by averaging a kernel over [0, d].
    """

    rate: Rational
    poly: Poly
    over_d: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rate", mpq(self.rate))
        if self.rate < 0:
            raise NumericError(f"ExpPoly rate must be >= 0, got {self.rate}")

    @property
    def is_plain_poly(self) -> bool:
        return self.rate == 0 and not self.over_d

    def derivative_sign_poly(self) -> Poly:
        """Polynomial with the sign of d/dd of the value on d > 0.

        The derivative of exp(-r d) V(d) is exp(-r d) (V' - rV); of
        exp(-r d) V(d)/d it is exp(-r d) ((V' - rV) d - V) / d^2.  The
        exponential and d^2 factors are positive, so roots/signs of the
        returned polynomial are those of the true derivative.
        """
        v = self.poly
        core = v.derivative()
        if self.rate != 0:
            core = core - v.scale(self.rate)
        if self.over_d:
            return core * poly_x() - v
        return core

    def eval_bracket(self, d: object, tol: object) -> tuple[mpq, mpq]:
        """Certified rational bracket of the value at d, width <= tol."""
        from .intervals import IvCtx  # local import: intervals is a leaf module

        d = mpq(d)
        tol = mpq(tol)
        if tol <= 0:
            raise NumericError(f"tolerance must be positive, got {tol}")
        if self.over_d and d <= 0:
            raise NumericError("V(d)/d form requires d > 0")
        if d < 0:
            raise NumericError("kernel components are evaluated at d >= 0")
        if self.poly.is_zero:
            return (mpq(0), mpq(0))
        from .scalars import bits_of_inverse

        # a final division by d rescales the width; budget for it upfront
        budget = tol * d if self.over_d else tol
        vbound = self.poly.abs_coeff_bound(d) + 1
        exp_tol = budget / (2 * vbound)
        prec = max(128, bits_of_inverse(budget) + max(1, len(self.poly.coeffs)).bit_length() + 64)
        while True:
            if self.rate != 0:
                elo, ehi = exp_bracket(-self.rate * d, exp_tol)
            else:
                elo = ehi = mpq(1)
            ctx = IvCtx(prec)
            vlo, vhi = ctx.poly_point_q(self.poly.coeffs, d)
            cands = (elo * vlo, elo * vhi, ehi * vlo, ehi * vhi)
            lo, hi = min(cands), max(cands)
            if self.over_d:
                lo, hi = lo / d, hi / d
            if hi - lo <= tol:
                return (lo, hi)
            prec *= 2
            exp_tol /= 4
