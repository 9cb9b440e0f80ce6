"""Exact rational scalars: parsing, dyadic rounding, certified exponential brackets.

Everything downstream of the model parser works in exact rational arithmetic
(gmpy2 ``mpq``).  Binary floats never enter certified computations; where a
quantity is irrational (``exp``), we return a rational *bracket* with a
guaranteed width instead of a point value.
"""
from __future__ import annotations

import re

import gmpy2
from gmpy2 import mpfr, mpq, mpz

__all__ = [
    "NumericError",
    "Rational",
    "parse_rational",
    "format_rational",
    "pow2",
    "pow2_below",
    "dyadic_floor",
    "exp_bracket",
    "exp_bracket_mpfr",
    "exp_lower",
    "bits_of_inverse",
]

Rational = mpq

_ZERO = mpq(0)
_ONE = mpq(1)
_HALF = mpq(1, 2)

_RATIONAL_RE = re.compile(
    r"""^\s*
        (?P<sign>[+-]?)
        (?:
            (?P<num>\d+)\s*/\s*(?P<den>\d+)            # a/b
          | (?P<int>\d+)(?:\.(?P<frac>\d*))?           # 12  12.  12.5
          | \.(?P<onlyfrac>\d+)                        # .5
        )
        (?:[eE](?P<exp>[+-]?\d+))?
        \s*$""",
    re.VERBOSE,
)


class NumericError(ValueError):
    """Malformed numeric input or a violated numeric precondition."""


def parse_rational(value: object) -> mpq:
    """Convert exact textual/integral input to a rational.

    Accepted forms: Python ints, ``"3"``, ``"-7/10"``, ``"0.139"``, ``".5"``,
    ``"1e-3"``, ``"2.5e2"``.  Binary floats are rejected: they silently
    misrepresent decimal input and are forbidden for probabilities.
    """
    if isinstance(value, bool):
        raise NumericError(f"cannot interpret boolean {value!r} as a rational")
    if isinstance(value, int):
        return mpq(value)
    if isinstance(value, (mpq, mpz)):
        return mpq(value)
    if isinstance(value, float):
        raise NumericError(
            f"refusing binary float {value!r}: write it as a string "
            f"(e.g. \"0.1\" or \"1/10\") so the value is exact"
        )
    if not isinstance(value, str):
        raise NumericError(f"cannot interpret {value!r} as a rational")
    m = _RATIONAL_RE.match(value)
    if m is None:
        raise NumericError(f"malformed rational literal {value!r}")
    sign = -1 if m.group("sign") == "-" else 1
    if m.group("num") is not None:
        den = int(m.group("den"))
        if den == 0:
            raise NumericError(f"zero denominator in {value!r}")
        q = mpq(int(m.group("num")), den)
    else:
        whole = m.group("int") or "0"
        frac = m.group("frac") or m.group("onlyfrac") or ""
        q = mpq(int(whole + frac), 10 ** len(frac))
    e = m.group("exp")
    if e:
        e = int(e)
        q = q * mpq(10) ** e if e >= 0 else q / mpq(10) ** (-e)
    return sign * q


def format_rational(q: mpq) -> str:
    """Canonical textual form: ``"3"`` or ``"-7/10"``.  Inverse of parse."""
    return str(mpq(q))


def pow2(e: int) -> mpq:
    """Exact 2**e for any integer e."""
    if e >= 0:
        return mpq(mpz(1) << e)
    return mpq(1, mpz(1) << (-e))


def pow2_below(q: mpq) -> mpq:
    """Largest power of two <= q, for q > 0.

    Used to round tolerances (kappa, delta, xi) down to dyadics: a smaller
    tolerance is always sound, and dyadic grid steps keep every grid point's
    bit size linear in the exponent.
    """
    q = mpq(q)
    if q <= 0:
        raise NumericError(f"pow2_below requires a positive argument, got {q}")
    e = q.numerator.bit_length() - q.denominator.bit_length()
    if pow2(e) > q:
        e -= 1
    return pow2(e)


def dyadic_floor(q: mpq, bits: int) -> mpq:
    """Largest multiple of 2**-bits that is <= q."""
    scaled = mpq(q) * pow2(bits)
    return mpq(scaled.numerator // scaled.denominator) * pow2(-bits)


def bits_of_inverse(q: mpq) -> int:
    """Smallest p with 2**-p <= q (q > 0); i.e. the precision needed for q."""
    q = mpq(q)
    if q <= 0:
        raise NumericError(f"bits_of_inverse requires a positive argument, got {q}")
    e = q.denominator.bit_length() - q.numerator.bit_length() + 1
    return max(1, e)


def _contexts(precision: int) -> tuple[gmpy2.context, gmpy2.context]:
    down = gmpy2.context(precision=precision, round=gmpy2.RoundDown)
    up = gmpy2.context(precision=precision, round=gmpy2.RoundUp)
    return down, up


def _exp_series_bracket(
    z: mpq, w0: mpq, precision: int
) -> tuple[mpfr, mpfr]:
    """Directed-rounding bracket of exp(z) for -1/2 <= z <= 0.

    Alternating Taylor series; the remainder after the last summed term T_m
    is bounded by |T_{m+1}| <= |T_m| (alternating, terms strictly decreasing
    for |z| < 1), which is folded into the returned endpoints.
    """
    down, up = _contexts(precision)
    f0 = mpfr(0)
    zlo = down.add(z, f0)
    zhi = up.add(z, f0)
    one = mpfr(1)
    tlo = thi = one
    slo = shi = one
    j = 0
    # the remainder is added to *both* endpoints, so target a quarter of the
    # width budget to leave room for accumulated rounding
    w0_f = down.add(w0 / 4, f0)
    while True:
        j += 1
        # T_j = T_{j-1} * z / j with z <= 0: products of all endpoint pairs.
        c1, c2 = down.mul(tlo, zlo), down.mul(tlo, zhi)
        c3, c4 = down.mul(thi, zlo), down.mul(thi, zhi)
        d1, d2 = up.mul(tlo, zlo), up.mul(tlo, zhi)
        d3, d4 = up.mul(thi, zlo), up.mul(thi, zhi)
        tlo = down.div(min(c1, c2, c3, c4), j)
        thi = up.div(max(d1, d2, d3, d4), j)
        slo = down.add(slo, tlo)
        shi = up.add(shi, thi)
        tabs = max(-tlo, thi)
        if tabs <= w0_f:
            break
        if j > 1_000_000:  # pragma: no cover - defensive
            raise NumericError("exp_bracket series failed to converge")
    return down.sub(slo, tabs), up.add(shi, tabs)


def exp_bracket(x: mpq, tol: mpq) -> tuple[mpq, mpq]:
    """Certified rational bracket (lo, hi) of exp(x) for x <= 0, hi - lo <= tol.

    Computed from the alternating Taylor series with remainder control after
    reducing the argument so |x/2**t| <= 1/2, then squaring the bracket t
    times (exp(x) = exp(x/2)**2).  All intermediate steps use directed
    rounding, so the enclosure is certified; endpoints are exact dyadics.
    """
    x = mpq(x)
    tol = mpq(tol)
    if tol <= 0:
        raise NumericError(f"tolerance must be positive, got {tol}")
    if x > 0:
        raise NumericError(f"exp_bracket is defined for x <= 0, got {x}")
    if x == 0:
        return (_ONE, _ONE)
    t = 0
    ax = -x
    while ax > _HALF:
        ax /= 2
        t += 1
    z = x / pow2(t)
    w0 = tol / pow2(2 * t)  # each squaring at most quadruples the width
    precision = max(96, bits_of_inverse(w0) + 48)
    while True:
        down, up = _contexts(precision)
        lo, hi = _exp_series_bracket(z, w0, precision)
        zero = mpfr(0)
        for _ in range(t):
            lo = max(lo, zero)
            lo = down.mul(lo, lo)
            hi = up.mul(hi, hi)
        lo_q = max(mpq(lo), _ZERO)
        hi_q = min(mpq(hi), _ONE)
        if lo_q <= hi_q and hi_q - lo_q <= tol:
            return (lo_q, hi_q)
        precision *= 2
        w0 /= 4


def exp_bracket_mpfr(x: mpq, tol: mpq) -> tuple[mpq, mpq]:
    """Independent certified bracket of exp(x), x <= 0, via MPFR directed rounding.

    Serves as a cross-check oracle for :func:`exp_bracket`; both are certified,
    so their brackets must always intersect.
    """
    x = mpq(x)
    tol = mpq(tol)
    if tol <= 0:
        raise NumericError(f"tolerance must be positive, got {tol}")
    if x > 0:
        raise NumericError(f"exp_bracket_mpfr is defined for x <= 0, got {x}")
    if x == 0:
        return (_ONE, _ONE)
    precision = max(64, bits_of_inverse(tol) + 16)
    while True:
        down, up = _contexts(precision)
        lo_q = max(mpq(down.exp(x)), _ZERO)
        hi_q = min(mpq(up.exp(x)), _ONE)
        if lo_q <= hi_q and hi_q - lo_q <= tol:
            return (lo_q, hi_q)
        precision *= 2


def exp_lower(x: mpq, rel_gap: mpq = mpq(1, 16)) -> mpq:
    """Certified positive rational lower bound of exp(x), x <= 0.

    The bound is within a ``rel_gap`` relative distance of the true value:
    first a fast directed-rounding pass finds the scale, then
    :func:`exp_bracket` is invoked with an absolute tolerance at that scale.
    """
    x = mpq(x)
    if x == 0:
        return _ONE
    scale, _ = exp_bracket_mpfr(x, _ONE)
    if scale <= 0:  # pragma: no cover - 64-bit pass always separates exp(x) from 0
        raise NumericError(f"failed to find the scale of exp({x})")
    lo, _ = exp_bracket(x, scale * rel_gap)
    if lo <= 0:  # pragma: no cover
        raise NumericError(f"exp lower bound collapsed to zero for exp({x})")
    return lo
