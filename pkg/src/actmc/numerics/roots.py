"""Certified isolation and refinement of real polynomial roots on an interval.

Two regimes:

* degree <= 64: exact Sturm-sequence counting over the square-free part,
  then bracket refinement.  This covers the small polynomials produced by
  toy models and keeps the counting fully exact.
* larger degrees (kernel sign polynomials run into the thousands):
  certified interval subdivision.  Boxes whose value range excludes zero
  are discarded; boxes where the derivative range excludes zero are
  monotone and resolved by endpoint signs; boxes that stay undecidable at
  the width floor become *pseudo-roots* (``isolated=False``), which later
  stages must treat as possible root locations.  This can only ever
  over-report, never miss a root.

Refinement is a safeguarded interval-Newton bisection hybrid: bisection
guarantees progress, the Newton contraction gives superlinear convergence
once the bracket is locally monotone, and every step is certified by
directed rounding.
"""
from __future__ import annotations

from dataclasses import dataclass

from gmpy2 import mpq

from .intervals import IvCtx
from .poly import Poly
from .scalars import NumericError, Rational, bits_of_inverse

__all__ = ["RootApprox", "FlatDerivative", "isolate_roots", "STURM_DEGREE_LIMIT"]

STURM_DEGREE_LIMIT = 64
_MAX_UNDECIDED = 4096
_MAX_BOXES = 200_000


class FlatDerivative(NumericError):
    """The polynomial is indistinguishable from zero on too much of the
    interval for isolation to be meaningful; callers fall back to coarse
    sampling."""


@dataclass(frozen=True)
class RootApprox:
    """A certified root bracket.

    ``isolated=True`` means the bracket contains exactly one root.
    ``isolated=False`` marks a region that may contain roots (possibly
    none, possibly several too close to separate); consumers must cover
    the whole bracket.
    """

    lo: Rational
    hi: Rational
    isolated: bool = True

    def __post_init__(self):
        object.__setattr__(self, "lo", mpq(self.lo))
        object.__setattr__(self, "hi", mpq(self.hi))
        if self.lo > self.hi:
            raise NumericError("root bracket with lo > hi")

    @property
    def mid(self) -> mpq:
        return (self.lo + self.hi) / 2

    @property
    def width(self) -> mpq:
        return self.hi - self.lo


def isolate_roots(
    poly: Poly,
    lo: object,
    hi: object,
    precision: object,
    *,
    max_undecided: int = _MAX_UNDECIDED,
) -> list[RootApprox]:
    """All real roots of ``poly`` in [lo, hi], refined to bracket width
    <= ``precision`` where isolation succeeds.

    Raises :class:`NumericError` for the identically-zero polynomial and
    :class:`FlatDerivative` when the polynomial is numerically flat over
    the interval (too many undecidable regions).
    """
    lo = mpq(lo)
    hi = mpq(hi)
    precision = mpq(precision)
    if precision <= 0:
        raise NumericError(f"precision must be positive, got {precision}")
    if lo > hi:
        raise NumericError(f"empty interval [{lo}, {hi}]")
    if poly.is_zero:
        raise NumericError("cannot isolate roots of the identically zero polynomial")
    if poly.degree == 0:
        return []
    if lo == hi:
        return [RootApprox(lo, lo)] if poly.eval_q(lo) == 0 else []
    if poly.degree <= STURM_DEGREE_LIMIT:
        out: list[RootApprox] = []
        _sturm_scan(_square_free(poly), lo, hi, precision, out)
        out.sort(key=lambda r: (r.lo, r.hi))
        return out
    return _isolate_subdivision(poly, lo, hi, precision, max_undecided)


# ---------------------------------------------------------------------------
# exact polynomial helpers (small degrees)
# ---------------------------------------------------------------------------


def _poly_divmod(a: Poly, b: Poly) -> tuple[Poly, Poly]:
    if b.is_zero:
        raise NumericError("polynomial division by zero")
    r = list(a.coeffs)
    db, dl = b.degree, b.coeffs[-1]
    if len(r) <= db:
        return Poly(), a
    quot = [mpq(0)] * (len(r) - db)
    for i in range(len(r) - 1, db - 1, -1):
        c = r[i] / dl
        if c == 0:
            continue
        quot[i - db] = c
        for j, bc in enumerate(b.coeffs):
            r[i - db + j] -= c * bc
    return Poly(quot), Poly(r[:db] if db > 0 else [])


def _primitive(p: Poly) -> Poly:
    """Divide out the (positive) rational content; preserves signs."""
    if p.is_zero:
        return p
    num_gcd = 0
    den_lcm = 1
    import gmpy2 as _g

    for c in p.coeffs:
        num_gcd = _g.gcd(num_gcd, c.numerator)
        den_lcm = _g.lcm(den_lcm, c.denominator)
    content = mpq(num_gcd, den_lcm)
    return Poly([c / content for c in p.coeffs])


def _poly_gcd(a: Poly, b: Poly) -> Poly:
    while not b.is_zero:
        _, r = _poly_divmod(a, b)
        a, b = b, (_primitive(r) if not r.is_zero else r)
    g = _primitive(a)
    if not g.is_zero and g.coeffs[-1] < 0:
        g = -g
    return g


def _square_free(p: Poly) -> Poly:
    g = _poly_gcd(p, p.derivative())
    if g.degree <= 0:
        return _primitive(p)
    q, r = _poly_divmod(p, g)
    if not r.is_zero:
        raise NumericError("square-free decomposition failed")  # pragma: no cover
    return _primitive(q)


def _divide_linear(p: Poly, root: mpq) -> Poly:
    """Exact synthetic division of p by (x - root)."""
    out = []
    acc = mpq(0)
    for c in reversed(p.coeffs):
        acc = acc * root + c
        out.append(acc)
    if out and out[-1] != 0:
        raise NumericError("synthetic division: point is not a root")  # pragma: no cover
    out.pop()
    out.reverse()
    return Poly(out)


def _sturm_chain(q: Poly) -> list[Poly]:
    chain = [q, q.derivative()]
    while chain[-1].degree > 0:
        _, r = _poly_divmod(chain[-2], chain[-1])
        if r.is_zero:
            break
        chain.append(_primitive(-r))
    return chain


def _variations(chain: list[Poly], x: mpq) -> int:
    prev = 0
    count = 0
    for member in chain:
        v = member.eval_q(x)
        if v == 0:
            continue
        s = 1 if v > 0 else -1
        if prev != 0 and s != prev:
            count += 1
        prev = s
    return count


def _sturm_scan(q: Poly, a: mpq, b: mpq, precision: mpq, out: list[RootApprox]) -> None:
    """Emit all roots of square-free q in the closed interval [a, b]."""
    if q.eval_q(a) == 0:
        out.append(RootApprox(a, a))
        q = _divide_linear(q, a)
    if a != b and not q.is_zero and q.eval_q(b) == 0:
        out.append(RootApprox(b, b))
        q = _divide_linear(q, b)
    if q.degree < 1 or a == b:
        return
    chain = _sturm_chain(q)
    va, vb = _variations(chain, a), _variations(chain, b)
    _sturm_split(q, chain, a, va, b, vb, precision, out)


def _sturm_split(
    q: Poly,
    chain: list[Poly],
    a: mpq,
    va: int,
    b: mpq,
    vb: int,
    precision: mpq,
    out: list[RootApprox],
) -> None:
    count = va - vb
    if count <= 0:
        return
    if count == 1:
        qb = q.eval_q(b)
        sb = 1 if qb > 0 else -1
        out.append(_refine_bracket(_PolyEvaluator(q, radius=max(abs(a), abs(b))), a, b, sb, precision))
        return
    m = (a + b) / 2
    if q.eval_q(m) == 0:
        out.append(RootApprox(m, m))
        q2 = _divide_linear(q, m)
        # rebuild on the reduced polynomial; both halves now have nonzero endpoints
        _sturm_scan(q2, a, m, precision, out)
        _sturm_scan(q2, m, b, precision, out)
        return
    vm = _variations(chain, m)
    _sturm_split(q, chain, a, va, m, vm, precision, out)
    _sturm_split(q, chain, m, vm, b, vb, precision, out)


# ---------------------------------------------------------------------------
# interval evaluation with per-precision coefficient caches
# ---------------------------------------------------------------------------


def _pow2ceil(n: int) -> int:
    return 1 << max(7, (max(n, 1) - 1).bit_length())


class _PolyEvaluator:
    """Directed-rounding evaluator for a polynomial and its derivative,
    caching coefficient conversions per precision band."""

    __slots__ = ("poly", "dpoly", "log_scale", "_bands")

    def __init__(self, poly: Poly, radius: object = 1):
        self.poly = poly
        self.dpoly = poly.derivative()
        bound = poly.abs_coeff_bound(abs(mpq(radius))) + 1
        self.log_scale = int(bound.numerator.bit_length()) - int(bound.denominator.bit_length()) + 1
        self._bands: dict[int, tuple] = {}

    def _band(self, prec: int):
        prec = _pow2ceil(prec)
        ent = self._bands.get(prec)
        if ent is None:
            ctx = IvCtx(prec)
            plo, phi = ctx.coeffs_from_q(self.poly.coeffs)
            dlo, dhi = ctx.coeffs_from_q(self.dpoly.coeffs)
            ent = (ctx, plo, phi, dlo, dhi)
            self._bands[prec] = ent
        return ent

    def p_at(self, x: mpq, prec: int) -> tuple[mpq, mpq]:
        ctx, plo, phi, _, _ = self._band(prec)
        return ctx.to_q(ctx.horner_point(plo, phi, ctx.from_q(x)))

    def p_range(self, a: mpq, b: mpq, prec: int) -> tuple[mpq, mpq]:
        ctx, plo, phi, _, _ = self._band(prec)
        box = (ctx.from_q(a)[0], ctx.from_q(b)[1])
        return ctx.to_q(ctx.horner_point(plo, phi, box))

    def dp_range(self, a: mpq, b: mpq, prec: int) -> tuple[mpq, mpq]:
        ctx, _, _, dlo, dhi = self._band(prec)
        box = (ctx.from_q(a)[0], ctx.from_q(b)[1])
        return ctx.to_q(ctx.horner_point(dlo, dhi, box))

    def sign_p_at(self, x: mpq, prec: int, cap: int) -> tuple[int, tuple[mpq, mpq]]:
        while True:
            lo, hi = self.p_at(x, prec)
            if lo > 0:
                return 1, (lo, hi)
            if hi < 0:
                return -1, (lo, hi)
            if prec >= cap:
                return 0, (lo, hi)
            prec *= 2


# ---------------------------------------------------------------------------
# bracket refinement (shared by both regimes)
# ---------------------------------------------------------------------------


def _refine_bracket(pe: _PolyEvaluator, a: mpq, b: mpq, sb: int, target: mpq) -> RootApprox:
    """Shrink a bracket (a, b] known to contain exactly one root, with
    sign(p(b)) == sb != 0, until its width is <= target."""
    log_scale = max(pe.log_scale, 0)
    cap = _pow2ceil(bits_of_inverse(target) + log_scale + 256)
    forced = 128
    exact_ok = pe.poly.degree <= STURM_DEGREE_LIMIT
    iterations = 0
    while b - a > target:
        iterations += 1
        if iterations > 400:
            return RootApprox(a, b, isolated=False)
        width = b - a
        prec = min(cap, max(forced, _pow2ceil(128 + log_scale + 2 * bits_of_inverse(min(width, mpq(1))))))
        m = (a + b) / 2
        plo, phi = pe.p_at(m, prec)
        if plo > 0:
            sm = 1
        elif phi < 0:
            sm = -1
        elif prec >= cap and exact_ok:
            pm = pe.poly.eval_q(m)
            if pm == 0:
                return RootApprox(m, m)
            sm = 1 if pm > 0 else -1
            plo = phi = pm
        else:
            sm = 0
        if sm != 0:
            if sm == sb:
                a2, b2 = a, m
            else:
                a2, b2 = m, b
        else:
            a2, b2 = a, b
        # interval Newton contraction: the root lies in m - p(m)/p'([a2, b2])
        dlo, dhi = pe.dp_range(a2, b2, prec)
        if dlo > 0 or dhi < 0:
            quots = (plo / dlo, plo / dhi, phi / dlo, phi / dhi)
            nlo, nhi = m - max(quots), m - min(quots)
            a3, b3 = max(a2, nlo), min(b2, nhi)
            if a3 <= b3:
                a2, b2 = a3, b3
        if (a2, b2) == (a, b):
            if prec >= cap:
                return RootApprox(a, b, isolated=False)
            forced = prec * 2
        else:
            a, b = a2, b2
    return RootApprox(a, b)


# ---------------------------------------------------------------------------
# certified subdivision (large degrees)
# ---------------------------------------------------------------------------


def _isolate_subdivision(
    poly: Poly,
    lo: mpq,
    hi: mpq,
    precision: mpq,
    max_undecided: int,
) -> list[RootApprox]:
    pe = _PolyEvaluator(poly, radius=max(abs(lo), abs(hi)))
    log_scale = max(pe.log_scale, 0)
    cap = _pow2ceil(bits_of_inverse(precision) + log_scale + 256)
    isolated: list[RootApprox] = []
    pseudo: list[tuple[mpq, mpq]] = []
    stack: list[tuple[mpq, mpq]] = [(lo, hi)]
    boxes = 0
    while stack:
        a, b = stack.pop()
        boxes += 1
        if boxes > _MAX_BOXES:
            raise FlatDerivative(
                f"root isolation exceeded {_MAX_BOXES} boxes on [{lo}, {hi}]"
            )
        width = b - a
        prec = min(cap, _pow2ceil(96 + bits_of_inverse(min(width, mpq(1)))))
        rng = pe.p_range(a, b, prec)
        if rng[0] > 0 or rng[1] < 0:
            continue
        drng = pe.dp_range(a, b, prec)
        if drng[0] > 0 or drng[1] < 0:
            # monotone box: endpoint signs decide everything
            eta = min(abs(drng[0]), abs(drng[1]))
            sa, pa = pe.sign_p_at(a, prec, cap)
            if sa == 0:
                reach = max(-pa[0], pa[1]) / eta
                pseudo.append((a, min(b, a + reach)))
            sb, pb = pe.sign_p_at(b, prec, cap)
            if sb == 0:
                reach = max(-pb[0], pb[1]) / eta
                pseudo.append((max(a, b - reach), b))
            if sa != 0 and sb != 0 and sa != sb:
                isolated.append(_refine_bracket(pe, a, b, sb, precision))
            continue
        if width <= precision:
            # derivative and value both straddle zero at full precision:
            # a genuinely flat spot (tangency or cluster)
            rng = pe.p_range(a, b, cap)
            if rng[0] > 0 or rng[1] < 0:
                continue
            pseudo.append((a, b))
            if len(pseudo) > max_undecided:
                raise FlatDerivative(
                    f"more than {max_undecided} undecidable boxes on [{lo}, {hi}]"
                )
            continue
        m = (a + b) / 2
        stack.append((m, b))
        stack.append((a, m))
    out = list(isolated)
    for run_lo, run_hi in _merge_runs(pseudo):
        out.append(RootApprox(run_lo, run_hi, isolated=False))
    out.sort(key=lambda r: (r.lo, r.hi))
    return out


def _merge_runs(boxes: list[tuple[mpq, mpq]]) -> list[tuple[mpq, mpq]]:
    if not boxes:
        return []
    boxes = sorted(boxes)
    merged = [boxes[0]]
    for a, b in boxes[1:]:
        la, lb = merged[-1]
        if a <= lb:
            merged[-1] = (la, max(lb, b))
        else:
            merged.append((a, b))
    return merged
