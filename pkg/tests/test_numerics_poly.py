from fractions import Fraction

import mpmath
import pytest
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from actmc.numerics import ExpPoly, IvCtx, NumericError, Poly, pow2

coeff = st.fractions(min_value=-100, max_value=100, max_denominator=97)
small_poly = st.lists(coeff, min_size=0, max_size=9).map(Poly)
point = st.fractions(min_value=-10, max_value=10, max_denominator=89)


def q(fr):
    return mpq(fr.numerator, fr.denominator)


class TestPoly:
    def test_trims_and_degree(self):
        assert Poly([1, 2, 0, 0]).degree == 1
        assert Poly([]).degree == -1
        assert Poly([0]).is_zero

    @given(small_poly, small_poly, point)
    def test_ring_ops_agree_with_evaluation(self, a, b, x):
        x = q(x)
        assert (a + b).eval_q(x) == a.eval_q(x) + b.eval_q(x)
        assert (a - b).eval_q(x) == a.eval_q(x) - b.eval_q(x)
        assert (a * b).eval_q(x) == a.eval_q(x) * b.eval_q(x)

    @given(small_poly, point, point)
    def test_shift_is_translation(self, p, a, x):
        a, x = q(a), q(x)
        assert p.shift(a).eval_q(x) == p.eval_q(x + a)

    def test_bigint_mul_path_matches_direct(self):
        # degrees above the direct-multiplication threshold
        a = Poly([mpq(i + 1, 3) for i in range(90)])
        b = Poly([mpq(2 * i - 7, 5) for i in range(80)])
        prod = a * b
        for x in (mpq(1, 7), mpq(3), mpq(-2, 11)):
            assert prod.eval_q(x) == a.eval_q(x) * b.eval_q(x)

    @given(small_poly)
    def test_calculus_round_trip(self, p):
        assert p.antiderivative().derivative() == p

    @given(small_poly, point)
    def test_derivative_against_finite_differences(self, p, x):
        x = q(x)
        h = mpq(1, 10**12)
        fd = (p.eval_q(x + h) - p.eval_q(x - h)) / (2 * h)
        exact = p.derivative().eval_q(x)
        # central difference error is O(h^2 * |p'''|); crude but sufficient bound
        third = p.derivative().derivative().derivative()
        bound = h * h * third.abs_coeff_bound(abs(x) + 1) + pow2(-30)
        assert abs(fd - exact) <= bound

    @given(small_poly, st.fractions(min_value=0, max_value=5, max_denominator=13),
           st.fractions(min_value=-1, max_value=1, max_denominator=13))
    def test_abs_coeff_bound(self, p, r, t):
        r = q(r)
        x = q(t) * r
        assert abs(p.eval_q(x)) <= p.abs_coeff_bound(r)

    def test_immutability(self):
        p = Poly([1, 2])
        with pytest.raises(AttributeError):
            p.coeffs = ()


class TestIvCtx:
    @given(small_poly, st.fractions(min_value=0, max_value=10, max_denominator=101))
    @settings(max_examples=80)
    def test_point_bracket_contains_exact_value(self, p, x):
        x = q(x)
        ctx = IvCtx(96)
        lo, hi = ctx.poly_point_q(p.coeffs, x)
        assert lo <= p.eval_q(x) <= hi

    @given(small_poly, point)
    @settings(max_examples=80)
    def test_general_argument_bracket(self, p, x):
        x = q(x)
        ctx = IvCtx(96)
        clo, chi = ctx.coeffs_from_q(p.coeffs)
        lo, hi = ctx.to_q(ctx.horner_point(clo, chi, ctx.from_q(x)))
        assert lo <= p.eval_q(x) <= hi

    @given(small_poly,
           st.fractions(min_value=0, max_value=5, max_denominator=31),
           st.fractions(min_value=0, max_value=5, max_denominator=31),
           st.fractions(min_value=0, max_value=1, max_denominator=64))
    @settings(max_examples=60)
    def test_range_enclosure_over_box(self, p, a, b, t):
        a, b = sorted((q(a), q(b)))
        x = a + q(t) * (b - a)
        ctx = IvCtx(96)
        clo, chi = ctx.coeffs_from_q(p.coeffs)
        lo, hi = ctx.to_q(ctx.horner_point(clo, chi, (ctx.from_q(a)[0], ctx.from_q(b)[1])))
        assert lo <= p.eval_q(x) <= hi

    def test_division_by_zero_interval(self):
        ctx = IvCtx(64)
        with pytest.raises(NumericError):
            ctx.div(ctx.from_q(1), (ctx.from_q(-1)[0], ctx.from_q(1)[1]))


class TestExpPoly:
    @given(st.fractions(min_value=0, max_value=5, max_denominator=23),
           small_poly,
           st.fractions(min_value=Fraction(1, 64), max_value=8, max_denominator=64))
    @settings(max_examples=50, deadline=None)
    def test_eval_bracket_against_mpmath(self, rate, p, d):
        rate, d = q(rate), q(d)
        ep = ExpPoly(rate=rate, poly=p)
        tol = pow2(-70)
        lo, hi = ep.eval_bracket(d, tol)
        assert hi - lo <= tol
        with mpmath.workprec(200):
            rd = rate * d
            truth = mpmath.exp(-mpmath.mpf(rd.numerator) / rd.denominator)
            pd = p.eval_q(d)
            truth *= mpmath.mpf(pd.numerator) / pd.denominator
            assert float(lo) - 1e-12 <= float(truth) <= float(hi) + 1e-12

    @given(st.fractions(min_value=0, max_value=3, max_denominator=17),
           small_poly,
           st.fractions(min_value=Fraction(1, 32), max_value=5, max_denominator=32))
    @settings(max_examples=50, deadline=None)
    def test_over_d_form(self, rate, p, d):
        rate, d = q(rate), q(d)
        ep = ExpPoly(rate=rate, poly=p, over_d=True)
        lo, hi = ep.eval_bracket(d, pow2(-60))
        plain = ExpPoly(rate=rate, poly=p)
        plo, phi = plain.eval_bracket(d, pow2(-70))
        assert lo <= phi / d and hi >= plo / d

    @given(st.fractions(min_value=0, max_value=4, max_denominator=13),
           small_poly,
           st.booleans(),
           st.fractions(min_value=Fraction(1, 16), max_value=4, max_denominator=48))
    @settings(max_examples=60, deadline=None)
    def test_derivative_sign_poly_matches_difference_quotient(self, rate, p, over_d, d):
        rate, d = q(rate), q(d)
        ep = ExpPoly(rate=rate, poly=p, over_d=over_d)
        sgn = ep.derivative_sign_poly().eval_q(d)
        h = mpq(1, 10**9)
        f_lo = ep.eval_bracket(d - h, pow2(-80))
        f_hi = ep.eval_bracket(d + h, pow2(-80))
        diff = (f_hi[0] + f_hi[1]) / 2 - (f_lo[0] + f_lo[1]) / 2
        # only check clearly-signed cases: the difference quotient is noisy near roots
        if abs(diff) > mpq(1, 10**5) * h:
            assert (diff > 0) == (sgn > 0)

    def test_rejects_negative_rate(self):
        with pytest.raises(NumericError):
            ExpPoly(rate=mpq(-1), poly=Poly([1]))
