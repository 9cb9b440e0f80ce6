"""Exact-rational and certified-interval numerics used across the solver."""

from .intervals import IvCtx
from .linalg import solve_exact
from .poly import ExpPoly, Poly, poly_x
from .roots import STURM_DEGREE_LIMIT, FlatDerivative, RootApprox, isolate_roots
from .scalars import (
    NumericError,
    Rational,
    bits_of_inverse,
    dyadic_floor,
    exp_bracket,
    exp_bracket_mpfr,
    exp_lower,
    format_rational,
    parse_rational,
    pow2,
    pow2_below,
)

__all__ = [
    "ExpPoly",
    "FlatDerivative",
    "IvCtx",
    "NumericError",
    "Poly",
    "Rational",
    "RootApprox",
    "STURM_DEGREE_LIMIT",
    "bits_of_inverse",
    "dyadic_floor",
    "exp_bracket",
    "exp_bracket_mpfr",
    "exp_lower",
    "format_rational",
    "isolate_roots",
    "parse_rational",
    "poly_x",
    "pow2",
    "pow2_below",
    "solve_exact",
]
