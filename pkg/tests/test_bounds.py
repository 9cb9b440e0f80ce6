"""Certified-bounds layer checked against independent oracles.

Oracle layers:

* hand-computed exact values for the threshold/accuracy formulas and the
  closed-form grid steps (worked fully in rational arithmetic);
* mpmath at high precision for everything involving exponentials, to
  confirm each one-sided bound sits on the correct side and close by;
* the analytic kernels themselves (validated separately against Monte
  Carlo): every envelope must contain the kernel values across the
  parameter range, and quantities at parameters one grid step apart must
  move by at most the accuracy the step promises.
"""
import math

import mpmath
import pytest
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from actmc.bounds import (
    ChainBounds,
    accuracy_for_error,
    chain_bounds,
    derivative_sup,
    discretization_step,
    epoch_bounds,
    fraction_threshold,
    plan,
)
from actmc.bounds import _one_minus_exp_lower
from actmc.kernels import KernelWorkspace, analytic_kernel, point_kernel
from actmc.model import classify
from actmc.numerics import NumericError, Poly, pow2_below

from _models import t1, t1_variant, three_state

mpmath.mp.dps = 40


def mp(q) -> mpmath.mpf:
    q = mpq(q)
    return mpmath.mpf(int(q.numerator)) / int(q.denominator)


def rationals(max_num=60, max_den=12):
    return st.builds(
        mpq, st.integers(1, max_num), st.integers(1, max_den)
    )


# ---------------------------------------------------------------------------
# fraction threshold
# ---------------------------------------------------------------------------


def test_fraction_threshold_worked_example():
    assert fraction_threshold(1, 2, 1, "1/10") == mpq(1, 32)


def test_fraction_threshold_rejects_nonpositive():
    for args in [(0, 2, 1, 1), (1, 0, 1, 1), (1, 2, 0, 1), (1, 2, 1, 0)]:
        with pytest.raises(NumericError):
            fraction_threshold(*args)


@settings(max_examples=200, deadline=None)
@given(
    a_bar=rationals(),
    b_extra=rationals(),
    b_under=rationals(),
    phi=st.builds(mpq, st.integers(1, 10), st.integers(1, 100)),
    mix=st.tuples(*[st.integers(0, 16)] * 4),
    signs=st.tuples(st.sampled_from([-1, 1]), st.sampled_from([-1, 1])),
)
def test_fraction_threshold_guarantee(a_bar, b_extra, b_under, phi, mix, signs):
    """Perturbing numerator and denominator by at most the threshold moves
    the fraction by at most the requested error."""
    b_bar = b_under + b_extra
    thr = fraction_threshold(a_bar, b_bar, b_under, phi)
    assert thr > 0
    a = a_bar * mpq(1 + mix[0], 17)  # in (0, a_bar]
    b = b_under + (b_bar - b_under) * mpq(mix[1], 16)
    da = thr * mpq(mix[2], 16) * signs[0]
    db = thr * mpq(mix[3], 16) * signs[1]
    b2 = b + db
    assert b2 > 0  # threshold <= b_under/ (something>1), so b2 stays positive
    assert abs(a / b - (a + da) / b2) <= phi


# ---------------------------------------------------------------------------
# accuracy for a target gain error
# ---------------------------------------------------------------------------


def test_accuracy_worked_example():
    bounds = ChainBounds(n=2, prob_min=1, time_min="1/2", time_max=1, cost_max="1/2")
    assert accuracy_for_error(bounds, "1/10") == mpq(1, 89216)


def test_accuracy_monotone_in_target():
    bounds = ChainBounds(n=3, prob_min="1/4", time_min="1/2", time_max=2, cost_max=3)
    k1 = accuracy_for_error(bounds, "1/100")
    k2 = accuracy_for_error(bounds, "1/10")
    assert 0 < k1 < k2
    with pytest.raises(NumericError):
        accuracy_for_error(bounds, 0)


def test_chain_bounds_validation():
    with pytest.raises(NumericError):
        ChainBounds(n=0, prob_min=1, time_min=1, time_max=1, cost_max=1)
    with pytest.raises(NumericError):
        ChainBounds(n=1, prob_min=2, time_min=1, time_max=1, cost_max=1)
    with pytest.raises(NumericError):
        ChainBounds(n=1, prob_min=1, time_min=2, time_max=1, cost_max=1)
    with pytest.raises(NumericError):
        ChainBounds(n=1, prob_min=1, time_min=1, time_max=1, cost_max=0)


# ---------------------------------------------------------------------------
# per-alarm envelopes against mpmath
# ---------------------------------------------------------------------------


def test_point_family_envelope_values():
    m = t1()
    info = classify(m)
    b = epoch_bounds(m, info, "a")
    # duration/cost ceilings are exact rationals for the point family
    assert b.time_max == 2
    assert b.cost_max == 2  # rate cost 1 * upper 2, no impulses
    # probability floor: min over <=2 jumps at both endpoints, times P_min^2
    truth = min(
        mpmath.exp(-d) * d**k / math.factorial(k)
        for d in (mpmath.mpf(1) / 2, mpmath.mpf(2))
        for k in (0, 1, 2)
    ) * mpmath.mpf(1)
    assert mp(b.prob_min) <= truth <= mp(b.prob_min) * mpmath.mpf("1.05")
    # duration floor: 1 - e^{-lambda l}
    t_truth = 1 - mpmath.exp(-mpmath.mpf(1) / 2)
    assert mp(b.time_min) <= t_truth <= mp(b.time_min) * mpmath.mpf("1.01")


def test_uniform_family_envelope_values():
    m = t1_variant("uniform")
    b = epoch_bounds(m, classify(m), "a")
    assert b.time_max == 2
    assert b.window == (mpq(1, 4), mpq(2))
    t_truth = (1 - mpmath.exp(-mpmath.mpf(1) / 4)) / 2
    assert mp(b.time_min) <= t_truth <= mp(b.time_min) * mpmath.mpf("1.01")


def test_shift_family_envelope_window():
    m = t1_variant("uniform-shift", window="1/2")
    b = epoch_bounds(m, classify(m), "a")
    assert b.window == (mpq(1, 2), mpq(5, 2))
    assert b.mass == 1
    assert b.time_max == mpq(5, 2)
    assert b.cost_max == mpq(5, 2)


def test_weibull_window_holds_promised_mass():
    m = t1_variant("weibull", lower=1, upper=2, shape=2)
    b = epoch_bounds(m, classify(m), "a")
    lo, hi = b.window
    assert 0 < lo < hi
    assert 0 < b.mass < 1
    for d in (mpq(1), mpq(3, 2), mpq(2)):
        # mass of U(d) on [lo, hi]: exp(-(lo d)^shape) - exp(-(hi d)^shape)
        inside = mpmath.exp(-((mp(lo) * mp(d)) ** 2)) - mpmath.exp(
            -((mp(hi) * mp(d)) ** 2)
        )
        assert inside >= mp(b.mass)
    # tail padding keeps the ceilings above the window top
    assert b.time_max == hi + mpq(1, 2)


@pytest.mark.parametrize(
    "family,kw",
    [
        ("dirac", {}),
        ("uniform", {}),
        ("uniform-shift", {"window": mpq(1, 2)}),
        ("weibull", {"lower": mpq(1), "upper": mpq(2), "shape": 2}),
    ],
)
def test_envelopes_contain_kernel_values(family, kw):
    """The certified envelope must contain the actual epoch quantities at
    every sampled parameter value (kernel evaluation error added on top)."""
    for make in (t1_variant, three_state) if family != "weibull" else (t1_variant,):
        model = make(family, **kw)
        info = classify(model)
        b = epoch_bounds(model, info, "a")
        acc = mpq(1, 2**12)
        ws = KernelWorkspace(model, info, accuracy=acc, eval_tol=acc)
        alarm = model.alarm("a")
        slack = 2 * acc
        for i in range(5):
            d = alarm.lower + (alarm.upper - alarm.lower) * mpq(i, 4)
            pk = ws.point("a", d)
            assert b.time_min - slack <= pk.theta <= b.time_max + slack
            assert pk.cost <= b.cost_max + slack
            positive = [p for p in pk.transition.values() if p > slack]
            assert positive, "some successor must clearly carry mass"
            assert min(positive) >= b.prob_min - slack


def test_chain_bounds_assembles_alarm_and_off_parts():
    m = three_state("dirac")
    info = classify(m)
    per = {"a": epoch_bounds(m, info, "a")}
    cb = chain_bounds(m, info, per)
    assert cb.n == len(info.decision_states)
    # the off state z jumps after exactly one uniformization step: 1/2 time
    assert cb.time_min == min(per["a"].time_min, mpq(1, 2))
    assert cb.time_max == max(per["a"].time_max, mpq(1, 2))
    assert cb.prob_min <= per["a"].prob_min
    assert cb.cost_max == per["a"].cost_max  # z is cost-free, alarm dominates


def test_cost_free_model_gets_positive_cost_ceiling():
    import dataclasses

    m = dataclasses.replace(t1(), rate_costs={}, impulse_costs={})
    info = classify(m)
    cb = chain_bounds(m, info, {"a": epoch_bounds(m, info, "a")})
    assert cb.cost_max == 1


# ---------------------------------------------------------------------------
# certified exponential helper
# ---------------------------------------------------------------------------


@settings(max_examples=150, deadline=None)
@given(z=st.builds(mpq, st.integers(1, 4000), st.integers(1, 80)))
def test_one_minus_exp_lower_is_tight_underestimate(z):
    lower = _one_minus_exp_lower(z)
    truth = 1 - mpmath.exp(-mp(z))
    assert 0 < mp(lower) <= truth
    assert mp(lower) >= truth * mpmath.mpf(15) / 16


# ---------------------------------------------------------------------------
# derivative bound and grid steps
# ---------------------------------------------------------------------------


def test_derivative_sup_linear_is_exact():
    # p = 5x: the bound is exactly 5, and a 1/100 accuracy yields step 1/500
    assert derivative_sup(Poly([0, 5]), mpq(1, 2), 2) == 5
    assert mpq(1, 100) / derivative_sup(Poly([0, 5]), mpq(1, 2), 2) == mpq(1, 500)


def test_derivative_sup_edge_cases():
    assert derivative_sup(Poly([7]), 0, 1) == 0
    assert derivative_sup(Poly([1, -4, 1]), 3, 3) == 2  # point interval: |p'(3)|
    with pytest.raises(NumericError):
        derivative_sup(Poly([0, 1]), 2, 1)


@settings(max_examples=120, deadline=None)
@given(
    coeffs=st.lists(st.integers(-9, 9), min_size=1, max_size=7),
    ends=st.tuples(st.integers(0, 12), st.integers(1, 12)),
)
def test_derivative_sup_dominates_samples(coeffs, ends):
    poly = Poly([mpq(c, 3) for c in coeffs])
    lo = mpq(ends[0], 4)
    hi = lo + mpq(ends[1], 4)
    bound = derivative_sup(poly, lo, hi)
    d1 = poly.derivative()
    for i in range(21):
        x = lo + (hi - lo) * mpq(i, 20)
        assert abs(d1.eval_q(x)) <= bound


def test_derivative_sup_high_degree_uses_coefficient_bound():
    # degree above the isolation limit: still a certified bound, instantly
    coeffs = [mpq((-1) ** k, k + 1) for k in range(60)]
    poly = Poly(coeffs)
    bound = derivative_sup(poly, mpq(1, 2), 2)
    d1 = poly.derivative()
    for i in range(11):
        x = mpq(1, 2) + mpq(3, 2) * mpq(i, 10)
        assert abs(d1.eval_q(x)) <= bound


def test_step_worked_examples():
    m = t1()
    assert discretization_step(m, classify(m), "a", mpq(1, 100)) == mpq(1, 100)
    mu = t1_variant("uniform")
    assert discretization_step(mu, classify(mu), "a", mpq(1, 100)) == mpq(1, 400)
    with pytest.raises(NumericError):
        discretization_step(m, classify(m), "a", 0)


@pytest.mark.parametrize(
    "family,kw",
    [
        ("dirac", {}),
        ("uniform", {}),
        ("uniform-shift", {"window": mpq(1, 2)}),
        ("weibull", {"lower": mpq(1), "upper": mpq(2), "shape": 2}),
    ],
)
def test_step_bounds_kernel_modulus(family, kw):
    """Parameters one grid step apart yield epoch quantities within the
    promised accuracy (plus the evaluation error of the comparison)."""
    model = t1_variant(family, **kw)
    info = classify(model)
    kappa = mpq(1, 64)
    kernel = analytic_kernel(model, info, "a", accuracy=kappa / 8)
    step = discretization_step(model, info, "a", kappa, kernel=kernel)
    assert step > 0
    alarm = model.alarm("a")
    tol = kappa / 8
    budget = kappa + 2 * (kernel.accuracy + tol)
    span = alarm.upper - alarm.lower
    for i in range(7):
        d = alarm.lower + span * mpq(i, 7)
        d2 = min(d + min(step, span / 50), alarm.upper)
        a = point_kernel(kernel, d, tol)
        b = point_kernel(kernel, d2, tol)
        assert abs(a.theta - b.theta) <= budget
        assert abs(a.cost - b.cost) <= budget
        for s in set(a.transition) | set(b.transition):
            pa = a.transition.get(s, mpq(0))
            pb = b.transition.get(s, mpq(0))
            assert abs(pa - pb) <= budget


# ---------------------------------------------------------------------------
# the assembled plan
# ---------------------------------------------------------------------------


def _is_pow2(q: mpq) -> bool:
    return q > 0 and pow2_below(q) == q


def test_plan_invariants_on_point_family():
    m = t1()
    p = plan(m, "1/100")
    assert p.epsilon == mpq(1, 100)
    assert _is_pow2(p.kappa) and _is_pow2(p.xi) and _is_pow2(p.step["a"])
    assert 2 * p.kappa <= accuracy_for_error(p.chain, p.epsilon)
    assert p.xi <= p.kappa / 4
    for b in p.per_alarm.values():
        assert 3 * p.xi <= b.prob_min
    assert p.kernel_accuracy == p.xi / 2
    assert p.eval_tolerance == p.xi / 2
    # the step must not exceed what the closed form allows
    info = classify(m)
    assert p.step["a"] <= discretization_step(m, info, "a", p.kappa)


def test_plan_as_dict_is_plain_data():
    import json

    p = plan(t1(), "1/100")
    blob = json.dumps(p.as_dict(), sort_keys=True)
    again = json.loads(blob)
    assert again["epsilon"] == "1/100"
    assert set(again["alarms"]) == {"a"}
    assert set(again["step"]) == {"a"}


def test_plan_accuracy_floor_clamps_kappa_and_xi():
    m = t1()
    exact = plan(m, "1/100")
    floored = plan(m, "1/100", accuracy_floor="1/1024")
    assert exact.kappa < mpq(1, 1024)
    assert floored.kappa == mpq(1, 1024)
    assert floored.xi >= mpq(1, 4096)
    assert floored.step["a"] >= exact.step["a"]


def test_plan_rejects_nonpositive_epsilon():
    with pytest.raises(NumericError):
        plan(t1(), 0)


def test_plan_three_state_all_families_coarse():
    for family, kw in [
        ("dirac", {}),
        ("uniform", {}),
        ("uniform-shift", {"window": mpq(1, 2)}),
    ]:
        m = three_state(family, **kw)
        p = plan(m, "1/4", accuracy_floor="1/256")
        assert p.kappa >= mpq(1, 256)
        assert p.xi >= mpq(1, 1024)
        assert p.step["a"] > 0
