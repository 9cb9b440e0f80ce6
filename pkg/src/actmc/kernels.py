"""Analytic decision-epoch kernels for each delay family.

A decision epoch starts in an alarm's setting state with a fresh timer and
ends when the alarm resolves: the timer fires, or the chain escapes the
enabling set.  For a fixed delay parameter d the epoch is summarized by
the successor distribution Pi(d), the expected duration Theta(d), and the
expected cost C(d).  This module builds certified closed forms for those
three quantities as exp-polynomials in d, then evaluates them at chosen
points with certified error.

Construction outline:

* states outside the enabling set are made absorbing (the epoch is over
  the moment the chain reaches them), giving a substochastic dynamics
  whose uniformized jump chain we *thin*: with beta the smallest
  self-loop probability among live states, jumps occur at rate
  lambda*(1-beta) under the rescaled matrix, which shrinks the Poisson
  truncation order dramatically for lazy chains.
* the Poisson series over jump counts is truncated at an order k > |S|
  with a certified geometric tail bound.
* the Dirac family is then an exact exp-polynomial; the remaining
  families average the Dirac kernel against their densities, with the
  exponential factor replaced by a Taylor polynomial under a certified
  remainder so the integrals stay inside the rational-polynomial ring.

Self-loop impulse costs are exact throughout: the expected impulse per
jump enters as a vector which the thinning rescales by 1/(1-beta),
preserving the impulse flow per unit time.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import gmpy2
from gmpy2 import mpq

from .model import Alarm, Classification, Model, classify
from .numerics import (
    ExpPoly,
    NumericError,
    Poly,
    Rational,
    bits_of_inverse,
    dyadic_floor,
    exp_bracket,
    parse_rational,
)

__all__ = [
    "AnalyticKernel",
    "KernelWorkspace",
    "PointKernel",
    "SubordinatedChain",
    "analytic_kernel",
    "off_state_kernel",
    "point_kernel",
    "poisson_truncation_order",
    "subordinated_chain",
]


# ---------------------------------------------------------------------------
# subordinated (absorbing + thinned) chain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubordinatedChain:
    """The epoch dynamics of one alarm from its setting state.

    ``phat`` is the thinned jump matrix restricted to states reachable
    from the setting state (absorbing states keep identity rows);
    ``impulse_per_jump`` is the expected impulse of one thinned jump; the
    cost data are zero on absorbing states.  ``support`` is the exact set
    of possible epoch successors, by graph reachability.
    """

    alarm: Alarm
    start: str
    rate: Rational
    rate_eff: Rational
    beta: Rational
    reachable: tuple
    live: frozenset
    phat: dict
    fire: dict
    rate_cost: dict
    impulse_per_jump: dict
    fire_impulse: dict
    support: frozenset
    n_states: int

    @property
    def degenerate(self) -> bool:
        """True when every live state is a guaranteed self-loop: the chain
        never moves during an epoch and the timer always fires."""
        return self.rate_eff == 0


def subordinated_chain(model: Model, info: Classification, alarm_name: str) -> SubordinatedChain:
    alarm = model.alarm(alarm_name)
    start = info.setting_state[alarm_name]
    enabled = alarm.enabled

    # reachability from the setting state, stepping only from live states
    reachable = [start]
    seen = {start}
    frontier = [start]
    while frontier:
        x = frontier.pop()
        if x not in enabled:
            continue  # absorbing: the epoch already ended there
        for t, p in model.transitions[x].items():
            if p > 0 and t not in seen:
                seen.add(t)
                reachable.append(t)
                frontier.append(t)
    order = {s: i for i, s in enumerate(model.states)}
    reachable.sort(key=order.__getitem__)
    live = frozenset(s for s in reachable if s in enabled)

    beta = min(model.transitions[s].get(s, mpq(0)) for s in live)
    rate_eff = model.rate * (1 - beta)

    phat: dict = {}
    impulse_per_jump: dict = {}
    rate_cost: dict = {}
    fire: dict = {}
    fire_impulse: dict = {}
    support = set()
    for s in reachable:
        if s not in live:
            continue  # absorbing rows are identity; handled implicitly
        row = model.transitions[s]
        if beta < 1:
            phat[s] = {
                t: (p - (beta if t == s else 0)) / (1 - beta)
                for t, p in row.items()
                if p - (beta if t == s else 0) != 0
            }
        else:
            phat[s] = {}
        v = sum((p * model.impulse(s, t) for t, p in row.items()), mpq(0))
        impulse_per_jump[s] = v / (1 - beta) if beta < 1 else mpq(0)
        rate_cost[s] = model.rate_costs.get(s, mpq(0))
        if beta == 1 and v != 0:
            # no thinned jumps exist to carry the impulse flow; bill it as
            # an exact rate cost instead (flow = rate * expected impulse)
            rate_cost[s] = rate_cost[s] + model.rate * v
        fire[s] = dict(alarm.fire[s])
        fire_impulse[s] = sum(
            (p * alarm.impulse(s, t) for t, p in alarm.fire[s].items()), mpq(0)
        )
        support.update(t for t, p in alarm.fire[s].items() if p > 0)
    support.update(s for s in reachable if s not in enabled)

    return SubordinatedChain(
        alarm=alarm,
        start=start,
        rate=model.rate,
        rate_eff=rate_eff,
        beta=beta,
        reachable=tuple(reachable),
        live=live,
        phat=phat,
        fire=fire,
        rate_cost=rate_cost,
        impulse_per_jump=impulse_per_jump,
        fire_impulse=fire_impulse,
        support=frozenset(support),
        n_states=len(model.states),
    )


# ---------------------------------------------------------------------------
# Poisson truncation
# ---------------------------------------------------------------------------


def _poisson_tail(x_hat: mpq, m: int) -> mpq:
    """Bound on the Poisson upper tail sum_{i > m} x^i e^{-x} / i! for any
    0 <= x <= x_hat, via the geometric domination x_hat^{m+1}/(m+1)! *
    1/(1 - x_hat/(m+2)).  Requires x_hat < m + 2."""
    if x_hat >= m + 2:
        raise NumericError("poisson tail bound needs x_hat < m + 2")
    p = mpq(1)
    for i in range(1, m + 2):
        p = p * x_hat / i
    return p / (1 - x_hat / (m + 2))


def poisson_truncation_order(
    x_hat: mpq,
    terms: list,
    budget: mpq,
    floor: int,
) -> int:
    """Smallest truncation order k > floor whose weighted tail bounds fit
    the budget: sum over (weight, shift) of weight * tail(k + shift)."""
    x_hat = mpq(x_hat)
    budget = mpq(budget)
    if budget <= 0:
        raise NumericError(f"truncation budget must be positive, got {budget}")
    terms = [(mpq(w), int(s)) for w, s in terms if mpq(w) != 0]
    min_shift = min((s for _, s in terms), default=0)
    k = max(floor + 1, int(x_hat) + 1 - min_shift, -min_shift)
    while x_hat >= k + min_shift + 2:
        k += 1
    # incremental tail values per shift
    tails = {s: _poisson_tail(x_hat, k + s) for _, s in terms}
    while sum((w * tails[s] for w, s in terms), mpq(0)) > budget:
        k += 1
        for s in list(tails):
            tails[s] = tails[s] * (1 - x_hat / (k + s + 1)) * x_hat / (k + s + 1) / (
                1 - x_hat / (k + s + 2)
            )
    return k


# ---------------------------------------------------------------------------
# analytic kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalyticKernel:
    """Certified closed forms for one alarm's epoch quantities.

    Each component is an exp-polynomial whose value differs from the true
    quantity by at most ``accuracy`` anywhere on [lower, upper].  The
    transition map carries exactly the graph-reachable successors; the
    polynomial for any other state is identically zero and not stored.
    """

    alarm_name: str
    family: str
    state: str
    lower: Rational
    upper: Rational
    accuracy: Rational
    theta: ExpPoly
    cost: ExpPoly
    transition: dict
    truncation_order: int
    rate_eff: Rational

    @property
    def support(self) -> frozenset:
        return frozenset(self.transition)


@dataclass(frozen=True)
class PointKernel:
    """Kernel values at one delay: dyadic rationals with certified error
    ``tol`` (plus the parent kernel's accuracy) per entry; the transition
    row sums to exactly one."""

    state: str
    delay: Rational
    theta: Rational
    cost: Rational
    transition: dict
    tol: Rational


class _Series:
    """Shared Poisson-series scalars of a subordinated chain up to order k."""

    def __init__(self, chain: SubordinatedChain, k: int):
        self.k = k
        live = chain.live
        m: dict = {chain.start: mpq(1)}
        self.theta_step = []  # probability still live after j jumps
        self.rate_step = []  # expected rate cost coefficient after j jumps
        self.jump_step = []  # expected impulse of jump j+1
        self.fire_step = []  # expected firing impulse if the timer fires after j jumps
        self.fire_mass = []  # successor mass if the timer fires after j jumps
        for _ in range(k + 1):
            theta = mpq(0)
            a = mpq(0)
            b = mpq(0)
            e = mpq(0)
            mass: dict = {}
            for x, px in m.items():
                if x in live:
                    theta += px
                    a += px * chain.rate_cost[x]
                    b += px * chain.impulse_per_jump[x]
                    e += px * chain.fire_impulse[x]
                    for t, pt in chain.fire[x].items():
                        if pt > 0:
                            mass[t] = mass.get(t, mpq(0)) + px * pt
                else:
                    mass[x] = mass.get(x, mpq(0)) + px
            self.theta_step.append(theta)
            self.rate_step.append(a)
            self.jump_step.append(b)
            self.fire_step.append(e)
            self.fire_mass.append(mass)
            nxt: dict = {}
            for x, px in m.items():
                if x in live:
                    for t, pt in chain.phat[x].items():
                        nxt[t] = nxt.get(t, mpq(0)) + px * pt
                else:
                    nxt[x] = nxt.get(x, mpq(0)) + px
            m = nxt


def _dirac_components(chain: SubordinatedChain, k: int) -> tuple[ExpPoly, ExpPoly, dict]:
    """Exact-through-order-k exp-polynomials for the Dirac family."""
    series = _Series(chain, k)
    r = chain.rate_eff
    rpow = mpq(1)  # r^i / i!
    theta_coeffs = [mpq(0)] * (k + 2)
    cost_coeffs = [mpq(0)] * (k + 2)
    pi_coeffs: dict = {t: [mpq(0)] * (k + 1) for t in chain.support}
    s_theta = mpq(0)
    s_rate = mpq(0)
    s_jump = mpq(0)
    prev_rpow_rate = mpq(0)  # r^{i-1}/(i-1)! * S_rate(i-1)
    for i in range(k + 1):
        s_theta += series.theta_step[i]
        cost_coeffs[i] += rpow * (s_jump + series.fire_step[i])
        if i >= 1:
            cost_coeffs[i] += prev_rpow_rate / i
        theta_coeffs[i + 1] += rpow * s_theta / (i + 1)
        for t, mass in series.fire_mass[i].items():
            pi_coeffs[t][i] += rpow * mass
        s_rate += series.rate_step[i]
        s_jump += series.jump_step[i]
        prev_rpow_rate = rpow * s_rate
        rpow = rpow * r / (i + 1)
    cost_coeffs[k + 1] += prev_rpow_rate / (k + 1)
    theta = ExpPoly(rate=r, poly=Poly(theta_coeffs))
    cost = ExpPoly(rate=r, poly=Poly(cost_coeffs))
    transition = {t: ExpPoly(rate=r, poly=Poly(cs)) for t, cs in pi_coeffs.items()}
    return theta, cost, transition


def _cost_tail_terms(chain: SubordinatedChain, tau_hat: mpq) -> list:
    """Weighted tail terms certifying the truncation error of all three
    component kinds simultaneously at horizon tau_hat."""
    live = chain.live
    r_max = max((chain.rate_cost[s] for s in live), default=mpq(0))
    w_max = max((chain.impulse_per_jump[s] for s in live), default=mpq(0))
    f_max = max((chain.fire_impulse[s] for s in live), default=mpq(0))
    x_hat = chain.rate_eff * tau_hat
    return [
        (1 + tau_hat + r_max * tau_hat + f_max, 0),  # Pi (<=1), Theta, C order-i parts
        (w_max * x_hat, -1),  # jump impulses: sum i*psi_i = x * tail(k-1)
    ]


def _dirac_kernel(chain: SubordinatedChain, accuracy: mpq) -> AnalyticKernel:
    alarm = chain.alarm
    if chain.degenerate:
        theta, cost, transition = _dirac_components(chain, 0)
        k = 0
        accuracy_out = mpq(0)
    else:
        tau_hat = alarm.upper
        x_hat = chain.rate_eff * tau_hat
        k = poisson_truncation_order(
            x_hat, _cost_tail_terms(chain, tau_hat), accuracy, chain.n_states
        )
        theta, cost, transition = _dirac_components(chain, k)
        accuracy_out = accuracy
    return AnalyticKernel(
        alarm_name=alarm.name,
        family=alarm.family,
        state=chain.start,
        lower=alarm.lower,
        upper=alarm.upper,
        accuracy=accuracy_out,
        theta=theta,
        cost=cost,
        transition=transition,
        truncation_order=k,
        rate_eff=chain.rate_eff,
    )


def _exp_taylor_poly(r: mpq, m: int) -> Poly:
    """Degree-m Taylor polynomial of exp(-r t) around 0."""
    coeffs = []
    c = mpq(1)
    for j in range(m + 1):
        coeffs.append(c)
        c = c * (-r) / (j + 1)
    return Poly(coeffs)


def _taylor_tail(z_hat: mpq, m: int) -> mpq:
    """Bound on |exp(-z) - T_m(z)| for 0 <= z <= z_hat; same geometric
    domination as the Poisson tail.  Requires z_hat < m + 2."""
    if z_hat >= m + 2:
        raise NumericError("taylor tail bound needs z_hat < m + 2")
    p = mpq(1)
    for i in range(1, m + 2):
        p = p * z_hat / i
    return p / (1 - z_hat / (m + 2))


def _taylor_order(z_hat: mpq, scale: mpq, budget: mpq) -> int:
    """Smallest m with scale * tail(m) <= budget."""
    m = int(z_hat) + 1
    tail = _taylor_tail(z_hat, m)
    while scale * tail > budget:
        m += 1
        tail = tail * (1 - z_hat / (m + 1)) * z_hat / (m + 1) / (1 - z_hat / (m + 2))
    return m


def _uniform_kernel(chain: SubordinatedChain, accuracy: mpq) -> AnalyticKernel:
    """Timer uniform on [0, d]: components are averages (1/d) * int_0^d of
    the Dirac components, polynomialized by a Taylor expansion of the
    exponential factor."""
    alarm = chain.alarm
    base = _dirac_kernel(chain, accuracy / 2)
    r = chain.rate_eff
    u = alarm.upper
    components = {"theta": base.theta, "cost": base.cost, **base.transition}
    if r == 0:
        taylor = Poly([1])
    else:
        # all component polynomials have nonnegative coefficients, so their
        # supremum on [0, u] is the value at u
        scale = max(c.poly.abs_coeff_bound(u) for c in components.values())
        m = _taylor_order(r * u, scale, accuracy / 2)
        taylor = _exp_taylor_poly(r, m)

    def average(comp: ExpPoly) -> ExpPoly:
        v = (comp.poly * taylor).antiderivative()
        return ExpPoly(rate=mpq(0), poly=v, over_d=True)

    return AnalyticKernel(
        alarm_name=alarm.name,
        family=alarm.family,
        state=chain.start,
        lower=alarm.lower,
        upper=alarm.upper,
        accuracy=base.accuracy + (mpq(0) if r == 0 else accuracy / 2),
        theta=average(base.theta),
        cost=average(base.cost),
        transition={t: average(c) for t, c in base.transition.items()},
        truncation_order=base.truncation_order,
        rate_eff=r,
    )


def _uniform_shift_kernel(chain: SubordinatedChain, accuracy: mpq) -> AnalyticKernel:
    """Timer uniform on [d, d+w]: components are (W(d+w) - W(d))/w for W an
    antiderivative of the polynomialized Dirac component; the result is a
    plain rational polynomial."""
    alarm = chain.alarm
    w = alarm.window
    tau_hat = alarm.upper + w

    # rebuild the Dirac pieces with the horizon extended to upper + w
    if chain.degenerate:
        base_theta, base_cost, base_pi = _dirac_components(chain, 0)
        k = 0
        trunc_err = mpq(0)
    else:
        x_hat = chain.rate_eff * tau_hat
        k = poisson_truncation_order(
            x_hat, _cost_tail_terms(chain, tau_hat), accuracy / 2, chain.n_states
        )
        base_theta, base_cost, base_pi = _dirac_components(chain, k)
        trunc_err = accuracy / 2
    r = chain.rate_eff
    components = {"theta": base_theta, "cost": base_cost, **base_pi}
    if r == 0:
        taylor = Poly([1])
        taylor_err = mpq(0)
    else:
        scale = max(c.poly.abs_coeff_bound(tau_hat) for c in components.values())
        m = _taylor_order(r * tau_hat, scale, accuracy / 2)
        taylor = _exp_taylor_poly(r, m)
        taylor_err = accuracy / 2

    invw = 1 / w

    def window_average(comp: ExpPoly) -> ExpPoly:
        big = (comp.poly * taylor).antiderivative()
        return ExpPoly(rate=mpq(0), poly=(big.shift(w) - big).scale(invw))

    return AnalyticKernel(
        alarm_name=alarm.name,
        family=alarm.family,
        state=chain.start,
        lower=alarm.lower,
        upper=alarm.upper,
        accuracy=trunc_err + taylor_err,
        theta=window_average(base_theta),
        cost=window_average(base_cost),
        transition={t: window_average(c) for t, c in base_pi.items()},
        truncation_order=k,
        rate_eff=r,
    )


def _weibull_cutoff(chain: SubordinatedChain, shape: int, budget: mpq) -> mpq:
    """Support cutoff M with the epoch tail above M certified below budget,
    uniformly over d in [lower, upper]."""
    alarm = chain.alarm
    ell = alarm.lower
    live = chain.live
    r_max = max((chain.rate_cost[s] for s in live), default=mpq(0))
    w_max = max((chain.impulse_per_jump[s] for s in live), default=mpq(0))
    f_max = max((chain.fire_impulse[s] for s in live), default=mpq(0))
    g0 = 1 + f_max
    g1 = 1 + r_max + chain.rate_eff * w_max
    m = mpq(1)
    while True:
        # P(timer > M) <= exp(-(M * ell)^shape); conditional overshoot mean
        # bounded via the convexity inequality z^k - M^k >= k M^{k-1} (z - M)
        _, e_hi = exp_bracket(-((m * ell) ** shape), mpq(1, 2**40))
        bound = e_hi * (g0 + g1 * (m + 1 / (shape * ell**shape * m ** (shape - 1))))
        if bound <= budget:
            return m
        m *= 2


def _weibull_kernel(chain: SubordinatedChain, accuracy: mpq) -> AnalyticKernel:
    """Timer with tail exp(-(t d)^shape): components integrate the Dirac
    components against the density, with the full exponential factor
    exp(-(r t + (t d)^shape)) Taylor-polynomialized in both variables.

    The Taylor degree grows like (cutoff * upper)^shape and the cutoff is
    driven by exp(-(cutoff * lower)^shape) reaching the accuracy budget,
    so cost is very sensitive to wide parameter ranges: keep lower not
    too far below 1 and upper moderate, or expect large polynomials."""
    alarm = chain.alarm
    shape = alarm.shape
    u = alarm.upper
    cutoff = _weibull_cutoff(chain, shape, accuracy / 2)

    if chain.degenerate:
        base_theta, base_cost, base_pi = _dirac_components(chain, 0)
        k = 0
        trunc_err = mpq(0)
    else:
        x_hat = chain.rate_eff * cutoff
        k = poisson_truncation_order(
            x_hat, _cost_tail_terms(chain, cutoff), accuracy / 4, chain.n_states
        )
        base_theta, base_cost, base_pi = _dirac_components(chain, k)
        trunc_err = accuracy / 4
    r = chain.rate_eff
    components = {"theta": base_theta, "cost": base_cost, **base_pi}

    z_hat = r * cutoff + (cutoff * u) ** shape
    scale = max(c.poly.abs_coeff_bound(cutoff) for c in components.values()) * (
        (cutoff * u) ** shape
    )
    m = _taylor_order(z_hat, max(scale, mpq(1)), accuracy / 4)

    # precompute (-1)^j / j! * binom(j, i) * r^(j-i) and tau-moment integrals
    inv_fact = [mpq(1)]
    for j in range(1, m + 1):
        inv_fact.append(inv_fact[-1] / j)
    r_pow = [mpq(1)]
    for _ in range(m):
        r_pow.append(r_pow[-1] * r)
    max_q_deg = max(
        (c.poly.degree for c in components.values() if not c.poly.is_zero), default=0
    )
    cut_pow = [mpq(1)]
    for _ in range(max_q_deg + m * (shape + 1) + shape + 1):
        cut_pow.append(cut_pow[-1] * cutoff)

    def polynomialize(comp: ExpPoly) -> ExpPoly:
        # integral over [0, cutoff] of
        #   Q(t) * shape * d^shape * t^(shape-1) * T_m(r t + (t d)^shape)
        # collected as a polynomial in d
        out: dict[int, mpq] = {}
        q = comp.poly.coeffs
        for j in range(m + 1):
            sign = inv_fact[j] if j % 2 == 0 else -inv_fact[j]
            for i in range(j + 1):
                # (r t)^(j-i) * (t^shape d^shape)^i, with the d^shape prefactor
                w_coef = sign * gmpy2.bincoef(j, i) * r_pow[j - i]
                if w_coef == 0:
                    continue
                d_deg = shape * (i + 1)
                t_extra = (j - i) + shape * i + (shape - 1)
                for c_idx, qc in enumerate(q):
                    if qc == 0:
                        continue
                    t_deg = c_idx + t_extra
                    val = shape * w_coef * qc * cut_pow[t_deg + 1] / (t_deg + 1)
                    out[d_deg] = out.get(d_deg, mpq(0)) + val
        deg = max(out) if out else 0
        return ExpPoly(rate=mpq(0), poly=Poly([out.get(i, mpq(0)) for i in range(deg + 1)]))

    return AnalyticKernel(
        alarm_name=alarm.name,
        family=alarm.family,
        state=chain.start,
        lower=alarm.lower,
        upper=alarm.upper,
        accuracy=accuracy / 2 + trunc_err + accuracy / 4,
        theta=polynomialize(base_theta),
        cost=polynomialize(base_cost),
        transition={t: polynomialize(c) for t, c in base_pi.items()},
        truncation_order=k,
        rate_eff=r,
    )


_BUILDERS = {
    "dirac": _dirac_kernel,
    "uniform": _uniform_kernel,
    "uniform-shift": _uniform_shift_kernel,
    "weibull": _weibull_kernel,
}


def analytic_kernel(
    model: Model, info: Classification, alarm_name: str, accuracy: object
) -> AnalyticKernel:
    """Build the certified closed-form kernel for one alarm."""
    accuracy = parse_rational(accuracy)
    if accuracy <= 0:
        raise NumericError(f"kernel accuracy must be positive, got {accuracy}")
    chain = subordinated_chain(model, info, alarm_name)
    return _BUILDERS[chain.alarm.family](chain, accuracy)


# ---------------------------------------------------------------------------
# point evaluation
# ---------------------------------------------------------------------------


def point_kernel(kernel: AnalyticKernel, delay: object, tol: object) -> PointKernel:
    """Evaluate a kernel at one delay with certified error.

    Each scalar differs from the closed form by at most ``tol`` (so from
    the true quantity by at most ``tol + kernel.accuracy``); values are
    dyadics of bounded size, and the transition row is renormalized by
    spreading the rounding residual evenly so it sums to exactly one.
    """
    d = parse_rational(delay)
    tol = parse_rational(tol)
    if not (kernel.lower <= d <= kernel.upper):
        raise NumericError(
            f"delay {d} outside [{kernel.lower}, {kernel.upper}] for alarm {kernel.alarm_name!r}"
        )
    bits = bits_of_inverse(tol) + 4

    def point(comp: ExpPoly, budget: mpq) -> mpq:
        lo, hi = comp.eval_bracket(d, budget)
        return dyadic_floor((lo + hi) / 2, bits)

    theta = point(kernel.theta, tol / 2)
    cost = point(kernel.cost, tol / 2)
    n = len(kernel.transition)
    transition = {t: point(c, tol / (2 * n)) for t, c in kernel.transition.items()}
    residual = 1 - sum(transition.values(), mpq(0))
    share = residual / n
    transition = {t: v + share for t, v in transition.items()}
    if theta <= 0 or any(v <= 0 for v in transition.values()):
        raise NumericError(
            f"kernel evaluation for alarm {kernel.alarm_name!r} at d={d} produced"
            " a nonpositive duration or probability; accuracy budget too coarse"
        )
    return PointKernel(
        state=kernel.state,
        delay=d,
        theta=theta,
        cost=cost,
        transition=transition,
        tol=tol,
    )


def off_state_kernel(model: Model, state: str) -> PointKernel:
    """Exact epoch data for a state with no alarm enabled: one uniformized
    jump."""
    row = model.transitions[state]
    cost = model.rate_costs.get(state, mpq(0)) / model.rate + sum(
        (p * model.impulse(state, t) for t, p in row.items()), mpq(0)
    )
    return PointKernel(
        state=state,
        delay=mpq(0),
        theta=1 / model.rate,
        cost=cost,
        transition=dict(row),
        tol=mpq(0),
    )


class KernelWorkspace:
    """Shared kernel cache for one solver run.

    Builds each alarm's analytic kernel once at a fixed accuracy and
    memoizes point evaluations, so that every consumer of the same
    workspace sees identical rational values.
    """

    def __init__(self, model: Model, info: Optional[Classification] = None, *,
                 accuracy: object, eval_tol: object):
        self.model = model
        self.info = info if info is not None else classify(model)
        self.accuracy = parse_rational(accuracy)
        self.eval_tol = parse_rational(eval_tol)
        self.kernels = {
            alarm.name: analytic_kernel(model, self.info, alarm.name, self.accuracy)
            for alarm in model.alarms
        }
        self._points: dict = {}
        self._off: dict = {}

    def point(self, alarm_name: str, delay: object) -> PointKernel:
        d = parse_rational(delay)
        key = (alarm_name, d)
        if key not in self._points:
            self._points[key] = point_kernel(self.kernels[alarm_name], d, self.eval_tol)
        return self._points[key]

    def off(self, state: str) -> PointKernel:
        if state not in self._off:
            self._off[state] = off_state_kernel(self.model, state)
        return self._off[state]
