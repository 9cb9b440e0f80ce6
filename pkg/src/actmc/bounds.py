"""Certified constants that drive the synthesis loop.

Everything the solver promises about accuracy reduces to a handful of
rational bounds: per-alarm envelopes of the epoch quantities (least
positive successor probability, least/greatest expected duration,
greatest expected cost), a perturbation threshold telling how accurately
a long-run ratio's numerator and denominator must be known, the kernel
accuracy ``kappa`` sufficient for a target error on the gain, and a
per-alarm grid step ``delta`` under which the epoch quantities provably
move by less than ``kappa``.  Every value is an exact rational; every
exponential is replaced by a certified one-sided rational bound, always
erring in the safe direction (envelopes widen, steps shrink).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from gmpy2 import mpq

from .kernels import analytic_kernel
from .model import Classification, Model, classify
from .numerics import (
    FlatDerivative,
    IvCtx,
    NumericError,
    Poly,
    Rational,
    exp_bracket,
    exp_bracket_mpfr,
    exp_lower,
    format_rational,
    isolate_roots,
    parse_rational,
    pow2_below,
)

__all__ = [
    "ChainBounds",
    "EpochBounds",
    "SynthesisPlan",
    "accuracy_for_error",
    "chain_bounds",
    "derivative_sup",
    "discretization_step",
    "epoch_bounds",
    "fraction_threshold",
    "plan",
]


# ---------------------------------------------------------------------------
# model-wide scalars
# ---------------------------------------------------------------------------


def _min_positive_probability(model: Model) -> mpq:
    """Least positive entry across the jump matrix and all firing rows."""
    values = [v for row in model.transitions.values() for v in row.values()]
    for alarm in model.alarms:
        values.extend(v for row in alarm.fire.values() for v in row.values())
    return min(values)


def _max_rate_cost(model: Model) -> mpq:
    return max(model.rate_costs.values(), default=mpq(0))


def _max_impulse(model: Model) -> mpq:
    values = [v for row in model.impulse_costs.values() for v in row.values()]
    for alarm in model.alarms:
        values.extend(v for row in alarm.impulses.values() for v in row.values())
    return max(values, default=mpq(0))


def _one_minus_exp_lower(z: mpq) -> mpq:
    """Certified positive lower bound of 1 - exp(-z) for z > 0."""
    if z <= 1:
        # alternating series: truncating after a negative term stays below
        return z - z * z / 2 + z**3 / 6 - z**4 / 24
    _, hi = exp_bracket(-z, mpq(1, 64))
    return 1 - hi


def _psi_min(lam: mpq, window: tuple, n: int) -> mpq:
    """Lower bound of min{exp(-lam*d) (lam*d)^j / j!} over 0 <= j <= n and
    d at the window endpoints.

    Each weight is unimodal in d, so its minimum over the window is
    attained at an endpoint; the exponential is replaced by a certified
    rational lower bound.
    """
    best: Optional[mpq] = None
    for d in set(window):
        x = lam * mpq(d)
        e = exp_lower(-x, mpq(1, 64))
        weight = mpq(1)
        for j in range(n + 1):
            if j:
                weight = weight * x / j
            value = e * weight
            if best is None or value < best:
                best = value
    assert best is not None and best > 0
    return best


# ---------------------------------------------------------------------------
# per-alarm envelopes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EpochBounds:
    """Certified envelope of one alarm's epoch quantities over the whole
    parameter interval.

    Every positive successor probability is at least ``prob_min``, the
    expected epoch duration lies in [time_min, time_max], and the
    expected epoch cost is at most ``cost_max``.  ``window`` is a timer
    range carrying at least ``mass`` of the delay distribution for every
    parameter value; the envelopes are derived from it uniformly across
    the families.
    """

    alarm_name: str
    state: str
    prob_min: Rational
    time_min: Rational
    time_max: Rational
    cost_max: Rational
    window: tuple
    mass: Rational
    p_min: Rational
    rate_cost_max: Rational
    impulse_max: Rational

    def __post_init__(self):
        if not (0 < self.prob_min <= 1):
            raise NumericError(f"prob_min out of (0, 1]: {self.prob_min}")
        if not (0 < self.time_min <= self.time_max):
            raise NumericError(
                f"duration envelope is empty: [{self.time_min}, {self.time_max}]"
            )


def _weibull_window(
    lam: mpq, lower: mpq, upper: mpq, shape: int, r_max: mpq, i_max: mpq
) -> tuple[tuple, mpq]:
    """Timer window [lo, hi] whose weighted tails are small enough that the
    envelope constants absorb them, and a certified lower bound on the
    distribution mass inside the window, valid for every parameter value.

    ``hi`` doubles until the upper tail exp(-(hi*lower)^shape), which
    dominates over all parameters, weighted by the largest envelope
    candidate, drops below 1/4; ``lo`` halves until the lower-tail mass
    (at most (lo*upper)^shape) does the same.
    """
    half = mpq(1, 2)
    hi = max(mpq(upper), mpq(1))
    while True:
        time_cand = hi + half
        cost_cand = r_max * hi + i_max * (lam * hi + 1) + half
        weight = max(mpq(1), time_cand, cost_cand)
        target = 1 / (4 * weight)
        z = (hi * lower) ** shape
        if exp_bracket_mpfr(-z, target / 2)[1] <= target:
            break
        hi *= 2
    lo = min(mpq(lower), mpq(1))
    while (lo * upper) ** shape > target:
        lo /= 2
    mass = 1 - 1 / (2 * weight)
    return (lo, hi), mass


def epoch_bounds(model: Model, info: Classification, alarm_name: str) -> EpochBounds:
    """Certified envelope of the epoch quantities of one alarm.

    The window/mass scheme is uniform: a point timer occupies its whole
    parameter interval with mass one; the zero-based uniform family keeps
    at least half its mass above half the least parameter; the shifted
    uniform family lives entirely on [lower, upper + width]; the Weibull
    family gets a searched window with certified mass, and its envelopes
    are padded by the discarded tail's worth of duration and cost.
    """
    alarm = model.alarm(alarm_name)
    lam = model.rate
    p_min = _min_positive_probability(model)
    r_max = _max_rate_cost(model)
    i_max = _max_impulse(model)
    n = len(model.states)

    pad = mpq(0)
    if alarm.family == "dirac":
        window, mass = (alarm.lower, alarm.upper), mpq(1)
    elif alarm.family == "uniform":
        window, mass = (alarm.lower / 2, alarm.upper), mpq(1, 2)
    elif alarm.family == "uniform-shift":
        window, mass = (alarm.lower, alarm.upper + alarm.window), mpq(1)
    elif alarm.family == "weibull":
        window, mass = _weibull_window(
            lam, alarm.lower, alarm.upper, alarm.shape, r_max, i_max
        )
        pad = mpq(1, 2)
    else:  # pragma: no cover - families are validated upstream
        raise NumericError(f"no envelope rule for family {alarm.family!r}")

    lo, hi = window
    return EpochBounds(
        alarm_name=alarm.name,
        state=info.setting_state[alarm.name],
        prob_min=mass * _psi_min(lam, window, n) * p_min**n,
        time_min=mass * _one_minus_exp_lower(lam * lo) / lam,
        time_max=hi + pad,
        cost_max=r_max * hi + i_max * (lam * hi + 1) + pad,
        window=window,
        mass=mass,
        p_min=p_min,
        rate_cost_max=r_max,
        impulse_max=i_max,
    )


# ---------------------------------------------------------------------------
# model-wide bounds and the accuracy formula
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainBounds:
    """Bounds on the decision process as a whole: ``n`` states, every
    positive transition probability >= prob_min, expected step durations
    in [time_min, time_max], expected step costs <= cost_max."""

    n: int
    prob_min: Rational
    time_min: Rational
    time_max: Rational
    cost_max: Rational

    def __post_init__(self):
        object.__setattr__(self, "prob_min", parse_rational(self.prob_min))
        object.__setattr__(self, "time_min", parse_rational(self.time_min))
        object.__setattr__(self, "time_max", parse_rational(self.time_max))
        object.__setattr__(self, "cost_max", parse_rational(self.cost_max))
        if self.n <= 0:
            raise NumericError(f"state count must be positive, got {self.n}")
        if not (0 < self.prob_min <= 1):
            raise NumericError(f"prob_min out of (0, 1]: {self.prob_min}")
        if not (0 < self.time_min <= self.time_max):
            raise NumericError(
                f"duration envelope is empty: [{self.time_min}, {self.time_max}]"
            )
        if self.cost_max <= 0:
            raise NumericError(f"cost_max must be positive, got {self.cost_max}")

    @property
    def weight_max(self) -> mpq:
        return max(self.cost_max, self.time_max)


def chain_bounds(model: Model, info: Classification, per_alarm: dict) -> ChainBounds:
    """Assemble decision-process bounds from the per-alarm envelopes plus
    the exact kernels of the alarm-free states (duration 1/rate, cost
    rate_cost/rate + expected jump impulse)."""
    lam = model.rate
    probs = [b.prob_min for b in per_alarm.values()]
    times_lo = [b.time_min for b in per_alarm.values()]
    times_hi = [b.time_max for b in per_alarm.values()]
    costs = [b.cost_max for b in per_alarm.values()]
    if info.off_states:
        probs.append(_min_positive_probability(model))
        times_lo.append(1 / lam)
        times_hi.append(1 / lam)
        for s in info.off_states:
            jump = sum(
                (p * model.impulse(s, t) for t, p in model.transitions[s].items()),
                mpq(0),
            )
            costs.append(model.rate_costs.get(s, mpq(0)) / lam + jump)
    cost_max = max(costs, default=mpq(0))
    if cost_max <= 0:
        cost_max = mpq(1)  # any positive upper bound is valid for cost-free models
    return ChainBounds(
        n=len(info.decision_states),
        prob_min=min(probs),
        time_min=min(times_lo),
        time_max=max(times_hi),
        cost_max=cost_max,
    )


def fraction_threshold(num_max: object, den_max: object, den_min: object, err: object) -> mpq:
    """How accurately a ratio's parts must be known for the ratio itself
    to be accurate.

    For any a in (0, num_max], b in [den_min, den_max] and perturbed a', b'
    with |a - a'| and |b - b'| both at most the returned threshold,
    |a/b - a'/b'| <= err.
    """
    a_bar = parse_rational(num_max)
    b_bar = parse_rational(den_max)
    b_under = parse_rational(den_min)
    phi = parse_rational(err)
    for name, value in (
        ("num_max", a_bar),
        ("den_max", b_bar),
        ("den_min", b_under),
        ("err", phi),
    ):
        if value <= 0:
            raise NumericError(f"fraction_threshold needs positive {name}, got {value}")
    return b_under * b_under * phi / (a_bar + b_bar + b_bar * phi)


def accuracy_for_error(bounds: ChainBounds, epsilon: object) -> mpq:
    """Kernel accuracy under which any fixed strategy's gain moves by at
    most ``epsilon``, evaluated exactly in rationals.

    The formula propagates a one-state-at-a-time perturbation through the
    gain ratio via :func:`fraction_threshold`-style bounds; the three
    trailing terms keep the perturbed process inside the halved/doubled
    envelopes the propagation assumes.
    """
    eps = parse_rational(epsilon)
    if eps <= 0:
        raise NumericError(f"target error must be positive, got {eps}")
    n = bounds.n
    q = bounds.prob_min
    t = bounds.time_min
    w = bounds.weight_max
    blow = (2 / q) ** n
    eps_n = eps / n
    first = (t / 2) ** 2 * eps_n / (2 * w * blow * (2 + eps_n) * (1 + 2 * n * w * blow))
    return min(first, q / 2, t / 2, bounds.cost_max / 2)


# ---------------------------------------------------------------------------
# grid steps
# ---------------------------------------------------------------------------


_ISOLATION_DEGREE_LIMIT = 32


def derivative_sup(poly: Poly, lo: object, hi: object) -> mpq:
    """Certified upper bound of sup |poly'(x)| over [lo, hi].

    For modest degrees, critical points of the derivative are located by
    isolating the roots of the second derivative, and the derivative's
    magnitude is bounded by directed-rounding evaluation at the endpoints
    and over each root bracket.  High-degree truncation polynomials skip
    isolation (it is slow and no tighter there) and use the exact
    coefficient bound instead; both paths are certified, so the smaller
    wins.
    """
    lo = mpq(lo)
    hi = mpq(hi)
    if lo > hi:
        raise NumericError(f"empty interval [{lo}, {hi}]")
    p1 = poly.derivative()
    if p1.is_zero:
        return mpq(0)
    if lo == hi:
        return abs(p1.eval_q(lo))
    coarse = p1.abs_coeff_bound(max(abs(lo), abs(hi)))
    if p1.degree > _ISOLATION_DEGREE_LIMIT:
        return coarse
    p2 = p1.derivative()
    boxes = [(lo, lo), (hi, hi)]
    if not p2.is_zero:
        try:
            for r in isolate_roots(p2, lo, hi, (hi - lo) / (1 << 12)):
                boxes.append((r.lo, r.hi))
        except FlatDerivative:
            # nearly-constant derivative: one whole-interval evaluation is tight
            boxes = [(lo, hi)]
    ctx = IvCtx(192)
    coeffs_lo, coeffs_hi = ctx.coeffs_from_q(p1.coeffs)
    best = mpq(0)
    for a, b in boxes:
        x = (ctx.from_q(a)[0], ctx.from_q(b)[1])
        vlo, vhi = ctx.horner_point(coeffs_lo, coeffs_hi, x)
        best = max(best, abs(mpq(vlo)), abs(mpq(vhi)))
    return min(best, coarse)


def discretization_step(
    model: Model,
    info: Classification,
    alarm_name: str,
    kappa: object,
    *,
    kernel=None,
) -> mpq:
    """Grid step under which every epoch quantity of the alarm moves by at
    most ``kappa``.

    The point and zero-based-uniform families have closed-form moduli of
    continuity.  The polynomial families (shifted uniform, Weibull) get a
    certified bound B on the derivative of every kernel component, built
    at accuracy kappa/8 so the polynomial modulus dominates, and the step
    kappa/B.
    """
    kappa = parse_rational(kappa)
    if kappa <= 0:
        raise NumericError(f"kappa must be positive, got {kappa}")
    alarm = model.alarm(alarm_name)
    lam = model.rate
    r_max = _max_rate_cost(model)
    i_max = _max_impulse(model)

    if alarm.family == "dirac":
        step = min(kappa, kappa / lam)
        mix = r_max + 2 * lam * i_max
        if mix > 0:
            step = min(step, kappa / mix)
        return step

    if alarm.family == "uniform":
        low, up = alarm.lower, alarm.upper
        step = min(kappa * low, kappa * low / up)
        mix = r_max * up + i_max * (lam * up + 1)
        if mix > 0:
            step = min(step, kappa * low / mix)
        return step

    if kernel is None:
        kernel = analytic_kernel(model, info, alarm_name, accuracy=kappa / 8)
    bound = mpq(0)
    for component in (kernel.theta, kernel.cost, *kernel.transition.values()):
        if not component.is_plain_poly:  # pragma: no cover - construction invariant
            raise NumericError(
                f"family {alarm.family!r} produced a non-polynomial kernel component"
            )
        bound = max(bound, derivative_sup(component.poly, kernel.lower, kernel.upper))
    if bound == 0:
        # constant kernel: any step works; keep the grid a couple points wide
        return max(alarm.upper - alarm.lower, mpq(1))
    return kappa / bound


# ---------------------------------------------------------------------------
# the assembled plan
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthesisPlan:
    """Everything the synthesis loop needs to promise an accurate gain.

    ``kappa`` is the quantity-level accuracy, ``step`` the per-alarm grid
    pitch, and ``xi`` the improvement threshold; all three are rounded
    down to powers of two so grid points and tolerances stay dyadic.
    The bounds they were derived from ride along for auditability.
    """

    epsilon: Rational
    kappa: Rational
    xi: Rational
    step: dict
    chain: ChainBounds
    per_alarm: dict

    @property
    def kernel_accuracy(self) -> mpq:
        """Accuracy at which analytic kernels are built (half of xi; the
        other half is spent evaluating them at grid points)."""
        return self.xi / 2

    @property
    def eval_tolerance(self) -> mpq:
        return self.xi / 2

    def as_dict(self) -> dict:
        """Plain-data form of the plan for inclusion in result records."""
        return {
            "epsilon": format_rational(self.epsilon),
            "kappa": format_rational(self.kappa),
            "xi": format_rational(self.xi),
            "kernel_accuracy": format_rational(self.kernel_accuracy),
            "step": {name: format_rational(v) for name, v in sorted(self.step.items())},
            "chain": {
                "states": self.chain.n,
                "prob_min": format_rational(self.chain.prob_min),
                "time_min": format_rational(self.chain.time_min),
                "time_max": format_rational(self.chain.time_max),
                "cost_max": format_rational(self.chain.cost_max),
            },
            "alarms": {
                name: {
                    "state": b.state,
                    "prob_min": format_rational(b.prob_min),
                    "time_min": format_rational(b.time_min),
                    "time_max": format_rational(b.time_max),
                    "cost_max": format_rational(b.cost_max),
                    "window": [format_rational(w) for w in b.window],
                    "mass": format_rational(b.mass),
                }
                for name, b in sorted(self.per_alarm.items())
            },
        }


def plan(
    model: Model,
    epsilon: object,
    info: Optional[Classification] = None,
    *,
    accuracy_floor: object = None,
) -> SynthesisPlan:
    """Derive the bounds, accuracy, improvement threshold, and grid steps
    for a synthesis run targeting gain error ``epsilon``.

    The accuracy budget is split in half: one half absorbs the grid
    discretization, the other numerical kernel approximation, so the
    combined perturbation stays within what :func:`accuracy_for_error`
    certifies.  ``accuracy_floor`` clamps both kappa and the improvement
    threshold from below for coarse exploratory runs (grid overrides,
    solver cross-checks); it forfeits the epsilon certificate but keeps
    every structural invariant.
    """
    eps = parse_rational(epsilon)
    if eps <= 0:
        raise NumericError(f"target error must be positive, got {eps}")
    if info is None:
        info = classify(model)
    per_alarm = {a.name: epoch_bounds(model, info, a.name) for a in model.alarms}
    chain = chain_bounds(model, info, per_alarm)
    kappa = pow2_below(accuracy_for_error(chain, eps) / 2)
    floor = mpq(0)
    if accuracy_floor is not None:
        floor = parse_rational(accuracy_floor)
        if floor > 0:
            kappa = max(kappa, pow2_below(floor))
    prob_floor = min((b.prob_min for b in per_alarm.values()), default=mpq(1))
    xi = pow2_below(min(kappa / 4, prob_floor / 3))
    if floor > 0:
        xi = max(xi, pow2_below(floor) / 4)
    step = {
        name: pow2_below(discretization_step(model, info, name, kappa))
        for name in per_alarm
    }
    return SynthesisPlan(
        epsilon=eps,
        kappa=kappa,
        xi=xi,
        step=step,
        chain=chain,
        per_alarm=per_alarm,
    )
