"""Symbolic delay synthesis by policy iteration on closed-form rankings.

The improvement step never enumerates a certified grid.  Each setting
state's ranking is assembled as one exp-polynomial in the delay; the
roots of its derivative are isolated to half a grid step, and only the
grid points near those roots, near the interval ends, and the current
choice are evaluated.  Grids fine enough to certify an epsilon-accurate
gain therefore cost no more than coarse ones.

Candidates are compared through their rounded point kernels, which is
exactly how strategies are later evaluated; candidates whose rounded
values are closer than the certified rounding error are re-ranked
against the closed form itself, whose error varies smoothly in the
delay, so neighbouring grid points are never mis-ordered by rounding
noise alone.
"""

import time
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from gmpy2 import mpq

from .bounds import SynthesisPlan, plan
from .kernels import AnalyticKernel, KernelWorkspace
from .model import Classification, Model, classify
from .numerics import (
    STURM_DEGREE_LIMIT,
    ExpPoly,
    FlatDerivative,
    IvCtx,
    NumericError,
    Rational,
    RootApprox,
    exp_bracket_mpfr,
    format_rational,
    isolate_roots,
    parse_rational,
)
from .semimdp import GridSpec, SemiMDPView, Strategy, evaluate_strategy, ranking

__all__ = [
    "CandidateSet",
    "IterationReport",
    "SynthesisResult",
    "analytic_ranking",
    "candidates",
    "synthesize",
]

# Grid windows wider than this many steps (only flat, unisolated root
# regions produce them) are sampled instead of enumerated.
_WINDOW_CAP = 64

# Interior sample count of the coarse fallback used when the ranking
# derivative is identically zero or numerically flat.
_FALLBACK_SAMPLES = 16

# High-degree derivative polynomials are first isolated to this fraction
# of the interval span and then refined against the local loss bound;
# half a grid step can be far beyond reach there (the planned step uses
# a global coefficient bound on the derivative, which for truncation
# polynomials of degree in the thousands understates by many orders).
_COARSE_BITS = 48

# Above this degree, boxed subdivision stops converging: truncation
# polynomials carry coefficients whose magnitudes exceed their values on
# the interval by hundreds of bits, so interval ranges over any usable
# box straddle zero.  Point signs remain cheap and decidable, so roots
# are located by a dense sign scan plus certified bisection instead.
_SCAN_DEGREE_LIMIT = 64

# Segments of the dense sign scan.
_SCAN_SEGMENTS = 256


def analytic_ranking(kernel: AnalyticKernel, gain: object, bias: Mapping) -> ExpPoly:
    """Ranking of a setting state as a closed form in its own delay.

    Combines the kernel components into cost - gain*theta + bias-weighted
    transition mass.  All components of one kernel share a single
    exp-polynomial shape by construction, so the combination is again an
    :class:`ExpPoly` and is linear in the bias values; a shape mismatch
    means the kernel was assembled inconsistently and is reported as an
    internal error.
    """
    g = parse_rational(gain)
    shape = (kernel.theta.rate, kernel.theta.over_d)
    total = kernel.cost.poly - kernel.theta.poly.scale(g)
    for piece in (kernel.cost, *kernel.transition.values()):
        if piece.poly.is_zero:
            continue
        if (piece.rate, piece.over_d) != shape:
            raise NumericError(
                f"internal error: mixed closed forms in kernel of alarm"
                f" {kernel.alarm_name!r} ({(piece.rate, piece.over_d)} vs {shape})"
            )
    for target in sorted(kernel.transition):
        w = parse_rational(bias.get(target, 0))
        if w != 0:
            total = total + kernel.transition[target].poly.scale(w)
    return ExpPoly(shape[0], total, shape[1])


@dataclass(frozen=True)
class CandidateSet:
    """Delays worth evaluating in one improvement step.

    ``points`` is ascending, every entry lies on the grid, and the
    current choice is always a member, so keeping it is always possible.
    ``roots`` counts the derivative root brackets that were examined,
    ``degree`` is the degree of the isolated polynomial, and ``fallback``
    marks the coarse sample taken when no usable derivative information
    existed.
    """

    points: tuple
    roots: int
    degree: int
    fallback: bool

    def __post_init__(self):
        if not self.points:
            raise NumericError("empty candidate set")


def _snap_sample(grid: GridSpec, lo: mpq, hi: mpq, count: int) -> set:
    """Ends of [lo, hi] and count interior positions, snapped to the grid."""
    pts = {grid.nearest(lo), grid.nearest(hi)}
    for i in range(1, count + 1):
        pts.add(grid.nearest(lo + (hi - lo) * mpq(i, count + 1)))
    return pts


def _bracket_window(grid: GridSpec, lo: mpq, hi: mpq, pad: mpq) -> set:
    """Grid points within pad of the bracket [lo, hi].

    Isolated roots have brackets at most half a step wide, so their
    windows hold a handful of points.  Unisolated regions can be wide;
    past _WINDOW_CAP steps they are sampled, not enumerated, because a
    region the isolator could not split is flat at working precision and
    dense evaluation there cannot change the argmin beyond tolerance.
    """
    span_lo, span_hi = lo - pad, hi + pad
    if (span_hi - span_lo) / grid.step > _WINDOW_CAP:
        return _snap_sample(grid, span_lo, span_hi, _FALLBACK_SAMPLES)
    center = (span_lo + span_hi) / 2
    return set(grid.within(center, span_hi - center))


class _SignEvaluator:
    """Certified point and range evaluation of one sign polynomial."""

    def __init__(self, sign_poly):
        self.poly = sign_poly
        self._ctx: dict = {}

    def _coeffs(self, prec: int):
        if prec not in self._ctx:
            ctx = IvCtx(prec)
            lo, hi = ctx.coeffs_from_q(self.poly.coeffs)
            self._ctx[prec] = (ctx, lo, hi)
        return self._ctx[prec]

    def sign_at(self, x: mpq) -> int:
        for prec in (192, 512, 1024):
            ctx, clo, chi = self._coeffs(prec)
            lo, hi = ctx.horner_point(clo, chi, ctx.from_q(x))
            if lo > 0:
                return 1
            if hi < 0:
                return -1
        return 0

    def sup_abs(self, a: mpq, b: mpq) -> mpq:
        """Upper bound of |poly| over [a, b]."""
        ctx, clo, chi = self._coeffs(192)
        x = (ctx.from_q(a)[0], ctx.from_q(b)[1])
        lo, hi = ctx.horner_point(clo, chi, x)
        return mpq(max(abs(lo), abs(hi)))


def _scan_roots(sev: _SignEvaluator, lo: mpq, hi: mpq) -> Optional[list]:
    """Sign-change brackets of the polynomial from a dense point scan.

    Points undecidable at full precision sit numerically on a root; a
    run of them becomes an unisolated bracket.  A scan finds every root
    the working precision can distinguish but, unlike subdivision, says
    nothing about root pairs hiding between two same-sign points; the
    caller compensates by sampling scan brackets besides refining them.
    Returns None when no point has a decidable sign.
    """
    xs = [lo + (hi - lo) * mpq(i, _SCAN_SEGMENTS) for i in range(_SCAN_SEGMENTS + 1)]
    signs = [sev.sign_at(x) for x in xs]
    if all(s == 0 for s in signs):
        return None
    out = []
    prev = None
    for i, s in enumerate(signs):
        if s == 0:
            continue
        if prev is not None and signs[prev] != s:
            out.append(RootApprox(xs[prev], xs[i], isolated=(i == prev + 1)))
        prev = i
    i = 0
    while i <= _SCAN_SEGMENTS:
        if signs[i] == 0:
            j = i
            while j <= _SCAN_SEGMENTS and signs[j] == 0:
                j += 1
            out.append(
                RootApprox(xs[max(i - 1, 0)], xs[min(j, _SCAN_SEGMENTS)], isolated=False)
            )
            i = j
        else:
            i += 1
    out.sort(key=lambda r: (r.lo, r.hi))
    return out


def _loss_refine(
    sev: _SignEvaluator,
    closed_form: ExpPoly,
    bracket: RootApprox,
    grid: GridSpec,
    kappa: mpq,
) -> RootApprox:
    """Shrink a derivative root bracket until the ranking's certified
    variation over it is negligible.

    The ranking derivative is exp(-r d) * S(d) (divided by d^2 for the
    averaged form), so |ranking'| over [a, b] is at most sup|S| times a
    cheap positive factor.  Near a simple root sup|S| shrinks with the
    bracket, so the product sup * width falls quadratically and the
    kappa/2 target is reached at moderate width; half a grid step is
    still honoured as the finest target.
    """
    a, b = bracket.lo, bracket.hi
    sa, sb = sev.sign_at(a), sev.sign_at(b)
    if sa == 0 or sb == 0 or sa == sb:
        return bracket
    floor_w = max(grid.step / 2, (grid.upper - grid.lower) / mpq(2) ** 120)
    for _ in range(96):
        width = b - a
        if width <= floor_w:
            break
        factor = mpq(1)
        if closed_form.rate > 0:
            factor = exp_bracket_mpfr(-closed_form.rate * a, mpq(1, 16))[1]
        if closed_form.over_d:
            factor = factor / (a * a)
        if sev.sup_abs(a, b) * factor * (width + 2 * grid.step) <= kappa / 2:
            break
        for t in (mpq(1, 2), mpq(3, 8), mpq(5, 8), mpq(1, 4)):
            m = a + width * t
            sm = sev.sign_at(m)
            if sm != 0:
                break
        if sm == 0:
            break
        if sm == sa:
            a = m
        else:
            b = m
    return RootApprox(a, b, isolated=bracket.isolated)


def candidates(
    grid: GridSpec, closed_form: ExpPoly, current: object, *, kappa: object
) -> CandidateSet:
    """Candidate delays for one setting state.

    The roots of the ranking's sign-matched derivative polynomial (see
    :meth:`ExpPoly.derivative_sign_poly`) are isolated and every grid
    point within 3/2 steps of a root bracket or of an interval end joins
    the set, along with the current choice.  Small-degree polynomials
    are isolated to half a grid step directly; large degrees are
    isolated coarsely first and each bracket is then shrunk until the
    ranking provably varies by less than ``kappa``/2 across it, which is
    what the half-step target exists to guarantee.  A zero or
    numerically flat derivative falls back to the interval ends plus a
    fixed coarse sample.
    """
    cur = parse_rational(current)
    kappa = parse_rational(kappa)
    if not grid.contains(cur):
        raise NumericError(f"current delay {cur} is not on the grid")
    if grid.lower == grid.upper:
        return CandidateSet((grid.lower,), 0, 0, False)
    sign_poly = closed_form.derivative_sign_poly()
    pad = 3 * grid.step / 2
    pool = {cur}
    pool.update(grid.within(grid.lower, pad))
    pool.update(grid.within(grid.upper, pad))
    if sign_poly.is_zero:
        pool.update(_snap_sample(grid, grid.lower, grid.upper, _FALLBACK_SAMPLES))
        return CandidateSet(tuple(sorted(pool)), 0, 0, True)
    scanned = sign_poly.degree > _SCAN_DEGREE_LIMIT
    sev = _SignEvaluator(sign_poly)
    if scanned:
        brackets = _scan_roots(sev, grid.lower, grid.upper)
        if brackets is None:
            pool.update(_snap_sample(grid, grid.lower, grid.upper, _FALLBACK_SAMPLES))
            return CandidateSet(tuple(sorted(pool)), 0, sign_poly.degree, True)
    else:
        precision = grid.step / 2
        if sign_poly.degree > STURM_DEGREE_LIMIT:
            precision = max(
                precision, (grid.upper - grid.lower) / mpq(2) ** _COARSE_BITS
            )
        try:
            brackets = isolate_roots(sign_poly, grid.lower, grid.upper, precision)
        except FlatDerivative:
            pool.update(_snap_sample(grid, grid.lower, grid.upper, _FALLBACK_SAMPLES))
            return CandidateSet(tuple(sorted(pool)), 0, sign_poly.degree, True)
    for b in brackets:
        if b.isolated and b.hi - b.lo > grid.step / 2:
            refined = _loss_refine(sev, closed_form, b, grid, kappa)
            pool.update(_bracket_window(grid, refined.lo, refined.hi, pad))
            if scanned:
                pool.update(_snap_sample(grid, b.lo, b.hi, 8))
        else:
            pool.update(_bracket_window(grid, b.lo, b.hi, pad))
    return CandidateSet(tuple(sorted(pool)), len(brackets), sign_poly.degree, False)


def _refine_near_ties(closed_form: ExpPoly, cands: Sequence, slack: mpq) -> set:
    """The argmin set of the closed form over near-tied candidates.

    Plain-polynomial forms (and the V(d)/d variant) compare exactly in
    rational arithmetic.  Exponential forms are bracketed at shrinking
    tolerance until the minimum separates; candidates still overlapping
    the minimum at 120 bits below ``slack`` are reported as ties.
    """
    if closed_form.rate == 0:
        vals = {}
        for d in cands:
            v = closed_form.poly.eval_q(d)
            vals[d] = v / d if closed_form.over_d else v
        m = min(vals.values())
        return {d for d, v in vals.items() if v == m}
    tol = slack if slack > 0 else mpq(1)
    floor = tol / mpq(2) ** 120
    alive = set(cands)
    while len(alive) > 1 and tol > floor:
        tol = tol / 16
        brackets = {d: closed_form.eval_bracket(d, tol) for d in alive}
        min_hi = min(hi for _, hi in brackets.values())
        alive = {d for d, (lo, _) in brackets.items() if lo <= min_hi}
    return alive


def _pick(
    view: SemiMDPView,
    state: str,
    pts: Sequence,
    cur: mpq,
    gb,
    closed_form: Optional[ExpPoly],
    kernel: Optional[AnalyticKernel],
) -> tuple[mpq, bool]:
    """Choose among candidate delays; returns (choice, used_refinement).

    The primary ordering is by rounded point-kernel ranking, the same
    values strategy evaluation consumes, keeping the current delay on
    ties and taking the smallest otherwise.  When ``closed_form`` is
    given, candidates within the certified rounding slack of the minimum
    are re-ranked against it, which restores the true ordering of
    delta-adjacent grid points whose rounded values differ only by
    noise.  A switch still requires the rounded ranking not to regress,
    so the gain trace stays exactly non-increasing.
    """
    values = {d: ranking(view, state, d, gb.gain, gb.bias) for d in pts}
    best = min(values.values())
    if closed_form is None:
        if values[cur] == best:
            return cur, False
        return min(d for d, v in values.items() if v == best), False
    slack = view.workspace.eval_tol * (
        1 + abs(gb.gain) + sum(abs(gb.bias[t]) for t in kernel.transition)
    )
    near = [d for d, v in values.items() if v <= best + 2 * slack]
    if len(near) == 1:
        choice = near[0]
        return (cur, False) if choice == cur else (choice, False)
    survivors = _refine_near_ties(closed_form, near, slack)
    if cur in survivors:
        return cur, True
    choice = min(survivors)
    if values[choice] <= values[cur]:
        return choice, True
    return cur, True


@dataclass(frozen=True)
class IterationReport:
    """Diagnostics of one evaluate-improve round."""

    index: int
    gain: Rational
    candidates: dict
    max_degree: int
    roots: int
    fallback_states: tuple
    refined_states: tuple
    improved: tuple
    seconds: float

    def as_dict(self) -> dict:
        """Plain-data form; wall time is display-only and omitted."""
        return {
            "index": self.index,
            "gain": format_rational(self.gain),
            "candidates": {s: c for s, c in sorted(self.candidates.items())},
            "max_degree": self.max_degree,
            "roots": self.roots,
            "fallback_states": list(self.fallback_states),
            "refined_states": list(self.refined_states),
            "improved": list(self.improved),
        }


@dataclass(frozen=True)
class SynthesisResult:
    """Synthesized delays with their exact evaluation and provenance.

    ``delays`` maps each alarm to its chosen parameter; ``gain`` and
    ``bias`` are the exact solution of the final strategy's evaluation;
    ``plan`` records the accuracy budget the run used; ``iterations``
    keeps one report per round, whose gains are non-increasing.
    """

    delays: dict
    gain: Rational
    bias: dict
    reference: str
    strategy: Strategy
    plan: SynthesisPlan
    iterations: tuple
    seconds: float

    @property
    def gain_trace(self) -> tuple:
        return tuple(r.gain for r in self.iterations)

    def as_dict(self) -> dict:
        """Plain-data form for reporting; no wall times."""
        return {
            "delays": {a: format_rational(d) for a, d in sorted(self.delays.items())},
            "gain": format_rational(self.gain),
            "bias": {s: format_rational(h) for s, h in sorted(self.bias.items())},
            "reference": self.reference,
            "strategy": {s: format_rational(d) for s, d in self.strategy.items()},
            "plan": self.plan.as_dict(),
            "iterations": [r.as_dict() for r in self.iterations],
        }


def _action_value(model: Model, name: str, value: object, what: str) -> mpq:
    alarm = model.alarm(name)
    d = parse_rational(value)
    if not (alarm.lower <= d <= alarm.upper):
        raise NumericError(
            f"{what} {d} outside [{alarm.lower}, {alarm.upper}] for alarm {name!r}"
        )
    return d


def _override_lists(model: Model, grid_override: Mapping) -> dict:
    out = {}
    for name, pts in grid_override.items():
        vals = sorted({_action_value(model, name, d, "override action") for d in pts})
        if not vals:
            raise NumericError(f"empty override grid for alarm {name!r}")
        out[name] = tuple(vals)
    return out


def synthesize(
    model: Model,
    epsilon: object,
    *,
    info: Optional[Classification] = None,
    accuracy_floor: object = None,
    grid_override: Optional[Mapping[str, Sequence]] = None,
    fixed: Optional[Mapping[str, object]] = None,
    initial: Optional[Mapping[str, object]] = None,
    reference: Optional[str] = None,
    max_iterations: int = 1000,
) -> SynthesisResult:
    """Delay parameters whose long-run average cost is epsilon-optimal.

    Plans an accuracy budget for the requested ``epsilon``, builds one
    shared kernel workspace, and runs policy iteration whose improvement
    step works on candidate sets from :func:`candidates`.  Ties keep the
    current choice when it attains the minimum and take the smallest
    candidate otherwise, exactly as in explicit enumeration, so the two
    solvers agree action for action on a shared grid.

    ``grid_override`` restricts each listed alarm to an explicit delay
    list (a coarse cross-check mode: the epsilon certificate no longer
    applies, and unless ``accuracy_floor`` is given the plan is floored
    at 2^-16 so kernels stay cheap).  ``fixed`` pins listed alarms to a
    single delay while the others are optimized.  ``initial`` overrides
    the all-least starting strategy.  Alarm-free decision states always
    keep their unique action.
    """
    if info is None:
        info = classify(model)
    floor = accuracy_floor
    if floor is None and grid_override:
        floor = mpq(1, 2 ** 16)
    pl = plan(model, epsilon, info, accuracy_floor=floor)
    workspace = KernelWorkspace(
        model, info, accuracy=pl.kernel_accuracy, eval_tol=pl.eval_tolerance
    )
    view = SemiMDPView(model, info, workspace, pl.step)
    ref = min(view.states) if reference is None else reference

    override = _override_lists(model, grid_override) if grid_override else {}
    pinned = {
        name: _action_value(model, name, d, "fixed delay")
        for name, d in (fixed or {}).items()
    }

    start = {}
    for s in view.states:
        name = view.alarm_name(s)
        if name is None:
            start[s] = mpq(0)
        elif name in pinned:
            start[s] = pinned[name]
        elif initial is not None and name in initial:
            d = _action_value(model, name, initial[name], "initial delay")
            if name in override:
                if d not in override[name]:
                    raise NumericError(
                        f"initial delay {d} for alarm {name!r} is not an override action"
                    )
            elif not view.grid(s).contains(d):
                raise NumericError(
                    f"initial delay {d} for alarm {name!r} is not on the grid"
                )
            start[s] = d
        elif name in override:
            start[s] = override[name][0]
        else:
            start[s] = view.grid(s).lower
    current = Strategy(start)

    reports = []
    t_total = time.perf_counter()
    for index in range(max_iterations):
        t_round = time.perf_counter()
        gb = evaluate_strategy(view, current, ref)
        counts: dict = {}
        degrees = []
        roots_total = 0
        fallback_states = []
        refined_states = []
        updated = {}
        for s in view.states:
            name = view.alarm_name(s)
            if name is None or name in pinned:
                updated[s] = current[s]
                continue
            cur = current[s]
            if name in override:
                pts: Sequence = override[name]
                if cur not in pts:
                    raise NumericError(
                        f"internal error: current delay {cur} left the override"
                        f" grid of alarm {name!r}"
                    )
                closed_form = None
                kernel = None
            else:
                kernel = workspace.kernels[name]
                closed_form = analytic_ranking(kernel, gb.gain, gb.bias)
                cs = candidates(view.grid(s), closed_form, cur, kappa=pl.kappa)
                pts = cs.points
                roots_total += cs.roots
                degrees.append(cs.degree)
                if cs.fallback:
                    fallback_states.append(s)
            counts[s] = len(pts)
            updated[s], refined = _pick(view, s, pts, cur, gb, closed_form, kernel)
            if refined:
                refined_states.append(s)
        improved = tuple(s for s in view.states if updated[s] != current[s])
        reports.append(
            IterationReport(
                index=index,
                gain=gb.gain,
                candidates=counts,
                max_degree=max(degrees, default=0),
                roots=roots_total,
                fallback_states=tuple(fallback_states),
                refined_states=tuple(refined_states),
                improved=improved,
                seconds=time.perf_counter() - t_round,
            )
        )
        if not improved:
            delays = {
                view.alarm_name(s): current[s]
                for s in view.states
                if view.alarm_name(s) is not None
            }
            return SynthesisResult(
                delays=delays,
                gain=gb.gain,
                bias=dict(gb.bias),
                reference=gb.reference,
                strategy=current,
                plan=pl,
                iterations=tuple(reports),
                seconds=time.perf_counter() - t_total,
            )
        current = Strategy(updated)
    raise NumericError(f"no fixpoint after {max_iterations} improvement rounds")
