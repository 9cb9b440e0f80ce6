"""Decision-process engine over epoch kernels.

The decision process has one state per alarm setting state (actions: the
alarm's parameter grid) and one per alarm-free state (single action 0).
This module evaluates a fixed strategy exactly — long-run average cost
``g`` and bias vector ``h`` from one rational linear solve — ranks
actions by their one-step improvement value, and provides the
explicit-enumeration policy-iteration baseline used to cross-check the
symbolic solver on coarse grids.  Everything is exact: the only
approximation lives inside the point kernels themselves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Mapping, Optional, Sequence

from gmpy2 import mpq

from .kernels import KernelWorkspace, PointKernel
from .model import Classification, Model
from .numerics import NumericError, Rational, parse_rational, solve_exact

__all__ = [
    "GainBias",
    "GridCapError",
    "GridSpec",
    "Refusal",
    "SemiMDPView",
    "Strategy",
    "UnichainError",
    "evaluate_strategy",
    "explicit_policy_iteration",
    "ranking",
]


class Refusal(Exception):
    """The engine declines to run rather than produce a wrong answer."""


class UnichainError(Refusal):
    """The chain induced by a strategy has several recurrent classes, so a
    single scalar gain does not describe it."""

    def __init__(self, classes: Sequence[Sequence[str]]):
        self.classes = tuple(tuple(c) for c in classes)
        listed = "; ".join("{" + ", ".join(c) + "}" for c in self.classes)
        super().__init__(f"induced chain not unichain: recurrent classes {listed}")


class GridCapError(Refusal):
    """Enumerating a certified grid was requested; its size is the point."""

    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(
            f"action grid has {count} points, above the enumeration cap {cap}"
        )


# ---------------------------------------------------------------------------
# grids and strategies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Action ladder of one state: lower + i*step for i >= 0 while strictly
    below upper, plus upper itself.  Alarm-free states use the degenerate
    ladder lower == upper == 0."""

    lower: Rational
    upper: Rational
    step: Rational

    def __post_init__(self):
        object.__setattr__(self, "lower", parse_rational(self.lower))
        object.__setattr__(self, "upper", parse_rational(self.upper))
        object.__setattr__(self, "step", parse_rational(self.step))
        if self.lower > self.upper:
            raise NumericError(f"grid with lower {self.lower} > upper {self.upper}")
        if self.lower < self.upper and self.step <= 0:
            raise NumericError(f"grid over [{self.lower}, {self.upper}] needs a positive step")

    @property
    def interior_count(self) -> int:
        """Number of ladder points strictly below upper."""
        if self.lower == self.upper:
            return 0
        return math.ceil((self.upper - self.lower) / self.step)

    @property
    def count(self) -> int:
        return self.interior_count + 1

    def points(self) -> Iterator[mpq]:
        for i in range(self.interior_count):
            yield self.lower + i * self.step
        yield self.upper

    def contains(self, d: object) -> bool:
        d = parse_rational(d)
        if d == self.upper:
            return True
        if not (self.lower <= d < self.upper):
            return False
        return ((d - self.lower) / self.step).denominator == 1

    def within(self, x: object, radius: object) -> list[mpq]:
        """All grid points p with |p - x| <= radius, ascending."""
        x = parse_rational(x)
        radius = parse_rational(radius)
        out = []
        if self.lower < self.upper:
            lo_i = max(0, math.ceil((x - radius - self.lower) / self.step))
            hi_i = min(
                self.interior_count - 1,
                math.floor((x + radius - self.lower) / self.step),
            )
            for i in range(lo_i, hi_i + 1):
                out.append(self.lower + i * self.step)
        if abs(self.upper - x) <= radius:
            out.append(self.upper)
        return out

    def nearest(self, x: object) -> mpq:
        """The grid point closest to x (ties toward the smaller point)."""
        x = parse_rational(x)
        if x <= self.lower:
            return self.lower
        if x >= self.upper:
            return self.upper
        i = math.floor((x - self.lower) / self.step)
        cands = [self.lower + i * self.step, self.upper]
        if i + 1 < self.interior_count:
            cands.append(self.lower + (i + 1) * self.step)
        return min(cands, key=lambda p: (abs(p - x), p))


@dataclass(frozen=True)
class Strategy:
    """Chosen action per decision state (0 for alarm-free states)."""

    actions: tuple

    def __post_init__(self):
        normalized = tuple(
            sorted((s, parse_rational(d)) for s, d in dict(self.actions).items())
        )
        object.__setattr__(self, "actions", normalized)
        object.__setattr__(self, "_map", dict(normalized))

    def __getitem__(self, state: str) -> mpq:
        return self._map[state]

    def __contains__(self, state: str) -> bool:
        return state in self._map

    def items(self):
        return iter(self.actions)

    def replace(self, state: str, d: object) -> "Strategy":
        if state not in self._map:
            raise NumericError(f"unknown decision state {state!r}")
        updated = dict(self.actions)
        updated[state] = d
        return Strategy(updated)

    def as_map(self) -> dict:
        return dict(self.actions)


@dataclass(frozen=True)
class GainBias:
    """Long-run average cost of a fixed strategy with its bias vector,
    exact rationals normalized by bias[reference] = 0."""

    gain: Rational
    bias: dict
    reference: str


# ---------------------------------------------------------------------------
# the decision-process view
# ---------------------------------------------------------------------------


class SemiMDPView:
    """Decision process induced by a model's epochs, with cached rational
    point kernels from a shared workspace.

    ``steps`` maps alarm names to grid steps; alarm-free states always get
    the singleton grid {0}.
    """

    def __init__(
        self,
        model: Model,
        info: Classification,
        workspace: KernelWorkspace,
        steps: Mapping[str, object],
    ):
        self.model = model
        self.info = info
        self.workspace = workspace
        self.states = info.decision_states
        self._alarm_of_state = {s: a for a, s in info.setting_state.items()}
        grids = {}
        for name, state in info.setting_state.items():
            if name not in steps:
                raise NumericError(f"no grid step for alarm {name!r}")
            alarm = model.alarm(name)
            grids[state] = GridSpec(alarm.lower, alarm.upper, steps[name])
        for state in info.off_states:
            grids[state] = GridSpec(0, 0, 0)
        self.grids = grids

    def grid(self, state: str) -> GridSpec:
        return self.grids[state]

    def alarm_name(self, state: str) -> Optional[str]:
        """The alarm whose timer this state sets, None for alarm-free."""
        return self._alarm_of_state.get(state)

    def kernel(self, state: str, d: object) -> PointKernel:
        """Point kernel of the action d in state; alarm-free states have a
        single action, so d is ignored there."""
        name = self._alarm_of_state.get(state)
        if name is None:
            return self.workspace.off(state)
        return self.workspace.point(name, d)

    def initial_strategy(self) -> Strategy:
        """Every alarm at its least parameter; the deterministic start."""
        return Strategy({s: g.lower for s, g in self.grids.items()})


# ---------------------------------------------------------------------------
# exact evaluation
# ---------------------------------------------------------------------------


def _strongly_connected(nodes: Sequence[str], succ: Mapping[str, list]) -> list[list[str]]:
    """Tarjan's algorithm, iteratively (nodes are few, but recursion limits
    are nobody's friend)."""
    index: dict = {}
    low: dict = {}
    on_stack: set = set()
    stack: list = []
    components: list[list[str]] = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        work = [(root, iter(succ[root]))]
        while work:
            node, it = work[-1]
            pushed = False
            for t in it:
                if t not in index:
                    index[t] = low[t] = counter
                    counter += 1
                    stack.append(t)
                    on_stack.add(t)
                    work.append((t, iter(succ[t])))
                    pushed = True
                    break
                if t in on_stack:
                    low[node] = min(low[node], index[t])
            if pushed:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    t = stack.pop()
                    on_stack.discard(t)
                    comp.append(t)
                    if t == node:
                        break
                components.append(comp)
    return components


def _recurrent_classes(states: Sequence[str], kernels: Mapping[str, PointKernel]) -> list:
    """Bottom strongly connected classes of the induced support graph."""
    succ = {
        s: sorted(t for t, p in kernels[s].transition.items() if p > 0)
        for s in states
    }
    bottoms = []
    for comp in _strongly_connected(states, succ):
        members = set(comp)
        if all(t in members for s in comp for t in succ[s]):
            bottoms.append(tuple(sorted(comp)))
    return sorted(bottoms)


def evaluate_strategy(
    view: SemiMDPView, strategy: Strategy, reference: Optional[str] = None
) -> GainBias:
    """Exact gain and bias of a fixed strategy.

    Solves the linear system  h(s) = C_s - g*Theta_s + sum Pi_s(t) h(t)
    together with h(reference) = 0; the induced chain must be unichain for
    the scalar gain to be meaningful, and is checked first.
    """
    states = view.states
    if reference is None:
        reference = min(states)
    elif reference not in states:
        raise NumericError(f"reference {reference!r} is not a decision state")
    kernels = {s: view.kernel(s, strategy[s]) for s in states}
    classes = _recurrent_classes(states, kernels)
    if len(classes) != 1:
        raise UnichainError(classes)

    n = len(states)
    idx = {s: i for i, s in enumerate(states)}
    rows = []
    rhs = []
    for s in states:
        k = kernels[s]
        row = [mpq(0)] * (n + 1)
        row[0] = k.theta
        row[1 + idx[s]] += 1
        for t, p in k.transition.items():
            row[1 + idx[t]] -= p
        rows.append(row)
        rhs.append(k.cost)
    anchor = [mpq(0)] * (n + 1)
    anchor[1 + idx[reference]] = mpq(1)
    rows.append(anchor)
    rhs.append(mpq(0))
    solution = solve_exact(rows, rhs)
    bias = {s: solution[1 + idx[s]] for s in states}
    return GainBias(gain=solution[0], bias=bias, reference=reference)


def ranking(view: SemiMDPView, state: str, d: object, gain: object, bias: Mapping) -> mpq:
    """Improvement value of action d in state: C - g*Theta + Pi . h."""
    k = view.kernel(state, d)
    value = k.cost - parse_rational(gain) * k.theta
    for t, p in k.transition.items():
        value += p * bias[t]
    return value


# ---------------------------------------------------------------------------
# explicit-enumeration policy iteration
# ---------------------------------------------------------------------------


def explicit_policy_iteration(
    view: SemiMDPView,
    grid_override: Optional[Mapping[str, Sequence]] = None,
    *,
    cap: int = 100_000,
    reference: Optional[str] = None,
    trace: Optional[list] = None,
) -> tuple[Strategy, GainBias]:
    """Policy iteration that enumerates every action on the grid.

    ``grid_override`` maps alarm names to explicit parameter lists for
    coarse cross-checks; without an override the view's certified grids
    are enumerated, which is refused above ``cap`` points per state (the
    certified grids exist to never be enumerated).  Ties in the action
    argmin keep the current choice if it attains the minimum and take the
    smallest parameter otherwise, so runs are deterministic.  ``trace``,
    if given, collects the gain of each iteration.
    """
    actions: dict[str, tuple] = {}
    for s in view.states:
        grid = view.grid(s)
        name = view.alarm_name(s)
        if grid_override is not None and name is not None and name in grid_override:
            pts = sorted({parse_rational(d) for d in grid_override[name]})
            if not pts:
                raise NumericError(f"empty override grid for alarm {name!r}")
            for d in pts:
                if not (grid.lower <= d <= grid.upper):
                    raise NumericError(
                        f"override action {d} outside [{grid.lower}, {grid.upper}]"
                        f" for alarm {name!r}"
                    )
            actions[s] = tuple(pts)
        else:
            if grid.count > cap:
                raise GridCapError(grid.count, cap)
            actions[s] = tuple(grid.points())

    strategy = Strategy({s: acts[0] for s, acts in actions.items()})
    while True:
        gb = evaluate_strategy(view, strategy, reference)
        if trace is not None:
            trace.append(gb.gain)
        updated = {}
        improved = False
        for s in view.states:
            values = [(ranking(view, s, d, gb.gain, gb.bias), d) for d in actions[s]]
            best = min(v for v, _ in values)
            current_value = next(v for v, d in values if d == strategy[s])
            if current_value == best:
                updated[s] = strategy[s]
            else:
                updated[s] = min(d for v, d in values if v == best)
                improved = True
        if not improved:
            return strategy, gb
        strategy = Strategy(updated)
