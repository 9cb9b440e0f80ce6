"""Core model types: uniformized Markov chains with generally-timed alarms.

A model couples a uniformized continuous-time chain (common exit rate,
one-step matrix P, rate costs, impulse costs) with a set of *alarms*.
Each alarm owns a disjoint set of enabling states, a firing matrix over
those states, and a delay distribution family whose single free parameter
ranges over a rational interval [lower, upper] with lower > 0.

The solver additionally requires alarms to be *localized*: every alarm
has exactly one state in which its timer can be freshly set (entered from
outside the enabling set, or reached by any alarm's firing).
:func:`classify` computes those setting states and reports violations by
alarm name.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from gmpy2 import mpq

from .numerics import NumericError, Rational, parse_rational

__all__ = [
    "FAMILIES",
    "Alarm",
    "Classification",
    "Model",
    "ModelError",
    "classify",
    "validate",
]

FAMILIES = ("dirac", "uniform", "uniform-shift", "weibull")


class ModelError(ValueError):
    """Raised by :func:`validate` / :func:`classify` with all problems found."""

    def __init__(self, errors: Iterable[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def _rational_scalar(value, what: str):
    try:
        return parse_rational(value)
    except NumericError as exc:
        raise ModelError([f"{what}: {exc}"]) from exc


def _rational_map(entries, what: str) -> dict:
    """Parse a mapping of rationals, dropping exact zeros (no transition,
    no cost) so equal models compare equal regardless of explicit zeros."""
    out = {}
    for key, value in dict(entries).items():
        try:
            parsed = parse_rational(value)
        except NumericError as exc:
            raise ModelError([f"{what}[{key}]: {exc}"]) from exc
        if parsed != 0:
            out[key] = parsed
    return out


@dataclass(frozen=True)
class Alarm:
    """One alarm: a delay family with a free parameter and a firing matrix.

    ``fire`` maps each enabling state to a distribution over successor
    states; states outside ``enabled`` implicitly keep their state when
    the alarm is not theirs to fire.  ``impulses`` carries the costs of
    firing transitions.  ``window`` is the fixed width of the
    uniform-shift family; ``shape`` the integer exponent of the Weibull
    family.
    """

    name: str
    family: str
    lower: Rational
    upper: Rational
    enabled: frozenset
    fire: dict
    impulses: dict
    window: Optional[Rational] = None
    shape: Optional[int] = None

    def __post_init__(self):
        tag = f"alarm {self.name!r}"
        object.__setattr__(self, "lower", _rational_scalar(self.lower, f"{tag} lower"))
        object.__setattr__(self, "upper", _rational_scalar(self.upper, f"{tag} upper"))
        object.__setattr__(self, "enabled", frozenset(self.enabled))
        object.__setattr__(
            self,
            "fire",
            {s: _rational_map(row, f"alarm {self.name!r} fire[{s!r}]") for s, row in dict(self.fire).items()},
        )
        object.__setattr__(
            self,
            "impulses",
            {s: _rational_map(row, f"alarm {self.name!r} impulses[{s!r}]") for s, row in dict(self.impulses).items()},
        )
        if self.window is not None:
            object.__setattr__(self, "window", _rational_scalar(self.window, f"{tag} window"))

    def impulse(self, source: str, target: str) -> mpq:
        return self.impulses.get(source, {}).get(target, mpq(0))


@dataclass(frozen=True)
class Model:
    """A uniformized chain with alarms.

    ``transitions[s][t]`` is the one-step probability P(s, t) under the
    common exit rate; ``rate_costs[s]`` the cost accrued per unit time in
    s; ``impulse_costs[s][t]`` the cost of the jump s -> t.
    """

    states: tuple
    rate: Rational
    transitions: dict
    rate_costs: dict
    impulse_costs: dict
    alarms: tuple

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "rate", _rational_scalar(self.rate, "rate"))
        object.__setattr__(
            self,
            "transitions",
            {s: _rational_map(row, f"transitions[{s!r}]") for s, row in dict(self.transitions).items()},
        )
        object.__setattr__(self, "rate_costs", _rational_map(self.rate_costs, "rate_costs"))
        object.__setattr__(
            self,
            "impulse_costs",
            {s: _rational_map(row, f"impulse_costs[{s!r}]") for s, row in dict(self.impulse_costs).items()},
        )
        object.__setattr__(self, "alarms", tuple(self.alarms))

    def alarm(self, name: str) -> Alarm:
        for a in self.alarms:
            if a.name == name:
                return a
        raise KeyError(name)

    def transition(self, source: str, target: str) -> mpq:
        return self.transitions.get(source, {}).get(target, mpq(0))

    def impulse(self, source: str, target: str) -> mpq:
        return self.impulse_costs.get(source, {}).get(target, mpq(0))


def validate(model: Model) -> None:
    """Check structural well-formedness; raises :class:`ModelError` listing
    every problem found."""
    errors: list[str] = []
    states = model.states
    if not states:
        errors.append("model has no states")
    seen = set()
    for s in states:
        if s in seen:
            errors.append(f"duplicate state name {s!r}")
        seen.add(s)
    known = set(states)

    if model.rate <= 0:
        errors.append(f"uniformization rate must be positive, got {model.rate}")

    for s in states:
        row = model.transitions.get(s)
        if row is None:
            errors.append(f"state {s!r} has no transition row")
            continue
        _check_distribution(row, known, f"transitions[{s!r}]", errors)
    for s in model.transitions:
        if s not in known:
            errors.append(f"transition row for unknown state {s!r}")

    for s, c in model.rate_costs.items():
        if s not in known:
            errors.append(f"rate cost for unknown state {s!r}")
        elif c < 0:
            errors.append(f"rate_costs[{s!r}] must be nonnegative, got {c}")
    for s, row in model.impulse_costs.items():
        if s not in known:
            errors.append(f"impulse costs for unknown state {s!r}")
            continue
        for t, c in row.items():
            if t not in known:
                errors.append(f"impulse cost {s!r} -> unknown state {t!r}")
            elif c < 0:
                errors.append(f"impulse_costs[{s!r}][{t!r}] must be nonnegative, got {c}")
            elif model.transition(s, t) == 0:
                errors.append(
                    f"impulse cost on impossible transition {s!r} -> {t!r} (P is zero there)"
                )

    names = set()
    enabled_owner: dict[str, str] = {}
    for alarm in model.alarms:
        tag = f"alarm {alarm.name!r}"
        if alarm.name in names:
            errors.append(f"duplicate alarm name {alarm.name!r}")
        names.add(alarm.name)
        if alarm.family not in FAMILIES:
            errors.append(f"{tag}: unknown family {alarm.family!r} (expected one of {', '.join(FAMILIES)})")
        if alarm.lower <= 0:
            errors.append(f"{tag}: parameter lower bound must be positive, got {alarm.lower}")
        if alarm.upper < alarm.lower:
            errors.append(f"{tag}: parameter interval is empty ({alarm.lower} > {alarm.upper})")
        if alarm.family == "uniform-shift":
            if alarm.window is None or alarm.window <= 0:
                errors.append(f"{tag}: uniform-shift needs a positive window, got {alarm.window}")
        elif alarm.window is not None:
            errors.append(f"{tag}: window only applies to the uniform-shift family")
        if alarm.family == "weibull":
            if not isinstance(alarm.shape, int) or isinstance(alarm.shape, bool) or alarm.shape < 1:
                errors.append(f"{tag}: weibull needs an integer shape >= 1, got {alarm.shape!r}")
        elif alarm.shape is not None:
            errors.append(f"{tag}: shape only applies to the weibull family")
        if not alarm.enabled:
            errors.append(f"{tag}: enabling set is empty")
        for s in alarm.enabled:
            if s not in known:
                errors.append(f"{tag}: enabling set contains unknown state {s!r}")
                continue
            if s in enabled_owner:
                errors.append(
                    f"state {s!r} is enabled for both {enabled_owner[s]!r} and {alarm.name!r};"
                    " enabling sets must be disjoint"
                )
            else:
                enabled_owner[s] = alarm.name
            row = alarm.fire.get(s)
            if row is None:
                errors.append(f"{tag}: missing firing row for enabling state {s!r}")
            else:
                _check_distribution(row, known, f"{tag} fire[{s!r}]", errors)
        for s in alarm.fire:
            if s not in alarm.enabled:
                errors.append(f"{tag}: firing row for state {s!r} outside its enabling set")
        for s, row in alarm.impulses.items():
            if s not in alarm.enabled:
                errors.append(f"{tag}: impulse costs for state {s!r} outside its enabling set")
                continue
            for t, c in row.items():
                if c < 0:
                    errors.append(f"{tag}: impulses[{s!r}][{t!r}] must be nonnegative, got {c}")
                elif alarm.fire.get(s, {}).get(t, mpq(0)) == 0:
                    errors.append(
                        f"{tag}: impulse cost on impossible firing {s!r} -> {t!r}"
                    )

    if errors:
        raise ModelError(errors)


def _check_distribution(row: dict, known: set, what: str, errors: list) -> None:
    total = mpq(0)
    for t, p in row.items():
        if t not in known:
            errors.append(f"{what}: unknown target state {t!r}")
        if p < 0:
            errors.append(f"{what}: negative probability {p} for target {t!r}")
        total += p
    if total != 1:
        errors.append(f"{what}: probabilities sum to {total}, expected 1")


@dataclass(frozen=True)
class Classification:
    """Structural classification of a validated model.

    ``alarm_of`` maps each state to the alarm enabled there (or None);
    ``setting_state`` gives each alarm's unique timer-setting state;
    ``off_states`` are states with no alarm enabled; ``decision_states``
    are setting states followed by off states, in model order.
    """

    alarm_of: dict
    setting_state: dict
    off_states: tuple
    decision_states: tuple


def classify(model: Model) -> Classification:
    """Identify each alarm's setting state, or raise :class:`ModelError`.

    A state s enabled for alarm a is *setting* if some transition can
    start a fresh timer there: a chain transition from outside the
    enabling set, or any alarm's firing transition (from any alarm,
    including a itself) landing in s.
    """
    validate(model)
    alarm_of: dict = {}
    for alarm in model.alarms:
        for s in alarm.enabled:
            alarm_of[s] = alarm.name
    for s in model.states:
        alarm_of.setdefault(s, None)

    errors: list[str] = []
    setting_state: dict = {}
    for alarm in model.alarms:
        setting = []
        for s in model.states:
            if s not in alarm.enabled:
                continue
            entered = any(
                model.transition(src, s) > 0
                for src in model.states
                if src not in alarm.enabled
            ) or any(
                row.get(s, mpq(0)) > 0
                for other in model.alarms
                for row in other.fire.values()
            )
            if entered:
                setting.append(s)
        if len(setting) == 1:
            setting_state[alarm.name] = setting[0]
        elif not setting:
            errors.append(
                f"alarm {alarm.name!r} has no setting state: its timer can never be started"
            )
        else:
            errors.append(
                f"alarm {alarm.name!r} has {len(setting)} setting states"
                f" ({', '.join(repr(s) for s in setting)}); the solver requires exactly one"
            )
    if errors:
        raise ModelError(errors)

    off_states = tuple(s for s in model.states if alarm_of[s] is None)
    setting_in_order = tuple(s for s in model.states if s in set(setting_state.values()))
    return Classification(
        alarm_of=alarm_of,
        setting_state=setting_state,
        off_states=off_states,
        decision_states=setting_in_order + off_states,
    )
