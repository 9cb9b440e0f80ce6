"""Shared example models and a random-model generator for tests."""
from __future__ import annotations

import random
from fractions import Fraction

from gmpy2 import mpq

from actmc.model import Alarm, Model

FAMILIES = ("dirac", "uniform", "uniform-shift", "weibull")


def t1() -> Model:
    """Two states, guaranteed self-loop under the alarm: the timer always
    fires, so the epoch from ``s`` has duration d, cost d, successor ``t``
    exactly, and the long-run average cost under delay d is d/(d+1)."""
    return Model(
        states=("s", "t"),
        rate=mpq(1),
        transitions={"s": {"s": mpq(1)}, "t": {"s": mpq(1)}},
        rate_costs={"s": mpq(1)},
        impulse_costs={},
        alarms=(
            Alarm(
                name="a",
                family="dirac",
                lower=mpq(1, 2),
                upper=mpq(2),
                enabled=frozenset({"s"}),
                fire={"s": {"t": mpq(1)}},
                impulses={},
            ),
        ),
    )


def t1_variant(family: str, lower=mpq(1, 2), upper=mpq(2), **alarm_kw) -> Model:
    """The t1 model with a different delay family on its alarm.  The chain
    never escapes, so the epoch duration is exactly the timer draw."""
    base = t1()
    a = base.alarms[0]
    return Model(
        states=base.states,
        rate=base.rate,
        transitions=base.transitions,
        rate_costs=base.rate_costs,
        impulse_costs=base.impulse_costs,
        alarms=(
            Alarm(
                name=a.name,
                family=family,
                lower=mpq(lower),
                upper=mpq(upper),
                enabled=a.enabled,
                fire=a.fire,
                impulses=a.impulses,
                **alarm_kw,
            ),
        ),
    )


def three_state(
    family: str = "dirac",
    lower=mpq(1, 4),
    upper=mpq(3),
    **alarm_kw,
) -> Model:
    """Three states with a two-state enabling set {x, y} and setting state
    x.  The live dynamics restricted to {x, y} is the symmetric 2x2 chain
    with generator [[-3/2, 1], [1, -3/2]], which the closed forms in
    test_kernels exploit."""
    return Model(
        states=("x", "y", "z"),
        rate=mpq(2),
        transitions={
            "x": {"x": mpq(1, 4), "y": mpq(1, 2), "z": mpq(1, 4)},
            "y": {"x": mpq(1, 2), "y": mpq(1, 4), "z": mpq(1, 4)},
            "z": {"x": mpq(1)},
        },
        rate_costs={"x": mpq(1), "y": mpq(2)},
        impulse_costs={"x": {"y": mpq(1, 2)}, "y": {"z": mpq(3)}},
        alarms=(
            Alarm(
                name="a",
                family=family,
                lower=mpq(lower),
                upper=mpq(upper),
                enabled=frozenset({"x", "y"}),
                fire={"x": {"z": mpq(1)}, "y": {"x": mpq(2, 3), "z": mpq(1, 3)}},
                impulses={"x": {"z": mpq(2)}},
                **alarm_kw,
            ),
        ),
    )


def _distribution(rng: random.Random, targets: list, den: int = 8) -> dict:
    """Random rational distribution over a nonempty target list; every
    listed target gets positive mass."""
    weights = [rng.randint(1, den) for _ in targets]
    total = sum(weights)
    return {t: mpq(w, total) for t, w in zip(targets, weights)}


def random_localized_model(rng: random.Random, family: str | None = None) -> Model:
    """A random strongly-connected model with one alarm and exactly one
    setting state.

    Layout: states q0..q_{n-1}; the enabling set is a prefix {q0..q_{m-1}}
    with q0 the setting state.  Rows of states outside the set always give
    mass to q0 and never to other enabled states, and firing rows target
    only q0 or off states, so q0 is the unique setting state and the
    induced decision process is unichain.
    """
    family = family or rng.choice(FAMILIES)
    n = rng.randint(2, 5)
    m = rng.randint(1, n - 1)
    states = tuple(f"q{i}" for i in range(n))
    enabled = set(states[:m])
    off = list(states[m:])

    transitions = {}
    for i, s in enumerate(states):
        if s in enabled:
            targets = sorted(rng.sample(states, rng.randint(1, n)))
            transitions[s] = _distribution(rng, targets)
        else:
            # escape rows feed q0 and only non-enabled states otherwise
            pool = ["q0"] + off
            targets = sorted(set(["q0"] + rng.sample(pool, rng.randint(1, len(pool)))))
            transitions[s] = _distribution(rng, targets)

    rate = mpq(rng.randint(1, 4))
    rate_costs = {
        s: mpq(rng.randint(0, 8), rng.randint(1, 4))
        for s in states
        if rng.random() < 0.7
    }
    impulse_costs = {}
    for s in states:
        row = {
            t: mpq(rng.randint(1, 6), rng.randint(1, 3))
            for t in transitions[s]
            if rng.random() < 0.4
        }
        if row:
            impulse_costs[s] = row

    fire = {}
    fire_impulses = {}
    fire_pool = ["q0"] + off
    for s in sorted(enabled):
        targets = sorted(set(rng.sample(fire_pool, rng.randint(1, len(fire_pool)))))
        fire[s] = _distribution(rng, targets)
        row = {
            t: mpq(rng.randint(1, 4), rng.randint(1, 2))
            for t in fire[s]
            if rng.random() < 0.4
        }
        if row:
            fire_impulses[s] = row

    window = None
    shape = None
    if family == "weibull":
        # keep the polynomialization cheap: cutoff * upper stays small
        lower = mpq(rng.choice([Fraction(1, 2), Fraction(3, 4), Fraction(1)]))
        upper = lower + mpq(rng.choice([Fraction(1, 2), Fraction(1)]))
        shape = rng.choice([1, 2])
    else:
        lower = mpq(rng.randint(1, 4), 4)
        upper = lower + mpq(rng.randint(1, 4), 2)
        if family == "uniform-shift":
            window = mpq(rng.randint(1, 4), 4)

    alarm = Alarm(
        name="a",
        family=family,
        lower=lower,
        upper=upper,
        enabled=frozenset(enabled),
        fire=fire,
        impulses=fire_impulses,
        window=window,
        shape=shape,
    )
    return Model(
        states=states,
        rate=rate,
        transitions=transitions,
        rate_costs=rate_costs,
        impulse_costs=impulse_costs,
        alarms=(alarm,),
    )
