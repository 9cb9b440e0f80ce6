"""Monte-Carlo simulation of alarm models.

This module is deliberately independent of the analytic kernel machinery:
it implements the timer semantics directly (event loop over uniformized
jumps, one pending timer thanks to disjoint enabling sets) and serves as
the statistical oracle the analytic results are tested against.

Two entry points:

* :func:`simulate` - long-run average cost over a time horizon, repeated
  across replications with independent streams; the standard error is
  estimated across replications.
* :func:`epoch_samples` - vectorized sampling of single decision epochs
  (from an alarm's setting state until the alarm resolves), yielding
  empirical successor distributions, durations, and costs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .model import Alarm, Model, ModelError, classify
from .numerics import parse_rational

__all__ = ["SimulationResult", "EpochSamples", "simulate", "epoch_samples"]


@dataclass(frozen=True)
class SimulationResult:
    """Cross-replication estimate of the long-run average cost."""

    mean: float
    se: float
    replications: tuple
    events: int

    def within(self, value: float, sigmas: float = 3.0) -> bool:
        return abs(self.mean - float(value)) <= sigmas * self.se


@dataclass(frozen=True)
class EpochSamples:
    """Per-epoch outcomes: successor state indices (into ``states``),
    epoch durations, and epoch costs."""

    states: tuple
    successors: np.ndarray
    durations: np.ndarray
    costs: np.ndarray

    def successor_frequency(self, state: str) -> float:
        idx = self.states.index(state)
        return float(np.mean(self.successors == idx))

    def successor_se(self, state: str) -> float:
        p = self.successor_frequency(state)
        return float(np.sqrt(p * (1 - p) / len(self.successors)))

    @property
    def mean_duration(self) -> float:
        return float(np.mean(self.durations))

    @property
    def duration_se(self) -> float:
        return float(np.std(self.durations, ddof=1) / np.sqrt(len(self.durations)))

    @property
    def mean_cost(self) -> float:
        return float(np.mean(self.costs))

    @property
    def cost_se(self) -> float:
        return float(np.std(self.costs, ddof=1) / np.sqrt(len(self.costs)))


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(stream,))))


def _draw_delays(alarm: Alarm, d: float, rng: np.random.Generator, size=None):
    if alarm.family == "dirac":
        return d if size is None else np.full(size, d)
    if alarm.family == "uniform":
        return rng.uniform(0.0, d, size=size)
    if alarm.family == "uniform-shift":
        return rng.uniform(d, d + float(alarm.window), size=size)
    if alarm.family == "weibull":
        return rng.weibull(alarm.shape, size=size) / d
    raise ModelError([f"unknown delay family {alarm.family!r}"])


class _Tables:
    """Float lookup tables for fast sampling."""

    def __init__(self, model: Model):
        self.states = tuple(model.states)
        self.index = {s: i for i, s in enumerate(self.states)}
        n = len(self.states)
        self.rate = float(model.rate)
        self.rate_cost = np.array([float(model.rate_costs.get(s, 0)) for s in self.states])
        self.p_targets: list[np.ndarray] = []
        self.p_cum: list[np.ndarray] = []
        self.p_impulse: list[np.ndarray] = []
        for s in self.states:
            row = model.transitions[s]
            targets = sorted(row, key=self.index.__getitem__)
            self.p_targets.append(np.array([self.index[t] for t in targets], dtype=np.int64))
            self.p_cum.append(np.cumsum([float(row[t]) for t in targets]))
            self.p_impulse.append(np.array([float(model.impulse(s, t)) for t in targets]))
        self.alarm_of = np.full(n, -1, dtype=np.int64)
        self.fire_targets: dict[int, np.ndarray] = {}
        self.fire_cum: dict[int, np.ndarray] = {}
        self.fire_impulse: dict[int, np.ndarray] = {}
        for ai, alarm in enumerate(model.alarms):
            for s in alarm.enabled:
                si = self.index[s]
                self.alarm_of[si] = ai
                row = alarm.fire[s]
                targets = sorted(row, key=self.index.__getitem__)
                self.fire_targets[si] = np.array([self.index[t] for t in targets], dtype=np.int64)
                self.fire_cum[si] = np.cumsum([float(row[t]) for t in targets])
                self.fire_impulse[si] = np.array([float(alarm.impulse(s, t)) for t in targets])

    def sample_jump(self, si: int, u: float) -> tuple[int, float]:
        k = int(np.searchsorted(self.p_cum[si], u, side="right"))
        k = min(k, len(self.p_cum[si]) - 1)
        return int(self.p_targets[si][k]), float(self.p_impulse[si][k])

    def sample_fire(self, si: int, u: float) -> tuple[int, float]:
        k = int(np.searchsorted(self.fire_cum[si], u, side="right"))
        k = min(k, len(self.fire_cum[si]) - 1)
        return int(self.fire_targets[si][k]), float(self.fire_impulse[si][k])


def simulate(
    model: Model,
    delays: Mapping[str, object],
    horizon: float,
    replications: int = 10,
    seed: int = 0,
    start: Optional[str] = None,
) -> SimulationResult:
    """Estimate the long-run average cost under fixed alarm parameters.

    ``delays`` maps alarm names to the chosen parameter value.  Each
    replication runs an independent event loop to the time horizon; the
    reported standard error is computed across replication means.
    """
    classify(model)  # localized + valid, and fail early with good messages
    for alarm in model.alarms:
        if alarm.name not in delays:
            raise ModelError([f"no delay value given for alarm {alarm.name!r}"])
        d = parse_rational(delays[alarm.name])
        if not (alarm.lower <= d <= alarm.upper):
            raise ModelError(
                [
                    f"delay {d} for alarm {alarm.name!r} is outside"
                    f" [{alarm.lower}, {alarm.upper}]"
                ]
            )
    if replications < 2:
        raise ModelError(["need at least 2 replications for a standard error"])
    tables = _Tables(model)
    dvals = [float(parse_rational(delays[a.name])) for a in model.alarms]
    start_idx = tables.index[start] if start is not None else 0

    means = []
    events = 0
    for rep in range(replications):
        rng = _rng(seed, rep)
        cost, n = _run_one(model, tables, dvals, horizon, rng, start_idx)
        means.append(cost / horizon)
        events += n
    arr = np.array(means)
    return SimulationResult(
        mean=float(arr.mean()),
        se=float(arr.std(ddof=1) / np.sqrt(replications)),
        replications=tuple(means),
        events=events,
    )


def _run_one(
    model: Model,
    tables: _Tables,
    dvals: list,
    horizon: float,
    rng: np.random.Generator,
    start_idx: int,
) -> tuple[float, int]:
    si = start_idx
    ai = int(tables.alarm_of[si])
    now = 0.0
    cost = 0.0
    events = 0
    # remaining time on the active alarm's timer; one suffices because
    # enabling sets are disjoint
    pending = float(_draw_delays(model.alarms[ai], dvals[ai], rng)) if ai >= 0 else np.inf
    while now < horizon:
        dt = rng.exponential(1.0 / tables.rate)
        fired = pending <= dt
        step = pending if fired else dt
        if now + step >= horizon:
            cost += tables.rate_cost[si] * (horizon - now)
            break
        cost += tables.rate_cost[si] * step
        now += step
        events += 1
        u = rng.random()
        if fired:
            ti, imp = tables.sample_fire(si, u)
        else:
            ti, imp = tables.sample_jump(si, u)
            pending -= step
        cost += imp
        next_ai = int(tables.alarm_of[ti])
        if next_ai < 0:
            pending = np.inf
        elif fired or next_ai != ai:
            # fresh timer: entered the enabling set from outside, or
            # arrived by an alarm transition (even back into the same set)
            pending = float(_draw_delays(model.alarms[next_ai], dvals[next_ai], rng))
        si, ai = ti, next_ai
    return cost, events


def epoch_samples(
    model: Model,
    alarm_name: str,
    delay: object,
    count: int = 100_000,
    seed: int = 0,
) -> EpochSamples:
    """Sample decision epochs for one alarm from its setting state.

    Each epoch starts in the alarm's setting state with a fresh timer
    drawn from the delay distribution at parameter ``delay`` and runs
    until the alarm resolves: the timer fires (jump by the firing matrix)
    or the chain escapes the enabling set.  Returns the successor state,
    duration, and accumulated cost of each epoch.
    """
    info = classify(model)
    alarm = model.alarm(alarm_name)
    d = float(parse_rational(delay))
    tables = _Tables(model)
    start = tables.index[info.setting_state[alarm_name]]
    in_set = np.zeros(len(tables.states), dtype=bool)
    for s in alarm.enabled:
        in_set[tables.index[s]] = True

    rng = _rng(seed, 0)
    eta = np.asarray(_draw_delays(alarm, d, rng, size=count), dtype=np.float64)
    cur = np.full(count, start, dtype=np.int64)
    t = np.zeros(count)
    cost = np.zeros(count)
    duration = np.zeros(count)
    alive = np.ones(count, dtype=bool)
    rate = tables.rate

    while alive.any():
        idx = np.flatnonzero(alive)
        dt = rng.exponential(1.0 / rate, size=len(idx))
        u = rng.random(len(idx))
        t_next = t[idx] + dt
        fires = t_next >= eta[idx]

        fire_idx = idx[fires]
        if len(fire_idx):
            sojourn = eta[fire_idx] - t[fire_idx]
            src = cur[fire_idx]  # frozen: cur mutates inside the loop
            cost[fire_idx] += tables.rate_cost[src] * sojourn
            duration[fire_idx] = eta[fire_idx]
            uu = u[fires]
            for si in np.unique(src):
                mask = src == si
                rows = fire_idx[mask]
                ks = np.searchsorted(tables.fire_cum[si], uu[mask], side="right")
                ks = np.minimum(ks, len(tables.fire_cum[si]) - 1)
                cur[rows] = tables.fire_targets[si][ks]
                cost[rows] += tables.fire_impulse[si][ks]
            alive[fire_idx] = False

        move_idx = idx[~fires]
        if len(move_idx):
            dtm = dt[~fires]
            src = cur[move_idx]  # frozen: cur mutates inside the loop
            cost[move_idx] += tables.rate_cost[src] * dtm
            uu = u[~fires]
            for si in np.unique(src):
                mask = src == si
                rows = move_idx[mask]
                ks = np.searchsorted(tables.p_cum[si], uu[mask], side="right")
                ks = np.minimum(ks, len(tables.p_cum[si]) - 1)
                cur[rows] = tables.p_targets[si][ks]
                cost[rows] += tables.p_impulse[si][ks]
            t[move_idx] += dtm
            escaped = move_idx[~in_set[cur[move_idx]]]
            duration[escaped] = t[escaped]
            alive[escaped] = False

    return EpochSamples(
        states=tables.states,
        successors=cur,
        durations=duration,
        costs=cost,
    )
