"""Bundled case studies: a disk-drive power manager and a server
maintenance model, both parameterized by queue capacity.

Each builder returns a fully uniformized :class:`~actmc.model.Model`
whose per-event rates have been folded into a common exit rate (the
maximum total exit rate over all states); the leftover mass becomes a
zero-cost self-loop.  Where a real self-loop (a rejected arrival, or a
metered arrival during an outage) coincides with that residual mass,
the two are merged into one self-loop whose impulse cost is the
probability-weighted average, which leaves the expected cost rate
unchanged.

``docs/maintenance-model.md`` records every reading decision behind the
maintenance topology; the adjacency it fixes is spot-checked by the
test suite against an independent hand transcription.
"""
from __future__ import annotations

from gmpy2 import mpq

from .model import Alarm, Model

__all__ = ["BUILDERS", "disk_drive", "maintenance"]

#: Free-parameter interval shared by every alarm in both case studies.
DELAY_LOWER = mpq(1, 10)
DELAY_UPPER = mpq(10)


def disk_drive(queue: int) -> Model:
    """Dynamic power management of a disk drive with an I/O queue.

    The drive is either active (power 4/time) or asleep (power 2/time)
    and holds at most ``queue`` pending I/O operations.  Requests arrive
    at rate 1.39 and complete, while active, at rate 12.5; an arrival
    into a full queue is rejected at cost 6, every other jump costs 1.
    Two Dirac alarms control the mode switches: ``sleep`` starts a timer
    d_s when the active queue drains, and ``wakeup`` starts a timer d_w
    when a request reaches the sleeping drive, firing into the active
    mode at an extra cost of 4.  Both delays range over [1/10, 10].
    """
    if queue < 1:
        raise ValueError("queue capacity must be at least 1")
    n = queue
    rate = mpq(1389, 100)  # common exit rate: 1.39 + 12.5
    arrive = mpq(139, 1389)
    complete = mpq(1250, 1389)
    active = [f"active_{i}" for i in range(n + 1)]
    asleep = [f"asleep_{i}" for i in range(n + 1)]

    transitions: dict = {}
    impulses: dict = {}
    for i in range(n + 1):
        row: dict = {}
        cost: dict = {}
        if i < n:
            row[active[i + 1]] = arrive
            cost[active[i + 1]] = mpq(1)
        else:
            row[active[n]] = arrive
            cost[active[n]] = mpq(6)
        if i > 0:
            row[active[i - 1]] = complete
            cost[active[i - 1]] = mpq(1)
        else:
            # Nothing to complete with an empty queue: residual self-loop.
            row[active[0]] = row.get(active[0], mpq(0)) + complete
        transitions[active[i]] = row
        impulses[active[i]] = cost

    for i in range(n + 1):
        row = {}
        cost = {}
        if i < n:
            row[asleep[i + 1]] = arrive
            cost[asleep[i + 1]] = mpq(1)
            row[asleep[i]] = complete
        else:
            # Rejection self-loop merged with the sleeping residual.
            row[asleep[n]] = mpq(1)
            cost[asleep[n]] = mpq(6) * arrive
        transitions[asleep[i]] = row
        impulses[asleep[i]] = cost

    rate_costs = {s: mpq(4) for s in active}
    rate_costs.update({s: mpq(2) for s in asleep})

    sleep = Alarm(
        name="sleep",
        family="dirac",
        lower=DELAY_LOWER,
        upper=DELAY_UPPER,
        enabled=frozenset({active[0]}),
        fire={active[0]: {asleep[0]: mpq(1)}},
        impulses={active[0]: {asleep[0]: mpq(1)}},
    )
    wakeup = Alarm(
        name="wakeup",
        family="dirac",
        lower=DELAY_LOWER,
        upper=DELAY_UPPER,
        enabled=frozenset(asleep[1:]),
        fire={asleep[i]: {active[i]: mpq(1)} for i in range(1, n + 1)},
        impulses={asleep[i]: {active[i]: mpq(4)} for i in range(1, n + 1)},
    )
    return Model(
        states=tuple(active + asleep),
        rate=rate,
        transitions=transitions,
        rate_costs=rate_costs,
        impulse_costs=impulses,
        alarms=(sleep, wakeup),
    )


def maintenance(queue: int) -> Model:
    """Preventive maintenance of a server that degrades and can fail.

    Normal operation is an M/M/1/``queue`` with arrivals at rate 2,
    completions at rate 3, and full-queue rejections at cost 6.  The
    server silently degrades at rate 1; a degraded server fails at rate
    1, dropping every queued job at cost 4 each.  A failure is reported
    at rate 3 and repaired in two exponential stages of rate 1, each of
    which can hit an error at rate 0.1; the ``repair_restart`` alarm
    (uniform on [d_q, d_q + 2]) then restarts the repair from its first
    stage.  The ``rejuvenate`` Dirac alarm arms whenever the server
    (re-)enters normal service and, after d_o time units, schedules a
    rejuvenation: the queue first drains, then a twice-as-fast copy of
    the repair process runs, restarted by the ``rejuv_restart`` alarm
    (uniform on [d_p, d_p + 2]).  Arrivals during any outage are lost at
    cost 1.  All three delays range over [1/10, 10]; costs are impulses
    only.
    """
    if queue < 1:
        raise ValueError("queue capacity must be at least 1")
    n = queue
    rate = mpq(6)  # common exit rate: arrive 2 + complete 3 + degrade/fail 1
    p_arrive = mpq(2, 6)
    p_complete = mpq(3, 6)
    p_degrade = mpq(1, 6)

    normal = [f"normal_{i}" for i in range(n + 1)]
    degraded = [f"degraded_{i}" for i in range(n + 1)]
    drain = [None] + [f"drain_{i}" for i in range(1, n + 1)]
    drain_deg = [None] + [f"drain_deg_{i}" for i in range(1, n + 1)]

    transitions: dict = {}
    impulses: dict = {}

    def queue_row(states, i, low_target, branch_target, branch_cost):
        """Arrive/complete dynamics shared by the four queue rows.

        ``low_target`` receives the completion mass at the lowest index
        (the residual self-loop for rows that include an empty queue, the
        first maintenance stage for the draining rows); ``branch_target``
        is where degradation (rate 1) leads from index i.
        """
        row: dict = {}
        cost: dict = {}
        if i < n:
            row[states[i + 1]] = p_arrive
        else:
            row[states[n]] = p_arrive
            cost[states[n]] = mpq(6)
        down = states[i - 1] if i > min(j for j, s in enumerate(states) if s) else low_target
        row[down] = row.get(down, mpq(0)) + p_complete
        row[branch_target] = p_degrade
        if branch_cost:
            cost[branch_target] = branch_cost
        transitions[states[i]] = row
        impulses[states[i]] = cost

    for i in range(n + 1):
        queue_row(normal, i, normal[0], degraded[i], None)
        queue_row(degraded, i, degraded[0], "failed", mpq(4 * i) if i else None)
    for i in range(1, n + 1):
        queue_row(drain, i, "rejuv_1", drain_deg[i], None)
        queue_row(drain_deg, i, "rejuv_1", "failed", mpq(4 * i))

    def outage(state, row, weighted_self):
        """A maintenance-process state with a rate-2 cost-1 arrival loop.

        ``weighted_self`` is that loop plus the uniformization residual,
        merged; its impulse is the average cost that keeps 2 (rate) x 1
        (cost) per unit time exact.
        """
        total = sum(row.values()) + weighted_self
        assert total == 1, state
        transitions[state] = dict(row) | {state: weighted_self}
        impulses[state] = {state: mpq(2, 6) / weighted_self}

    outage("init", {normal[0]: mpq(3, 6)}, mpq(3, 6))
    outage("rejuv_1", {"rejuv_2": mpq(2, 6), "rejuv_err": mpq(1, 30)}, mpq(19, 30))
    outage("rejuv_2", {"init": mpq(2, 6), "rejuv_err": mpq(1, 30)}, mpq(19, 30))
    outage("rejuv_err", {}, mpq(1))
    outage("failed", {"repair_1": mpq(3, 6)}, mpq(3, 6))
    outage("repair_1", {"repair_2": mpq(1, 6), "repair_err": mpq(1, 60)}, mpq(49, 60))
    outage("repair_2", {"init": mpq(1, 6), "repair_err": mpq(1, 60)}, mpq(49, 60))
    outage("repair_err", {}, mpq(1))

    watch = normal + degraded
    rejuvenate = Alarm(
        name="rejuvenate",
        family="dirac",
        lower=DELAY_LOWER,
        upper=DELAY_UPPER,
        enabled=frozenset(watch),
        fire={
            s: {("rejuv_1" if i == 0 else (drain[i] if s in normal else drain_deg[i])): mpq(1)}
            for row_states in (normal, degraded)
            for i, s in enumerate(row_states)
        },
        impulses={},
    )

    def restart(name, stage_1, stage_2, err):
        return Alarm(
            name=name,
            family="uniform-shift",
            lower=DELAY_LOWER,
            upper=DELAY_UPPER,
            window=mpq(2),
            enabled=frozenset({stage_1, stage_2, err}),
            fire={s: {stage_1: mpq(1)} for s in (stage_1, stage_2, err)},
            impulses={},
        )

    states = (
        ["init"]
        + normal
        + degraded
        + drain[1:]
        + drain_deg[1:]
        + ["rejuv_1", "rejuv_2", "rejuv_err", "failed", "repair_1", "repair_2", "repair_err"]
    )
    return Model(
        states=tuple(states),
        rate=rate,
        transitions=transitions,
        rate_costs={},
        impulse_costs=impulses,
        alarms=(
            rejuvenate,
            restart("rejuv_restart", "rejuv_1", "rejuv_2", "rejuv_err"),
            restart("repair_restart", "repair_1", "repair_2", "repair_err"),
        ),
    )


BUILDERS = {"disk-drive": disk_drive, "maintenance": maintenance}
