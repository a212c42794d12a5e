"""Non-preemptive multi-query scheduling with cost-bounded minimum batch sizes.

Every query is cut into batches of at least ``min_batch_size`` tuples, chosen
so the total batched cost stays within ``(1 + rsf)`` times the single-batch
cost and no batch runs longer than ``cmax``.  Whenever the processor is free
the scheduler picks one ready query (EDF, LLF, SJF or round robin) and runs
one of its batches to completion.  The final aggregation of a query is run
right after its last batch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, NamedTuple, Sequence

from .arrival import ArrivalProfile, estimate_total_tuples
from .cost_model import (
    batched_cost,
    estimate_tuples_processed,
    eval_agg_cost,
    eval_cost,
    num_batches,
)
from .errors import CmaxTooSmall
from .simulator import EventKind, SimTrace
from .single_query import Query
from .units import SECOND

log = logging.getLogger(__name__)


class Policy(str, Enum):
    EDF = "edf"
    LLF = "llf"
    SJF = "sjf"
    RR = "rr"


class RateMode(str, Enum):
    FIXED_KNOWN_TOTAL = "fixed_known_total"
    VARIABLE_KNOWN_TOTAL = "variable_known_total"
    VARIABLE_ESTIMATED_TOTAL = "variable_estimated_total"

    @property
    def variable(self) -> bool:
        return self is not RateMode.FIXED_KNOWN_TOTAL


class Status(str, Enum):
    WAITING = "waiting"
    READY = "ready"
    DONE = "done"


@dataclass(frozen=True)
class SchedulerConfig:
    rsf: Fraction = Fraction(1, 2)
    cmax: int = 30 * SECOND
    policy: Policy = Policy.LLF
    rate_mode: RateMode = RateMode.FIXED_KNOWN_TOTAL
    greedy_batch: bool = True
    strict_polling: bool = False
    paced_maturity: bool = False
    processors: int = 1

    def __post_init__(self):
        object.__setattr__(self, "rsf", Fraction(self.rsf))
        object.__setattr__(self, "policy", Policy(self.policy))
        object.__setattr__(self, "rate_mode", RateMode(self.rate_mode))
        if self.cmax <= 0:
            raise ValueError("cmax must be positive")
        if self.rsf < 0:
            raise ValueError("rsf must be non-negative")
        if self.processors != 1:
            raise ValueError("only a single processor is modelled")


class MinBatch(NamedTuple):
    size: int
    within_budget: bool


def total_batched_cost(q: Query, total: int, batch_size: int) -> int:
    """Cost of all tuples in batches of ``batch_size`` including the final aggregation."""
    return batched_cost(q.cost, total, batch_size) + eval_agg_cost(q.agg, num_batches(total, batch_size))


def find_min_batch_size(q: Query, rsf, cmax: int, total: int | None = None) -> MinBatch:
    """Smallest batch size whose batched cost fits the budget and whose batch fits C_max.

    Falls back to the largest size that fits C_max (``within_budget=False``)
    when the budget cannot be met.
    """
    total = q.total if total is None else total
    if total < 1:
        raise ValueError("a query needs at least one tuple to size its batches")
    cap = estimate_tuples_processed(q.cost, cmax, limit=total)
    if cap == 0:
        raise CmaxTooSmall(f"{q.query_id}: one tuple costs {eval_cost(q.cost, 1)} > C_max {cmax}")
    budget = (1 + Fraction(rsf)) * eval_cost(q.cost, total)
    floor = min(max(1, 2 * q.agg.num_groups), total)
    for x in range(floor, cap + 1):
        if total_batched_cost(q, total, x) <= budget:
            return MinBatch(x, True)
    return MinBatch(cap, False)


@dataclass
class DynamicQueryState:
    query: Query
    actual: ArrivalProfile
    arrival_time: int
    min_batch_size: int
    within_budget: bool = True
    processed: int = 0
    batches_done: int = 0
    projected_total: int = 0
    est_maturity: int = 0
    status: Status = Status.WAITING
    removed: bool = False
    completion: int | None = None
    last_start: int | None = None

    @property
    def query_id(self) -> str:
        return self.query.query_id

    @property
    def deadline(self) -> int:
        return self.query.deadline

    @property
    def finished(self) -> bool:
        return self.status is Status.DONE or self.removed


def compute_laxity(state: DynamicQueryState, now: int) -> int:
    """Deadline minus now minus the cost of finishing the query in min-batches."""
    q = state.query
    pending = max(0, state.projected_total - state.processed)
    x = state.min_batch_size
    remaining = batched_cost(q.cost, pending, x)
    remaining += eval_agg_cost(q.agg, state.batches_done + num_batches(pending, x))
    return q.deadline - now - remaining


def maturity_time(expected: ArrivalProfile, processed: int, min_batch: int, last_start: int | None, paced: bool) -> int:
    """When a partial batch may run although fewer than ``min_batch`` tuples arrived.

    The base rule is the time the expected profile reaches ``processed +
    min_batch``.  Paced maturity additionally waits, after the previous batch
    of the query started, for as long as ``min_batch`` tuples take to arrive at
    the expected average rate, so a stream lagging far behind its expected
    profile does not trigger a tiny batch per arriving tuple.
    """
    base = expected.input_time(min(processed + min_batch, expected.total))
    if not paced or last_start is None or expected.total == 0:
        return base
    span = -(-min_batch * (expected.end_time - expected.start_time) // expected.total)
    return max(base, last_start + span)


def _maturity(state: DynamicQueryState, paced: bool) -> int:
    return maturity_time(state.query.profile, state.processed, state.min_batch_size, state.last_start, paced)


def _reestimate(state: DynamicQueryState, now: int, config: SchedulerConfig) -> None:
    avail = state.actual.available_at(now)
    if avail >= state.actual.total and now >= state.actual.end_time:
        projected = state.actual.total
    else:
        projected = max(estimate_total_tuples(state.query.profile, avail, now), avail, 1)
    if projected != state.projected_total:
        state.projected_total = projected
        choice = find_min_batch_size(state.query, config.rsf, config.cmax, total=projected)
        state.min_batch_size, state.within_budget = choice
        state.est_maturity = _maturity(state, config.paced_maturity)


def is_ready(state: DynamicQueryState, now: int, config: SchedulerConfig) -> bool:
    if state.finished:
        return False
    avail = state.actual.available_at(now)
    unprocessed = avail - state.processed
    if unprocessed <= 0:
        return False
    if unprocessed >= state.min_batch_size or avail >= state.actual.total:
        return True
    return config.rate_mode.variable and now >= state.est_maturity


def refresh_readiness(states: Iterable[DynamicQueryState], now: int, config: SchedulerConfig):
    """Update the status of every unfinished query at ``now``; returns the states."""
    states = list(states)
    for s in states:
        if s.finished:
            continue
        if config.rate_mode is RateMode.VARIABLE_ESTIMATED_TOTAL:
            _reestimate(s, now, config)
        s.status = Status.READY if is_ready(s, now, config) else Status.WAITING
    return states


def next_batch_size(state: DynamicQueryState, now: int, config: SchedulerConfig) -> int:
    unprocessed = state.actual.available_at(now) - state.processed
    size = estimate_tuples_processed(state.query.cost, config.cmax, limit=unprocessed)
    if not config.greedy_batch:
        size = min(size, state.min_batch_size)
    return size


def select_next(
    ready: Sequence[DynamicQueryState],
    policy: Policy,
    now: int,
    config: SchedulerConfig | None = None,
    last_served: str | None = None,
) -> str | None:
    """Query to run next; ties go to the earlier deadline, then the smaller id."""
    if not ready:
        return None
    policy = Policy(policy)
    if policy is Policy.RR:
        ids = sorted(s.query_id for s in ready)
        if last_served is None:
            return ids[0]
        later = [i for i in ids if i > last_served]
        return later[0] if later else ids[0]
    config = config or SchedulerConfig()

    def key(s):
        tie = (s.deadline, s.query_id)
        if policy is Policy.LLF:
            return (compute_laxity(s, now),) + tie
        if policy is Policy.SJF:
            return (eval_cost(s.query.cost, next_batch_size(s, now, config)),) + tie
        return tie

    return min(ready, key=key).query_id


@dataclass(frozen=True)
class QueryArrival:
    time: int
    query: Query
    actual_profile: ArrivalProfile | None = None


@dataclass(frozen=True)
class QueryRemoval:
    time: int
    query_id: str


class DynamicScheduler:
    """Event-driven simulation of the scheduling loop on one processor."""

    def __init__(self, events: Sequence[QueryArrival | QueryRemoval], config: SchedulerConfig):
        times = [e.time for e in events]
        if times != sorted(times):
            raise ValueError("events must be ordered by time")
        self.events = list(events)
        self.config = config
        self.states: dict[str, DynamicQueryState] = {}
        self.trace = SimTrace()
        self.origin = times[0] if times else 0
        self._next_event = 0
        self._last_run: tuple[str, int, int] | None = None
        self._last_served: str | None = None

    def _tick(self, t: int) -> int:
        if not self.config.strict_polling:
            return t
        step = self.config.cmax
        return self.origin + -(-(t - self.origin) // step) * step

    def _admit(self, ev: QueryArrival) -> None:
        q = ev.query
        if q.query_id in self.states:
            raise ValueError(f"duplicate query id {q.query_id}")
        actual = ev.actual_profile or q.profile
        if self.config.rate_mode is not RateMode.VARIABLE_ESTIMATED_TOTAL and actual.total != q.total:
            raise ValueError(f"{q.query_id}: actual stream total differs from the declared total")
        choice = find_min_batch_size(q, self.config.rsf, self.config.cmax)
        state = DynamicQueryState(q, actual, ev.time, choice.size, choice.within_budget, projected_total=q.total)
        state.est_maturity = _maturity(state, self.config.paced_maturity)
        self.states[q.query_id] = state
        log.debug("admit %s min_batch=%d within_budget=%s", q.query_id, choice.size, choice.within_budget)
        self.trace.add(ev.time, EventKind.QUERY_ADD, q.query_id, q.total)

    def _remove(self, ev: QueryRemoval) -> None:
        state = self.states.get(ev.query_id)
        if state is None or state.finished:
            return
        state.removed = True
        when = ev.time
        if self._last_run and self._last_run[0] == ev.query_id and self._last_run[1] <= ev.time < self._last_run[2]:
            when = self._last_run[2]
        self.trace.add(when, EventKind.QUERY_REMOVE, ev.query_id, state.processed)

    def _apply_events(self, now: int) -> None:
        while self._next_event < len(self.events) and self.events[self._next_event].time <= now:
            ev = self.events[self._next_event]
            self._next_event += 1
            if isinstance(ev, QueryArrival):
                self._admit(ev)
            else:
                self._remove(ev)

    def _run_batch(self, state: DynamicQueryState, now: int) -> int:
        size = next_batch_size(state, now, self.config)
        dur = eval_cost(state.query.cost, size)
        end = now + dur
        self.trace.add(now, EventKind.BATCH_START, state.query_id, size, dur)
        self.trace.add(end, EventKind.BATCH_END, state.query_id, size, dur)
        state.processed += size
        state.batches_done += 1
        state.last_start = now
        state.est_maturity = _maturity(state, self.config.paced_maturity)
        self._last_run = (state.query_id, now, end)
        self._last_served = state.query_id
        if state.processed >= state.actual.total:
            agg = eval_agg_cost(state.query.agg, state.batches_done)
            self.trace.add(end, EventKind.AGG_START, state.query_id, 0, agg)
            end += agg
            self.trace.add(end, EventKind.AGG_END, state.query_id, 0, agg)
            state.status = Status.DONE
            state.completion = end
        return end

    def _wakeup(self, state: DynamicQueryState, now: int) -> int | None:
        actual = state.actual
        if state.processed >= actual.total:
            return None
        times = [actual.input_time(min(state.processed + state.min_batch_size, actual.total))]
        if self.config.rate_mode.variable:
            times.append(max(state.est_maturity, actual.input_time(state.processed + 1)))
        later = [t for t in times if t > now]
        return min(later) if later else None

    def run(self) -> SimTrace:
        if not self.events:
            return self.trace
        now = self._tick(self.origin)
        while True:
            self._apply_events(now)
            active = [s for s in self.states.values() if not s.finished]
            refresh_readiness(active, now, self.config)
            ready = [s for s in active if s.status is Status.READY]
            chosen = select_next(ready, self.config.policy, now, self.config, self._last_served)
            if chosen is not None:
                now = self._tick(self._run_batch(self.states[chosen], now))
                continue
            wakeups = [w for s in active if (w := self._wakeup(s, now)) is not None]
            if self._next_event < len(self.events):
                wakeups.append(self.events[self._next_event].time)
            if not wakeups:
                break
            now = self._tick(min(wakeups))
        self._finish()
        return self.trace

    def _finish(self) -> None:
        removed_at = {r.query_id: r.time for r in self.trace.of(EventKind.QUERY_REMOVE)}
        for s in self.states.values():
            end = s.actual.end_time
            if s.query_id not in removed_at or end <= removed_at[s.query_id]:
                self.trace.add(end, EventKind.ARRIVALMARK, s.query_id, s.actual.total)
        for s in self.states.values():
            if s.removed:
                continue
            if s.completion is None or s.completion > s.deadline:
                by_deadline = sum(
                    r.tuples for r in self.trace.of(EventKind.BATCH_END)
                    if r.query_id == s.query_id and r.time <= s.deadline
                )
                self.trace.add(s.deadline, EventKind.DEADLINE_MISS, s.query_id, by_deadline)
        self.trace.sort()


def run_dynamic(events: Sequence[QueryArrival | QueryRemoval], config: SchedulerConfig) -> SimTrace:
    return DynamicScheduler(events, config).run()


def find_idle_violations(
    trace: SimTrace, events: Sequence[QueryArrival | QueryRemoval], config: SchedulerConfig
) -> list[str]:
    """Times at which the processor sat idle although some query was ready.

    Readiness is rebuilt from the trace alone (processed counts from batch
    rows), not from scheduler state.  In strict polling mode a query may wait
    for less than one polling interval.
    """
    if config.rate_mode is RateMode.VARIABLE_ESTIMATED_TOTAL:
        raise NotImplementedError("readiness depends on the running total estimate")
    arrivals = {e.query.query_id: e for e in events if isinstance(e, QueryArrival)}
    removed = {r.query_id: r.time for r in trace.of(EventKind.QUERY_REMOVE)}
    done = {r.query_id: r.time for r in trace.of(EventKind.AGG_END)}
    starts: dict[str, list[tuple[int, int]]] = {}
    for r in trace.of(EventKind.BATCH_START):
        starts.setdefault(r.query_id, []).append((r.time, r.tuples))
    runs = sorted((s, e) for s, e, _, _ in trace.busy_intervals())
    gaps, clock = [], (events[0].time if events else 0)
    for s, e in runs:
        if s > clock:
            gaps.append((clock, s))
        clock = max(clock, e)
    gaps.append((clock, None))
    min_batch = {
        qid: find_min_batch_size(ev.query, config.rsf, config.cmax).size for qid, ev in arrivals.items()
    }
    allowance = config.cmax if config.strict_polling else 0
    out = []
    for g0, g1 in gaps:
        for qid, ev in arrivals.items():
            if ev.time >= (g1 if g1 is not None else float("inf")):
                continue
            if qid in done and done[qid] <= g0:
                continue
            processed = sum(n for t, n in starts.get(qid, []) if t < g0)
            actual = ev.actual_profile or ev.query.profile
            if processed >= actual.total:
                continue
            m = min_batch[qid]
            ready = actual.input_time(min(processed + m, actual.total))
            if config.rate_mode.variable:
                earlier = [t for t, _ in starts.get(qid, []) if t < g0]
                last = max(earlier) if earlier else None
                maturity = maturity_time(ev.query.profile, processed, m, last, config.paced_maturity)
                ready = min(ready, max(maturity, actual.input_time(processed + 1)))
            ready = max(ready, g0, ev.time)
            # a removed query stops waiting when it is removed
            stops = [x for x in (g1, removed.get(qid)) if x is not None]
            if not stops or min(stops) - ready > allowance:
                out.append(f"{qid} ready at {ready} while the processor idled until {g1}")
    return out
