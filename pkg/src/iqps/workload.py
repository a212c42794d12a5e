"""Synthetic workloads: a query catalog, deadline scaling and staggering, rate profiles.

The catalog is a set of stand-in cost curves at desk scale (4500 tuples per
window arriving at 1 tuple/s).  They are not measurements of any real engine.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

from .arrival import ArrivalProfile, FixedRate, Trace
from .cost_model import AggCostModel, Linear, PiecewiseLinear, eval_cost
from .dynamic_sched import MinBatch, QueryArrival, RateMode, SchedulerConfig, find_min_batch_size
from .single_query import Query
from .units import MS, SECOND

DESK_TOTAL = 4500
DESK_HORIZON = 4500 * SECOND
DESK_CMAX = 30 * SECOND
DELTAS = (Fraction(1), Fraction(4, 5), Fraction(3, 5), Fraction(2, 5), Fraction(1, 5), Fraction(1, 10))


@dataclass(frozen=True)
class QueryTemplate:
    name: str
    cost: PiecewiseLinear
    agg: AggCostModel

    def query(self, query_id: str, profile: ArrivalProfile, deadline: int = 0) -> Query:
        q = Query(query_id, profile, deadline, self.cost, self.agg)
        return q if deadline else scale_deadline(q, 1)


def _template(name, overhead_ms, knee, slope1_us, slope2_us, groups, agg_step_ms):
    # slopes in microseconds per tuple; the knee models a change of plan/cache regime
    c_knee = overhead_ms * MS + knee * slope1_us
    cost = PiecewiseLinear(((0, overhead_ms * MS), (knee, c_knee), (DESK_TOTAL, c_knee + (DESK_TOTAL - knee) * slope2_us)))
    step = agg_step_ms * MS
    agg = AggCostModel(((1, 0), (2, step), (100, step + 98 * step // 10)), groups)
    return QueryTemplate(name, cost, agg)


# name, overhead ms, knee, slope before/after knee (us/tuple), groups, agg cost of a 2nd batch (ms)
CATALOG: dict[str, QueryTemplate] = {
    t.name: t
    for t in (
        _template("t01", 1500, 1000, 14_000, 12_000, 1, 200),
        _template("t02", 2000, 1500, 16_000, 13_000, 1, 250),
        _template("t03", 6000, 500, 20_000, 15_000, 5, 900),   # expensive at small n
        _template("t04", 2500, 2000, 12_000, 10_000, 5, 300),
        _template("t05", 1000, 1000, 8_000, 7_000, 1, 150),
        _template("t06", 5000, 800, 18_000, 14_000, 5, 800),   # expensive at small n
        _template("t07", 3000, 1200, 15_000, 11_000, 360, 600),
        _template("t08", 2000, 2500, 10_000, 9_000, 1, 200),
        _template("t09", 7000, 600, 16_000, 11_000, 5, 1000),  # expensive at small n
        _template("t10", 1500, 1000, 6_000, 5_000, 1500, 1200),
        _template("t11", 2500, 1500, 11_000, 9_500, 360, 500),
        _template("t12", 1200, 800, 9_000, 8_000, 1, 180),
    )
}


def scale_deadline(q: Query, factor) -> Query:
    """Deadline = window end + factor * single-batch cost (factor 1 leaves zero slack)."""
    factor = Fraction(factor)
    if factor <= 0:
        raise ValueError("deadline factor must be positive")
    return q.with_deadline(q.window_end + int(factor * q.min_comp_cost))


def stagger_deadlines(queries: Sequence[Query], delta, cmax: int) -> list[Query]:
    """Chain deadlines so a query whose window ends before its predecessor's
    deadline is due ``delta * cost`` after that deadline."""
    if not queries:
        raise ValueError("at least one query is required")
    delta = Fraction(delta)
    out = []
    prev = None
    for q in queries:
        share = int(delta * q.min_comp_cost)
        if prev is None or q.window_end > prev:
            deadline = q.window_end + share + cmax
        else:
            deadline = prev + share
        out.append(q.with_deadline(deadline))
        prev = deadline
    return out


class RateKind(str, Enum):
    FR = "fr"
    VR1 = "vr1"
    VR2 = "vr2"
    VR3 = "vr3"
    VR4 = "vr4"


def _lag(horizon: int, seconds: int) -> int:
    # a lateness of `seconds` at 4500 s scaled to this horizon
    return seconds * SECOND * horizon // DESK_HORIZON


def make_rate_profile(kind, total: int, horizon: int, start: int = 0) -> ArrivalProfile:
    """Arrival profile of ``total`` tuples over ``horizon`` microseconds.

    FR is the fixed-rate reference.  VR1 runs uniformly faster, VR2 arrives in
    front-loaded bursts (both finish at 0.9 of the horizon), VR3 and VR4 run
    uniformly slower and finish late by 20 s and 7 s (scaled).
    """
    kind = RateKind(kind)
    if total <= 0 or horizon <= 0:
        raise ValueError("total and horizon must be positive")
    if kind is RateKind.FR:
        return FixedRate(start, Fraction(total * SECOND, horizon), total)
    if kind is RateKind.VR1:
        return Trace(((start, 0), (start + horizon * 9 // 10, total)))
    if kind is RateKind.VR2:
        weights = (6, 5, 4, 3, 2, 1)
        gap = horizon * 9 // 10 // len(weights)
        burst = max(1, gap // 10)
        points, done, acc = [(start, 0)], 0, 0
        for i, w in enumerate(weights):
            acc += w
            done = total * acc // sum(weights)
            t0 = start + i * gap
            if t0 > points[-1][0]:
                points.append((t0, points[-1][1]))
            points.append((t0 + burst, done))
        last_t = start + horizon * 9 // 10
        if last_t > points[-1][0]:
            points.append((last_t, total))
        return Trace(tuple(points))
    lag = _lag(horizon, 20 if kind is RateKind.VR3 else 7)
    return Trace(((start, 0), (start + horizon + lag, total)))


@dataclass(frozen=True)
class ScenarioQuery:
    query: Query
    arrival_time: int
    actual_profile: ArrivalProfile | None = None


@dataclass(frozen=True)
class Scenario:
    queries: tuple[ScenarioQuery, ...]
    config: SchedulerConfig = field(default_factory=SchedulerConfig)
    seed: int = 0
    label: str = ""

    @property
    def query_list(self) -> list[Query]:
        return [s.query for s in self.queries]

    def events(self) -> list[QueryArrival]:
        ordered = sorted(self.queries, key=lambda s: (s.arrival_time, s.query.query_id))
        return [QueryArrival(s.arrival_time, s.query, s.actual_profile) for s in ordered]


def staggered_scenario(
    delta,
    config: SchedulerConfig | None = None,
    rate: RateKind | str = RateKind.FR,
    seed: int = 0,
    num_queries: int = 12,
    spacing: int = 0,
    total: int = DESK_TOTAL,
    horizon: int = DESK_HORIZON,
) -> Scenario:
    """Catalog queries with chained deadlines.

    With ``spacing`` 0 every window opens at time 0, so all queries compete
    for the processor after the common window end.  Otherwise window i opens
    at i * spacing plus a seeded jitter of up to half a spacing.  The seed
    also decides the order in which deadlines are chained among equal window
    ends.  Expected profiles are fixed-rate; ``rate`` shapes the actual arrivals.
    """
    config = config or SchedulerConfig(cmax=DESK_CMAX)
    rng = random.Random(seed)
    names = sorted(CATALOG)
    base = []
    for i in range(num_queries):
        template = CATALOG[names[i % len(names)]]
        start = i * spacing + rng.randrange(0, spacing // 2 + 1, SECOND) if spacing else 0
        profile = make_rate_profile(RateKind.FR, total, horizon, start)
        base.append(template.query(f"q{i + 1:02d}", profile))
    rng.shuffle(base)
    base.sort(key=lambda q: q.window_end)
    queries = stagger_deadlines(base, delta, config.cmax)
    entries = []
    for q in queries:
        actual = None
        if RateKind(rate) is not RateKind.FR:
            actual = make_rate_profile(rate, total, horizon, q.profile.start_time)
        entries.append(ScenarioQuery(q, q.profile.start_time, actual))
    label = f"staggered-{RateKind(rate).value}-delta{float(Fraction(delta)):g}"
    return Scenario(tuple(entries), config, seed, label)


# Small random instances for oracle comparisons.  Every duration is a multiple
# of GRID so grid-aligned exhaustive search sees every plan that matters.
GRID = SECOND // 2


def random_single_query(rng: random.Random, max_tuples: int = 12, max_grid_points: int = 64) -> Query:
    """Linear-cost fixed-rate query with all times on a half-second grid."""
    while True:
        n = rng.randint(1, max_tuples)
        rate = rng.choice([Fraction(1, 2), Fraction(1), Fraction(2)])
        start = rng.randint(0, 4) * GRID
        per_tuple = rng.randint(1, 4) * GRID
        overhead = rng.randint(0, 4) * GRID
        step = rng.randint(0, 3) * GRID
        agg = AggCostModel(((1, 0), (2, step), (12, step + rng.randint(0, 10) * GRID)))
        profile = FixedRate(start, rate, n)
        q = Query(f"r{n}", profile, 0, Linear(per_tuple, overhead), agg)
        room = rng.randint(0, (q.min_comp_cost + step) // GRID + 2)
        q = q.with_deadline(profile.end_time + room * GRID)
        if q.deadline - start <= max_grid_points * GRID:
            return q


def random_budget_scenario(rng: random.Random, rsf) -> tuple[Scenario, MinBatch]:
    """One fixed-rate stream whose minimum batch size respects the cost budget."""
    while True:
        total = rng.randint(2, 3000)
        rate = Fraction(rng.randint(1, 20), rng.randint(1, 4))
        profile = FixedRate(rng.randint(0, 100) * SECOND, rate, total)
        if rng.random() < 0.5:
            cost = Linear(Fraction(rng.randint(1, 50_000)), rng.randint(0, 20) * SECOND)
        else:
            c1 = rng.randint(0, 10_000) * MS
            knee = rng.randint(1, total)
            s1, s2 = rng.randint(1, 40_000), rng.randint(0, 40_000)
            cost = PiecewiseLinear(((0, c1), (knee, c1 + knee * s1), (knee + total, c1 + knee * s1 + total * s2)))
        groups = rng.choice([0, 1, 1, 5])
        step = rng.randint(0, 2000) * MS
        agg = AggCostModel(((1, 0), (2, step)), groups)
        q = Query("s1", profile, 0, cost, agg)
        q = scale_deadline(q, Fraction(rng.randint(1, 10), 10))
        full = eval_cost(cost, total)
        cmax = max(eval_cost(cost, 1), rng.randint(full // 4, 2 * full + 1))
        config = SchedulerConfig(rsf=rsf, cmax=cmax, greedy_batch=False)
        choice = find_min_batch_size(q, config.rsf, cmax)
        if choice.within_budget:
            return Scenario((ScenarioQuery(q, profile.start_time),), config, 0, "budget"), choice


def random_slow_rate_scenario(rng: random.Random, policy, max_tuples: int = 12) -> Scenario:
    """Two or three equal-sized queries sharing one window; actual streams run late.

    A scaled-down copy of the variable-rate experiment: every stream is
    declared at one tuple per 4 s from time 0, so each query alone loads the
    processor to roughly 15 %.  The actual stream is uniformly slower, its
    last tuple late by 0.5 s to 2 s; arrival times are rounded up to the
    half-second grid.  Deadlines are chained with a random factor from
    ``DELTAS`` and C_max is about 40 % of a query's single-batch cost.
    """
    num = rng.randint(2, 3)
    n = rng.randint(3, max_tuples // num)
    spacing = 4 * SECOND
    entries = []
    for i in range(num):
        expected = FixedRate(0, Fraction(1, 4), n)
        lag = rng.randint(1, 4) * GRID
        times = [-(-(k * spacing + lag * k // (n - 1)) // GRID) * GRID for k in range(n)]
        actual = Trace(tuple((t, k + 1) for k, t in enumerate(times)))
        cost = Linear(GRID, rng.randint(0, 2) * GRID)
        step = rng.randint(0, 1) * GRID
        agg = AggCostModel(((1, 0), (2, step), (3, step)), rng.choice([0, 1]))
        entries.append((Query(f"v{i + 1}", expected, 0, cost, agg), actual))
    cmax = 2 * SECOND
    delta = rng.choice(DELTAS)
    rng.shuffle(entries)
    chained = stagger_deadlines([q for q, _ in entries], delta, cmax)
    scenario = tuple(ScenarioQuery(q, 0, actual) for q, (_, actual) in zip(chained, entries))
    config = SchedulerConfig(rsf=1, cmax=cmax, policy=policy, rate_mode=RateMode.VARIABLE_KNOWN_TOTAL)
    return Scenario(scenario, config, 0, f"slow-rate-delta{float(delta):g}")
