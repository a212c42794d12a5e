"""Virtual-time traces, plan validation/execution and cost metrics.

One processor executes one batch (or one final aggregation) at a time.  A
trace is the ordered list of everything that happened on it.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple

from .cost_model import eval_agg_cost, eval_cost
from .errors import InvalidPlan
from .single_query import BatchPlan, Query

TRACE_HEADER = ("time_us", "event", "query_id", "tuples", "duration_us")


class EventKind(str, Enum):
    ARRIVALMARK = "arrivalmark"
    BATCH_START = "batch_start"
    BATCH_END = "batch_end"
    AGG_START = "agg_start"
    AGG_END = "agg_end"
    QUERY_ADD = "query_add"
    QUERY_REMOVE = "query_remove"
    DEADLINE_MISS = "deadline_miss"


class TraceRow(NamedTuple):
    time: int
    event: EventKind
    query_id: str
    tuples: int = 0
    duration: int = 0


@dataclass
class SimTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def add(self, time, event, query_id, tuples=0, duration=0):
        self.rows.append(TraceRow(time, EventKind(event), query_id, tuples, duration))

    def sort(self) -> "SimTrace":
        # stable: rows at equal times keep emission order
        self.rows.sort(key=lambda r: r.time)
        return self

    def of(self, *kinds: EventKind) -> list[TraceRow]:
        return [r for r in self.rows if r.event in kinds]

    def busy_intervals(self) -> list[tuple[int, int, str, EventKind]]:
        """(start, end, query, kind) for every batch and aggregation run."""
        return [
            (r.time, r.time + r.duration, r.query_id, r.event)
            for r in self.rows
            if r.event in (EventKind.BATCH_START, EventKind.AGG_START)
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for r in self.rows:
            writer.writerow((r.time, r.event.value, r.query_id, r.tuples, r.duration))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SimTrace":
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader))
        if header != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header}")
        rows = [
            TraceRow(int(t), EventKind(ev), qid, int(n), int(d)) for t, ev, qid, n, d in reader
        ]
        return cls(rows)


class Violation(NamedTuple):
    constraint: str
    detail: str

    def __str__(self):
        return f"{self.constraint}: {self.detail}"


def validate_plan(plan: BatchPlan, q: Query) -> list[Violation]:
    """Check a plan against tuple conservation, ordering, availability and deadline."""
    out = []
    sizes = [b.size for b in plan.batches]
    if sum(sizes) != q.total:
        out.append(Violation("constraint-1", f"batches hold {sum(sizes)} of {q.total} tuples"))
    if any(s <= 0 for s in sizes):
        out.append(Violation("constraint-1", "empty batch"))
    for i, (a, b) in enumerate(zip(plan.batches, plan.batches[1:]), start=1):
        if a.end > b.start:
            out.append(Violation("constraint-2", f"batch {i} ends at {a.end} after batch {i + 1} starts at {b.start}"))
    if plan.batches and plan.batches[-1].end > plan.final_agg_start:
        out.append(Violation("constraint-2", "final aggregation starts before the last batch ends"))
    if plan.completion > q.deadline:
        out.append(Violation("agg-deadline", f"completes at {plan.completion}, deadline {q.deadline}"))
    done = 0
    for i, b in enumerate(plan.batches, start=1):
        done += b.size
        have = q.profile.available_at(b.start)
        if have < done:
            out.append(Violation("constraint-3", f"batch {i} needs {done} tuples at {b.start}, {have} available"))
        if b.duration != eval_cost(q.cost, b.size):
            out.append(Violation("cost-model", f"batch {i} duration {b.duration} != cost of {b.size} tuples"))
    if plan.final_agg_duration != eval_agg_cost(q.agg, len(plan.batches)):
        out.append(Violation("cost-model", "final aggregation duration does not match the model"))
    return out


def execute_plan(plan: BatchPlan, q: Query) -> SimTrace:
    violations = validate_plan(plan, q)
    if violations:
        raise InvalidPlan(violations)
    trace = SimTrace()
    for b in plan.batches:
        trace.add(b.start, EventKind.BATCH_START, q.query_id, b.size, b.duration)
        trace.add(b.end, EventKind.BATCH_END, q.query_id, b.size, b.duration)
    trace.add(plan.final_agg_start, EventKind.AGG_START, q.query_id, 0, plan.final_agg_duration)
    trace.add(plan.completion, EventKind.AGG_END, q.query_id, 0, plan.final_agg_duration)
    return trace.sort()


class Baseline(str, Enum):
    SINGLE_BATCH_MIN = "single"
    SUM_SINGLE_BATCH_MIN = "sum"


@dataclass(frozen=True)
class QueryMetrics:
    query_id: str
    total_cost: int
    num_batches: int
    tuples: int
    completion_time: int | None
    deadline: int
    baseline_cost: int

    @property
    def deadline_met(self) -> bool:
        return self.completion_time is not None and self.completion_time <= self.deadline

    @property
    def tardiness(self) -> int | None:
        if self.completion_time is None:
            return None
        return max(0, self.completion_time - self.deadline)

    @property
    def normalized_cost(self) -> Fraction:
        return Fraction(self.total_cost, self.baseline_cost) if self.baseline_cost else Fraction(1)


@dataclass(frozen=True)
class Metrics:
    per_query: dict[str, QueryMetrics]
    normalized_cost: Fraction
    deadline_miss_count: int

    @property
    def total_cost(self) -> int:
        return sum(m.total_cost for m in self.per_query.values())

    @property
    def all_met(self) -> bool:
        return self.deadline_miss_count == 0


def compute_metrics(
    trace: SimTrace,
    queries: Iterable[Query] | Mapping[str, Query],
    baseline: Baseline = Baseline.SUM_SINGLE_BATCH_MIN,
) -> Metrics:
    """Per-query cost/tardiness and cost normalised by the single-batch minimum.

    The baseline of a query is the one-batch cost of the tuples it actually
    processed.  With ``SINGLE_BATCH_MIN`` the trace must hold exactly one query.
    """
    if isinstance(queries, Mapping):
        queries = queries.values()
    by_id = {q.query_id: q for q in queries}
    removed = {r.query_id for r in trace.of(EventKind.QUERY_REMOVE)}
    active = [qid for qid in by_id if qid not in removed]
    if baseline is Baseline.SINGLE_BATCH_MIN and len(active) != 1:
        raise ValueError("single-batch baseline applies to exactly one query")
    cost = {qid: 0 for qid in active}
    batches = {qid: 0 for qid in active}
    tuples = {qid: 0 for qid in active}
    done: dict[str, int] = {}
    for r in trace.rows:
        if r.query_id not in cost:
            continue
        if r.event is EventKind.BATCH_END:
            cost[r.query_id] += r.duration
            batches[r.query_id] += 1
            tuples[r.query_id] += r.tuples
        elif r.event is EventKind.AGG_END:
            cost[r.query_id] += r.duration
            done[r.query_id] = r.time
    per_query = {}
    for qid in active:
        q = by_id[qid]
        per_query[qid] = QueryMetrics(
            qid, cost[qid], batches[qid], tuples[qid], done.get(qid), q.deadline,
            eval_cost(q.cost, tuples[qid]),
        )
    total = sum(m.total_cost for m in per_query.values())
    base = sum(m.baseline_cost for m in per_query.values())
    normalized = Fraction(total, base) if base else Fraction(1)
    misses = sum(1 for m in per_query.values() if not m.deadline_met)
    return Metrics(per_query, normalized, misses)


def check_trace(trace: SimTrace) -> list[str]:
    """Structural problems: ordering, unmatched starts, overlapping runs."""
    problems = []
    times = [r.time for r in trace.rows]
    if times != sorted(times):
        problems.append("rows are not sorted by time")
    open_runs: dict[tuple[str, int, EventKind], int] = {}
    pairs = {EventKind.BATCH_START: EventKind.BATCH_END, EventKind.AGG_START: EventKind.AGG_END}
    for r in trace.rows:
        if r.event in pairs:
            key = (r.query_id, r.time + r.duration, pairs[r.event])
            open_runs[key] = open_runs.get(key, 0) + 1
        elif r.event in pairs.values():
            key = (r.query_id, r.time, r.event)
            if not open_runs.get(key):
                problems.append(f"{r.event.value} of {r.query_id} at {r.time} has no matching start")
            else:
                open_runs[key] -= 1
    for key, count in open_runs.items():
        if count:
            problems.append(f"run of {key[0]} ending at {key[1]} never ends")
    runs = sorted(trace.busy_intervals())
    for (s1, e1, q1, _), (s2, e2, q2, _) in zip(runs, runs[1:]):
        if s2 < e1:
            problems.append(f"{q1} [{s1},{e1}) overlaps {q2} [{s2},{e2})")
    return problems


def check_cmax(trace: SimTrace, cmax: int) -> list[str]:
    """Batches longer than C_max; folded final aggregations are recorded separately."""
    return [
        f"{r.query_id} batch at {r.time} lasts {r.duration} > {cmax}"
        for r in trace.of(EventKind.BATCH_START)
        if r.duration > cmax
    ]
