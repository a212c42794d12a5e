"""Static scheduling of one deadline-bound query.

The scheduler works backwards from the deadline: the last batch is the one
that runs after the window closes, every earlier batch is sized to fill the
time left between the arrival of its tuples and the start of the batch that
follows it.  Final aggregation is accounted for by a fixpoint over the
assumed number of batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

from .arrival import ArrivalProfile
from .cost_model import AggCostModel, CostModel, estimate_tuples_processed, eval_agg_cost, eval_cost
from .errors import Infeasible, TooLarge

ORACLE_MAX_TUPLES = 15
ORACLE_MAX_GRID_POINTS = 64


@dataclass(frozen=True)
class Query:
    query_id: str
    profile: ArrivalProfile
    deadline: int
    cost: CostModel
    agg: AggCostModel = AggCostModel()

    @property
    def total(self) -> int:
        return self.profile.total

    @property
    def window_end(self) -> int:
        return self.profile.end_time

    @property
    def min_comp_cost(self) -> int:
        """Cost of processing every tuple in one batch."""
        return eval_cost(self.cost, self.total)

    def with_deadline(self, deadline: int) -> "Query":
        return Query(self.query_id, self.profile, deadline, self.cost, self.agg)


@dataclass(frozen=True)
class Batch:
    start: int
    size: int
    duration: int

    @property
    def end(self) -> int:
        return self.start + self.duration


@dataclass(frozen=True)
class BatchPlan:
    query_id: str
    batches: tuple[Batch, ...]
    final_agg_start: int
    final_agg_duration: int

    @property
    def total_cost(self) -> int:
        return sum(b.duration for b in self.batches) + self.final_agg_duration

    @property
    def num_batches(self) -> int:
        return len(self.batches)

    @property
    def completion(self) -> int:
        return self.final_agg_start + self.final_agg_duration

    @property
    def sizes(self) -> list[int]:
        return [b.size for b in self.batches]

    @property
    def starts(self) -> list[int]:
        return [b.start for b in self.batches]


def compute_slack(q: Query) -> int:
    return q.deadline - q.window_end - q.min_comp_cost


def _backward_latest(q: Query, last_deadline: int) -> list[Batch]:
    # Each batch ends exactly when the next one starts; returns last batch first.
    out = []
    pending, t = q.total, last_deadline
    while pending > 0:
        ready = q.profile.input_time(pending)
        if t < ready:
            raise Infeasible(f"{q.query_id}: {pending} tuples are not available before {t}")
        m = estimate_tuples_processed(q.cost, t - ready, limit=pending)
        if m == 0:
            raise Infeasible(f"{q.query_id}: no tuple fits between {ready} and {t}")
        d = eval_cost(q.cost, m)
        out.append(Batch(t - d, m, d))
        pending -= m
        t -= d
    return out


def _backward_literal(q: Query, last_deadline: int) -> list[Batch]:
    # Earlier batches must finish by the window end / the arrival of their tuples.
    wend = q.window_end
    if last_deadline < wend:
        raise Infeasible(f"{q.query_id}: last-batch deadline precedes the window end")
    m = estimate_tuples_processed(q.cost, last_deadline - wend, limit=q.total)
    if m == 0 and q.total > 0:
        raise Infeasible(f"{q.query_id}: no tuple fits after the window end")
    out = [Batch(wend, m, eval_cost(q.cost, m))]
    pending, time_pt = q.total - m, wend
    while pending > 0:
        ready = q.profile.input_time(pending)
        room = time_pt - ready
        n = estimate_tuples_processed(q.cost, room, limit=pending) if room >= 0 else 0
        if n == 0:
            raise Infeasible(f"{q.query_id}: no tuple fits before {time_pt}")
        d = eval_cost(q.cost, n)
        start = min(out[-1].start, time_pt) - d
        out.append(Batch(start, n, d))
        time_pt = time_pt - d if n == pending else ready
        pending -= n
    return out


def _backward(q: Query, last_deadline: int, literal: bool) -> list[Batch]:
    return _backward_literal(q, last_deadline) if literal else _backward_latest(q, last_deadline)


def schedule_without_agg_cost(q: Query, last_batch_deadline: int, literal: bool = False) -> list[int]:
    """Batch sizes meeting ``last_batch_deadline``, last batch first.

    ``literal=True`` anchors the earlier batches at the window end and at the
    arrival time of their tuples instead of at the start of the following
    batch; it never yields fewer batches than the default.
    """
    return [b.size for b in _backward(q, last_batch_deadline, literal)]


def _plan(q: Query, batches: list[Batch]) -> BatchPlan:
    ordered = tuple(batches)
    agg_start = ordered[-1].end if ordered else q.profile.start_time
    return BatchPlan(q.query_id, ordered, agg_start, eval_agg_cost(q.agg, len(ordered)))


def schedule_single_query(q: Query, literal: bool = False) -> BatchPlan:
    """Minimum-cost batch plan for a single query."""
    if q.total == 0:
        return _plan(q, [])
    if compute_slack(q) >= eval_agg_cost(q.agg, 1):
        start = max(q.deadline - q.min_comp_cost, q.window_end)
        return _plan(q, [Batch(start, q.total, q.min_comp_cost)])
    for assumed in range(2, q.total + 1):
        assumed_agg = eval_agg_cost(q.agg, assumed)
        batches = _backward(q, q.deadline - assumed_agg, literal)
        if eval_agg_cost(q.agg, len(batches)) <= assumed_agg:
            return _plan(q, batches[::-1])
    raise Infeasible(f"{q.query_id}: deadline cannot be met with up to {q.total} batches")


def _compositions(n: int) -> Iterator[tuple[int, ...]]:
    for mask in range(1 << (n - 1)):
        sizes, run = [], 1
        for i in range(n - 1):
            if mask >> i & 1:
                sizes.append(run)
                run = 1
            else:
                run += 1
        sizes.append(run)
        yield tuple(sizes)


def enumerate_grid_plans(q: Query, grid: int) -> Iterator[BatchPlan]:
    """Every feasible plan whose batches start on multiples of ``grid``.

    For a fixed sequence of batch sizes the earliest grid-aligned start of
    each batch dominates any later one, so one timing per size sequence is
    enough to decide feasibility and the earliest completion.
    """
    horizon = q.deadline - q.profile.start_time
    if q.total > ORACLE_MAX_TUPLES or horizon > ORACLE_MAX_GRID_POINTS * grid:
        raise TooLarge(f"{q.query_id}: {q.total} tuples over {horizon // grid} grid points")
    if q.total == 0:
        yield _plan(q, [])
        return
    for sizes in _compositions(q.total):
        agg = eval_agg_cost(q.agg, len(sizes))
        batches, done, clock = [], 0, None
        for size in sizes:
            done += size
            earliest = q.profile.input_time(done)
            if clock is not None:
                earliest = max(earliest, clock)
            start = math.ceil(earliest / grid) * grid
            dur = eval_cost(q.cost, size)
            batches.append(Batch(start, size, dur))
            clock = start + dur
            if clock + agg > q.deadline:
                break
        else:
            yield BatchPlan(q.query_id, tuple(batches), clock, agg)


def brute_force_optimal_plan(q: Query, grid: int) -> BatchPlan:
    """Exhaustive minimum-cost plan on a time grid (test oracle)."""
    best = min(
        enumerate_grid_plans(q, grid),
        key=lambda p: (p.total_cost, p.num_batches, p.completion),
        default=None,
    )
    if best is None:
        raise Infeasible(f"{q.query_id}: no grid-aligned plan meets the deadline")
    return best
