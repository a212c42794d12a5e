"""Batch plans from linear constraints, for linear cost models.

For a fixed batch count n the unknowns are the batch sizes x_1..x_n
(positive integers) and start times s_1..s_n.  Sizes are searched by a
small exact branch-and-bound; start times follow by forward propagation,
which is exact because every timing constraint is a difference bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .arrival import FixedRate
from .cost_model import Linear, eval_agg_cost, eval_cost
from .errors import Infeasible, UnsupportedModel
from .single_query import Batch, BatchPlan, Query
from .units import SECOND


@dataclass(frozen=True)
class LinearConstraint:
    """``sum(coef * var) <sense> rhs`` with sense one of '<=', '>=', '=='."""

    label: str
    coefs: tuple[tuple[str, Fraction], ...]
    sense: str
    rhs: Fraction

    def holds(self, values: Mapping[str, Fraction | int]) -> bool:
        lhs = sum(c * values[v] for v, c in self.coefs)
        if self.sense == "<=":
            return lhs <= self.rhs
        if self.sense == ">=":
            return lhs >= self.rhs
        return lhs == self.rhs


@dataclass(frozen=True)
class ConstraintSystem:
    n: int
    total: int
    per_tuple: Fraction
    overhead: int
    rate: Fraction
    profile_start: int
    last_deadline: int
    equalities: tuple[LinearConstraint, ...]
    inequalities: tuple[LinearConstraint, ...]

    @property
    def size_vars(self) -> list[str]:
        return [f"x{i}" for i in range(1, self.n + 1)]

    @property
    def start_vars(self) -> list[str]:
        return [f"s{i}" for i in range(1, self.n + 1)]

    @property
    def constraints(self) -> tuple[LinearConstraint, ...]:
        return self.equalities + self.inequalities

    def satisfied_by(self, values) -> bool:
        return all(c.holds(values) for c in self.constraints)

    def ready_time(self, prefix: int) -> int:
        """Earliest integer start at which ``prefix`` tuples have arrived."""
        return self.profile_start + -(-(prefix - 1) * SECOND // self.rate)

    def duration(self, size: int) -> int:
        return eval_cost(Linear(self.per_tuple, self.overhead), size)


def build_constraints(q: Query, n: int, last_batch_deadline: int) -> ConstraintSystem:
    if not isinstance(q.cost, Linear):
        raise UnsupportedModel("constraint scheduling needs a linear cost model")
    if not isinstance(q.profile, FixedRate):
        raise UnsupportedModel("constraint scheduling needs a fixed-rate arrival profile")
    if n < 1:
        raise ValueError("batch count must be positive")
    a, o = q.cost.per_tuple_us, q.cost.overhead_us
    rate, start = q.profile.rate, q.profile.start_us
    xs = [f"x{i}" for i in range(1, n + 1)]
    ss = [f"s{i}" for i in range(1, n + 1)]
    one = Fraction(1)
    eqs = (LinearConstraint("tuples", tuple((x, one) for x in xs), "==", Fraction(q.total)),)
    ineqs = []
    for i in range(n):
        if i < n - 1:
            # s_i + a x_i + o <= s_{i+1}
            coefs = ((ss[i], one), (xs[i], a), (ss[i + 1], -one))
            ineqs.append(LinearConstraint(f"order{i + 1}", coefs, "<=", Fraction(-o)))
        else:
            coefs = ((ss[i], one), (xs[i], a))
            ineqs.append(LinearConstraint("deadline", coefs, "<=", Fraction(last_batch_deadline - o)))
    for i in range(n):
        # rate (s_i - start) / 1s >= sum_{j<=i} x_j - 1 (first tuple arrives at start)
        coefs = ((ss[i], rate / SECOND),) + tuple((x, -one) for x in xs[: i + 1])
        ineqs.append(LinearConstraint(f"avail{i + 1}", coefs, ">=", rate * start / SECOND - 1))
    for x in xs:
        ineqs.append(LinearConstraint(f"min_{x}", ((x, one),), ">=", one))
    return ConstraintSystem(n, q.total, a, o, rate, start, last_batch_deadline, eqs, tuple(ineqs))


def solve(system: ConstraintSystem) -> list[Batch] | None:
    """A feasible (sizes, earliest starts) assignment, or None."""
    n, total, deadline = system.n, system.total, system.last_deadline
    if total < n:
        return None
    min_dur = system.duration(1)
    last_ready = system.ready_time(total)
    # (depth, prefix) -> earliest end already shown to be a dead end
    failed: dict[tuple[int, int], int] = {}

    def search(k: int, prefix: int, end: int | None) -> list[Batch] | None:
        if k == n:
            return [] if prefix == total else None
        key = (k, prefix)
        if end is not None and failed.get(key, deadline + 1) <= end:
            return None
        left = n - k - 1
        # smallest sizes first: tuples are pushed into later batches
        for size in range(1, total - prefix - left + 1):
            done = prefix + size
            start = system.ready_time(done)
            if end is not None:
                start = max(start, end)
            finish = start + system.duration(size)
            if finish > deadline:
                break
            if left:
                rest = total - done
                # every later batch costs at least the overhead, the last one runs after the window end
                lower = finish + (system.duration(rest) - system.overhead) + left * system.overhead
                if lower > deadline or max(finish, last_ready) + min_dur > deadline:
                    continue
            tail = search(k + 1, done, finish)
            if tail is not None:
                return [Batch(start, size, finish - start)] + tail
        if end is not None:
            failed[key] = min(failed.get(key, end), end)
        return None

    batches = search(0, 0, None)
    if batches is None:
        return None
    values = {f"x{i}": b.size for i, b in enumerate(batches, 1)}
    values.update({f"s{i}": b.start for i, b in enumerate(batches, 1)})
    assert system.satisfied_by(values), "branch-and-bound produced an infeasible point"
    return batches


def feasible_batch_counts(q: Query, n_max: int) -> dict[int, bool]:
    """Feasibility of every batch count 1..n_max, with the deadline reduced by agg(n)."""
    out = {}
    for n in range(1, n_max + 1):
        system = build_constraints(q, n, q.deadline - eval_agg_cost(q.agg, n))
        out[n] = solve(system) is not None
    return out


def solve_min_batches(q: Query, n_max: int | None = None) -> BatchPlan:
    """Plan with the fewest batches, hence the least cost under a linear model.

    With n fixed the final aggregation cost is agg(n) exactly, so the
    aggregation fixpoint collapses to reducing the deadline by agg(n).
    """
    if n_max is None:
        n_max = q.total
    if q.total == 0:
        build_constraints(q, 1, q.deadline)
        return BatchPlan(q.query_id, (), q.profile.start_time, 0)
    for n in range(1, min(n_max, q.total) + 1):
        agg = eval_agg_cost(q.agg, n)
        batches = solve(build_constraints(q, n, q.deadline - agg))
        if batches is not None:
            return BatchPlan(q.query_id, tuple(batches), batches[-1].end, agg)
    raise Infeasible(f"{q.query_id}: no plan with at most {n_max} batches")
