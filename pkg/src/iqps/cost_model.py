"""Computation-cost and final-aggregation-cost models.

Costs are integer microseconds.  A cost model maps a batch size (tuple count)
to the time needed to process that batch; an aggregation model maps the
number of batches to the time of the single final merge step.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InsufficientSamples

# Upper bound returned when a cost curve becomes flat and never exceeds a budget.
MAX_TUPLES = 2**62


def _ceil(value: Fraction) -> int:
    return math.ceil(value)


def _interpolate(knots, x) -> Fraction:
    """Piecewise-linear value at x, extrapolating with the last segment slope."""
    if len(knots) == 1:
        return Fraction(knots[0][1])
    if x <= knots[0][0]:
        (x0, y0), (x1, y1) = knots[0], knots[1]
        return Fraction(y0) + Fraction(y1 - y0, x1 - x0) * (x - x0)
    for (x0, y0), (x1, y1) in zip(knots, knots[1:]):
        if x <= x1:
            return Fraction(y0) + Fraction(y1 - y0, x1 - x0) * (x - x0)
    (x0, y0), (x1, y1) = knots[-2], knots[-1]
    return Fraction(y1) + Fraction(y1 - y0, x1 - x0) * (x - x1)


def _check_knots(knots, what):
    if not knots:
        raise ValueError(f"{what}: at least one knot is required")
    for (xa, ya), (xb, yb) in zip(knots, knots[1:]):
        if xb <= xa:
            raise ValueError(f"{what}: knot positions must be strictly increasing")
        if yb < ya:
            raise ValueError(f"{what}: cost must be non-decreasing")
    if any(y < 0 for _, y in knots):
        raise ValueError(f"{what}: costs must be non-negative")


class CostModel:
    """Base class; subclasses provide ``curve``, the raw model value."""

    def curve(self, n: int) -> int:
        raise NotImplementedError

    def __call__(self, n: int) -> int:
        return eval_cost(self, n)


@dataclass(frozen=True)
class Linear(CostModel):
    per_tuple_us: Fraction | int
    overhead_us: int = 0

    def __post_init__(self):
        object.__setattr__(self, "per_tuple_us", Fraction(self.per_tuple_us))
        if self.per_tuple_us < 0 or self.overhead_us < 0:
            raise ValueError("linear cost coefficients must be non-negative")

    def curve(self, n: int) -> int:
        return _ceil(self.per_tuple_us * n) + self.overhead_us


@dataclass(frozen=True)
class PiecewiseLinear(CostModel):
    knots: tuple[tuple[int, int], ...]

    def __post_init__(self):
        knots = tuple((int(x), int(y)) for x, y in self.knots)
        object.__setattr__(self, "knots", knots)
        _check_knots(knots, "PiecewiseLinear")
        if knots[0][0] != 0:
            raise ValueError("PiecewiseLinear: first knot must be at tupleCount 0")

    def curve(self, n: int) -> int:
        return _ceil(_interpolate(self.knots, n))


@dataclass(frozen=True)
class AggCostModel:
    """Final aggregation cost as a function of the number of batches."""

    knots: tuple[tuple[int, int], ...] = ((1, 0),)
    num_groups: int = 1

    def __post_init__(self):
        knots = tuple((int(x), int(y)) for x, y in self.knots)
        object.__setattr__(self, "knots", knots)
        _check_knots(knots, "AggCostModel")
        if knots[0] != (1, 0):
            raise ValueError("AggCostModel: first knot must be (1, 0)")
        if self.num_groups < 0:
            raise ValueError("AggCostModel: num_groups must be non-negative")

    @classmethod
    def zero(cls, num_groups: int = 1) -> "AggCostModel":
        return cls(((1, 0),), num_groups)

    def __call__(self, num_batches: int) -> int:
        return eval_agg_cost(self, num_batches)


def eval_cost(model: CostModel, n: int) -> int:
    """Time to process one batch of ``n`` tuples; an empty batch costs nothing."""
    if n < 0:
        raise ValueError("tuple count must be non-negative")
    if n == 0:
        return 0
    return model.curve(n)


def eval_agg_cost(agg: AggCostModel, num_batches: int) -> int:
    if num_batches <= 1:
        return 0
    return _ceil(_interpolate(agg.knots, num_batches))


def estimate_tuples_processed(model: CostModel, duration: int, limit: int | None = None) -> int:
    """Largest n with ``eval_cost(model, n) <= duration``.

    The search is capped at ``limit`` (or ``MAX_TUPLES`` for a curve that
    flattens out below the budget).
    """
    cap = MAX_TUPLES if limit is None else limit
    if duration < 0 or cap <= 0 or eval_cost(model, 1) > duration:
        return 0
    lo, hi = 1, 2
    while hi < cap and eval_cost(model, hi) <= duration:
        lo, hi = hi, hi * 2
    hi = min(hi, cap)
    if eval_cost(model, hi) <= duration:
        return hi
    # invariant: cost(lo) <= duration < cost(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if eval_cost(model, mid) <= duration:
            lo = mid
        else:
            hi = mid
    return lo


def batched_cost(model: CostModel, total: int, batch_size: int) -> int:
    """Cost of ``total`` tuples cut into full batches of ``batch_size`` plus a remainder."""
    if total <= 0:
        return 0
    full, rest = divmod(total, batch_size)
    return full * eval_cost(model, batch_size) + eval_cost(model, rest)


def num_batches(total: int, batch_size: int) -> int:
    return -(-total // batch_size)


def residual(model: CostModel, samples) -> int:
    """Sum of squared errors of the raw curve at the sample points."""
    return sum((model.curve(x) - y) ** 2 for x, y in samples)


def monotone_knots(xs, ys) -> tuple[tuple[int, int], ...]:
    """Round fitted knot values to integer microseconds and clamp slopes to be >= 0."""
    out = []
    prev = 0
    for x, y in zip(xs, ys):
        value = max(prev, int(round(float(y))), 0)
        out.append((int(x), value))
        prev = value
    return tuple(out)


def _roundings(ys, tol=1e-6):
    # A value sitting on a half-integer rounds either way depending on float
    # noise, so both neighbours are tried; every other value has one rounding.
    options = []
    for y in ys:
        y = float(y)
        lo = math.floor(y)
        options.append((lo, lo + 1) if abs(y - lo - 0.5) < tol else (y,))
    return itertools.product(*options)


def _hinge_fit(x: np.ndarray, y: np.ndarray, breaks) -> tuple[np.ndarray, float]:
    columns = [np.ones_like(x), x] + [np.maximum(x - b, 0.0) for b in breaks]
    design = np.column_stack(columns)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef, float(np.sum((design @ coef - y) ** 2))


def _hinge_value(coef, breaks, at) -> float:
    value = coef[0] + coef[1] * at
    for c, b in zip(coef[2:], breaks):
        value += c * max(at - b, 0.0)
    return value


def _knots_from_fit(coef, breaks, x_min, x_max):
    """Candidate finalised knot tuples (more than one only on rounding ties)."""
    positions = [x_min, *breaks, x_max]
    values = [_hinge_value(coef, breaks, p) for p in positions]
    if x_min > 0:
        at_zero = _hinge_value(coef, breaks, 0.0)
        if at_zero >= 0:
            positions[0], values[0] = 0, at_zero
        else:
            positions.insert(0, 0)
            values.insert(0, 0.0)
    return [monotone_knots(positions, ys) for ys in _roundings(values)]


def fit_piecewise_linear(samples: Sequence[tuple[int, int]], num_segments: int) -> PiecewiseLinear:
    """Fit a continuous piecewise-linear cost curve by exhaustive knot search.

    Interior knots are drawn from the sample x-values; every placement is
    fitted by least squares, finalised (rounded, slopes clamped to >= 0) and
    the placement with the smallest residual of the finalised model wins.
    """
    if num_segments < 1:
        raise ValueError("num_segments must be positive")
    xs = sorted({int(x) for x, _ in samples})
    if len(xs) < num_segments + 1:
        raise InsufficientSamples(
            f"need at least {num_segments + 1} distinct tuple counts, got {len(xs)}"
        )
    x = np.array([float(s[0]) for s in samples])
    y = np.array([float(s[1]) for s in samples])
    best = None
    for breaks in itertools.combinations(xs[1:-1], num_segments - 1):
        coef, _ = _hinge_fit(x, y, breaks)
        for knots in _knots_from_fit(coef, breaks, xs[0], xs[-1]):
            model = PiecewiseLinear(knots)
            err = residual(model, samples)
            if best is None or err < best[0]:
                best = (err, model)
    return best[1]
