"""Tuple arrival profiles of input streams.

A profile answers two questions exactly: how many tuples have arrived by a
time point, and at which time point the n-th tuple is available.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction

from .errors import TooManyTuples
from .units import SECOND


class ArrivalProfile:
    total: int

    @property
    def start_time(self) -> int:
        return self.input_time(0)

    @property
    def first_arrival(self) -> int:
        return self.input_time(min(1, self.total))

    @property
    def end_time(self) -> int:
        """Window end: arrival time of the last tuple."""
        return self.input_time(self.total)

    def available_at(self, t: int) -> int:
        raise NotImplementedError

    def input_time(self, n: int) -> int:
        raise NotImplementedError

    def _check_count(self, n):
        if n < 0:
            raise ValueError("tuple count must be non-negative")
        if n > self.total:
            raise TooManyTuples(f"{n} tuples requested, stream only carries {self.total}")


@dataclass(frozen=True)
class FixedRate(ArrivalProfile):
    """Tuple k (1-based) arrives at ``start + (k - 1) / rate``."""

    start_us: int
    rate: Fraction | int  # tuples per second
    total: int

    def __post_init__(self):
        object.__setattr__(self, "rate", Fraction(self.rate))
        if self.rate <= 0:
            raise ValueError("rate must be positive")
        if self.total < 0:
            raise ValueError("total must be non-negative")

    def available_at(self, t: int) -> int:
        if t < self.start_us or self.total == 0:
            return 0
        return min(self.total, math.floor(self.rate * (t - self.start_us) / SECOND) + 1)

    def input_time(self, n: int) -> int:
        self._check_count(n)
        if n == 0:
            return self.start_us
        return self.start_us + math.ceil((n - 1) * SECOND / self.rate)


@dataclass(frozen=True)
class Trace(ArrivalProfile):
    """Cumulative arrivals, linearly interpolated (and floored) between points."""

    points: tuple[tuple[int, int], ...]

    def __post_init__(self):
        points = tuple((int(t), int(c)) for t, c in self.points)
        object.__setattr__(self, "points", points)
        if not points:
            raise ValueError("trace needs at least one point")
        for (ta, ca), (tb, cb) in zip(points, points[1:]):
            if tb <= ta:
                raise ValueError("trace times must be strictly increasing")
            if cb < ca:
                raise ValueError("cumulative counts must be non-decreasing")
        if points[0][1] < 0:
            raise ValueError("cumulative counts must be non-negative")
        object.__setattr__(self, "_times", tuple(t for t, _ in points))

    @property
    def total(self) -> int:
        return self.points[-1][1]

    def available_at(self, t: int) -> int:
        i = bisect_right(self._times, t) - 1
        if i < 0:
            return 0
        if i == len(self.points) - 1:
            return self.total
        (ta, ca), (tb, cb) = self.points[i], self.points[i + 1]
        return ca + (cb - ca) * (t - ta) // (tb - ta)

    def input_time(self, n: int) -> int:
        self._check_count(n)
        pts = self.points
        if n <= pts[0][1]:
            return pts[0][0]
        for (ta, ca), (tb, cb) in zip(pts, pts[1:]):
            if cb >= n:
                return ta + -(-(n - ca) * (tb - ta) // (cb - ca))
        raise AssertionError("unreachable: n <= total")


def tuples_available_at(profile: ArrivalProfile, t: int) -> int:
    return profile.available_at(t)


def input_time(profile: ArrivalProfile, n: int) -> int:
    return profile.input_time(n)


def estimate_total_tuples(expected: ArrivalProfile, observed: int, now: int) -> int:
    """Scale the expected total by how far actual arrivals run ahead of or behind plan."""
    due = expected.available_at(now)
    if due == 0:
        return expected.total
    return math.floor(Fraction(expected.total * observed, due) + Fraction(1, 2))


def sample_fixed_rate(profile: FixedRate, step_us: int = SECOND) -> Trace:
    """Trace that agrees with ``profile`` at every multiple of ``step_us`` after its start."""
    points = []
    t = profile.start_us
    while True:
        count = profile.available_at(t)
        points.append((t, count))
        if count >= profile.total:
            break
        t += step_us
    if len(points) == 1:
        return Trace(tuple(points))
    # hold counts constant between samples: a second point just before each step
    held = []
    for (ta, ca), (tb, _) in zip(points, points[1:]):
        held.append((ta, ca))
        if tb - 1 > ta:
            held.append((tb - 1, ca))
    held.append(points[-1])
    return Trace(tuple(held))
