"""Time is kept as integer microseconds everywhere inside the library."""

from fractions import Fraction
import math

US = 1
MS = 1_000
SECOND = 1_000_000


def seconds(value) -> int:
    """Convert seconds (int, float, str or Fraction) to integer microseconds."""
    return _round_us(Fraction(str(value)) if isinstance(value, float) else Fraction(value), SECOND)


def millis(value) -> int:
    return _round_us(Fraction(str(value)) if isinstance(value, float) else Fraction(value), MS)


def _round_us(value: Fraction, scale: int) -> int:
    us = value * scale
    if us.denominator != 1:
        return math.floor(us + Fraction(1, 2))
    return int(us)


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def to_seconds(us: int) -> float:
    return us / SECOND
