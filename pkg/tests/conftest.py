from fractions import Fraction

import pytest

from iqps.arrival import FixedRate
from iqps.cost_model import AggCostModel, Linear
from iqps.single_query import Query
from iqps.units import SECOND

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def case_query(deadline_s, cost=None, agg=None, qid="q"):
    """Ten tuples at 1 tuple/s from t = 1 s, half a second per tuple."""
    return Query(
        qid,
        FixedRate(1 * SECOND, 1, 10),
        int(Fraction(deadline_s) * SECOND),
        cost or Linear(SECOND // 2, 0),
        agg or AggCostModel(),
    )


@pytest.fixture
def case1():
    return case_query(16)


@pytest.fixture
def case2():
    return case_query(15)


@pytest.fixture
def case3():
    return case_query(12)


@pytest.fixture
def case4():
    return case_query(11)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
