"""Scenario files: a line-oriented ``key = value`` format with sections.

::

    # comments start with '#'
    [scheduler]
    policy = llf                  # edf | llf | sjf | rr
    rsf = 0.5
    cmax_ms = 30000
    rate_mode = fixed_known_total # | variable_known_total | variable_estimated_total
    greedy_batch = on
    strict_polling = off

    [workload]                    # optional: built-in staggered catalog scenario
    delta = 1
    rate = fr
    num_queries = 12
    seed = 0

    [query q1]
    cost = linear{500000, 0}      # per_tuple_us, overhead_us
    agg = pwl{[(1, 0), (2, 4000000)]}
    groups = 1
    deadline_ms = 12000
    arrival_ms = 1000             # submission time, defaults to the window start
    remove_ms = 9000              # optional withdrawal time

    [profile q1]
    expected = fixed{1000, 1, 10} # start_ms, rate_per_s, total
    actual = trace{[(1000, 0), (12000, 10)]}  # optional, (t_ms, cumulative)

A query may name a catalog template (``template = t03``) instead of
``cost``/``agg``.  Rates and rsf accept fractions such as ``1/3``.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .arrival import ArrivalProfile, FixedRate, Trace
from .cost_model import AggCostModel, CostModel, Linear, PiecewiseLinear
from .dynamic_sched import Policy, QueryRemoval, RateMode, SchedulerConfig
from .errors import ConfigError
from .single_query import Query
from .units import MS, millis
from .workload import CATALOG, DESK_CMAX, RateKind, Scenario, ScenarioQuery, staggered_scenario

_SECTION = re.compile(r"^\[\s*(scheduler|workload|query|profile)(?:\s+([A-Za-z0-9_.-]+))?\s*\]$")
_CALL = re.compile(r"^(linear|pwl|fixed|trace)\s*\{(.*)\}$", re.S)

SCHEDULER_KEYS = {"policy", "rsf", "cmax_ms", "rate_mode", "greedy_batch", "strict_polling", "paced_maturity"}
WORKLOAD_KEYS = {"delta", "rate", "num_queries", "seed", "spacing_ms"}
QUERY_KEYS = {"cost", "agg", "groups", "deadline_ms", "arrival_ms", "remove_ms", "template"}
PROFILE_KEYS = {"expected", "actual"}


@dataclass
class _Entry:
    value: str
    line: int


@dataclass
class ScenarioFile:
    config: SchedulerConfig
    scenario: Scenario
    removals: list[QueryRemoval] = field(default_factory=list)
    from_workload: bool = False
    workload: dict = field(default_factory=dict)

    def events(self):
        out = list(self.scenario.events()) + list(self.removals)
        # arrivals before removals at the same instant
        return sorted(out, key=lambda e: (e.time, isinstance(e, QueryRemoval)))


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def _read_sections(text: str):
    sections: dict[tuple[str, str | None], dict[str, _Entry]] = {}
    current = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        if line.startswith("["):
            m = _SECTION.match(line)
            if not m:
                raise ConfigError(f"unknown section header {line!r}", number)
            kind, name = m.groups()
            if kind in ("query", "profile") and not name:
                raise ConfigError(f"[{kind}] needs a query id", number)
            current = (kind, name)
            if current in sections:
                raise ConfigError(f"duplicate section {line}", number)
            sections[current] = {}
            continue
        if current is None:
            raise ConfigError("key outside of any section", number)
        if "=" not in line:
            raise ConfigError("expected 'key = value'", number)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in sections[current]:
            raise ConfigError("duplicate key", number, key)
        sections[current][key] = _Entry(value, number)
    return sections


def _literal(entry: _Entry, key: str, payload: str):
    try:
        return ast.literal_eval(payload)
    except (ValueError, SyntaxError):
        raise ConfigError(f"cannot parse {payload!r}", entry.line, key) from None


def _number(entry: _Entry, key: str) -> Fraction:
    try:
        return Fraction(entry.value)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"expected a number, got {entry.value!r}", entry.line, key) from None


def _int(entry: _Entry, key: str) -> int:
    value = _number(entry, key)
    if value.denominator != 1:
        raise ConfigError(f"expected an integer, got {entry.value!r}", entry.line, key)
    return int(value)


def _flag(entry: _Entry, key: str) -> bool:
    value = entry.value.lower()
    if value in ("on", "true", "yes", "1"):
        return True
    if value in ("off", "false", "no", "0"):
        return False
    raise ConfigError(f"expected on/off, got {entry.value!r}", entry.line, key)


def _call(entry: _Entry, key: str, allowed):
    m = _CALL.match(entry.value)
    if not m or m.group(1) not in allowed:
        raise ConfigError(f"expected one of {', '.join(f'{a}{{...}}' for a in allowed)}", entry.line, key)
    return m.group(1), m.group(2).strip()


def _checked(entry, key, build):
    try:
        return build()
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), entry.line, key) from None


def parse_cost(entry: _Entry, key: str = "cost") -> CostModel:
    kind, payload = _call(entry, key, ("linear", "pwl"))
    if kind == "linear":
        parts = [p.strip() for p in payload.split(",")]
        if len(parts) != 2:
            raise ConfigError("linear{per_tuple_us, overhead_us} takes two values", entry.line, key)
        per_tuple = _number(_Entry(parts[0], entry.line), key)
        overhead = _int(_Entry(parts[1], entry.line), key)
        return _checked(entry, key, lambda: Linear(per_tuple, overhead))
    knots = _literal(entry, key, payload)
    return _checked(entry, key, lambda: PiecewiseLinear(tuple(tuple(k) for k in knots)))


def parse_agg(entry: _Entry, groups: int, key: str = "agg") -> AggCostModel:
    kind, payload = _call(entry, key, ("pwl",))
    knots = _literal(entry, key, payload)
    return _checked(entry, key, lambda: AggCostModel(tuple(tuple(k) for k in knots), groups))


def parse_profile(entry: _Entry, key: str) -> ArrivalProfile:
    kind, payload = _call(entry, key, ("fixed", "trace"))
    if kind == "fixed":
        parts = [p.strip() for p in payload.split(",")]
        if len(parts) != 3:
            raise ConfigError("fixed{start_ms, rate_per_s, total} takes three values", entry.line, key)
        start = _number(_Entry(parts[0], entry.line), key)
        rate = _number(_Entry(parts[1], entry.line), key)
        total = _int(_Entry(parts[2], entry.line), key)
        return _checked(entry, key, lambda: FixedRate(millis(start), rate, total))
    points = _literal(entry, key, payload)
    return _checked(entry, key, lambda: Trace(tuple((millis(Fraction(str(t))), int(c)) for t, c in points)))


def _check_keys(section: dict, allowed: set, where: str):
    for key, entry in section.items():
        if key not in allowed:
            raise ConfigError(f"unknown key in [{where}]", entry.line, key)


def _enum(entry, key, enum):
    try:
        return enum(entry.value.lower())
    except ValueError:
        choices = ", ".join(m.value for m in enum)
        raise ConfigError(f"expected one of {choices}", entry.line, key) from None


def _scheduler(section: dict) -> SchedulerConfig:
    _check_keys(section, SCHEDULER_KEYS, "scheduler")
    kwargs = {"cmax": DESK_CMAX}
    if "policy" in section:
        kwargs["policy"] = _enum(section["policy"], "policy", Policy)
    if "rate_mode" in section:
        kwargs["rate_mode"] = _enum(section["rate_mode"], "rate_mode", RateMode)
    if "rsf" in section:
        kwargs["rsf"] = _number(section["rsf"], "rsf")
    if "cmax_ms" in section:
        kwargs["cmax"] = _int(section["cmax_ms"], "cmax_ms") * MS
    for key in ("greedy_batch", "strict_polling", "paced_maturity"):
        if key in section:
            kwargs[key] = _flag(section[key], key)
    line = next(iter(section.values())).line if section else None
    try:
        return SchedulerConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc), line) from None


def _query(qid: str, qsec: dict, psec: dict | None, header_line: int):
    _check_keys(qsec, QUERY_KEYS, f"query {qid}")
    if psec is None:
        raise ConfigError(f"query {qid} has no [profile {qid}] section", header_line)
    _check_keys(psec, PROFILE_KEYS, f"profile {qid}")
    if "expected" not in psec:
        raise ConfigError(f"[profile {qid}] needs 'expected'", header_line, "expected")
    expected = parse_profile(psec["expected"], "expected")
    actual = parse_profile(psec["actual"], "actual") if "actual" in psec else None
    if "template" in qsec:
        entry = qsec["template"]
        if entry.value not in CATALOG:
            raise ConfigError(f"unknown template {entry.value!r}", entry.line, "template")
        template = CATALOG[entry.value]
        cost, agg = template.cost, template.agg
    else:
        if "cost" not in qsec:
            raise ConfigError(f"query {qid} needs 'cost' or 'template'", header_line, "cost")
        cost = parse_cost(qsec["cost"])
        agg = AggCostModel.zero()
    groups = _int(qsec["groups"], "groups") if "groups" in qsec else agg.num_groups
    if "agg" in qsec:
        agg = parse_agg(qsec["agg"], groups)
    elif groups != agg.num_groups:
        agg = replace(agg, num_groups=groups)
    if "deadline_ms" not in qsec:
        raise ConfigError(f"query {qid} needs 'deadline_ms'", header_line, "deadline_ms")
    deadline = millis(_number(qsec["deadline_ms"], "deadline_ms"))
    if deadline <= expected.start_time:
        raise ConfigError("deadline must lie after the window start", qsec["deadline_ms"].line, "deadline_ms")
    arrival = millis(_number(qsec["arrival_ms"], "arrival_ms")) if "arrival_ms" in qsec else expected.start_time
    removal = None
    if "remove_ms" in qsec:
        removal = QueryRemoval(millis(_number(qsec["remove_ms"], "remove_ms")), qid)
    q = Query(qid, expected, deadline, cost, agg)
    return ScenarioQuery(q, arrival, actual), removal


def parse_scenario(text: str, label: str = "scenario") -> ScenarioFile:
    sections = _read_sections(text)
    config = _scheduler(sections.get(("scheduler", None), {}))
    lines = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        m = _SECTION.match(_strip(raw))
        if m:
            lines[m.groups()] = number
    for (kind, name) in sections:
        if kind == "profile" and ("query", name) not in sections:
            raise ConfigError(f"[profile {name}] has no matching [query {name}]", lines[(kind, name)])
    workload = sections.get(("workload", None))
    queries = [(name, sec) for (kind, name), sec in sections.items() if kind == "query"]
    if workload is not None:
        if queries:
            raise ConfigError("[workload] cannot be combined with [query] sections", lines[("workload", None)])
        _check_keys(workload, WORKLOAD_KEYS, "workload")
        params = {
            "delta": _number(workload["delta"], "delta") if "delta" in workload else Fraction(1),
            "rate": _enum(workload["rate"], "rate", RateKind) if "rate" in workload else RateKind.FR,
            "num_queries": _int(workload["num_queries"], "num_queries") if "num_queries" in workload else 12,
            "seed": _int(workload["seed"], "seed") if "seed" in workload else 0,
            "spacing": _int(workload["spacing_ms"], "spacing_ms") * MS if "spacing_ms" in workload else 0,
        }
        scenario = staggered_scenario(config=config, **params)
        return ScenarioFile(config, scenario, [], True, params)
    if not queries:
        raise ConfigError("scenario defines no queries and no [workload]")
    entries, removals = [], []
    for name, sec in queries:
        entry, removal = _query(name, sec, sections.get(("profile", name)), lines[("query", name)])
        entries.append(entry)
        if removal:
            removals.append(removal)
    return ScenarioFile(config, Scenario(tuple(entries), config, 0, label), removals)


def load_scenario(path) -> ScenarioFile:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stem = str(path).replace("\\", "/").rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return parse_scenario(text, stem)
