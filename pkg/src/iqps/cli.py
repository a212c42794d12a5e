"""Command-line front end.

Exit codes: 0 when every run completed and met its deadlines, 2 when some
deadline was missed (or the oracle check found a disagreement), 1 on
configuration errors and infeasible static plans.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import random
import sys
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

from .config import ScenarioFile, load_scenario
from .constraint_sched import solve_min_batches
from .cost_model import eval_agg_cost, eval_cost, fit_piecewise_linear, residual
from .dynamic_sched import Policy, QueryRemoval, RateMode, SchedulerConfig, find_idle_violations, run_dynamic
from .errors import ConfigError, SchedulingError
from .simulator import Baseline, Metrics, SimTrace, check_cmax, check_trace, compute_metrics, execute_plan
from .single_query import brute_force_optimal_plan, enumerate_grid_plans, schedule_single_query
from .units import MS
from .workload import DELTAS, GRID, RateKind, Scenario, ScenarioQuery, random_single_query, scale_deadline
from .workload import stagger_deadlines, staggered_scenario

log = logging.getLogger("iqps")

METRICS_HEADER = (
    "scenario", "policy", "delta", "rsf", "query_id", "total_cost_us", "num_batches",
    "deadline_met", "tardiness_us", "normalized_cost",
)
COST_VS_DELTA_HEADER = ("scenario", "policy", "delta", "rsf", "normalized_cost", "deadline_miss_count", "all_met")
COST_VS_BATCHES_HEADER = ("query_id", "num_batches", "total_cost_us", "normalized_cost")
ORACLE_HEADER = (
    "instance", "total", "deadline_us", "algorithm_cost_us", "oracle_cost_us",
    "algorithm_batches", "fewest_oracle_batches", "agree",
)
COMMANDS = ("single", "constraint", "dynamic", "sweep", "fit", "oracle-check")


def _fraction(text: str) -> Fraction:
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    return value


def _positive_fraction(text: str) -> Fraction:
    value = _fraction(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _delta_list(text: str) -> list[Fraction]:
    return [_positive_fraction(part.strip()) for part in text.split(",") if part.strip()]


def _on_off(text: str) -> bool:
    if text.lower() in ("on", "off"):
        return text.lower() == "on"
    raise argparse.ArgumentTypeError("expected on or off")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iqps", description="Deadline-aware batch scheduling simulator")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--scenario", type=Path, help="scenario file (built-in staggered workload if omitted)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--policy", choices=[x.value for x in Policy])
    p.add_argument("--rsf", type=_fraction)
    p.add_argument("--cmax-ms", type=int)
    p.add_argument("--delta", type=_delta_list, help="comma-separated deadline factors")
    p.add_argument("--rate", choices=[x.value for x in RateKind])
    p.add_argument("--rate-mode", choices=[x.value for x in RateMode])
    p.add_argument("--seed", type=int)
    p.add_argument("--greedy-batch", type=_on_off)
    p.add_argument("--strict-polling", action="store_true")
    p.add_argument("--max-tuples", type=int, default=10, help="oracle-check: tuples per instance")
    p.add_argument("--instances", type=int, default=200, help="oracle-check: number of instances")
    p.add_argument("--samples", type=Path, help="fit: CSV with columns n,cost_us")
    p.add_argument("--segments", type=int, default=2, help="fit: number of linear segments")
    return p


def _fmt_fraction(value) -> str:
    return f"{float(value):.6f}"


def _fmt_delta(delta) -> str:
    return "" if delta is None else f"{float(delta):g}"


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


@dataclass
class CellResult:
    key: str
    scenario: str
    policy: str
    delta: Fraction | None
    rsf: Fraction
    trace: SimTrace
    metrics: Metrics


def _metrics_rows(cell: CellResult):
    for qid in sorted(cell.metrics.per_query):
        m = cell.metrics.per_query[qid]
        yield (
            cell.scenario, cell.policy, _fmt_delta(cell.delta), _fmt_fraction(cell.rsf), qid,
            m.total_cost, m.num_batches, str(m.deadline_met).lower(),
            "" if m.tardiness is None else m.tardiness, _fmt_fraction(m.normalized_cost),
        )


def _apply_overrides(args, sf: ScenarioFile | None) -> SchedulerConfig:
    config = sf.config if sf else SchedulerConfig(cmax=30_000 * MS)
    changes = {}
    if args.policy:
        changes["policy"] = Policy(args.policy)
    if args.rsf is not None:
        changes["rsf"] = args.rsf
    if args.cmax_ms is not None:
        changes["cmax"] = args.cmax_ms * MS
    if args.rate_mode:
        changes["rate_mode"] = RateMode(args.rate_mode)
    if args.greedy_batch is not None:
        changes["greedy_batch"] = args.greedy_batch
    if args.strict_polling:
        changes["strict_polling"] = True
    try:
        return replace(config, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _scenario_for(args, sf: ScenarioFile | None, config: SchedulerConfig, delta) -> tuple[Scenario, list]:
    """The scenario of one run and its removal events."""
    if sf is None or sf.from_workload:
        params = dict(sf.workload) if sf else {}
        if args.rate:
            params["rate"] = RateKind(args.rate)
        if args.seed is not None:
            params["seed"] = args.seed
        if delta is not None:
            params["delta"] = delta
        params.setdefault("delta", Fraction(1))
        return staggered_scenario(config=config, **params), []
    if args.rate or args.seed is not None:
        raise ConfigError("--rate and --seed apply to [workload] scenarios only")
    scenario = replace(sf.scenario, config=config)
    if delta is not None:
        entries = sorted(scenario.queries, key=lambda e: (e.query.window_end, e.query.query_id))
        chained = stagger_deadlines([e.query for e in entries], delta, config.cmax)
        scenario = replace(
            scenario,
            queries=tuple(ScenarioQuery(q, e.arrival_time, e.actual_profile) for q, e in zip(chained, entries)),
        )
    return scenario, list(sf.removals)


def _run_dynamic_cell(args, sf, config, delta) -> CellResult:
    scenario, removals = _scenario_for(args, sf, config, delta)
    events = sorted(list(scenario.events()) + removals, key=lambda e: (e.time, isinstance(e, QueryRemoval)))
    trace = run_dynamic(events, config)
    problems = check_trace(trace) + check_cmax(trace, config.cmax)
    if config.rate_mode is not RateMode.VARIABLE_ESTIMATED_TOTAL:
        problems += find_idle_violations(trace, events, config)
    for problem in problems:
        log.error("trace check: %s", problem)
    metrics = compute_metrics(trace, scenario.query_list)
    key = f"{config.policy.value}_delta{_fmt_delta(delta if delta is not None else 1)}"
    label = sf.scenario.label if sf and not sf.from_workload else scenario.label.split("-delta")[0]
    return CellResult(key, label, config.policy.value, delta, config.rsf, trace, metrics)


def _run_static_cell(args, sf, config, delta, command) -> CellResult:
    scenario, _ = _scenario_for(args, sf, config, None)
    trace = SimTrace()
    queries = []
    for entry in scenario.queries:
        q = entry.query if delta is None else scale_deadline(entry.query, delta)
        plan = schedule_single_query(q) if command == "single" else solve_min_batches(q)
        trace.rows.extend(execute_plan(plan, q).rows)
        queries.append(q)
    trace.sort()
    metrics = compute_metrics(trace, queries, Baseline.SUM_SINGLE_BATCH_MIN)
    label = sf.scenario.label if sf and not sf.from_workload else scenario.label.split("-delta")[0]
    key = f"{command}_delta{_fmt_delta(delta)}" if delta is not None else command
    return CellResult(key, label, command, delta, config.rsf, trace, metrics)


def _cost_vs_batches_rows(scenario: Scenario, max_batches: int = 30):
    for entry in sorted(scenario.queries, key=lambda e: e.query.query_id):
        q = entry.query
        base = q.min_comp_cost
        for b in range(1, min(q.total, max_batches) + 1):
            size, extra = divmod(q.total, b)
            cost = sum(eval_cost(q.cost, size + (1 if i < extra else 0)) for i in range(b))
            cost += eval_agg_cost(q.agg, b)
            yield q.query_id, b, cost, _fmt_fraction(Fraction(cost, base) if base else 1)


def _emit(out: Path, cells: list[CellResult], scenario_for_batches: Scenario | None) -> int:
    out.mkdir(parents=True, exist_ok=True)
    cells = sorted(cells, key=lambda c: c.key)
    _write_csv(out / "metrics.csv", METRICS_HEADER, [row for c in cells for row in _metrics_rows(c)])
    if len(cells) == 1:
        (out / "trace.csv").write_text(cells[0].trace.to_csv(), encoding="utf-8")
    else:
        for c in cells:
            (out / f"trace_{c.key}.csv").write_text(c.trace.to_csv(), encoding="utf-8")
    _write_csv(
        out / "plotdata_cost_vs_delta.csv",
        COST_VS_DELTA_HEADER,
        [
            (c.scenario, c.policy, _fmt_delta(c.delta), _fmt_fraction(c.rsf), _fmt_fraction(c.metrics.normalized_cost),
             c.metrics.deadline_miss_count, str(c.metrics.all_met).lower())
            for c in cells
        ],
    )
    if scenario_for_batches is not None:
        _write_csv(out / "plotdata_cost_vs_batches.csv", COST_VS_BATCHES_HEADER, _cost_vs_batches_rows(scenario_for_batches))
    missed = sum(c.metrics.deadline_miss_count for c in cells)
    for c in cells:
        print(
            f"{c.key}: normalized cost {float(c.metrics.normalized_cost):.3f}, "
            f"{c.metrics.deadline_miss_count} deadline miss(es)"
        )
    return 2 if missed else 0


def _cmd_oracle_check(args) -> int:
    rng = random.Random(args.seed if args.seed is not None else 0)
    rows, disagreements = [], 0
    for i in range(args.instances):
        q = random_single_query(rng, args.max_tuples)
        try:
            algo = schedule_single_query(q)
        except SchedulingError:
            algo = None
        plans = list(enumerate_grid_plans(q, GRID))
        oracle = brute_force_optimal_plan(q, GRID) if plans else None
        fewest = min((p.num_batches for p in plans), default=None)
        if algo is None or oracle is None:
            agree = algo is None and oracle is None
        else:
            agree = algo.total_cost == oracle.total_cost and algo.num_batches <= fewest
        disagreements += not agree
        rows.append((
            i, q.total, q.deadline,
            "" if algo is None else algo.total_cost, "" if oracle is None else oracle.total_cost,
            "" if algo is None else algo.num_batches, "" if fewest is None else fewest, str(agree).lower(),
        ))
    args.out.mkdir(parents=True, exist_ok=True)
    _write_csv(args.out / "oracle_check.csv", ORACLE_HEADER, rows)
    print(f"oracle check: {args.instances - disagreements}/{args.instances} instances agree")
    return 2 if disagreements else 0


def _cmd_fit(args) -> int:
    if args.samples is None:
        raise ConfigError("fit needs --samples")
    with open(args.samples, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"n", "cost_us"} <= set(reader.fieldnames):
            raise ConfigError("samples file needs columns n,cost_us", 1)
        samples = []
        for line, row in enumerate(reader, start=2):
            try:
                samples.append((int(row["n"]), int(row["cost_us"])))
            except ValueError:
                raise ConfigError("expected integers", line, "n/cost_us") from None
    samples.sort()
    model = fit_piecewise_linear(samples, args.segments)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_csv(args.out / "fit.csv", ("n", "cost_us"), model.knots)
    print("pwl{[" + ", ".join(f"({n}, {c})" for n, c in model.knots) + "]}")
    print(f"residual {residual(model, samples)}")
    return 0


def run_command(args) -> int:
    if args.command == "oracle-check":
        return _cmd_oracle_check(args)
    if args.command == "fit":
        return _cmd_fit(args)
    sf = load_scenario(args.scenario) if args.scenario else None
    config = _apply_overrides(args, sf)
    if args.command in ("single", "constraint"):
        deltas = args.delta or [None]
        cells = [_run_static_cell(args, sf, config, d, args.command) for d in deltas]
        scenario, _ = _scenario_for(args, sf, config, None)
        return _emit(args.out, cells, scenario)
    if args.command == "dynamic":
        deltas = args.delta or [None]
        cells = [_run_dynamic_cell(args, sf, config, d) for d in deltas]
        return _emit(args.out, cells, None)
    deltas = args.delta or list(DELTAS)
    policies = [Policy(args.policy)] if args.policy else list(Policy)
    cells = [
        _run_dynamic_cell(args, sf, replace(config, policy=policy), d) for policy in policies for d in deltas
    ]
    scenario, _ = _scenario_for(args, sf, config, deltas[0])
    return _emit(args.out, cells, scenario)


def main(argv=None) -> int:
    level = os.environ.get("IQPS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return run_command(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except SchedulingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
