"""Deadline-aware batch scheduling for intermittent query processing."""

from .arrival import FixedRate, Trace, estimate_total_tuples, input_time, tuples_available_at
from .constraint_sched import build_constraints, solve_min_batches
from .cost_model import (
    AggCostModel,
    Linear,
    PiecewiseLinear,
    estimate_tuples_processed,
    eval_agg_cost,
    eval_cost,
    fit_piecewise_linear,
)
from .dynamic_sched import (
    Policy,
    QueryArrival,
    QueryRemoval,
    RateMode,
    SchedulerConfig,
    compute_laxity,
    find_min_batch_size,
    run_dynamic,
    select_next,
)
from .errors import SchedulingError
from .simulator import Baseline, SimTrace, compute_metrics, execute_plan, validate_plan
from .single_query import (
    BatchPlan,
    Query,
    brute_force_optimal_plan,
    compute_slack,
    schedule_single_query,
    schedule_without_agg_cost,
)

__version__ = "0.1.0"
