"""secserv: opportunistic security monitoring for fixed-priority
hard real-time systems.

Adapts the periods of sporadic security tasks and sizes a lowest-priority
execution server (capacity, replenishment period) so the monitoring runs
as close to its desired frequency as the legacy RT schedule allows, with
geometric programming doing the optimization and exact analysis,
exhaustive search, and discrete-event simulation validating the results.
"""

from .taskmodel import (RtTask, SecTask, ServerParams, TaskSet, TaskSetError,
                        make_taskset, parse_taskset, serialize_taskset,
                        total_utilization)
from .rta import (RtaResult, SupplyModel, busy_period_exact, delay_approx,
                  delay_exact, lsbf, response_time, rm_slack_bound,
                  rt_response_times, sec_schedulable_sufficient, server_ub,
                  supply_approx, supply_exact, workload_bound)
from .gp import (GpError, GpProblem, GpSolution, Monomial, Posynomial,
                 condense, posy_eval, solve, to_convex, variable)
from .optimizer import (JointSolution, PeriodSolution, Unschedulable,
                        build_period_problem, build_server_problem,
                        check_joint, co_optimize, solve_periods,
                        solve_server_params, xi_metric)
from .oracle import SearchConfig, exhaustive_search, qmin_for_task, \
    qmin_over_tasks
from .simulator import SimConfig, SimTrace, detection_latency, simulate
from .workload import GenSpec, generate, generate_batch, uunifast

__version__ = "0.1.0"
