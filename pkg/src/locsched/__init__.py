"""Resource-performance trade-off analysis and localization scheduling.

Pipeline: a continuous waypoint-following scenario is abstracted into a finite
belief MDP (``abstraction``), the convex front of optimal trade-offs between
task performance and resource use is computed (``pareto``), any chosen point
is turned into an executable localization schedule (``schedule``), and the
schedule's guarantees are validated by Monte Carlo simulation (``sim``).
"""

from .abstraction import ParticleBelief, SegmentOutcome, build_mdp, propagate_segment
from .errors import LocschedError
from .mdp import BeliefMdp, Objective, Policy, build_objectives, evaluate_all, evaluate_policy
from .pareto import ParetoFront, TargetPoint, compute_front, scalarize_solve, synthesize_policy
from .scenario import Scenario, load_scenario, scenario_from_dict
from .schedule import Schedule, check_feasibility, policy_to_schedule, schedule_lookup
from .sim import RunRecord, ValidationReport, simulate_mission, validate
from .util import TOOL_VERSION as __version__

__all__ = [
    "BeliefMdp",
    "LocschedError",
    "Objective",
    "ParetoFront",
    "ParticleBelief",
    "Policy",
    "RunRecord",
    "Scenario",
    "Schedule",
    "SegmentOutcome",
    "TargetPoint",
    "ValidationReport",
    "build_mdp",
    "build_objectives",
    "check_feasibility",
    "compute_front",
    "evaluate_all",
    "evaluate_policy",
    "load_scenario",
    "policy_to_schedule",
    "propagate_segment",
    "scalarize_solve",
    "scenario_from_dict",
    "schedule_lookup",
    "simulate_mission",
    "synthesize_policy",
    "validate",
    "__version__",
]
