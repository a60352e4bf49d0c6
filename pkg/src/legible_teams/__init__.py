"""Legible and fair subtask allocation for human-robot teams."""

from .domain import (
    Allocation,
    FairnessKind,
    JointState,
    Mode,
    Objective,
    ObjectiveKind,
    ObserverConfig,
    PosteriorTrace,
    Trajectory,
    ValidityPolicy,
    enumerate_allocations,
    human_equivalence_class,
    make_objective,
)
from .environments import EnvKind, Scenario, is_complete, q_value, transition, value
from .errors import (
    ConfigurationError,
    InfeasibleError,
    LegibleTeamsError,
    MembershipError,
    NumericalError,
    ScenarioParseError,
    SizeError,
    StructuralError,
)
from .observer import human_marginal_posterior, map_prediction, posterior, step_likelihood, trajectory_log_likelihood
from .planner import (
    PlanResult,
    enumerate_family,
    fairness_allocation,
    fairness_effort,
    plan,
    plan_efficient,
    plan_fair_legible,
    plan_legible_play,
    plan_legible_watch,
)

__version__ = "0.1.0"
