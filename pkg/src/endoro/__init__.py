"""Multistage adjustable robust optimization with endogenous uncertainty."""

from endoro.model import (
    AuxParam,
    ConstraintRow,
    ParamDescriptor,
    ProblemSpec,
    SetRow,
    VariableDescriptor,
    validate,
    window_constraints,
)
from endoro.lifting import LiftedSpace, LiftedVertex, hull_rows, lift_value, vertex_set
from endoro.mip import LpSolution, MipModel, MipSolution, external_solve, read_solution, solve_lp, solve_mip, write_mps
from endoro.policy import DecisionRulePolicy, PolicySkeleton, build_skeleton, evaluate
from endoro.counterpart import CounterpartOptions, build_counterpart_mip, extract_policy
from endoro.verify import oracle_optimum, sample_scenarios, worst_case_violation

__all__ = [
    "AuxParam",
    "ConstraintRow",
    "CounterpartOptions",
    "DecisionRulePolicy",
    "LiftedSpace",
    "LiftedVertex",
    "LpSolution",
    "MipModel",
    "MipSolution",
    "ParamDescriptor",
    "PolicySkeleton",
    "ProblemSpec",
    "SetRow",
    "VariableDescriptor",
    "build_counterpart_mip",
    "build_skeleton",
    "evaluate",
    "external_solve",
    "extract_policy",
    "hull_rows",
    "lift_value",
    "oracle_optimum",
    "read_solution",
    "sample_scenarios",
    "solve_lp",
    "solve_mip",
    "validate",
    "vertex_set",
    "window_constraints",
    "worst_case_violation",
    "write_mps",
]
