"""Problem zoo, reference solvers and the experiment runner."""

from .reference import ReferenceSolution, reference_for, solve_reference
from .runner import (Comparison, RunRecord, check_spec, compare, load_record, run_experiment,
                     sweep)
from .spec import ProblemSpec
from .zoo import Instance, build_instance, build_problem

__all__ = ["Comparison", "Instance", "ProblemSpec", "ReferenceSolution", "RunRecord",
           "build_instance", "build_problem", "check_spec", "compare", "load_record",
           "reference_for", "run_experiment", "solve_reference", "sweep"]
