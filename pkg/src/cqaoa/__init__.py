"""Classical simulation and benchmarking of constraint-preserving QAOA."""

from .problem import ConstrainedProblem, LinearFunction, make_problem
from .pipeline import PipelineConfig, CompiledModel, compile
from .qaoa import Schedule, OptimizerSettings, run_ladder, tae_schedule

__version__ = "0.1.0"

__all__ = [
    "ConstrainedProblem",
    "LinearFunction",
    "make_problem",
    "PipelineConfig",
    "CompiledModel",
    "compile",
    "Schedule",
    "OptimizerSettings",
    "run_ladder",
    "tae_schedule",
]
