"""Functional and timed simulation of mapped designs."""
from .aggregation import AggResult, simulate_aggregation
from .functional import FunctionalResult, Mismatch, SimError, first_mismatch, run_functional
from .oracle import reference_forward, requantize_ref
from .params import DenseParams, ModelParams, random_input, random_params
from .timed import DeadlockError, InvariantError, SimTrace, check_links, run_timed

__all__ = [
    "AggResult",
    "DeadlockError",
    "DenseParams",
    "FunctionalResult",
    "InvariantError",
    "Mismatch",
    "ModelParams",
    "SimError",
    "SimTrace",
    "check_links",
    "first_mismatch",
    "random_input",
    "random_params",
    "reference_forward",
    "requantize_ref",
    "run_functional",
    "run_timed",
    "simulate_aggregation",
]
