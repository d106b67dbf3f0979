"""Probabilistic argmax over teacher votes with exact privacy accounting
and a slot-level model of its batched homomorphic circuit."""

__version__ = "0.1.0"

from .core import (FAIL, OutcomeDistribution, ParseError, PolyParam, ShieldError,
                   ValidationError, VoteHistogram, VoteMatrix, format_poly,
                   histogram_from_votes, parse_poly)
from .distribution import (exact_argmax_accuracy, exact_argmax_distribution, gta,
                           mean_metrics, output_distribution)
from .privacy import (MomentsLedger, account, delta_for_epsilon, exact_argmax_privacy,
                      query_alphas, solve_epsilon)
from .simulator import monte_carlo, run_shield
from .circuit import CapacityError, capacity, circuit_cost, run_circuit, slot_sum
from .explorer import enumerate_polys, evaluate_space, pareto_front

__all__ = [
    "FAIL", "OutcomeDistribution", "ParseError", "PolyParam", "ShieldError",
    "ValidationError", "VoteHistogram", "VoteMatrix", "format_poly",
    "histogram_from_votes", "parse_poly", "exact_argmax_accuracy",
    "exact_argmax_distribution", "gta", "mean_metrics", "output_distribution",
    "MomentsLedger", "account", "delta_for_epsilon", "exact_argmax_privacy",
    "query_alphas", "solve_epsilon", "monte_carlo", "run_shield", "CapacityError",
    "capacity", "circuit_cost", "run_circuit", "slot_sum", "enumerate_polys",
    "evaluate_space", "pareto_front",
]
