"""Flexible specifications for MDP models: restriction, until checking, fuzzy scoring and lattice search."""
from .mdp import Distribution, Mdp, SpecPredicate, conj, reachable, restrict, transition_set, validate
from .pctl import Formula, NonConvergence, extract_policy, parse_query, policy_values, solve_until
from .fuzzy import Constant, LinearRamp, PiecewiseLinear, Sigmoid, TNorm, VagueRequirement, conjoin, mu_spec
from .lattice import DesignDimension, SpecLattice, cover_count, hasse_edges, materialize, weaker_eq
from .explorer import EvalRecord, OptimalResult, StudyConfig, evaluate_all, frontier_search, optimal_specs, report

__version__ = "0.1.0"

__all__ = [
    "Distribution",
    "Mdp",
    "SpecPredicate",
    "conj",
    "reachable",
    "restrict",
    "transition_set",
    "validate",
    "Formula",
    "NonConvergence",
    "extract_policy",
    "parse_query",
    "policy_values",
    "solve_until",
    "Constant",
    "LinearRamp",
    "PiecewiseLinear",
    "Sigmoid",
    "TNorm",
    "VagueRequirement",
    "conjoin",
    "mu_spec",
    "DesignDimension",
    "SpecLattice",
    "cover_count",
    "hasse_edges",
    "materialize",
    "weaker_eq",
    "EvalRecord",
    "OptimalResult",
    "StudyConfig",
    "evaluate_all",
    "frontier_search",
    "optimal_specs",
    "report",
]
