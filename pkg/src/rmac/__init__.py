"""Robust multi-agent counterfactual bounds from logged action data.

Builds the revelation game over a dataset of logged actions, solves for
pessimistic/optimistic epsilon-equilibria with revelation fictitious play,
certifies the solutions, and drives auction, school-choice, and social-choice
experiments end to end.
"""

from .data import Dataset, EmpiricalHistory, PairMixture
from .datagen import Scenario, StrategyMap, equilibrium_strategy, generate_dataset, sample_types
from .dists import FiniteDistribution, dist_expectation, dist_from_samples, point_mass, uniform
from .mechanisms import (
    MechanismSpec,
    Outcome,
    ValuationSpec,
    auction_spec,
    best_response,
    expected_utility,
    expected_utility_all_actions,
    matching_spec,
    mechanism_from_json,
    mechanism_to_json,
    social_spec,
    utility,
    valuation,
    valuation_against_mixture,
    valuation_of_mixture,
)
from .oracle import BudgetExceededError, EnumerationResult, count_feasible, enumerate_bounds
from .revelation import (
    FeasibleTypeTable,
    RegretReport,
    feasible_types,
    regret_counterfactual,
    regret_original,
    regret_table,
    revelation_loss,
)
from .rfp import (
    CandidateSet,
    CertificationReport,
    RfpConfig,
    RfpResult,
    certify,
    check_convergence,
    epsilon_best_response_set,
    rfp_solve,
    select_guess,
)
from .rng import derive_seed, substream
from .spaces import Grid, LabelSpace, grid_make, permutation_space

__version__ = "0.1.0"

__all__ = [
    "Dataset", "EmpiricalHistory", "PairMixture", "Scenario", "StrategyMap",
    "FiniteDistribution", "MechanismSpec", "Outcome", "ValuationSpec",
    "FeasibleTypeTable", "RegretReport", "EnumerationResult",
    "BudgetExceededError", "CandidateSet", "CertificationReport",
    "RfpConfig", "RfpResult", "Grid", "LabelSpace",
    "grid_make", "permutation_space", "dist_from_samples", "dist_expectation",
    "point_mass", "uniform", "auction_spec", "matching_spec", "social_spec",
    "utility", "expected_utility", "expected_utility_all_actions", "best_response",
    "valuation", "valuation_against_mixture", "valuation_of_mixture",
    "mechanism_to_json", "mechanism_from_json",
    "regret_original", "regret_table", "feasible_types", "regret_counterfactual",
    "revelation_loss", "enumerate_bounds", "count_feasible",
    "rfp_solve", "certify", "check_convergence", "epsilon_best_response_set",
    "select_guess", "equilibrium_strategy", "generate_dataset", "sample_types",
    "substream", "derive_seed",
]
