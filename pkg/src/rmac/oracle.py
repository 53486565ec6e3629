"""Exhaustive pure-strategy oracle for tiny instances.

Scans every joint assignment of a (type, action) pair to each data-player,
keeps the assignments where all players satisfy both regret constraints at
epsilon, and reports the min and max of the valuation over the feasible set.
Ground truth for solver tests; intractable beyond tiny instances, so the scan
refuses politely when the profile count exceeds the budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .data import Dataset, PairMixture
from .dists import dist_from_samples
from .mechanisms import MechanismSpec, ValuationSpec, eu_matrix, valuation_of_mixture
from .revelation import FeasibleTypeTable, regret_table

DEFAULT_BUDGET = 10_000_000


class BudgetExceededError(RuntimeError):
    def __init__(self, required: int, budget: int):
        super().__init__(
            f"enumeration needs {required} pure profiles, over the budget of {budget}"
        )
        self.required = required
        self.budget = budget


@dataclass
class EnumerationResult:
    pessimistic_v: float
    optimistic_v: float
    pessimistic_witness: list[tuple[int, int]] | None
    optimistic_witness: list[tuple[int, int]] | None
    feasible_count: int
    infeasible: bool
    scanned: int
    epsilon: float

    def to_json_dict(self) -> dict:
        return {
            "pessimistic_v": self.pessimistic_v,
            "optimistic_v": self.optimistic_v,
            "pessimistic_witness": self.pessimistic_witness,
            "optimistic_witness": self.optimistic_witness,
            "feasible_count": self.feasible_count,
            "infeasible": self.infeasible,
            "scanned": self.scanned,
            "epsilon": self.epsilon,
        }


def _candidate_lists(G: MechanismSpec, Gp: MechanismSpec, D: Dataset, eps: float,
                     table: FeasibleTypeTable) -> list[list[tuple[int, int]]]:
    cands = []
    for j in range(len(D)):
        types = table.feasible(j, eps)
        cands.append([(int(t), a) for t in types for a in range(Gp.n_actions)])
    return cands


def _scan(G: MechanismSpec, Gp: MechanismSpec, D: Dataset, eps: float,
          v: ValuationSpec | None, budget: int):
    """Yield (profile, v_value) for every feasible pure assignment."""
    table = regret_table(G, D)
    cands = _candidate_lists(G, Gp, D, eps, table)
    required = 1
    for c in cands:
        required *= max(len(c), 1)
    if required > budget:
        raise BudgetExceededError(required, budget)
    m = len(D)
    eu_cache: dict[tuple[int, ...], np.ndarray] = {}

    def cf_regrets(actions: tuple[int, ...], j: int) -> np.ndarray:
        """G'-regret of every (type, action) pair for player j given others' actions."""
        others = tuple(sorted(actions[:j] + actions[j + 1:]))
        eu = eu_cache.get(others)
        if eu is None:
            opp_q = np.bincount(np.asarray(others), minlength=Gp.n_actions) / (m - 1)
            eu = eu_matrix(Gp, opp_q)
            eu_cache[others] = eu
        return np.maximum(eu.max(axis=1, keepdims=True) - eu, 0.0)

    for profile in product(*cands):
        actions = tuple(p[1] for p in profile)
        ok = True
        for j in range(m):
            t_j, a_j = profile[j]
            if cf_regrets(actions, j)[t_j, a_j] > eps:
                ok = False
                break
        if not ok:
            continue
        value = None
        if v is not None:
            mix = PairMixture.from_pairs(Gp.n_types, Gp.n_actions, list(profile))
            value = valuation_of_mixture(v, mix)
        yield list(profile), value, required


def enumerate_bounds(G: MechanismSpec, Gp: MechanismSpec, D: Dataset, eps: float,
                     v: ValuationSpec, budget: int = DEFAULT_BUDGET) -> EnumerationResult:
    """Min and max of V over all feasible pure-strategy revelation profiles.

    An empty feasible set is reported as ``infeasible=True`` (a pure-strategy
    epsilon-equilibrium need not exist with discrete types), never hidden.
    """
    best_lo = np.inf
    best_hi = -np.inf
    wit_lo = wit_hi = None
    count = 0
    scanned = 0
    for profile, value, scanned in _scan(G, Gp, D, eps, v, budget):
        count += 1
        if value < best_lo:
            best_lo, wit_lo = value, profile
        if value > best_hi:
            best_hi, wit_hi = value, profile
    if count == 0:
        return EnumerationResult(np.nan, np.nan, None, None, 0, True, scanned, eps)
    return EnumerationResult(float(best_lo), float(best_hi), wit_lo, wit_hi,
                             count, False, scanned, eps)


def count_feasible(G: MechanismSpec, Gp: MechanismSpec, D: Dataset, eps: float,
                   budget: int = DEFAULT_BUDGET) -> int:
    """Number of feasible pure profiles; 1 means point identification at eps."""
    return sum(1 for _ in _scan(G, Gp, D, eps, None, budget))


def replay_witness(G: MechanismSpec, Gp: MechanismSpec, D: Dataset,
                   profile: list[tuple[int, int]]) -> float:
    """Independently recompute the max revelation loss of a witness profile."""
    from .revelation import regret_counterfactual, regret_original

    m = len(D)
    worst = 0.0
    for j, (t_j, a_j) in enumerate(profile):
        rg = regret_original(G, D, j, t_j)
        others = [profile[k][1] for k in range(m) if k != j]
        opp = dist_from_samples(others, Gp.action_space)
        rp = regret_counterfactual(Gp, t_j, a_j, opp)
        worst = max(worst, rg, rp)
    return worst
