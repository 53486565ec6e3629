"""Revelation-game payoffs.

Each data-player's loss is the max of two regrets: the regret of its logged
action in the original game under a hypothesized type (computed against the
leave-one-out empirical action distribution of the dataset), and the regret
of its reported counterfactual action against the other players' reported
play. Both are clamped at zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .dists import FiniteDistribution, dist_from_samples
from .mechanisms import MechanismSpec, expected_utility_all_actions

CLAMP_TOL = 1e-9


def clamp_regret(x: float) -> float:
    """Zero out small negative values caused by floating error."""
    if x < -CLAMP_TOL:
        raise ValueError(f"regret {x} is negative beyond floating tolerance; likely a bug")
    return max(x, 0.0)


@dataclass(frozen=True)
class RegretReport:
    regret_g: float
    regret_g_prime: float
    loss: float
    best_action_g: int
    best_action_g_prime: int


class FeasibleTypeTable:
    """Per-(data-player, type) original-game regrets with epsilon thresholding.

    The m-by-|types| regret table is the dominant precomputation; feasibility
    queries at any epsilon are then O(1) lookups. Sets are nested in epsilon.
    """

    def __init__(self, regrets: np.ndarray):
        if regrets.ndim != 2:
            raise ValueError("regret table must be (m, n_types)")
        self.regrets = regrets

    @property
    def m(self) -> int:
        return self.regrets.shape[0]

    @property
    def n_types(self) -> int:
        return self.regrets.shape[1]

    def feasible(self, j: int, eps: float) -> np.ndarray:
        """Type indices with regret <= eps for player j (may be empty)."""
        return np.flatnonzero(self.regrets[j] <= eps)

    def feasible_mask(self, eps: float) -> np.ndarray:
        return self.regrets <= eps

    def empty_players(self, eps: float) -> list[int]:
        mask = self.feasible_mask(eps)
        return [j for j in range(self.m) if not mask[j].any()]

    def min_regret_types(self, j: int) -> np.ndarray:
        """Fallback set: types attaining the minimal regret for player j."""
        row = self.regrets[j]
        return np.flatnonzero(row <= row.min() + 1e-12)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "type_index", "regret"])
            for j in range(self.m):
                for t in range(self.n_types):
                    w.writerow([j, t, repr(float(self.regrets[j, t]))])


def loo_action_dist(G: MechanismSpec, D: Dataset, j: int) -> FiniteDistribution:
    """Empirical distribution of the dataset's actions excluding entry j."""
    if not (0 <= j < len(D)):
        raise ValueError(f"player index {j} outside dataset of size {len(D)}")
    if len(D) < 2:
        raise ValueError("leave-one-out distribution needs at least two dataset entries")
    rest = [d for k, d in enumerate(D.entries) if k != j]
    return dist_from_samples(rest, G.action_space)


def regret_original(G: MechanismSpec, D: Dataset, j: int, theta_idx: int) -> float:
    """Forgone expected utility of the logged action d_j under type theta."""
    opp = loo_action_dist(G, D, j)
    eu = expected_utility_all_actions(G, theta_idx, opp)
    return clamp_regret(float(eu.max() - eu[D.entries[j]]))


def regret_table(G: MechanismSpec, D: Dataset) -> FeasibleTypeTable:
    """Original-game regret of every (player, hypothesized type) pair."""
    from .mechanisms import eu_matrix

    D.validate_actions(G.action_space)
    if len(D) < 2:
        raise ValueError("regret table needs at least two dataset entries")
    m = len(D)
    actions = D.action_array()
    counts = np.bincount(actions, minlength=G.n_actions).astype(float)
    table = np.empty((m, G.n_types))
    # distinct logged actions share the same leave-one-out distribution
    cache: dict[int, np.ndarray] = {}
    for j in range(m):
        d_j = int(actions[j])
        row = cache.get(d_j)
        if row is None:
            loo = counts.copy()
            loo[d_j] -= 1.0
            eu = eu_matrix(G, loo / (m - 1))
            reg = eu.max(axis=1) - eu[:, d_j]
            np.maximum(reg, 0.0, out=reg)
            row = reg
            cache[d_j] = row
        table[j] = row
    return FeasibleTypeTable(table)


def feasible_types(G: MechanismSpec, D: Dataset, eps: float,
                   table: FeasibleTypeTable | None = None) -> FeasibleTypeTable:
    """Regret table thresholded at eps (compute the table once and reuse it)."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    return table if table is not None else regret_table(G, D)


def regret_counterfactual(Gp: MechanismSpec, theta_idx: int, action_idx: int,
                          opp: FiniteDistribution) -> float:
    """Forgone expected utility of the reported counterfactual action."""
    eu = expected_utility_all_actions(Gp, theta_idx, opp)
    return clamp_regret(float(eu.max() - eu[action_idx]))


def revelation_loss(regret_g: float, regret_g_prime: float) -> float:
    if regret_g < 0 or regret_g_prime < 0:
        raise ValueError("regrets must be nonnegative")
    return max(regret_g, regret_g_prime)


def regret_report(G: MechanismSpec, Gp: MechanismSpec, D: Dataset, j: int,
                  theta_idx: int, action_idx: int,
                  opp_cf: FiniteDistribution) -> RegretReport:
    """Both regrets and the revelation loss for one reported pair."""
    opp_g = loo_action_dist(G, D, j)
    eu_g = expected_utility_all_actions(G, theta_idx, opp_g)
    rg = clamp_regret(float(eu_g.max() - eu_g[D.entries[j]]))
    eu_p = expected_utility_all_actions(Gp, theta_idx, opp_cf)
    rp = clamp_regret(float(eu_p.max() - eu_p[action_idx]))
    return RegretReport(
        regret_g=rg,
        regret_g_prime=rp,
        loss=revelation_loss(rg, rp),
        best_action_g=int(np.argmax(eu_g)),
        best_action_g_prime=int(np.argmax(eu_p)),
    )
