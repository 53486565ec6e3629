"""Synthetic dataset generation.

Samples types from F, maps them through the original game's equilibrium
strategy, and logs the resulting actions. Closed forms are used where the
game has one (first-price linear bidding, truthful play under dominant
strategy mechanisms); Boston and the mean mechanism get a symmetric
equilibrium computed by fictitious play. Every strategy is certified: the
worst regret of the prescribed play against the population it induces is
measured and reported as ``eps_gen``, never assumed away.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .dists import FiniteDistribution
from .mechanisms import MechanismSpec, eu_matrix
from .rng import substream
from .spaces import Grid

EPS_GEN_TOL = 1e-3
_FP_MAX_ITERS = 60_000
_FP_CHECK_EVERY = 200

CLOSED_FORM_KINDS = ("first_price", "second_price", "rsd", "median", "vcg_mean")


class EquilibriumError(RuntimeError):
    """The numerical equilibrium path failed to certify at the target regret."""

    def __init__(self, kind: str, achieved: float, target: float):
        super().__init__(
            f"fictitious play on {kind} reached eps_gen={achieved:.3e}, target {target:.3e}"
        )
        self.achieved = achieved


@dataclass(frozen=True)
class Scenario:
    """Original game, counterfactual game, type distribution, dataset size."""

    name: str
    original: MechanismSpec
    counterfactual: MechanismSpec
    type_distribution: FiniteDistribution
    n_data: int

    def __post_init__(self) -> None:
        if self.n_data < 2:
            raise ValueError("n_data must be >= 2")
        if self.original.n_types != self.counterfactual.n_types:
            raise ValueError("original and counterfactual games must share a type space")


class StrategyMap:
    """Type-contingent (possibly mixed) strategy with its certification."""

    def __init__(self, rows: np.ndarray, eps_gen: float, label: str):
        self.rows = rows  # (n_types, n_actions) row-stochastic
        self.eps_gen = float(eps_gen)
        self.label = label

    def action_dist_row(self, type_idx: int) -> np.ndarray:
        return self.rows[type_idx]

    def is_pure(self) -> bool:
        return bool(np.all((self.rows == 0.0) | (self.rows == 1.0)))

    def pure_action(self, type_idx: int) -> int:
        return int(np.argmax(self.rows[type_idx]))


def sample_types(F: FiniteDistribution, n: int, seed: int) -> np.ndarray:
    """n iid type indices; identical output for identical (F, n, seed)."""
    if n < 1:
        raise ValueError("need n >= 1")
    return F.sample_indices(n, substream(seed, "types"))


def _certify_strategy(G: MechanismSpec, F: FiniteDistribution, rows: np.ndarray) -> float:
    """Max regret over F's support of playing the strategy against its population."""
    pop = F.weights @ rows
    total = pop.sum()
    eu = eu_matrix(G, pop / total)
    regret = eu.max(axis=1) - np.einsum("ta,ta->t", rows, eu)
    support = F.weights > 0.0
    return float(np.maximum(regret[support], 0.0).max())


def _closed_form_rows(G: MechanismSpec) -> np.ndarray:
    n_t, n_a = G.n_types, G.n_actions
    rows = np.zeros((n_t, n_a))
    if G.kind == "first_price":
        frac = (G.n_players - 1) / G.n_players
        grid = G.action_space
        for t in range(n_t):
            rows[t, grid.nearest_index(frac * G.type_values()[t])] = 1.0
        return rows
    # truthful play: types and actions must line up index for index
    if isinstance(G.type_space, Grid):
        if n_t != n_a or not np.array_equal(G.type_values(), G.action_values()):
            raise ValueError(f"truthful strategy for {G.kind} needs matching type/action grids")
    idx = np.arange(n_t)
    rows[idx, idx] = 1.0
    return rows


def _fictitious_play_rows(G: MechanismSpec, F: FiniteDistribution,
                          tol: float = EPS_GEN_TOL) -> np.ndarray:
    """Symmetric-equilibrium strategy via fictitious play over the type grid.

    Every _FP_CHECK_EVERY iterations both the history mixture and the pure
    best-response snapshot are certified; whichever passes first is returned
    (the snapshot certifies exactly at a grid fixed point).
    """
    n_t, n_a = G.n_types, G.n_actions
    counts = np.zeros((n_t, n_a))
    pop = np.full(n_a, 1.0 / n_a)
    support = F.weights > 0.0
    best_rows, best_eps = None, np.inf
    for it in range(1, _FP_MAX_ITERS + 1):
        eu = eu_matrix(G, pop)
        br = np.argmax(eu, axis=1)
        counts[np.arange(n_t), br] += 1.0
        rows = counts / it
        pop = F.weights @ rows
        if it % _FP_CHECK_EVERY == 0 or it == _FP_MAX_ITERS:
            snap = np.zeros((n_t, n_a))
            snap_br = np.argmax(eu_matrix(G, F.weights @ rows), axis=1)
            snap[np.arange(n_t), snap_br] = 1.0
            for cand in (snap, rows):
                eps = _certify_strategy(G, F, cand)
                if eps < best_eps:
                    best_rows, best_eps = cand.copy(), eps
                if eps <= tol:
                    return cand
    raise EquilibriumError(G.kind, best_eps, tol)


def equilibrium_strategy(G: MechanismSpec, F: FiniteDistribution) -> StrategyMap:
    """Equilibrium strategy of the original game under type distribution F."""
    if len(F) != G.n_types:
        raise ValueError("F must live on the game's type space")
    if G.kind in CLOSED_FORM_KINDS:
        rows = _closed_form_rows(G)
        label = "closed_form" if G.kind == "first_price" else "truthful"
    else:
        rows = _fictitious_play_rows(G, F)
        label = "fictitious_play"
    return StrategyMap(rows, _certify_strategy(G, F, rows), label)


def generate_dataset(sc: Scenario, seed: int,
                     strategy: StrategyMap | None = None,
                     types: np.ndarray | None = None) -> Dataset:
    """Sample a dataset from the scenario; true types ride along for evaluation.

    ``types`` overrides the sampling step (testing hook); ``strategy`` lets
    callers reuse one certified strategy across replicates.
    """
    if strategy is None:
        strategy = equilibrium_strategy(sc.original, sc.type_distribution)
    if types is None:
        types = sample_types(sc.type_distribution, sc.n_data, seed)
    types = np.asarray(types, dtype=int)
    actions = np.empty(len(types), dtype=int)
    for j, t in enumerate(types):
        row = strategy.action_dist_row(int(t))
        nz = np.flatnonzero(row)
        if len(nz) == 1:
            actions[j] = int(nz[0])
        else:
            cdf = np.cumsum(row)
            cdf[-1] = 1.0
            u = substream(seed, "actions", j).random()
            actions[j] = int(min(np.searchsorted(cdf, u, side="right"), len(row) - 1))
    return Dataset(tuple(int(a) for a in actions), tuple(int(t) for t in types))


def dataset_to_csv(D: Dataset, G: MechanismSpec, actions_path, types_path=None) -> None:
    """Write (index, action_index, action_value) plus the evaluation-only types file."""
    import csv

    def val(space, idx):
        v = space.value(idx)
        return repr(v) if isinstance(v, float) else v

    with open(actions_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "action_index", "action_value"])
        for j, a in enumerate(D.entries):
            w.writerow([j, a, val(G.action_space, a)])
    if types_path is not None and D.true_types is not None:
        with open(types_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "true_type_index", "true_type_value"])
            for j, t in enumerate(D.true_types):
                w.writerow([j, t, val(G.type_space, t)])
