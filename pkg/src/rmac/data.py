"""Logged datasets and revelation-game play histories."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dists import FiniteDistribution
from .spaces import Space


@dataclass(frozen=True)
class Dataset:
    """Logged actions, one entry per data-player.

    ``true_types`` is evaluation-only metadata (hidden type indices used to
    score estimates); solvers must never read it.
    """

    entries: tuple[int, ...]
    true_types: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.entries) == 0:
            raise ValueError("Dataset must be nonempty")
        if self.true_types is not None and len(self.true_types) != len(self.entries):
            raise ValueError("true_types must match entries in length")

    def __len__(self) -> int:
        return len(self.entries)

    def validate_actions(self, action_space: Space) -> None:
        n = len(action_space)
        for j, d in enumerate(self.entries):
            if not (0 <= d < n):
                raise ValueError(f"dataset entry {j} has action index {d} outside space of size {n}")

    def action_array(self) -> np.ndarray:
        return np.asarray(self.entries, dtype=int)


class PairMixture:
    """Weighted population over (type index, action index) pairs.

    Counts are kept unnormalized so that downstream valuations can divide
    once at the end; with integer counts and integer-valued payoffs that
    makes simple expectations exact in double precision.
    """

    __slots__ = ("counts", "total")

    def __init__(self, counts: np.ndarray, total: float | None = None):
        c = np.asarray(counts, dtype=float)
        if c.ndim != 2:
            raise ValueError("PairMixture counts must be a (n_types, n_actions) matrix")
        if np.any(c < 0):
            raise ValueError("PairMixture counts must be nonnegative")
        self.counts = c
        self.total = float(c.sum()) if total is None else float(total)
        if self.total <= 0:
            raise ValueError("PairMixture must have positive total mass")

    @property
    def n_types(self) -> int:
        return self.counts.shape[0]

    @property
    def n_actions(self) -> int:
        return self.counts.shape[1]

    def weights(self) -> np.ndarray:
        return self.counts / self.total

    def type_marginal_counts(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def action_marginal_counts(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def action_marginal(self, action_space: Space) -> FiniteDistribution:
        return FiniteDistribution(action_space, self.action_marginal_counts())

    def support_pairs(self) -> list[tuple[int, int]]:
        ts, as_ = np.nonzero(self.counts)
        return list(zip(ts.tolist(), as_.tolist()))

    @staticmethod
    def from_pairs(n_types: int, n_actions: int, pairs: Sequence[tuple[int, int]],
                   counts: Sequence[float] | None = None) -> "PairMixture":
        c = np.zeros((n_types, n_actions))
        if counts is None:
            counts = [1.0] * len(pairs)
        for (t, a), w in zip(pairs, counts):
            c[t, a] += w
        return PairMixture(c)


class EmpiricalHistory:
    """Per-data-player history of (type, action) picks across solver rounds.

    Single-writer append (one round for all players at a time) with read-only
    access between appends. Keeps pooled counts plus per-player marginal
    counts so leave-one-out mixtures are O(space) to assemble.
    """

    def __init__(self, n_players: int, n_types: int, n_actions: int):
        self.n_players = n_players
        self.n_types = n_types
        self.n_actions = n_actions
        self._rounds = 0
        self.pooled_pairs = np.zeros((n_types, n_actions))
        self.pooled_type_counts = np.zeros(n_types)
        self.pooled_action_counts = np.zeros(n_actions)
        self.player_type_counts = np.zeros((n_players, n_types))
        self.player_action_counts = np.zeros((n_players, n_actions))
        self._player_pairs: list[dict[tuple[int, int], int]] = [dict() for _ in range(n_players)]
        self._type_log: list[np.ndarray] = []
        self._action_log: list[np.ndarray] = []

    @property
    def rounds(self) -> int:
        return self._rounds

    def append(self, types: np.ndarray, actions: np.ndarray) -> None:
        types = np.asarray(types, dtype=int)
        actions = np.asarray(actions, dtype=int)
        if types.shape != (self.n_players,) or actions.shape != (self.n_players,):
            raise ValueError("append expects one (type, action) pick per player")
        np.add.at(self.pooled_pairs, (types, actions), 1.0)
        np.add.at(self.pooled_type_counts, types, 1.0)
        np.add.at(self.pooled_action_counts, actions, 1.0)
        self.player_type_counts[np.arange(self.n_players), types] += 1.0
        self.player_action_counts[np.arange(self.n_players), actions] += 1.0
        for j in range(self.n_players):
            key = (int(types[j]), int(actions[j]))
            d = self._player_pairs[j]
            d[key] = d.get(key, 0) + 1
        self._type_log.append(types.copy())
        self._action_log.append(actions.copy())
        self._rounds += 1

    def player_pair_counts(self, j: int) -> dict[tuple[int, int], int]:
        return self._player_pairs[j]

    def round_picks(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        return self._type_log[t], self._action_log[t]

    def pick_logs(self) -> tuple[np.ndarray, np.ndarray]:
        """(rounds, players) arrays of all type and action picks."""
        return np.stack(self._type_log), np.stack(self._action_log)

    def pooled_mixture(self) -> PairMixture:
        self._require_rounds()
        return PairMixture(self.pooled_pairs, total=self._rounds * self.n_players)

    def loo_mixture(self, j: int) -> PairMixture:
        """Pooled mixture excluding player ``j``'s own history."""
        self._require_rounds()
        if self.n_players < 2:
            raise ValueError("leave-one-out mixture needs at least two players")
        c = self.pooled_pairs.copy()
        for (t, a), k in self._player_pairs[j].items():
            c[t, a] -= k
        return PairMixture(c, total=self._rounds * (self.n_players - 1))

    def loo_action_counts(self, j: int) -> np.ndarray:
        return self.pooled_action_counts - self.player_action_counts[j]

    def loo_type_counts(self, j: int) -> np.ndarray:
        return self.pooled_type_counts - self.player_type_counts[j]

    def player_mixture(self, j: int) -> PairMixture:
        self._require_rounds()
        c = np.zeros((self.n_types, self.n_actions))
        for (t, a), k in self._player_pairs[j].items():
            c[t, a] = k
        return PairMixture(c, total=self._rounds)

    def player_tv_change(self, j: int, window: int) -> float:
        """TV distance between player j's mixture now and ``window`` rounds ago."""
        t1 = self._rounds
        t0 = t1 - window
        if t0 <= 0:
            raise ValueError("window exceeds available rounds")
        recent: dict[tuple[int, int], int] = {}
        for t in range(t0, t1):
            key = (int(self._type_log[t][j]), int(self._action_log[t][j]))
            recent[key] = recent.get(key, 0) + 1
        counts = self._player_pairs[j]
        tv = 0.0
        touched_mass = 0
        for key, w in recent.items():
            c1 = counts.get(key, 0)
            tv += abs(c1 / t1 - (c1 - w) / t0)
            touched_mass += c1
        # untouched pairs shrink uniformly when the denominator grows
        tv += (t1 - touched_mass) * (1.0 / t0 - 1.0 / t1)
        return 0.5 * tv

    def _require_rounds(self) -> None:
        if self._rounds == 0:
            raise ValueError("history is empty")
