"""Symmetric Bayesian game mechanisms.

One interface covers the seven concrete games: first/second-price auctions
with reserves, Boston and random-serial-dictatorship school choice, and the
mean / median / VCG-mean social choice mechanisms. All randomness internal to
a mechanism (tie breaks, lottery priority orders) is integrated out exactly by
enumeration; expected utilities against opponent mixtures have closed-form
exact evaluators per kind plus a seeded Monte Carlo fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .data import PairMixture
from .dists import FiniteDistribution
from .rng import substream
from .spaces import Grid, Space, grid_make, perm_tuples, permutation_space

AUCTION_KINDS = ("first_price", "second_price")
MATCHING_KINDS = ("boston", "rsd")
SOCIAL_KINDS = ("mean", "median", "vcg_mean")
ALL_KINDS = AUCTION_KINDS + MATCHING_KINDS + SOCIAL_KINDS

VALUATION_KINDS = ("revenue", "welfare", "truthfulness", "type_sum")

MC_DEFAULT_SAMPLES = 2000

_MATCH_EXACT_MAX_PLAYERS = 5


class ExactUnsupportedError(ValueError):
    """Raised when no closed-form exact evaluator exists for a request."""


@dataclass(frozen=True)
class MechanismSpec:
    """A symmetric Bayesian game: kind, player count, spaces, parameters."""

    kind: str
    n_players: int
    action_space: Space
    type_space: Space
    reserve: float = 0.0
    schools: tuple[str, ...] | None = None
    capacities: tuple[int, ...] | None = None
    utility_vector: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown mechanism kind {self.kind!r}")
        if self.n_players < 2:
            raise ValueError("n_players must be >= 2")
        if self.kind in AUCTION_KINDS:
            if not isinstance(self.action_space, Grid) or not isinstance(self.type_space, Grid):
                raise ValueError("auction kinds need grid action and type spaces")
            if not (0.0 <= self.reserve <= 1.0):
                raise ValueError("reserve must lie in [0, 1]")
        elif self.kind in MATCHING_KINDS:
            if self.schools is None or self.capacities is None or self.utility_vector is None:
                raise ValueError("matching kinds need schools, capacities and utility_vector")
            if len(self.capacities) != len(self.schools):
                raise ValueError("one capacity per school")
            if any(c <= 0 for c in self.capacities):
                raise ValueError("capacities must be positive")
            if len(self.utility_vector) != len(self.schools):
                raise ValueError("utility_vector must have one entry per preference rank")
        else:
            if not isinstance(self.action_space, Grid) or not isinstance(self.type_space, Grid):
                raise ValueError("social choice kinds need grid action and type spaces")

    @property
    def n_actions(self) -> int:
        return len(self.action_space)

    @property
    def n_types(self) -> int:
        return len(self.type_space)

    def action_values(self) -> np.ndarray:
        assert isinstance(self.action_space, Grid)
        return self.action_space.values

    def type_values(self) -> np.ndarray:
        assert isinstance(self.type_space, Grid)
        return self.type_space.values


def auction_spec(kind: str, n_players: int, action_grid: Grid, type_grid: Grid,
                 reserve: float = 0.0) -> MechanismSpec:
    return MechanismSpec(kind, n_players, action_grid, type_grid, reserve=float(reserve))


def matching_spec(kind: str, schools: Sequence[str], capacities: Sequence[int],
                  utility_vector: Sequence[float], n_players: int | None = None) -> MechanismSpec:
    """Matching game where actions and types are rank-order lists over schools."""
    space = permutation_space(tuple(schools))
    n = int(sum(capacities)) if n_players is None else n_players
    return MechanismSpec(kind, n, space, space,
                         schools=tuple(schools), capacities=tuple(int(c) for c in capacities),
                         utility_vector=tuple(float(u) for u in utility_vector))


def social_spec(kind: str, n_players: int, grid: Grid) -> MechanismSpec:
    return MechanismSpec(kind, n_players, grid, grid)


@dataclass(frozen=True)
class Outcome:
    """Resolved outcome of one game branch: allocation plus payments."""

    allocation: object  # winner index or None, student->school map, or chosen point
    payments: tuple[float, ...]


@dataclass(frozen=True)
class ValuationSpec:
    """Scalar evaluation V of a counterfactual outcome."""

    kind: str
    mechanism: MechanismSpec

    def __post_init__(self) -> None:
        if self.kind not in VALUATION_KINDS:
            raise ValueError(f"unknown valuation kind {self.kind!r}")
        mkind = self.mechanism.kind
        if self.kind == "revenue" and mkind not in AUCTION_KINDS:
            raise ValueError("revenue valuation requires an auction mechanism")
        if self.kind in ("welfare", "truthfulness") and mkind not in MATCHING_KINDS:
            raise ValueError(f"{self.kind} valuation requires a matching mechanism")

    def rebind(self, mechanism: MechanismSpec) -> "ValuationSpec":
        return ValuationSpec(self.kind, mechanism)

    def scale(self) -> float:
        """Structural bound on the range of V, used for convergence scaling."""
        m = self.mechanism
        if self.kind == "revenue":
            return max(float(m.action_values().max()), m.reserve) or 1.0
        if self.kind == "welfare":
            uv = m.utility_vector or (1.0,)
            return m.n_players * (max(uv) - min(uv)) or 1.0
        if self.kind == "truthfulness":
            return 1.0
        tv = m.type_values()
        return m.n_players * float(tv.max() - tv.min()) or 1.0


# ---------------------------------------------------------------------------
# ex-post outcomes (ties and lotteries enumerated exactly)
# ---------------------------------------------------------------------------

def outcome_branches(spec: MechanismSpec, action_idxs: Sequence[int]) -> list[tuple[float, Outcome]]:
    """All equally-weighted resolutions of mechanism randomness for a profile."""
    n = spec.n_players
    if len(action_idxs) != n:
        raise ValueError(f"need {n} actions, got {len(action_idxs)}")
    if spec.kind in AUCTION_KINDS:
        return _auction_branches(spec, action_idxs)
    if spec.kind in MATCHING_KINDS:
        return _matching_branches(spec, action_idxs)
    return [_social_outcome(spec, action_idxs)]


def _auction_branches(spec, action_idxs):
    bids = spec.action_values()[np.asarray(action_idxs, dtype=int)]
    r = spec.reserve
    eligible = np.flatnonzero(bids >= r)
    n = spec.n_players
    if len(eligible) == 0:
        return [(1.0, Outcome(None, tuple([0.0] * n)))]
    top = bids[eligible].max()
    winners = [int(i) for i in eligible if bids[i] == top]
    if spec.kind == "first_price":
        price = float(top)
    else:
        rest = np.sort(bids)[::-1]
        second = float(rest[1]) if n >= 2 else r
        price = max(r, second)
    branches = []
    for w in winners:
        pay = [0.0] * n
        pay[w] = price
        branches.append((1.0 / len(winners), Outcome(w, tuple(pay))))
    return branches


def _boston_assign(lists, order, capacities):
    n = len(lists)
    remaining = list(capacities)
    assigned = [-1] * n
    rank = {p: i for i, p in enumerate(order)}
    for rnd in range(len(capacities)):
        apps: dict[int, list[int]] = {}
        for p in range(n):
            if assigned[p] == -1 and rnd < len(lists[p]):
                apps.setdefault(lists[p][rnd], []).append(p)
        for school, players in apps.items():
            players.sort(key=lambda p: rank[p])
            take = min(remaining[school], len(players))
            for p in players[:take]:
                assigned[p] = school
            remaining[school] -= take
    return tuple(assigned)


def _rsd_assign(lists, order, capacities):
    remaining = list(capacities)
    assigned = [-1] * len(lists)
    for p in order:
        for school in lists[p]:
            if remaining[school] > 0:
                assigned[p] = school
                remaining[school] -= 1
                break
    return tuple(assigned)


def _matching_branches(spec, action_idxs):
    perms = perm_tuples(len(spec.schools))
    lists = [perms[i] for i in action_idxs]
    orders = perm_tuples(spec.n_players)
    assign = _boston_assign if spec.kind == "boston" else _rsd_assign
    p = 1.0 / len(orders)
    out = []
    for order in orders:
        alloc = assign(lists, order, spec.capacities)
        out.append((p, Outcome(dict(enumerate(alloc)), tuple([0.0] * spec.n_players))))
    return out


def _social_outcome(spec, action_idxs):
    reports = spec.action_values()[np.asarray(action_idxs, dtype=int)]
    n = spec.n_players
    if spec.kind == "median":
        x_star = float(np.median(reports))
        return (1.0, Outcome(x_star, tuple([0.0] * n)))
    x_star = float(reports.mean())
    if spec.kind == "mean":
        return (1.0, Outcome(x_star, tuple([0.0] * n)))
    # vcg_mean: each player pays its report-measured externality on the others
    pay = []
    total = reports.sum()
    for i in range(n):
        others = np.delete(reports, i)
        x_wo = float((total - reports[i]) / (n - 1))
        pay.append(float(np.sum((x_star - others) ** 2 - (x_wo - others) ** 2)))
    return (1.0, Outcome(x_star, tuple(pay)))


def _rank_utility(spec: MechanismSpec) -> np.ndarray:
    """UTIL[type_perm, school] = utility of receiving that school."""
    perms = perm_tuples(len(spec.schools))
    u = np.zeros((len(perms), len(spec.schools)))
    for t, perm in enumerate(perms):
        for rank, school in enumerate(perm):
            u[t, school] = spec.utility_vector[rank]
    return u


def _branch_utility(spec: MechanismSpec, outcome: Outcome, seat: int, type_idx: int) -> float:
    if spec.kind in AUCTION_KINDS:
        theta = spec.type_values()[type_idx]
        if outcome.allocation == seat:
            return float(theta - outcome.payments[seat])
        return 0.0
    if spec.kind in MATCHING_KINDS:
        school = outcome.allocation[seat]
        if school == -1:
            return 0.0
        return float(_rank_utility(spec)[type_idx, school])
    theta = spec.type_values()[type_idx]
    return float(-((outcome.allocation - theta) ** 2) - outcome.payments[seat])


def utility(spec: MechanismSpec, own_action: int, opp_actions: Sequence[int],
            own_type: int) -> float:
    """Ex-post expected utility of the focal player (seat 0) for one profile.

    Mechanism randomness (tie breaks, lottery orders) is integrated out
    exactly; opponents' actions are fixed.
    """
    if len(opp_actions) != spec.n_players - 1:
        raise ValueError(f"need {spec.n_players - 1} opponent actions, got {len(opp_actions)}")
    profile = [int(own_action)] + [int(a) for a in opp_actions]
    _check_indices(spec, profile, [own_type])
    total = 0.0
    for p, outc in outcome_branches(spec, profile):
        total += p * _branch_utility(spec, outc, 0, int(own_type))
    return float(total)


def _check_indices(spec, action_idxs, type_idxs) -> None:
    for a in action_idxs:
        if not (0 <= a < spec.n_actions):
            raise ValueError(f"action index {a} outside space of size {spec.n_actions}")
    for t in type_idxs:
        if not (0 <= t < spec.n_types):
            raise ValueError(f"type index {t} outside space of size {spec.n_types}")


# ---------------------------------------------------------------------------
# exact expected utilities against an opponent mixture
# ---------------------------------------------------------------------------

def _binom_tail_table(K: int, F: np.ndarray) -> np.ndarray:
    """tails[j, x] = P(Binomial(K, F[x]) >= j) for j = 0..K+1."""
    pmf = np.empty((K + 1, len(F)))
    comp = 1.0 - F
    for k in range(K + 1):
        pmf[k] = math.comb(K, k) * F**k * comp ** (K - k)
    tails = np.zeros((K + 2, len(F)))
    tails[K::-1] = np.cumsum(pmf[::-1], axis=0)
    return tails


def auction_win_pay(kind: str, reserve: float, n_players: int, q: np.ndarray,
                    xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-bid win probability and expected payment facing n-1 iid opponents.

    Ties at the top split uniformly; bids strictly below the reserve never
    win; on a second-price win the price is max(reserve, highest opponent bid).
    ``q`` may have leading batch dimensions (one opponent mixture per row).
    """
    K = n_players - 1
    q = np.asarray(q, dtype=float)
    Fle = np.cumsum(q, axis=-1)
    Flt = Fle - q
    strict = Flt**K
    with np.errstate(divide="ignore", invalid="ignore"):
        tie_adj = (Fle ** (K + 1) - Flt ** (K + 1)) / ((K + 1) * q)
    W = np.where(q > 0.0, tie_adj, strict)
    eligible = xs >= reserve
    W = np.where(eligible, W, 0.0)
    if kind == "first_price":
        pay = xs * W
    else:
        pmax = Fle**K - Flt**K  # pmf of the highest opponent bid
        priced = pmax * np.maximum(reserve, xs)
        below = np.cumsum(priced, axis=-1) - priced  # strict wins: opp max < bid
        pay = np.where(eligible, below + (W - strict) * np.maximum(reserve, xs), 0.0)
    return W, pay


def _auction_eu_all(spec, theta_val: float, q: np.ndarray) -> np.ndarray:
    xs = spec.action_values()
    W, pay = auction_win_pay(spec.kind, spec.reserve, spec.n_players, q, xs)
    return theta_val * W - pay


def _median_cdf_by_bid(n_players: int, q: np.ndarray) -> np.ndarray:
    """cdf[b, x] = P(median of {own report b} + (n-1) iid draws <= x). Odd n only."""
    K = n_players - 1
    req = (n_players + 1) // 2
    Fle = np.cumsum(np.asarray(q, dtype=float))
    tails = _binom_tail_table(K, Fle)
    low = tails[req - 1]  # own report <= x
    high = tails[req]     # own report > x
    n = len(q)
    mask = np.tril(np.ones((n, n), dtype=bool)).T  # [b, x] true iff b <= x
    return np.where(mask, low[None, :], high[None, :])


def _median_eu_all(spec, theta_val: float, q: np.ndarray) -> np.ndarray:
    if spec.n_players % 2 == 0:
        raise ExactUnsupportedError("exact median utilities implemented for odd player counts only")
    xs = spec.action_values()
    cdf = _median_cdf_by_bid(spec.n_players, q)
    pmf = np.diff(cdf, axis=1, prepend=0.0)
    return -(pmf @ (xs - theta_val) ** 2)


def opp_sum_pmf(q: np.ndarray, K: int) -> np.ndarray:
    """Exact pmf of the sum of K iid grid draws (support: K*lo + step*arange)."""
    pmf = np.array([1.0])
    for _ in range(K):
        pmf = np.convolve(pmf, q)
    return pmf


def _mean_vcg_eu_all(spec, theta_val: float, q: np.ndarray) -> np.ndarray:
    """Exact mean / VCG-mean utilities via the opponent-sum convolution.

    The quadratic loss and the report-measured externality are degree-2
    polynomials in the opponent sum S, so after convolving the exact pmf of S
    only its first two moments enter.
    """
    grid = spec.action_space
    xs = grid.values
    n = spec.n_players
    K = n - 1
    pmf = opp_sum_pmf(q, K)
    svals = K * grid.lo + grid.step * np.arange(len(pmf)) if len(grid) > 1 else np.array([K * grid.lo])
    m1 = float(pmf @ svals)
    m2 = float(pmf @ svals**2)
    e1 = (xs + m1) / n
    e2 = (xs**2 + 2.0 * xs * m1 + m2) / (n * n)
    eu = -(e2 - 2.0 * theta_val * e1 + theta_val**2)
    if spec.kind == "vcg_mean":
        # E[(n-1)(x*^2 - x_wo^2) - 2 (x* - x_wo) S] with x_wo = S/(n-1)
        c2 = (n - 1) / n**2 - 2.0 / n + 1.0 / (n - 1)
        epay = (n - 1) * xs**2 / n**2 - (2.0 * xs / n**2) * m1 + c2 * m2
        eu = eu - epay
    return eu


def _matching_eu_tensor(spec: MechanismSpec) -> np.ndarray:
    """USUM[a0, o1, .., oK, theta] = sum over lottery orders of seat-0 utility."""
    key = (spec.kind, spec.n_players, spec.schools, spec.capacities, spec.utility_vector)
    cached = _MATCH_TENSOR_CACHE.get(key)
    if cached is not None:
        return cached
    if spec.n_players > _MATCH_EXACT_MAX_PLAYERS:
        raise ExactUnsupportedError(
            f"exact matching utilities enumerate all profiles; n_players={spec.n_players} "
            f"exceeds the supported maximum {_MATCH_EXACT_MAX_PLAYERS}"
        )
    perms = perm_tuples(len(spec.schools))
    orders = perm_tuples(spec.n_players)
    util = _rank_utility(spec)
    assign = _boston_assign if spec.kind == "boston" else _rsd_assign
    nP = len(perms)
    shape = (nP,) * spec.n_players + (nP,)
    usum = np.zeros(shape)
    for profile in product(range(nP), repeat=spec.n_players):
        lists = [perms[i] for i in profile]
        acc = np.zeros(nP)
        for order in orders:
            school0 = assign(lists, order, spec.capacities)[0]
            if school0 != -1:
                acc += util[:, school0]
        usum[profile] = acc
    _MATCH_TENSOR_CACHE[key] = usum
    return usum


_MATCH_TENSOR_CACHE: dict[tuple, np.ndarray] = {}


def matching_eu_matrix(spec: MechanismSpec, q: np.ndarray) -> np.ndarray:
    """EU[theta, a] for the focal seat against iid opponent reports ~ q."""
    usum = _matching_eu_tensor(spec)
    n_orders = math.factorial(spec.n_players)
    t = usum
    for _ in range(spec.n_players - 1):
        t = np.tensordot(t, q, axes=([1], [0]))  # contract one opponent axis
    return t.T / n_orders


def _matching_eu_all(spec, type_idx: int, q: np.ndarray) -> np.ndarray:
    return matching_eu_matrix(spec, q)[type_idx]


def expected_utility_all_actions(spec: MechanismSpec, own_type: int,
                                 opp_dist: FiniteDistribution) -> np.ndarray:
    """Exact expected utility of every action against iid opponent draws."""
    if len(opp_dist) != spec.n_actions:
        raise ValueError("opponent distribution must live on the mechanism's action space")
    _check_indices(spec, [], [own_type])
    q = opp_dist.weights
    if spec.kind in AUCTION_KINDS:
        return _auction_eu_all(spec, spec.type_values()[own_type], q)
    if spec.kind == "median":
        return _median_eu_all(spec, spec.type_values()[own_type], q)
    if spec.kind in ("mean", "vcg_mean"):
        return _mean_vcg_eu_all(spec, spec.type_values()[own_type], q)
    return _matching_eu_all(spec, own_type, q)


def eu_matrix(spec: MechanismSpec, opp_q: np.ndarray) -> np.ndarray:
    """Exact expected utilities for all (type, action) pairs at once.

    ``opp_q`` is the opponent action probability vector. Used by the regret
    table precomputation and the solver loop; algebraically identical to
    per-type :func:`expected_utility_all_actions` calls.
    """
    q = np.asarray(opp_q, dtype=float)
    if spec.kind in AUCTION_KINDS:
        xs = spec.action_values()
        W, pay = auction_win_pay(spec.kind, spec.reserve, spec.n_players, q, xs)
        return np.outer(spec.type_values(), W) - pay[None, :]
    if spec.kind == "median":
        if spec.n_players % 2 == 0:
            raise ExactUnsupportedError("exact median utilities implemented for odd player counts only")
        xs = spec.action_values()
        cdf = _median_cdf_by_bid(spec.n_players, q)
        pmf = np.diff(cdf, axis=1, prepend=0.0)
        m1 = pmf @ xs
        m2 = pmf @ xs**2
        th = spec.type_values()
        return -(m2[None, :] - 2.0 * np.outer(th, m1) + (th**2)[:, None])
    if spec.kind in ("mean", "vcg_mean"):
        return _mean_vcg_eu_matrix(spec, q)
    return matching_eu_matrix(spec, q)


def _mean_vcg_eu_matrix(spec: MechanismSpec, q: np.ndarray) -> np.ndarray:
    """Mean / VCG-mean utilities from the first two opponent-sum moments.

    The quadratic loss and the report-measured externality are both degree-2
    polynomials in the opponent report sum, so the exact expectation needs
    only E[S] and E[S^2]; this equals the full convolution result.
    """
    xs = spec.action_values()
    th = spec.type_values()
    n = spec.n_players
    K = n - 1
    mu = float(q @ xs)
    m2x = float(q @ xs**2)
    S1 = K * mu
    S2 = K * m2x + K * (K - 1) * mu * mu
    e1 = (xs + S1) / n
    e2 = (xs**2 + 2.0 * xs * S1 + S2) / (n * n)
    eu = -(e2[None, :] - 2.0 * np.outer(th, e1) + (th**2)[:, None])
    if spec.kind == "vcg_mean":
        c2 = (n - 1) / n**2 - 2.0 / n + 1.0 / (n - 1)
        epay = (n - 1) * xs**2 / n**2 - (2.0 * xs / n**2) * S1 + c2 * S2
        eu = eu - epay[None, :]
    return eu


def expected_utility(spec: MechanismSpec, own_action: int, own_type: int,
                     opp_dist: FiniteDistribution, method: str = "exact",
                     mc_samples: int = MC_DEFAULT_SAMPLES, seed: int = 0) -> float:
    """Expected utility against n-1 iid opponents drawn from ``opp_dist``.

    ``method`` is "exact", "mc", or "auto" (exact with an explicit, reported
    fallback to Monte Carlo when no exact evaluator exists).
    """
    _check_indices(spec, [own_action], [own_type])
    if method == "exact":
        return float(expected_utility_all_actions(spec, own_type, opp_dist)[own_action])
    if method == "mc":
        return _expected_utility_mc(spec, own_action, own_type, opp_dist, mc_samples, seed)
    if method == "auto":
        try:
            return float(expected_utility_all_actions(spec, own_type, opp_dist)[own_action])
        except ExactUnsupportedError as exc:
            import warnings

            warnings.warn(f"exact evaluator unavailable ({exc}); falling back to mc", RuntimeWarning)
            return _expected_utility_mc(spec, own_action, own_type, opp_dist, mc_samples, seed)
    raise ValueError(f"unknown method {method!r}")


def _expected_utility_mc(spec, own_action, own_type, opp_dist, samples, seed) -> float:
    rng = substream(seed, "eu_mc", own_action, own_type)
    K = spec.n_players - 1
    draws = opp_dist.sample_indices(samples * K, rng).reshape(samples, K)
    total = 0.0
    for s in range(samples):
        total += utility(spec, own_action, draws[s], own_type)
    return total / samples


def best_response(spec: MechanismSpec, own_type: int, opp_dist: FiniteDistribution,
                  method: str = "exact", mc_samples: int = MC_DEFAULT_SAMPLES,
                  seed: int = 0) -> tuple[int, float]:
    """Maximizing action and value; exact ties break toward the lowest index."""
    if method == "exact":
        eu = expected_utility_all_actions(spec, own_type, opp_dist)
    else:
        eu = np.array([
            expected_utility(spec, a, own_type, opp_dist, method, mc_samples, seed)
            for a in range(spec.n_actions)
        ])
    idx = int(np.argmax(eu))
    return idx, float(eu[idx])


# ---------------------------------------------------------------------------
# valuation functions V
# ---------------------------------------------------------------------------

def valuation(v: ValuationSpec, type_idxs: Sequence[int], action_idxs: Sequence[int]) -> float:
    """V of a full (type, action) profile, lotteries and ties enumerated."""
    spec = v.mechanism
    if v.kind == "type_sum":
        tv = spec.type_values() if isinstance(spec.type_space, Grid) else None
        if tv is None:
            raise ValueError("type_sum needs a grid type space")
        return float(tv[np.asarray(type_idxs, dtype=int)].sum())
    if len(type_idxs) != spec.n_players or len(action_idxs) != spec.n_players:
        raise ValueError(f"profiles must have length {spec.n_players}")
    _check_indices(spec, list(action_idxs), list(type_idxs))
    if v.kind == "revenue":
        total = 0.0
        for p, outc in outcome_branches(spec, action_idxs):
            total += p * sum(outc.payments)
        return float(total)
    if v.kind == "welfare":
        util = _rank_utility(spec)
        total = 0.0
        for p, outc in outcome_branches(spec, action_idxs):
            w = sum(
                util[type_idxs[i], outc.allocation[i]] if outc.allocation[i] != -1 else 0.0
                for i in range(spec.n_players)
            )
            total += p * w
        return float(total)
    # truthfulness: actions and types live on the same permutation space
    hits = sum(1 for t, a in zip(type_idxs, action_idxs) if t == a)
    return hits / spec.n_players


def auction_revenue_by_bid(kind: str, reserve: float, n_players: int, q: np.ndarray,
                           xs: np.ndarray) -> np.ndarray:
    """Expected seller revenue as a function of the focal player's bid."""
    K = n_players - 1
    Fle = np.cumsum(np.asarray(q, dtype=float))
    Flt = Fle - q
    n = len(xs)
    ble = np.tril(np.ones((n, n), dtype=bool)).T  # [b, x]: bid value <= x value
    if kind == "first_price":
        cdf_h1 = np.where(ble, Fle[None, :] ** K, 0.0)
        pmf_h1 = np.diff(cdf_h1, axis=1, prepend=0.0)
        paying = np.where(xs >= reserve, xs, 0.0)
        return pmf_h1 @ paying
    base = Fle**K
    bump = K * (1.0 - Fle) * Fle ** (K - 1)  # exactly one opponent above x
    # H2 <= x: at most one of the n bids above x
    cdf_h2 = np.where(ble, base[None, :] + bump[None, :], base[None, :])
    pmf_h2 = np.diff(cdf_h2, axis=1, prepend=0.0)
    e_price = pmf_h2 @ np.maximum(reserve, xs)
    below_r = float(np.sum(q[xs < reserve])) ** K
    p_no_sale = np.where(xs < reserve, below_r, 0.0)
    return e_price - reserve * p_no_sale


def auction_revenue_pool(kind: str, reserve: float, n_seats: int, q: np.ndarray,
                         xs: np.ndarray) -> float:
    """Expected revenue when all seats are iid draws from ``q``."""
    N = n_seats
    Fle = np.cumsum(np.asarray(q, dtype=float))
    Flt = Fle - q
    if kind == "first_price":
        pmf_h1 = Fle**N - Flt**N
        return float(np.sum(pmf_h1 * np.where(xs >= reserve, xs, 0.0)))
    cdf_h2 = Fle**N + N * (1.0 - Fle) * Fle ** (N - 1)
    pmf_h2 = np.diff(cdf_h2, prepend=0.0)
    below_r = float(np.sum(q[xs < reserve])) ** N
    return float(pmf_h2 @ np.maximum(reserve, xs) - reserve * below_r)


def _as_pair_mixture(spec: MechanismSpec, others) -> PairMixture:
    from .data import EmpiricalHistory

    if isinstance(others, PairMixture):
        return others
    if isinstance(others, EmpiricalHistory):
        return others.pooled_mixture()
    if isinstance(others, FiniteDistribution):
        # distribution over the action space with no type information
        if len(others) != spec.n_actions:
            raise ValueError("action distribution must live on the mechanism's action space")
        counts = np.tile(others.weights / spec.n_types, (spec.n_types, 1))
        return PairMixture(counts, total=1.0)
    raise TypeError(f"cannot interpret {type(others).__name__} as an opponent mixture")


def valuation_of_mixture(v: ValuationSpec, mix: PairMixture) -> float:
    """V of a population: the mechanism's seats are filled iid from ``mix``."""
    spec = v.mechanism
    n = spec.n_players
    w_a = mix.action_marginal_counts()
    if v.kind == "type_sum":
        tm = mix.type_marginal_counts()
        return float(n * (tm @ spec.type_values()) / mix.total)
    if v.kind == "revenue":
        q = w_a / mix.total
        return auction_revenue_pool(spec.kind, spec.reserve, n, q, spec.action_values())
    if v.kind == "truthfulness":
        return float(np.trace(mix.counts) / mix.total)
    # welfare: n * E[utility of one seat], seats iid from the mixture
    usum = _matching_eu_tensor(spec)
    if _welfare_int_exact(spec, mix):
        # integer counts and integer utilities: accumulate in python ints and
        # divide once, so structurally constant welfare comes out bit-exact
        num = _welfare_int_numerator(spec, mix, usum)
        denom = round(mix.total) ** n * math.factorial(n)
        return n * num / denom
    t = usum
    for _ in range(n - 1):
        t = np.tensordot(t, w_a, axes=([1], [0]))
    per_seat_num = float(np.einsum("ta,at->", mix.counts, t))
    denom = mix.total * (mix.total ** (n - 1)) * math.factorial(n)
    return n * per_seat_num / denom


def _welfare_int_exact(spec: MechanismSpec, mix: PairMixture) -> bool:
    if any(u != int(u) for u in spec.utility_vector):
        return False
    if mix.total != round(mix.total):
        return False
    return bool(np.all(mix.counts == np.round(mix.counts)))


def _welfare_int_numerator(spec: MechanismSpec, mix: PairMixture,
                           usum: np.ndarray) -> int:
    n = spec.n_players
    if n != 3:
        raise ExactUnsupportedError("integer-exact welfare implemented for 3 seats")
    usum_int = np.rint(usum).astype(object)
    counts = np.rint(mix.counts).astype(object)
    ca = np.rint(mix.action_marginal_counts()).astype(object)
    total = 0
    ts, as_ = np.nonzero(counts)
    sup_a = np.flatnonzero(ca)
    for t0, a0 in zip(ts.tolist(), as_.tolist()):
        c0 = counts[t0, a0]
        for o1 in sup_a.tolist():
            for o2 in sup_a.tolist():
                total += c0 * ca[o1] * ca[o2] * usum_int[a0, o1, o2, t0]
    return int(total)


def valuation_against_mixture(v: ValuationSpec, own_pair: tuple[int, int], others) -> float:
    """V of a match: the focal player holds one seat with ``own_pair`` and the
    remaining n-1 seats are filled by iid draws from ``others``."""
    spec = v.mechanism
    mix = _as_pair_mixture(spec, others)
    theta_idx, action_idx = own_pair
    n = spec.n_players
    if v.kind == "type_sum":
        tm = mix.type_marginal_counts()
        mean_t = (tm @ spec.type_values()) / mix.total
        return float(spec.type_values()[theta_idx] + (n - 1) * mean_t)
    if v.kind == "truthfulness":
        p_truth = float(np.trace(mix.counts) / mix.total)
        own = 1.0 if theta_idx == action_idx else 0.0
        return (own + (n - 1) * p_truth) / n
    if v.kind == "revenue":
        q = mix.action_marginal_counts() / mix.total
        rev = auction_revenue_by_bid(spec.kind, spec.reserve, n, q, spec.action_values())
        return float(rev[action_idx])
    # welfare with the focal seat pinned
    usum = _matching_eu_tensor(spec)
    q_counts = mix.action_marginal_counts()
    q = q_counts / mix.total
    n_orders = math.factorial(n)
    t = usum
    for _ in range(n - 1):
        t = np.tensordot(t, q, axes=([1], [0]))
    own_u = float(t[action_idx, theta_idx]) / n_orders
    # each opponent seat faces the focal action plus n-2 iid draws
    t2 = usum
    for _ in range(n - 2):
        t2 = np.tensordot(t2, q, axes=([2], [0]))
    opp_matrix = t2[:, action_idx, :] / n_orders  # [a_opp, theta_opp]
    opp_u = float(np.einsum("ta,at->", mix.weights(), opp_matrix))
    return own_u + (n - 1) * opp_u


# ---------------------------------------------------------------------------
# JSON codec (scenario file format shared with the experiment driver)
# ---------------------------------------------------------------------------

def mechanism_to_json(spec: MechanismSpec) -> dict:
    d: dict = {"kind": spec.kind, "n_players": spec.n_players}
    if spec.kind in MATCHING_KINDS:
        d["schools"] = list(spec.schools)
        d["capacities"] = list(spec.capacities)
        d["utility_vector"] = list(spec.utility_vector)
    else:
        ag, tg = spec.action_space, spec.type_space
        d["action_grid"] = {"lo": ag.lo, "hi": ag.hi, "step": ag.step}
        d["type_grid"] = {"lo": tg.lo, "hi": tg.hi, "step": tg.step}
        if spec.kind in AUCTION_KINDS:
            d["reserve"] = spec.reserve
    return d


def mechanism_from_json(d: dict) -> MechanismSpec:
    kind = d.get("kind")
    if kind in MATCHING_KINDS:
        return matching_spec(kind, d["schools"], d["capacities"], d["utility_vector"],
                             n_players=d.get("n_players"))
    ag = d["action_grid"]
    tg = d.get("type_grid", ag)
    action_grid = grid_make(ag["lo"], ag["hi"], ag["step"])
    type_grid = grid_make(tg["lo"], tg["hi"], tg["step"])
    if kind in AUCTION_KINDS:
        return auction_spec(kind, int(d["n_players"]), action_grid, type_grid,
                            reserve=float(d.get("reserve", 0.0)))
    if kind in SOCIAL_KINDS:
        if len(action_grid) != len(type_grid):
            raise ValueError("social kinds use one shared grid")
        return social_spec(kind, int(d["n_players"]), action_grid)
    raise ValueError(f"unknown mechanism kind {kind!r}")
