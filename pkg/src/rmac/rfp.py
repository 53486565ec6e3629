"""Revelation Fictitious Play.

Each data-player repeatedly reports a (type, counterfactual action) pair.
An iteration builds, for every player, the set of pairs whose revelation
loss against the historical mixture of the other players is at most epsilon,
then picks the element extremizing the valuation (pessimistic mode minimizes,
optimistic maximizes; point mode picks a plain loss-minimizing best response
with random tie-breaking). Convergence is judged on the stability of the
empirical mixtures and of the per-iteration valuation trace. Every run is
certified from scratch against its final mixtures.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset, EmpiricalHistory, PairMixture
from .dists import FiniteDistribution
from .mechanisms import (
    AUCTION_KINDS,
    MechanismSpec,
    ValuationSpec,
    auction_revenue_by_bid,
    auction_win_pay,
    eu_matrix,
    expected_utility_all_actions,
    valuation_of_mixture,
)
from .revelation import FeasibleTypeTable, clamp_regret, regret_original, regret_table
from .rng import tie_u01
from .spaces import Grid

TIE_TOL = 1e-12

MODES = ("point", "pessimistic", "optimistic")


@dataclass(frozen=True)
class RfpConfig:
    """Solver knobs; ``point`` mode forces epsilon to 0 and ignores alpha."""

    epsilon: float
    mode: str
    v_spec: ValuationSpec
    seed: int
    max_iters: int = 2000
    conv_tol: float = 1e-3
    conv_window: int = 50
    mc_samples: int = 2000
    cert_tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not (self.max_iters >= self.conv_window >= 1):
            raise ValueError("need max_iters >= conv_window >= 1")

    @property
    def effective_epsilon(self) -> float:
        return 0.0 if self.mode == "point" else self.epsilon

    @property
    def alpha(self) -> float:
        return -1.0 if self.mode == "pessimistic" else 1.0

    def to_json_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "mode": self.mode,
            "valuation": self.v_spec.kind,
            "seed": self.seed,
            "max_iters": self.max_iters,
            "conv_tol": self.conv_tol,
            "conv_window": self.conv_window,
            "mc_samples": self.mc_samples,
            "cert_tol": self.cert_tol,
        }


@dataclass
class CandidateSet:
    """Low-loss (type, action) pairs for one player at one iteration."""

    player: int
    pairs: np.ndarray  # (k, 2) int array
    fallback: bool


@dataclass
class CertificationReport:
    max_loss: float
    epsilon: float
    cert_tol: float
    passed: bool
    player_max: np.ndarray
    offenders: list[int]

    def to_json_dict(self) -> dict:
        return {
            "max_loss": self.max_loss,
            "epsilon": self.epsilon,
            "cert_tol": self.cert_tol,
            "passed": self.passed,
            "offenders": self.offenders,
        }


@dataclass
class RfpResult:
    """Solver output.

    ``mixtures`` hold the post-burn-in (tail half) pair counts per player:
    the finite-run stand-in for the limit mixture, with the random
    initialization transient discarded. The in-loop fictitious play history
    is always the full one.
    """

    config: RfpConfig
    mixtures: list[dict[tuple[int, int], int]]
    rounds: int              # rounds inside the reported tail
    total_rounds: int
    iterations: int
    converged: bool
    v_value: float
    v_trace: list[float]
    certification: CertificationReport | None
    estimated_types: np.ndarray          # mean type value (grids) or mode index
    fallback_rounds: int
    seed: int
    wall_time_s: float

    def final_mixture(self) -> PairMixture:
        n_t = self.config.v_spec.mechanism.n_types
        n_a = self.config.v_spec.mechanism.n_actions
        counts = np.zeros((n_t, n_a))
        for mix in self.mixtures:
            for (t, a), k in mix.items():
                counts[t, a] += k
        return PairMixture(counts, total=self.rounds * len(self.mixtures))

    def player_mixture(self, j: int) -> PairMixture:
        n_t = self.config.v_spec.mechanism.n_types
        n_a = self.config.v_spec.mechanism.n_actions
        counts = np.zeros((n_t, n_a))
        for (t, a), k in self.mixtures[j].items():
            counts[t, a] = k
        return PairMixture(counts, total=self.rounds)

    def to_json_dict(self) -> dict:
        return {
            "config": self.config.to_json_dict(),
            "rounds": self.rounds,
            "total_rounds": self.total_rounds,
            "iterations": self.iterations,
            "converged": self.converged,
            "v_value": self.v_value,
            "v_trace": self.v_trace,
            "certification": self.certification.to_json_dict() if self.certification else None,
            "estimated_types": [float(x) for x in self.estimated_types],
            "fallback_rounds": self.fallback_rounds,
            "seed": self.seed,
            "wall_time_s": self.wall_time_s,
            "mixtures": [
                [[t, a, k] for (t, a), k in sorted(mix.items())] for mix in self.mixtures
            ],
        }


def _candidate_mask(rg_row: np.ndarray, rgp: np.ndarray, eps: float) -> np.ndarray:
    return (rg_row <= eps)[:, None] & (rgp <= eps)


def _loss_matrix(rg_row: np.ndarray, rgp: np.ndarray) -> np.ndarray:
    return np.maximum(rg_row[:, None], rgp)


def epsilon_best_response_set(j: int, table: FeasibleTypeTable, history: EmpiricalHistory,
                              eps: float, Gp: MechanismSpec) -> CandidateSet:
    """Pairs with revelation loss <= eps against the history, for player j.

    Falls back to the loss-minimizing pairs (flagged) when the set is empty,
    which finite-sample data can force even at moderate epsilon.
    """
    q = history.loo_action_counts(j)
    q = q / q.sum()
    eu = eu_matrix(Gp, q)
    rgp = np.maximum(eu.max(axis=1, keepdims=True) - eu, 0.0)
    mask = _candidate_mask(table.regrets[j], rgp, eps)
    fallback = not mask.any()
    if fallback:
        loss = _loss_matrix(table.regrets[j], rgp)
        mask = loss <= loss.min() + TIE_TOL
    ts, as_ = np.nonzero(mask)
    return CandidateSet(j, np.column_stack([ts, as_]), fallback)


def select_guess(cands: CandidateSet, alpha: float, v: ValuationSpec, others,
                 rng: np.random.Generator) -> tuple[int, int]:
    """argmax of alpha*V over the candidate pairs, exact ties uniform at random."""
    from .mechanisms import valuation_against_mixture

    if len(cands.pairs) == 0:
        raise ValueError("candidate set is empty (fallback should have filled it)")
    vals = np.array([
        alpha * valuation_against_mixture(v, (int(t), int(a)), others)
        for t, a in cands.pairs
    ])
    return _pick_max(cands.pairs, vals, rng)


def _pick_max(pairs: np.ndarray, vals: np.ndarray, rng: np.random.Generator) -> tuple[int, int]:
    best = vals.max()
    tol = TIE_TOL * max(1.0, abs(best))
    ties = np.flatnonzero(vals >= best - tol)
    if len(ties) == 1:
        k = ties[0]
    else:
        k = ties[min(int(rng.random() * len(ties)), len(ties) - 1)]
    return int(pairs[k, 0]), int(pairs[k, 1])


def _pick_pair(ts: np.ndarray, as_: np.ndarray, vals: np.ndarray | None,
               seed: int, j: int, it: int) -> tuple[int, int]:
    """Loop-internal pick: None vals means all pairs tie (loss-minimal set)."""
    if vals is None:
        n = len(ts)
        if n == 1:
            return int(ts[0]), int(as_[0])
        k = min(int(tie_u01(seed, "select", j, it) * n), n - 1)
        return int(ts[k]), int(as_[k])
    best = vals.max()
    tol = TIE_TOL * max(1.0, abs(best))
    ties = np.flatnonzero(vals >= best - tol)
    if len(ties) == 1:
        k = int(ties[0])
    else:
        k = int(ties[min(int(tie_u01(seed, "select", j, it) * len(ties)), len(ties) - 1)])
    return int(ts[k]), int(as_[k])


def check_convergence(v_trace: Sequence[float], history: EmpiricalHistory,
                      conv_tol: float, conv_window: int, v_scale: float) -> bool:
    """Mixture and valuation-trace stability over the trailing window."""
    if history.rounds <= conv_window or len(v_trace) < conv_window:
        return False
    window = np.asarray(v_trace[-conv_window:])
    if float(window.max() - window.min()) >= conv_tol * max(v_scale, 1e-12):
        return False
    for j in range(history.n_players):
        if history.player_tv_change(j, conv_window) >= conv_tol:
            return False
    return True


class _ValuationTables:
    """Per-iteration vectorized V(theta, a) values against a player's mixture."""

    def __init__(self, v: ValuationSpec):
        self.v = v
        self.spec = v.mechanism
        self.kind = v.kind

    def values(self, history: EmpiricalHistory, j: int, ts: np.ndarray,
               as_: np.ndarray) -> np.ndarray:
        """V of the given candidate pairs only (loop fast path)."""
        spec = self.spec
        n = spec.n_players
        if self.kind == "type_sum":
            lo_t = history.loo_type_counts(j)
            mean_t = (lo_t @ spec.type_values()) / lo_t.sum()
            return spec.type_values()[ts] + (n - 1) * mean_t
        if self.kind == "truthfulness":
            loo = history.loo_mixture(j)
            p_truth = float(np.trace(loo.counts) / loo.total)
            return ((ts == as_).astype(float) + (n - 1) * p_truth) / n
        tab = self.table(history, j)
        return tab[ts, as_]

    def table(self, history: EmpiricalHistory, j: int) -> np.ndarray:
        """V for every (type, action) pair, focal seat pinned to the pair."""
        import math

        spec = self.spec
        n = spec.n_players
        if self.kind == "type_sum":
            lo_t = history.loo_type_counts(j)
            mean_t = (lo_t @ spec.type_values()) / lo_t.sum()
            col = spec.type_values() + (n - 1) * mean_t
            return np.broadcast_to(col[:, None], (spec.n_types, spec.n_actions))
        if self.kind == "truthfulness":
            loo = history.loo_mixture(j)
            p_truth = float(np.trace(loo.counts) / loo.total)
            base = np.full((spec.n_types, spec.n_actions), (n - 1) * p_truth / n)
            idx = np.arange(min(spec.n_types, spec.n_actions))
            base[idx, idx] += 1.0 / n
            return base
        if self.kind == "revenue":
            q = history.loo_action_counts(j)
            q = q / q.sum()
            rev = auction_revenue_by_bid(spec.kind, spec.reserve, n, q, spec.action_values())
            return np.broadcast_to(rev[None, :], (spec.n_types, spec.n_actions))
        # welfare
        from .mechanisms import _matching_eu_tensor

        usum = _matching_eu_tensor(spec)
        n_orders = math.factorial(n)
        q = history.loo_action_counts(j)
        q = q / q.sum()
        t = usum
        for _ in range(n - 1):
            t = np.tensordot(t, q, axes=([1], [0]))
        own = t.T / n_orders  # [theta, a]
        t2 = usum
        for _ in range(n - 2):
            t2 = np.tensordot(t2, q, axes=([2], [0]))
        loo = history.loo_mixture(j)
        # t2[a_opp, a_focal, theta_opp]: opponent expected utility by focal action
        opp = np.einsum("ta,aft->f", loo.weights(), t2 / n_orders)
        return own + (n - 1) * opp[None, :]


class _IterationKernels:
    """Batched per-player expected-utility tables for one iteration.

    Auctions get a fully vectorized win/payment precomputation across all
    players; other kinds fall back to per-player calls (their spaces are
    small or they run at modest dataset sizes). The returned EU matrix is a
    reused buffer, valid until the next ``eu`` call.
    """

    def __init__(self, Gp: MechanismSpec):
        self.Gp = Gp
        self.auction = Gp.kind in AUCTION_KINDS
        self._buf = np.empty((Gp.n_types, Gp.n_actions))
        if self.auction:
            self._tvals = Gp.type_values()

    def begin_iteration(self, history: EmpiricalHistory) -> None:
        q_all = history.pooled_action_counts[None, :] - history.player_action_counts
        q_all = q_all / q_all.sum(axis=1, keepdims=True)
        self._q_all = q_all
        if self.auction:
            self._W, self._pay = auction_win_pay(
                self.Gp.kind, self.Gp.reserve, self.Gp.n_players, q_all,
                self.Gp.action_values())

    def eu(self, j: int) -> np.ndarray:
        if self.auction:
            np.multiply.outer(self._tvals, self._W[j], out=self._buf)
            self._buf -= self._pay[j]
            return self._buf
        return eu_matrix(self.Gp, self._q_all[j])


def _initial_picks(cfg: RfpConfig, table: FeasibleTypeTable, n_actions: int,
                   m: int) -> tuple[np.ndarray, np.ndarray]:
    eps = cfg.effective_epsilon
    types = np.empty(m, dtype=int)
    actions = np.empty(m, dtype=int)
    for j in range(m):
        feas = table.feasible(j, eps)
        if len(feas) == 0:
            feas = table.min_regret_types(j)
        u_t = tie_u01(cfg.seed, "init_t", j)
        u_a = tie_u01(cfg.seed, "init_a", j)
        types[j] = int(feas[min(int(u_t * len(feas)), len(feas) - 1)])
        actions[j] = min(int(u_a * n_actions), n_actions - 1)
    return types, actions


def rfp_solve(cfg: RfpConfig, G: MechanismSpec, Gp: MechanismSpec, D: Dataset,
              table: FeasibleTypeTable | None = None) -> RfpResult:
    """Run revelation fictitious play and certify the outcome.

    Never raises on non-convergence: the result carries ``converged=False``
    plus the certification computed from the final mixtures.
    """
    t_start = time.perf_counter()
    if G.n_types != Gp.n_types:
        raise ValueError("original and counterfactual games must share a type space")
    if cfg.v_spec.mechanism is not Gp and cfg.v_spec.mechanism != Gp:
        raise ValueError("v_spec must be bound to the counterfactual mechanism")
    D.validate_actions(G.action_space)
    m = len(D)
    eps = cfg.effective_epsilon
    if table is None:
        table = regret_table(G, D)
    rg = table.regrets
    feas_mask = table.feasible_mask(eps)

    n_a = Gp.n_actions
    history = EmpiricalHistory(m, Gp.n_types, n_a)
    init_t, init_a = _initial_picks(cfg, table, n_a, m)
    history.append(init_t, init_a)
    v_scale = cfg.v_spec.scale()
    v_trace = [_mixture_v(cfg.v_spec, history)]

    vtables = _ValuationTables(cfg.v_spec) if cfg.mode != "point" else None
    kernels = _IterationKernels(Gp)
    feas_rows = [np.flatnonzero(feas_mask[j]) for j in range(m)]
    loss_buf = np.empty((Gp.n_types, n_a))
    rgp_buf = np.empty((Gp.n_types, n_a))
    fallback_rounds = 0
    converged = False
    iterations = 0
    check_every = max(1, cfg.conv_window // 5)

    for it in range(1, cfg.max_iters + 1):
        new_t = np.empty(m, dtype=int)
        new_a = np.empty(m, dtype=int)
        any_fallback = False
        kernels.begin_iteration(history)
        for j in range(m):
            eu = kernels.eu(j)
            np.subtract(eu.max(axis=1)[:, None], eu, out=rgp_buf)
            if cfg.mode == "point":
                np.maximum(rg[j][:, None], rgp_buf, out=loss_buf)
                lo = loss_buf.min()
                if lo > eps + TIE_TOL:
                    any_fallback = True
                rows = np.flatnonzero(rg[j] <= lo + TIE_TOL)
                rr, as_ = np.nonzero(loss_buf[rows] <= lo + TIE_TOL)
                ts = rows[rr]
                vals = None
            else:
                rows = feas_rows[j]
                if len(rows):
                    rr, as_ = np.nonzero(rgp_buf[rows] <= eps)
                    ts = rows[rr]
                else:
                    ts = as_ = np.empty(0, dtype=int)
                if len(ts) == 0:
                    np.maximum(rg[j][:, None], rgp_buf, out=loss_buf)
                    ts, as_ = np.nonzero(loss_buf <= loss_buf.min() + TIE_TOL)
                    any_fallback = True
                vals = cfg.alpha * vtables.values(history, j, ts, as_)
            new_t[j], new_a[j] = _pick_pair(ts, as_, vals, cfg.seed, j, it)
        history.append(new_t, new_a)
        if any_fallback:
            fallback_rounds += 1
        v_trace.append(_mixture_v(cfg.v_spec, history))
        iterations = it
        if it % check_every == 0 and check_convergence(
                v_trace, history, cfg.conv_tol, cfg.conv_window, v_scale):
            converged = True
            break

    mixtures, tail_rounds, type_counts = _tail_mixtures(history)
    pooled = np.zeros((Gp.n_types, n_a))
    for mix in mixtures:
        for (t, a), k in mix.items():
            pooled[t, a] += k
    v_value = valuation_of_mixture(
        cfg.v_spec, PairMixture(pooled, total=tail_rounds * m))
    est = _estimated_types(Gp, type_counts)
    result = RfpResult(
        config=cfg,
        mixtures=mixtures,
        rounds=tail_rounds,
        total_rounds=history.rounds,
        iterations=iterations,
        converged=converged,
        v_value=float(v_value),
        v_trace=[float(x) for x in v_trace],
        certification=None,
        estimated_types=est,
        fallback_rounds=fallback_rounds,
        seed=cfg.seed,
        wall_time_s=0.0,
    )
    result.certification = certify(result, G, Gp, D, eps, cfg.cert_tol)
    result.wall_time_s = time.perf_counter() - t_start
    return result


def _mixture_v(v: ValuationSpec, history: EmpiricalHistory) -> float:
    return float(valuation_of_mixture(v, history.pooled_mixture()))


def _tail_mixtures(history: EmpiricalHistory):
    """Per-player pair counts and type counts over the trailing half of rounds."""
    total = history.rounds
    start = total // 2
    types, actions = history.pick_logs()
    types, actions = types[start:], actions[start:]
    m = history.n_players
    n_a = history.n_actions
    n_code = history.n_types * n_a
    codes = (types * n_a + actions) + np.arange(m)[None, :] * n_code
    uniq, counts = np.unique(codes.ravel(), return_counts=True)
    mixtures: list[dict[tuple[int, int], int]] = [dict() for _ in range(m)]
    type_counts = np.zeros((m, history.n_types))
    for code, k in zip(uniq.tolist(), counts.tolist()):
        j, pair = divmod(code, n_code)
        t, a = divmod(pair, n_a)
        mixtures[j][(t, a)] = k
        type_counts[j, t] += k
    return mixtures, total - start, type_counts


def _estimated_types(Gp: MechanismSpec, type_counts: np.ndarray) -> np.ndarray:
    est = np.empty(type_counts.shape[0])
    grid = isinstance(Gp.type_space, Grid)
    tvals = Gp.type_values() if grid else None
    for j in range(type_counts.shape[0]):
        counts = type_counts[j]
        if grid:
            est[j] = float(counts @ tvals / counts.sum())
        else:
            est[j] = float(np.argmax(counts))
    return est


def certify_mixtures(mixtures: list[dict[tuple[int, int], int]], G: MechanismSpec,
                     Gp: MechanismSpec, D: Dataset, eps: float,
                     cert_tol: float = 1e-6) -> CertificationReport:
    """Recompute, from scratch, the worst revelation loss in the final support.

    Fresh expected-utility calls per support pair; nothing is carried over
    from the solver loop. A failing certification is a reported state.
    """
    m = len(D)
    n_t, n_a = Gp.n_types, Gp.n_actions
    pooled = np.zeros((n_t, n_a))
    for mix in mixtures:
        for (t, a), k in mix.items():
            pooled[t, a] += k
    player_max = np.zeros(m)
    for j in range(m):
        own = np.zeros((n_t, n_a))
        for (t, a), k in mixtures[j].items():
            own[t, a] = k
        loo_actions = (pooled - own).sum(axis=0)
        opp = FiniteDistribution(Gp.action_space, loo_actions)
        worst = 0.0
        rg_cache: dict[int, float] = {}
        eu_cache: dict[int, np.ndarray] = {}
        for (t, a), _k in mixtures[j].items():
            if t not in rg_cache:
                rg_cache[t] = regret_original(G, D, j, t)
                eu_cache[t] = expected_utility_all_actions(Gp, t, opp)
            eu = eu_cache[t]
            rp = clamp_regret(float(eu.max() - eu[a]))
            worst = max(worst, rg_cache[t], rp)
        player_max[j] = worst
    max_loss = float(player_max.max()) if m else 0.0
    offenders = [j for j in range(m) if player_max[j] > eps + cert_tol]
    return CertificationReport(
        max_loss=max_loss,
        epsilon=eps,
        cert_tol=cert_tol,
        passed=len(offenders) == 0,
        player_max=player_max,
        offenders=offenders,
    )


def certify(result: RfpResult, G: MechanismSpec, Gp: MechanismSpec, D: Dataset,
            eps: float, cert_tol: float = 1e-6) -> CertificationReport:
    """Certify a solver result against its own final mixtures."""
    return certify_mixtures(result.mixtures, G, Gp, D, eps, cert_tol)
