import numpy as np
import pytest

from rmac.data import Dataset
from rmac.dists import point_mass
from rmac.mechanisms import auction_spec, matching_spec
from rmac.revelation import (
    feasible_types,
    regret_counterfactual,
    regret_original,
    regret_report,
    regret_table,
    revelation_loss,
)
from rmac.spaces import grid_make

GRID4 = grid_make(0, 1, 0.25)
FP4 = auction_spec("first_price", 2, GRID4, GRID4)
SP4 = auction_spec("second_price", 2, GRID4, GRID4)
D4 = Dataset((0, 1))  # logged bids {0, 0.25}


def test_regret_original_hand_checked_values():
    # player 1 logged bid 0.25 against D_{-1} = {0}
    assert regret_original(FP4, D4, 1, GRID4.nearest_index(0.25)) == pytest.approx(0.125)
    assert regret_original(FP4, D4, 1, GRID4.nearest_index(1.0)) == 0.0


def test_regret_zero_for_dominant_truthful_data():
    g = grid_make(0, 1, 0.1)
    sp = auction_spec("second_price", 2, g, g)
    D = Dataset((2, 5, 8))
    for j, d in enumerate(D.entries):
        assert regret_original(sp, D, j, d) == 0.0


def test_regret_table_matches_scalar_path_and_feasible_set():
    tab = regret_table(FP4, D4)
    for j in range(2):
        for t in range(5):
            assert tab.regrets[j, t] == pytest.approx(regret_original(FP4, D4, j, t))
    # exhaustively verified: types {0.5, 0.75, 1.0} have regret <= 0.1 for bid 0.25
    assert np.array_equal(tab.feasible(1, 0.1), [2, 3, 4])
    assert np.allclose(tab.regrets[1], [0.25, 0.125, 0.0, 0.0, 0.0])


def test_feasible_sets_nest_in_epsilon():
    tab = regret_table(FP4, D4)
    eps_grid = [0.0, 0.01, 0.05, 0.125, 0.3, 1.0]
    for j in range(len(D4)):
        prev = set()
        for eps in eps_grid:
            cur = set(tab.feasible(j, eps).tolist())
            assert prev <= cur
            prev = cur
    assert set(tab.feasible(0, 10.0).tolist()) == set(range(5))


def test_sub_reserve_non_identification():
    g = grid_make(0, 1, 0.1)
    sp = auction_spec("second_price", 2, g, g, reserve=0.5)
    D = Dataset((2, 7, 8))  # truthful bids 0.2, 0.7, 0.8
    tab = regret_table(sp, D)
    feas = set(tab.feasible(0, 0.0).tolist())
    # every type at or below the reserve rationalizes the sub-reserve bid exactly
    # (types that cannot profitably beat the logged opponents may join them)
    assert {0, 1, 2, 3, 4, 5} <= feas
    assert len(feas) > 1
    # above-reserve truthful bidders keep their own type feasible
    assert 7 in tab.feasible(1, 0.0)


def test_regret_counterfactual_hand_checked():
    opp = point_mass(GRID4, GRID4.nearest_index(0.5))
    t1 = GRID4.nearest_index(1.0)
    assert regret_counterfactual(SP4, t1, GRID4.nearest_index(0.25), opp) == pytest.approx(0.5)
    assert regret_counterfactual(SP4, t1, GRID4.nearest_index(0.5), opp) == pytest.approx(0.25)
    # the best response itself has zero regret by construction
    assert regret_counterfactual(SP4, t1, t1, opp) == 0.0


def test_revelation_loss_is_max():
    assert revelation_loss(0.125, 0.02) == 0.125
    assert revelation_loss(0.0, 0.0) == 0.0
    assert revelation_loss(0.03, 0.03) == 0.03
    with pytest.raises(ValueError):
        revelation_loss(-0.1, 0.0)


def test_regret_original_independent_of_counterfactual():
    # same G-regret regardless of which counterfactual the report targets
    opp_a = point_mass(GRID4, 0)
    opp_b = point_mass(GRID4, 4)
    r1 = regret_report(FP4, SP4, D4, 1, 1, 2, opp_a)
    r2 = regret_report(FP4, auction_spec("second_price", 2, GRID4, GRID4, reserve=0.75),
                       D4, 1, 1, 2, opp_b)
    assert r1.regret_g == r2.regret_g == pytest.approx(0.125)
    assert r1.loss == max(r1.regret_g, r1.regret_g_prime)


def test_errors_on_bad_player_and_tiny_dataset():
    with pytest.raises(ValueError):
        regret_original(FP4, D4, 5, 0)
    with pytest.raises(ValueError):
        regret_original(FP4, Dataset((1,)), 0, 0)


def test_table_csv_dump(tmp_path):
    tab = regret_table(FP4, D4)
    path = tmp_path / "regrets.csv"
    tab.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "j,type_index,regret"
    assert len(lines) == 1 + 2 * 5


def test_matching_regret_zero_at_equilibrium_actions():
    bos = matching_spec("boston", ["A", "B", "C"], [1, 1, 1], [5, 4, 0])
    ps = bos.action_space
    iT, iB = ps.index_of("A>B>C"), ps.index_of("B>A>C")
    # near the 2/3-1/3 Boston equilibrium both logged actions have a zero-regret type
    D = Dataset((iT, iT, iT, iT, iB, iB))
    tab = regret_table(bos, D)
    for j in range(6):
        assert tab.regrets[j].min() <= 0.35  # loose: a rationalizing type exists
