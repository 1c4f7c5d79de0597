import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings

from gspbench.auction import (
    AuctionInstance,
    efficient_allocation,
    optimal_welfare,
    restricted_optimal_welfare,
    run_auction,
    social_welfare,
    utilities_for_own_bids,
)
from gspbench.instances import paper_instance

from conftest import games_with_bids, instances, random_game, random_profile


def brute_outcome(instance, bids):
    """Slot order by explicit pairwise comparison, independent of sorting helpers."""
    n = instance.n
    eff = [instance.gammas[i] * bids[i] for i in range(n)]
    beats = lambda i, j: eff[i] > eff[j] or (eff[i] == eff[j] and i < j)
    slot = {i: sum(1 for j in range(n) if j != i and beats(j, i)) for i in range(n)}
    order = sorted(range(n), key=lambda i: slot[i])
    util = [0.0] * n
    for k, p in enumerate(order):
        nxt = eff[order[k + 1]] if k + 1 < n else 0.0
        util[p] = instance.alphas[k] * (instance.gammas[p] * instance.valuations[p] - nxt)
    return tuple(order), util


class TestInstance:
    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            AuctionInstance([1.0, 0.5], [1.0])

    def test_rejects_increasing_ctr(self):
        with pytest.raises(ValueError, match="non-increasing"):
            AuctionInstance([0.5, 1.0], [1.0, 1.0])

    def test_rejects_nonpositive_gamma(self):
        with pytest.raises(ValueError, match="quality"):
            AuctionInstance([1.0], [1.0], [0.0])

    def test_rejects_negative_value(self):
        with pytest.raises(ValueError):
            AuctionInstance([1.0], [-0.1])

    def test_gammas_default_to_one(self):
        assert AuctionInstance([1.0, 0.5], [1.0, 0.5]).gammas == (1.0, 1.0)


class TestRunAuction:
    def test_paper_two_player_profile(self):
        inst, bids = paper_instance("poa2")
        out = run_auction(inst, bids)
        assert out.slot_to_player == (1, 0)
        assert out.payments == (0.0, 0.0)
        assert out.utilities == (0.5, 0.5)
        assert out.welfare == 1.0

    def test_single_player_pays_nothing(self):
        inst = AuctionInstance([0.7], [2.0], [1.5])
        out = run_auction(inst, [1.0])
        assert out.payments == (0.0,)
        assert out.utilities[0] == pytest.approx(0.7 * 1.5 * 2.0)

    def test_tie_goes_to_lower_index(self):
        inst = AuctionInstance([1.0, 0.5], [1.0, 1.0])
        assert run_auction(inst, [0.4, 0.4]).slot_to_player == (0, 1)

    def test_effective_bid_ranking(self):
        inst = AuctionInstance([1.0, 0.5], [1.0, 1.0], [1.0, 2.0])
        out = run_auction(inst, [0.8, 0.5])
        assert out.slot_to_player == (1, 0)
        # player 1 pays the next effective bid 0.8 divided by her quality 2
        assert out.payments[1] == pytest.approx(0.4)

    def test_overbid_rejected(self):
        inst = AuctionInstance([1.0, 0.5], [1.0, 0.5])
        with pytest.raises(ValueError, match="overbidding"):
            run_auction(inst, [0.0, 0.6])

    def test_wrong_length_rejected(self):
        inst = AuctionInstance([1.0, 0.5], [1.0, 0.5])
        with pytest.raises(ValueError, match="dimension"):
            run_auction(inst, [0.0])

    @settings(max_examples=300, deadline=None)
    @given(games_with_bids())
    def test_matches_pairwise_oracle(self, game):
        inst, bids = game
        out = run_auction(inst, bids)
        order, util = brute_outcome(inst, bids)
        assert out.slot_to_player == order
        assert np.allclose(out.utilities, util, atol=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(games_with_bids())
    def test_welfare_is_utilities_plus_payments(self, game):
        inst, bids = game
        out = run_auction(inst, bids)
        paid = sum(inst.alphas[out.player_to_slot[i]] * inst.gammas[i] * out.payments[i] for i in range(inst.n))
        assert out.welfare == pytest.approx(sum(out.utilities) + paid, abs=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(games_with_bids())
    def test_utilities_non_negative_and_payment_below_bid(self, game):
        inst, bids = game
        out = run_auction(inst, bids)
        assert min(out.utilities) >= -1e-12
        assert all(out.payments[i] <= bids[i] + 1e-12 for i in range(inst.n))


class TestOptimalWelfare:
    @settings(max_examples=200, deadline=None)
    @given(instances(max_n=6))
    def test_sorted_allocation_beats_every_permutation(self, inst):
        opt, perm = optimal_welfare(inst)
        best = max(social_welfare(inst, p) for p in itertools.permutations(range(inst.n)))
        assert opt == pytest.approx(best, abs=1e-12)
        assert perm == efficient_allocation(inst)

    def test_restricted_optimum(self):
        inst = AuctionInstance([1.0, 0.5, 0.25], [0.2, 1.0, 0.6])
        assert restricted_optimal_welfare(inst, [0, 2]) == pytest.approx(0.6 + 0.5 * 0.2)
        assert restricted_optimal_welfare(inst, range(3)) == pytest.approx(optimal_welfare(inst)[0])

    def test_restricted_optimum_rejects_empty(self):
        with pytest.raises(ValueError):
            restricted_optimal_welfare(AuctionInstance([1.0], [1.0]), [])


class TestCounterfactualUtilities:
    def test_agrees_with_run_auction(self, rng):
        for _ in range(200):
            inst = random_game(rng, int(rng.integers(1, 7)), gammas=True)
            bids = random_profile(rng, inst)
            i = int(rng.integers(inst.n))
            grid = np.concatenate((np.linspace(0.0, inst.valuations[i], 13), [b for b in bids if b <= inst.valuations[i]]))
            fast = utilities_for_own_bids(inst, bids, i, grid)
            for x, u in zip(grid, fast):
                dev = list(bids)
                dev[i] = float(x)
                assert u == pytest.approx(run_auction(inst, dev).utilities[i], abs=1e-12)
