import math

import numpy as np
import pytest

from gspbench.auction import AuctionInstance, run_auction, utilities_for_own_bids
from gspbench.instances import JointDistribution, paper_instance
from gspbench.learning import (
    EmpiricalDistribution,
    LearnerConfig,
    PlayHistory,
    bid_grids,
    cce_epsilon,
    checkpoints,
    empirical_distribution,
    plays_path,
    pota_estimate,
    read_plays_csv,
    read_trajectory_csv,
    run_no_regret,
    run_no_regret_bayes,
    run_with_irrational,
    write_plays_csv,
    write_trajectory_csv,
)

from conftest import random_game


def same_history(a: PlayHistory, b: PlayHistory) -> bool:
    arrays = ("valuations", "gammas", "bids", "slot_to_player", "utilities", "welfare", "opt", "opt_s", "regret_curve")
    return all(np.array_equal(getattr(a, k), getattr(b, k)) for k in arrays) and a.aggregate == b.aggregate


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs", [{"grid_size": 1}, {"horizon": 0}, {"schedule": "decay"}, {"eta": 0.0}, {"grid_size": 2.5}]
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            LearnerConfig(**kwargs)

    def test_steps(self):
        cfg = LearnerConfig(grid_size=51, horizon=100)
        assert cfg.step("fixed", 7) == pytest.approx(math.sqrt(8 * math.log(51) / 100))
        assert cfg.step("anytime", 4) == pytest.approx(math.sqrt(8 * math.log(51) / 4))
        assert LearnerConfig(eta=0.3).step("fixed", 1) == 0.3


class TestFullInformation:
    def test_single_player_has_no_regret(self):
        hist = run_no_regret(AuctionInstance([0.8], [0.7], [1.3]), LearnerConfig(grid_size=11, horizon=200))
        assert np.all(hist.regret_curve == 0.0)
        assert np.allclose(hist.utilities, 0.8 * 1.3 * 0.7)

    def test_one_round_matches_enumeration(self, rng):
        for seed in range(20):
            inst = random_game(rng, int(rng.integers(2, 5)), gammas=True)
            hist = run_no_regret(inst, LearnerConfig(grid_size=9, horizon=1, seed=seed))
            profile = tuple(hist.bids[0])
            realized = run_auction(inst, profile).utilities
            for i in range(inst.n):
                best = -np.inf
                for x in np.linspace(0.0, inst.valuations[i], 9):
                    dev = list(profile)
                    dev[i] = float(x)
                    best = max(best, run_auction(inst, dev).utilities[i])
                assert hist.regret_curve[0, i] == pytest.approx(best - realized[i], abs=1e-12)

    def test_deterministic(self):
        inst = random_game(np.random.default_rng(3), 3, gammas=True)
        cfg = LearnerConfig(grid_size=11, horizon=300, seed=4)
        assert same_history(run_no_regret(inst, cfg), run_no_regret(inst, cfg))
        assert not np.array_equal(run_no_regret(inst, cfg).bids, run_no_regret(inst, LearnerConfig(11, 300, 5)).bids)

    def test_record_invariants(self, rng):
        inst = random_game(rng, 4, gammas=True)
        hist = run_no_regret(inst, LearnerConfig(grid_size=15, horizon=500))
        assert np.all(hist.bids >= 0) and np.all(hist.bids <= hist.valuations + 1e-15)
        assert hist.aggregate["sw"] == pytest.approx(hist.welfare.sum(), rel=1e-12)
        assert hist.aggregate["opt"] == pytest.approx(hist.opt.sum(), rel=1e-12)
        for t in (0, 99, 499):
            out = run_auction(inst, tuple(hist.bids[t]))
            assert hist.welfare[t] == pytest.approx(out.welfare, abs=1e-15)
            assert tuple(hist.slot_to_player[t]) == out.slot_to_player

    def test_regret_curve_matches_counterfactual_accounting(self, rng):
        inst = random_game(rng, 3)
        hist = run_no_regret(inst, LearnerConfig(grid_size=7, horizon=150))
        grids = bid_grids(inst, 7)
        for i in range(inst.n):
            cf = sum(utilities_for_own_bids(inst, tuple(b), i, grids[i]) for b in hist.bids)
            assert hist.regret_curve[-1, i] == pytest.approx(cf.max() - hist.utilities[:, i].sum(), abs=1e-9)

    def test_regret_within_hedge_bound(self, rng):
        K, T = 21, 4000
        for _ in range(3):
            inst = random_game(rng, 3, gammas=True)
            hist = run_no_regret(inst, LearnerConfig(grid_size=K, horizon=T, schedule="fixed"))
            raw = hist.average_regret(normalized=False) * T
            scale = hist.payoff_scale[-1]
            assert np.all(raw <= scale * math.sqrt(T * math.log(K) / 2) + 1e-9)

    def test_regret_per_round_decays_on_doubling_checkpoints(self):
        inst, _ = paper_instance("poa3")
        hist = run_no_regret(inst, LearnerConfig(grid_size=21, horizon=2**14, schedule="anytime"))
        pts = [t for t in checkpoints(hist.rounds) if t >= 256]
        for i in range(inst.n):
            avg = [max(hist.regret_curve[t - 1, i], 0.0) / t for t in pts]
            for prev, nxt in zip(avg, avg[1:]):
                assert nxt <= 1.05 * prev + 1e-3 * hist.payoff_scale[-1, i]

    def test_welfare_third_of_optimum(self, rng):
        for seed in range(5):
            inst = random_game(rng, int(rng.integers(2, 5)), gammas=True)
            hist = run_no_regret(inst, LearnerConfig(grid_size=21, horizon=2000, seed=seed))
            rho = hist.max_average_regret(normalized=False)
            assert hist.welfare.mean() >= hist.opt[0] / 3 - 3 * rho - 1e-12


class TestBayesian:
    def test_single_point_matches_full_information(self):
        inst = AuctionInstance([1.0, 0.6, 0.3], [0.9, 0.5, 0.7], [1.0, 1.4, 0.8])
        dist = JointDistribution(inst.alphas, [(1.0, inst.valuations, inst.gammas)])
        for schedule in ("fixed", "anytime"):
            cfg = LearnerConfig(grid_size=11, horizon=300, seed=2, schedule=schedule)
            assert same_history(run_no_regret_bayes(dist, cfg), run_no_regret(inst, cfg))

    def test_two_point_type_bookkeeping(self):
        dist = JointDistribution([1.0, 0.5], [(0.3, [1.0, 0.4]), (0.7, [0.6, 0.4])])
        hist = run_no_regret_bayes(dist, LearnerConfig(grid_size=11, horizon=1000, seed=1))
        keys0 = sorted(k for k in hist.type_updates if k[0] == 0)
        assert keys0 == [(0, 0.6), (0, 1.0)]
        for key in keys0:
            assert hist.type_updates[key] == int(np.sum(hist.valuations[:, 0] == key[1]))
        assert hist.type_updates[(1, 0.4)] == 1000
        # a learner's regret only moves on its own rounds
        curve = hist.type_regret[(0, 1.0)]
        idle = np.flatnonzero(hist.valuations[1:, 0] != 1.0) + 1
        assert np.array_equal(curve[idle], curve[idle - 1])

    def test_type_frequencies_follow_probabilities(self):
        dist = JointDistribution([1.0, 0.5], [(0.3, [1.0, 0.4]), (0.7, [0.6, 0.4])])
        hist = run_no_regret_bayes(dist, LearnerConfig(grid_size=5, horizon=5000))
        assert abs(hist.type_updates[(0, 1.0)] / 5000 - 0.3) < 0.03

    def test_opt_recorded_per_realized_type(self):
        dist = JointDistribution([1.0, 0.5], [(0.5, [1.0, 0.4]), (0.5, [0.2, 0.4])])
        hist = run_no_regret_bayes(dist, LearnerConfig(grid_size=5, horizon=200))
        expect = np.where(hist.valuations[:, 0] == 1.0, 1.0 + 0.5 * 0.4, 0.4 + 0.5 * 0.2)
        assert np.allclose(hist.opt, expect)


class TestIrrational:
    def test_empty_fixed_set(self):
        inst, _ = paper_instance("poa3")
        cfg = LearnerConfig(grid_size=11, horizon=300)
        assert same_history(run_with_irrational(inst, cfg, {}), run_no_regret(inst, cfg))

    def test_all_fixed_rejected(self):
        inst, _ = paper_instance("poa2")
        with pytest.raises(ValueError):
            run_with_irrational(inst, LearnerConfig(horizon=10), {0: 0.0, 1: 0.0})

    @pytest.mark.parametrize("fixed", [{1: 0.6}, {2: 0.0}, {-1: 0.0}])
    def test_invalid_fixed(self, fixed):
        inst, _ = paper_instance("poa2")
        with pytest.raises(ValueError):
            run_with_irrational(inst, LearnerConfig(horizon=10), fixed)

    def test_all_but_one_fixed_at_zero(self):
        inst = AuctionInstance([1.0, 0.6, 0.3], [0.5, 0.8, 0.9], [1.2, 1.0, 1.0])
        hist = run_with_irrational(inst, LearnerConfig(grid_size=11, horizon=2000), {1: 0.0, 2: 0.0})
        assert np.all(hist.bids[:, 1:] == 0.0)
        assert np.allclose(hist.opt_s, 1.0 * 1.2 * 0.5)
        assert hist.max_average_regret() < 0.01
        assert np.all(hist.utilities[:, 0] >= 0)
        # the learner takes the top slot whenever it bids above zero, paying nothing
        assert np.mean(hist.slot_to_player[:, 0] == 0) > 0.9

    def test_fixed_bidders_never_move(self):
        inst, _ = paper_instance("poa3")
        hist = run_with_irrational(inst, LearnerConfig(grid_size=11, horizon=500), {2: 0.1})
        assert np.all(hist.bids[:, 2] == 0.1)
        assert hist.rational == [0, 1]
        assert hist.average_regret()[2] == 0.0


class TestEmpiricalDistribution:
    def test_full_and_half_windows(self):
        bids = np.arange(20, dtype=float).reshape(10, 2)
        d = empirical_distribution(bids)
        assert np.allclose(d.weights, 0.1)
        half = empirical_distribution(bids, window=(5, 10))
        assert len(half.weights) == 5 and np.allclose(half.weights, 2 / 10)

    def test_duplicates_merged(self):
        bids = np.array([[0.1, 0.2], [0.3, 0.0], [0.1, 0.2], [0.1, 0.2]])
        d = empirical_distribution(bids)
        as_dict = {tuple(p): w for p, w in zip(d.profiles, d.weights)}
        assert as_dict == {(0.1, 0.2): 0.75, (0.3, 0.0): 0.25}
        assert math.fsum(d.weights) == 1.0

    @pytest.mark.parametrize("window", [(3, 3), (0, 11), (-1, 2), slice(0, 10, 2)])
    def test_bad_windows(self, window):
        with pytest.raises(ValueError):
            empirical_distribution(np.zeros((10, 2)), window=window)

    def test_weights_validated(self):
        with pytest.raises(ValueError):
            EmpiricalDistribution(np.zeros((2, 1)), np.array([0.5, 0.6]))


class TestCCE:
    def test_pure_equilibrium_is_cce(self):
        for name in ("poa2", "poa3"):
            inst, bids = paper_instance(name)
            d = EmpiricalDistribution(np.array([bids]), np.array([1.0]))
            assert np.all(cce_epsilon(inst, d, 101) <= 1e-9)

    def test_mixture_reports_nonnegative(self):
        inst, bids = paper_instance("poa2")
        d = EmpiricalDistribution(np.array([bids, (1.0, 0.0)]), np.array([0.5, 0.5]))
        assert np.all(cce_epsilon(inst, d, 51) >= 0)

    def test_epsilon_bounded_by_regret(self, rng):
        for seed in range(3):
            inst = random_game(rng, 3, gammas=True)
            cfg = LearnerConfig(grid_size=13, horizon=800, seed=seed)
            hist = run_no_regret(inst, cfg)
            eps = cce_epsilon(inst, empirical_distribution(hist), 13)
            rho = hist.average_regret(normalized=False)
            assert np.all(eps <= rho + 1e-9)
            # with the learner's own grid the accounting is an identity
            assert np.allclose(eps, np.maximum(rho, 0.0), atol=1e-12)

    def test_grid_must_be_conservative(self):
        inst, bids = paper_instance("poa2")
        d = EmpiricalDistribution(np.array([bids]), np.array([1.0]))
        with pytest.raises(ValueError):
            cce_epsilon(inst, d, [np.array([0.0, 2.0]), np.array([0.0])])
        with pytest.raises(ValueError):
            cce_epsilon(inst, d, [np.array([0.0])])


class TestPota:
    def test_efficient_profile(self):
        # the lone learner values the zero-CTR slot below both fixed bids, so every round is efficient
        inst = AuctionInstance([1.0, 0.5, 0.0], [1.0, 0.2, 0.1])
        hist = run_with_irrational(inst, LearnerConfig(grid_size=3, horizon=50), {0: 1.0, 1: 0.2})
        assert pota_estimate(hist) == pytest.approx(1.0, abs=1e-12)

    def test_zero_welfare_flag(self):
        hist = run_no_regret(AuctionInstance([0.0], [1.0]), LearnerConfig(grid_size=3, horizon=5))
        assert pota_estimate(hist) == 1.0
        hist.opt[:] = 1.0
        assert pota_estimate(hist) == math.inf

    def test_windows_and_benchmarks(self):
        inst, _ = paper_instance("poa3")
        hist = run_with_irrational(inst, LearnerConfig(grid_size=11, horizon=400), {2: 0.0})
        half = pota_estimate(hist, window=(200, 400))
        assert half == pytest.approx(hist.opt[200:].sum() / hist.welfare[200:].sum())
        assert pota_estimate(hist, benchmark="opt_s") <= pota_estimate(hist)


class TestCsv:
    def test_checkpoints(self):
        assert checkpoints(1) == [1]
        assert checkpoints(10) == [1, 2, 4, 8, 10]
        assert checkpoints(8) == [1, 2, 4, 8]

    def test_round_trip(self, tmp_path):
        inst = random_game(np.random.default_rng(0), 3, gammas=True)
        hist = run_no_regret(inst, LearnerConfig(grid_size=7, horizon=37))
        path = tmp_path / "traj.csv"
        write_trajectory_csv(hist, path)
        write_plays_csv(hist, plays_path(path))
        rows = read_trajectory_csv(path)
        assert len(rows) == len(checkpoints(37)) * 3
        last = rows[-1]
        assert last["round"] == 37 and last["cum_sw"] == pytest.approx(hist.welfare.sum(), rel=1e-12)
        assert last["running_pota"] == pytest.approx(hist.opt.sum() / hist.welfare.sum())
        bids, vals, gams = read_plays_csv(plays_path(path))
        assert np.array_equal(bids, hist.bids) and np.array_equal(vals, hist.valuations) and np.array_equal(gams, hist.gammas)

    def test_plays_path(self):
        assert str(plays_path("out/run.csv")) == "out/run.plays.csv"

    def test_bad_header(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_trajectory_csv(path)
        with pytest.raises(ValueError):
            read_plays_csv(path)
