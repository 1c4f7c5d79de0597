"""No-regret (Hedge) dynamics for repeated GSP, CCE extraction and price of total anarchy.

Every learner runs multiplicative weights over a uniform bid grid on [0, v]
with full-information feedback: after each round it sees the utility every
grid bid would have earned against the realized opponent bids.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .auction import AuctionInstance, check_bids, optimal_welfare, restricted_optimal_welfare, run_auction, utilities_for_own_bids
from .instances import JointDistribution

TRAJECTORY_COLUMNS = ("round", "player", "regret", "cum_sw", "cum_opt", "running_pota")
PLAY_COLUMNS = ("round", "player", "valuation", "gamma", "bid")
SCHEDULES = ("fixed", "anytime")


@dataclass(frozen=True)
class LearnerConfig:
    """Hedge parameters shared by all learners of a run.

    ``schedule=None`` lets the run pick its default: a fixed step
    sqrt(8 ln K / T) with full information, and the anytime step
    sqrt(8 ln K / t) for per-type learners. ``eta`` overrides the fixed step.
    """

    grid_size: int = 51
    horizon: int = 10_000
    seed: int = 0
    schedule: str | None = None
    eta: float | None = None

    def __post_init__(self):
        if int(self.grid_size) != self.grid_size or self.grid_size < 2:
            raise ValueError(f"grid_size must be an integer >= 2, got {self.grid_size}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError(f"horizon must be an integer >= 1, got {self.horizon}")
        if self.schedule is not None and self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if self.eta is not None and not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")

    def step(self, schedule: str, t: int) -> float:
        """Step size for a learner's t-th update (t >= 1)."""
        if schedule == "fixed":
            return self.eta if self.eta is not None else math.sqrt(8.0 * math.log(self.grid_size) / self.horizon)
        return math.sqrt(8.0 * math.log(self.grid_size) / t)


class _Hedge:
    """Multiplicative weights over a fixed bid grid, tracking realized external regret."""

    def __init__(self, grid: np.ndarray, scale: float):
        self.grid = grid
        self.scale = scale if scale > 0 else 1.0
        k = len(grid)
        self.score = np.zeros(k)  # cumulative normalized counterfactual rewards
        self.cum_counterfactual = np.zeros(k)
        self.cum_realized = 0.0
        self.updates = 0

    def sample(self, eta: float, u: float) -> int:
        w = np.exp(eta * (self.score - self.score.max()))
        cdf = np.cumsum(w)
        return int(min(np.searchsorted(cdf, u * cdf[-1], side="right"), len(w) - 1))

    def update(self, counterfactual: np.ndarray, realized: float) -> None:
        self.score += counterfactual / self.scale
        self.cum_counterfactual += counterfactual
        self.cum_realized += realized
        self.updates += 1

    @property
    def regret(self) -> float:
        return float(self.cum_counterfactual.max() - self.cum_realized)


@dataclass
class PlayHistory:
    """Per-round record of a learning run, stored as arrays indexed [round, player]."""

    alphas: tuple[float, ...]
    valuations: np.ndarray
    gammas: np.ndarray
    bids: np.ndarray
    slot_to_player: np.ndarray
    utilities: np.ndarray
    welfare: np.ndarray
    opt: np.ndarray
    opt_s: np.ndarray
    regret_curve: np.ndarray
    payoff_scale: np.ndarray
    type_regret: dict[tuple[int, float], np.ndarray] = field(default_factory=dict)
    type_updates: dict[tuple[int, float], int] = field(default_factory=dict)
    type_scale: dict[tuple[int, float], float] = field(default_factory=dict)
    fixed: dict[int, float] = field(default_factory=dict)
    aggregate: dict[str, float] = field(default_factory=dict)
    grid_size: int = 0

    @property
    def rounds(self) -> int:
        return len(self.welfare)

    @property
    def n(self) -> int:
        return self.bids.shape[1]

    @property
    def rational(self) -> list[int]:
        return [i for i in range(self.n) if i not in self.fixed]

    def average_regret(self, normalized: bool = True) -> np.ndarray:
        """Final external regret per player divided by T (and by payoff_scale if normalized).

        Fixed bidders report 0. For per-type learners a player's regret is the
        sum over her types, normalized type by type.
        """
        t = self.rounds
        out = np.zeros(self.n)
        for (i, v), curve in self.type_regret.items():
            r = max(0.0, float(curve[-1]))
            out[i] += r / self.type_scale[(i, v)] if normalized else r
        return out / t

    def max_average_regret(self, normalized: bool = True) -> float:
        return float(self.average_regret(normalized).max())

    def type_average_regret(self, normalized: bool = True) -> dict[tuple[int, float], float]:
        """Final regret of every per-type learner divided by its own update count."""
        out = {}
        for key, curve in self.type_regret.items():
            cnt = self.type_updates[key]
            r = max(0.0, float(curve[-1])) / max(cnt, 1)
            out[key] = r / self.type_scale[key] if normalized else r
        return out

    def slack(self) -> float:
        """3 x (max average normalized regret), the finite-horizon slack on PoA estimates."""
        return 3.0 * self.max_average_regret(normalized=True)


# -- simulation engine --------------------------------------------------------


def _simulate(
    alphas: Sequence[float],
    support: list[tuple[tuple[float, ...], tuple[float, ...]]],
    probs: np.ndarray,
    config: LearnerConfig,
    schedule: str,
    fixed: Mapping[int, float],
) -> PlayHistory:
    n = len(alphas)
    T, K = int(config.horizon), int(config.grid_size)
    fixed = {int(i): float(b) for i, b in fixed.items()}
    for i, b in fixed.items():
        if not 0 <= i < n:
            raise ValueError(f"fixed bidder {i} out of range for n={n}")
    rational = [i for i in range(n) if i not in fixed]
    if not rational:
        raise ValueError("all players are fixed; at least one learner is required")

    instances = [AuctionInstance(alphas, v, g) for v, g in support]
    for inst in instances:
        for i, b in fixed.items():
            if b < 0 or b > inst.valuations[i] + 1e-12:
                raise ValueError(f"fixed bid {b} of player {i} is not conservative for valuation {inst.valuations[i]}")
    opts = np.array([optimal_welfare(inst)[0] for inst in instances])
    opts_s = np.array([restricted_optimal_welfare(inst, rational) for inst in instances])

    # one learner per (player, distinct valuation); quality factors only enter the payoff scale
    learners: dict[tuple[int, float], _Hedge] = {}
    a1 = float(alphas[0])
    for i in rational:
        for v in sorted({inst.valuations[i] for inst in instances}):
            gmax = max(inst.gammas[i] for inst in instances if inst.valuations[i] == v)
            learners[(i, v)] = _Hedge(np.linspace(0.0, v, K), a1 * gmax * v)

    type_rng = np.random.default_rng([config.seed, 1])
    play_rng = np.random.default_rng([config.seed, 0])
    if len(instances) == 1:
        draws = np.zeros(T, dtype=np.int64)
    else:
        draws = type_rng.choice(len(instances), size=T, p=probs / probs.sum())
    uniforms = play_rng.random((T, n))

    vals = np.empty((T, n))
    gams = np.empty((T, n))
    bids = np.empty((T, n))
    slots = np.empty((T, n), dtype=np.int64)
    utils = np.empty((T, n))
    welfare = np.empty(T)
    regret_curve = np.zeros((T, n))
    scales = np.zeros((T, n))
    type_regret = {key: np.zeros(T) for key in learners}
    last_regret = {key: 0.0 for key in learners}
    player_regret = np.zeros(n)
    sw_sum = opt_sum = opt_s_sum = 0.0

    for t in range(T):
        k = int(draws[t])
        inst = instances[k]
        chosen: dict[int, _Hedge] = {}
        profile = [0.0] * n
        for i in range(n):
            if i in fixed:
                profile[i] = fixed[i]
                continue
            lrn = learners[(i, inst.valuations[i])]
            chosen[i] = lrn
            eta = config.step(schedule, lrn.updates + 1)
            profile[i] = float(lrn.grid[lrn.sample(eta, uniforms[t, i])])
        out = run_auction(inst, profile)
        for i, lrn in chosen.items():
            cf = utilities_for_own_bids(inst, profile, i, lrn.grid)
            lrn.update(cf, out.utilities[i])
            scales[t, i] = lrn.scale
            key = (i, inst.valuations[i])
            player_regret[i] += lrn.regret - last_regret[key]
            last_regret[key] = lrn.regret
        for key, r in last_regret.items():
            type_regret[key][t] = r
        regret_curve[t] = player_regret
        vals[t] = inst.valuations
        gams[t] = inst.gammas
        bids[t] = profile
        slots[t] = out.slot_to_player
        utils[t] = out.utilities
        welfare[t] = out.welfare
        sw_sum += out.welfare
        opt_sum += opts[k]
        opt_s_sum += opts_s[k]

    return PlayHistory(
        alphas=tuple(float(a) for a in alphas),
        valuations=vals,
        gammas=gams,
        bids=bids,
        slot_to_player=slots,
        utilities=utils,
        welfare=welfare,
        opt=opts[draws].astype(float),
        opt_s=opts_s[draws].astype(float),
        regret_curve=regret_curve,
        payoff_scale=scales,
        type_regret=type_regret,
        type_updates={key: l.updates for key, l in learners.items()},
        type_scale={key: l.scale for key, l in learners.items()},
        fixed=fixed,
        aggregate={"sw": sw_sum, "opt": opt_sum, "opt_s": opt_s_sum},
        grid_size=K,
    )


def run_no_regret(instance: AuctionInstance, config: LearnerConfig) -> PlayHistory:
    """Every player runs Hedge on her grid against the same fixed instance."""
    return _simulate(
        instance.alphas, [(instance.valuations, instance.gammas)], np.ones(1), config, config.schedule or "fixed", {}
    )


def run_no_regret_bayes(distribution: JointDistribution, config: LearnerConfig) -> PlayHistory:
    """Types drawn each round; one learner per (player, valuation), updated only on its rounds."""
    support = [(p.valuations, p.gammas) for p in distribution.support]
    return _simulate(
        distribution.alphas, support, distribution.probabilities, config, config.schedule or "anytime", {}
    )


def run_with_irrational(
    game: AuctionInstance | JointDistribution,
    config: LearnerConfig,
    fixed_bidders: Mapping[int, float],
) -> PlayHistory:
    """Learners as usual while the players in ``fixed_bidders`` keep a static bid."""
    if isinstance(game, JointDistribution):
        support = [(p.valuations, p.gammas) for p in game.support]
        return _simulate(game.alphas, support, game.probabilities, config, config.schedule or "anytime", fixed_bidders)
    return _simulate(
        game.alphas, [(game.valuations, game.gammas)], np.ones(1), config, config.schedule or "fixed", fixed_bidders
    )


# -- empirical distributions, CCE and PoTA ------------------------------------


@dataclass(frozen=True)
class EmpiricalDistribution:
    profiles: np.ndarray  # (m, n) distinct bid profiles
    weights: np.ndarray  # (m,)

    def __post_init__(self):
        w = self.weights
        if len(w) == 0:
            raise ValueError("empirical distribution is empty")
        if (w < 0).any() or abs(math.fsum(w) - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")


def _window(rounds: int, window) -> slice:
    if window is None:
        return slice(0, rounds)
    if isinstance(window, slice):
        start, stop, step = window.indices(rounds)
        if step != 1:
            raise ValueError("window must be a contiguous range of rounds")
    else:
        start, stop = window
    if not 0 <= start < stop <= rounds:
        raise ValueError(f"window [{start}, {stop}) is empty or outside the {rounds} recorded rounds")
    return slice(start, stop)


def empirical_distribution(history: PlayHistory | np.ndarray, window=None) -> EmpiricalDistribution:
    """Uniform weights over the window's bid profiles, duplicates merged."""
    bids = history.bids if isinstance(history, PlayHistory) else np.asarray(history, dtype=float)
    sel = bids[_window(len(bids), window)]
    profiles, counts = np.unique(sel, axis=0, return_counts=True)
    return EmpiricalDistribution(profiles, counts / counts.sum())


def bid_grids(instance: AuctionInstance, grid_size: int) -> list[np.ndarray]:
    return [np.linspace(0.0, v, grid_size) for v in instance.valuations]


def cce_epsilon(instance: AuctionInstance, dist: EmpiricalDistribution, deviation_grid) -> np.ndarray:
    """Per-player gain of the best fixed grid deviation over the distribution, floored at 0.

    ``deviation_grid`` is a grid size K (uniform on [0, v_i]) or one array per player.
    """
    grids = bid_grids(instance, int(deviation_grid)) if np.isscalar(deviation_grid) else [np.asarray(g, dtype=float) for g in deviation_grid]
    if len(grids) != instance.n:
        raise ValueError("need one deviation grid per player")
    for i, g in enumerate(grids):
        if (g < 0).any() or (g > instance.valuations[i] + 1e-12).any():
            raise ValueError(f"deviation grid of player {i} leaves [0, v_i]")
    eps = np.zeros(instance.n)
    current = np.zeros(instance.n)
    deviations = [np.zeros(len(g)) for g in grids]
    for profile, w in zip(dist.profiles, dist.weights):
        check_bids(instance, profile)
        current += w * np.asarray(run_auction(instance, profile).utilities)
        for i in range(instance.n):
            deviations[i] += w * utilities_for_own_bids(instance, profile, i, grids[i])
    for i in range(instance.n):
        eps[i] = max(0.0, float(deviations[i].max() - current[i]))
    return eps


def pota_estimate(history: PlayHistory, window=None, benchmark: str = "opt") -> float:
    """Sum of OPT over sum of SW across the window; +inf if SW sums to 0 while OPT does not.

    ``benchmark="opt_s"`` uses the welfare the rational players alone could reach.
    """
    sel = _window(history.rounds, window)
    num = float(np.sum((history.opt if benchmark == "opt" else history.opt_s)[sel]))
    den = float(np.sum(history.welfare[sel]))
    if den <= 0.0:
        return 1.0 if num <= 0.0 else math.inf
    return num / den


# -- CSV output ---------------------------------------------------------------


def checkpoints(rounds: int) -> list[int]:
    """Doubling schedule 1, 2, 4, ... plus the final round."""
    out, t = [], 1
    while t < rounds:
        out.append(t)
        t *= 2
    out.append(rounds)
    return out


def plays_path(trajectory: str | Path) -> Path:
    p = Path(trajectory)
    return p.with_name(p.stem + ".plays.csv")


def write_trajectory_csv(history: PlayHistory, path: str | Path) -> None:
    cum_sw = np.cumsum(history.welfare)
    cum_opt = np.cumsum(history.opt)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for t in checkpoints(history.rounds):
            sw, opt = float(cum_sw[t - 1]), float(cum_opt[t - 1])
            pota = opt / sw if sw > 0 else (1.0 if opt <= 0 else math.inf)
            for i in range(history.n):
                w.writerow([t, i, repr(float(history.regret_curve[t - 1, i])), repr(sw), repr(opt), repr(pota)])


def write_plays_csv(history: PlayHistory, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLAY_COLUMNS)
        for t in range(history.rounds):
            for i in range(history.n):
                w.writerow(
                    [t + 1, i, repr(float(history.valuations[t, i])), repr(float(history.gammas[t, i])), repr(float(history.bids[t, i]))]
                )


def read_trajectory_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRAJECTORY_COLUMNS:
            raise ValueError(f"{path}: expected columns {TRAJECTORY_COLUMNS}, got {reader.fieldnames}")
        return [
            {"round": int(r["round"]), "player": int(r["player"]), **{c: float(r[c]) for c in TRAJECTORY_COLUMNS[2:]}}
            for r in reader
        ]


def read_plays_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bid, valuation and gamma arrays of shape (rounds, n) from a plays file."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != PLAY_COLUMNS:
            raise ValueError(f"{path}: expected columns {PLAY_COLUMNS}, got {reader.fieldnames}")
        rows = [(int(r["round"]), int(r["player"]), float(r["valuation"]), float(r["gamma"]), float(r["bid"])) for r in reader]
    if not rows:
        raise ValueError(f"{path}: no plays recorded")
    T = max(r[0] for r in rows)
    n = max(r[1] for r in rows) + 1
    vals, gams, bids = (np.full((T, n), np.nan) for _ in range(3))
    for t, i, v, g, b in rows:
        vals[t - 1, i], gams[t - 1, i], bids[t - 1, i] = v, g, b
    if np.isnan(bids).any():
        raise ValueError(f"{path}: incomplete play log")
    return bids, vals, gams
