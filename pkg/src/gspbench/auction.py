"""The GSP mechanism: allocation by effective bid, next-price payments, welfare.

Players and slots are 0-indexed. ``slot_to_player[k]`` is the player shown in
slot ``k``; ``player_to_slot`` is its inverse.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

OVERBID_TOL = 1e-12


@dataclass(frozen=True)
class AuctionInstance:
    """Click-through rates, per-click values and quality factors for n players/slots."""

    alphas: tuple[float, ...]
    valuations: tuple[float, ...]
    gammas: tuple[float, ...]

    def __init__(self, alphas, valuations, gammas=None):
        alphas = tuple(float(a) for a in alphas)
        valuations = tuple(float(v) for v in valuations)
        if gammas is None:
            gammas = (1.0,) * len(valuations)
        gammas = tuple(float(g) for g in gammas)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "valuations", valuations)
        object.__setattr__(self, "gammas", gammas)
        self._validate()

    def _validate(self) -> None:
        n = len(self.alphas)
        if n < 1:
            raise ValueError("instance needs at least one player")
        if len(self.valuations) != n or len(self.gammas) != n:
            raise ValueError(
                f"dimension mismatch: {n} alphas, {len(self.valuations)} valuations, "
                f"{len(self.gammas)} gammas"
            )
        if any(not np.isfinite(x) for x in self.alphas + self.valuations + self.gammas):
            raise ValueError("instance entries must be finite")
        if any(a < 0 for a in self.alphas):
            raise ValueError("click-through rates must be non-negative")
        if any(self.alphas[k] < self.alphas[k + 1] for k in range(n - 1)):
            raise ValueError("click-through rates must be non-increasing")
        if any(v < 0 for v in self.valuations):
            raise ValueError("valuations must be non-negative")
        if any(g <= 0 for g in self.gammas):
            raise ValueError("quality factors must be strictly positive")

    @property
    def n(self) -> int:
        return len(self.alphas)

    @property
    def effective_values(self) -> np.ndarray:
        return np.asarray(self.gammas) * np.asarray(self.valuations)

    def with_valuations(self, valuations, gammas=None) -> "AuctionInstance":
        return AuctionInstance(self.alphas, valuations, self.gammas if gammas is None else gammas)


@dataclass(frozen=True)
class Outcome:
    slot_to_player: tuple[int, ...]
    player_to_slot: tuple[int, ...]
    payments: tuple[float, ...]
    utilities: tuple[float, ...]
    welfare: float

    def to_dict(self) -> dict:
        return {
            "slot_to_player": list(self.slot_to_player),
            "player_to_slot": list(self.player_to_slot),
            "payments": list(self.payments),
            "utilities": list(self.utilities),
            "welfare": self.welfare,
        }


def check_bids(instance: AuctionInstance, bids: Sequence[float], tol: float = OVERBID_TOL) -> tuple[float, ...]:
    """Validate a conservative bid profile and return it as a tuple of floats."""
    bids = tuple(float(b) for b in bids)
    if len(bids) != instance.n:
        raise ValueError(f"dimension mismatch: {len(bids)} bids for {instance.n} players")
    for i, (b, v) in enumerate(zip(bids, instance.valuations)):
        if not np.isfinite(b) or b < 0:
            raise ValueError(f"bid of player {i} must be a non-negative number, got {b}")
        if b > v + tol:
            raise ValueError(f"overbidding detected: player {i} bids {b} > valuation {v}")
    return bids


def rank_by_effective(effective: Sequence[float]) -> list[int]:
    """Players sorted by effective amount descending; lower index wins ties."""
    return sorted(range(len(effective)), key=lambda i: (-effective[i], i))


def inverse_permutation(perm: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * len(perm)
    for k, p in enumerate(perm):
        inv[p] = k
    return tuple(inv)


def check_permutation(perm: Iterable[int], n: int) -> tuple[int, ...]:
    perm = tuple(int(p) for p in perm)
    if len(perm) != n or sorted(perm) != list(range(n)):
        raise ValueError(f"{perm} is not a permutation of 0..{n - 1}")
    return perm


def social_welfare(instance: AuctionInstance, slot_to_player: Sequence[int]) -> float:
    a, g, v = instance.alphas, instance.gammas, instance.valuations
    return float(sum(a[k] * g[p] * v[p] for k, p in enumerate(slot_to_player)))


def run_auction(instance: AuctionInstance, bids: Sequence[float]) -> Outcome:
    """Run one GSP auction on a conservative bid profile."""
    bids = check_bids(instance, bids)
    n = instance.n
    a, g, v = instance.alphas, instance.gammas, instance.valuations
    eff_bids = [g[i] * bids[i] for i in range(n)]
    order = rank_by_effective(eff_bids)
    # b_{pi(n+1)} = 0: the last slot's next effective bid is zero
    next_eff = [eff_bids[order[k + 1]] for k in range(n - 1)] + [0.0]
    payments = [0.0] * n
    utilities = [0.0] * n
    for k, p in enumerate(order):
        payments[p] = next_eff[k] / g[p]
        utilities[p] = a[k] * (g[p] * v[p] - next_eff[k])
    return Outcome(
        slot_to_player=tuple(order),
        player_to_slot=inverse_permutation(order),
        payments=tuple(payments),
        utilities=tuple(utilities),
        welfare=social_welfare(instance, order),
    )


def efficient_allocation(instance: AuctionInstance) -> tuple[int, ...]:
    return tuple(rank_by_effective(list(instance.effective_values)))


def optimal_welfare(instance: AuctionInstance) -> tuple[float, tuple[int, ...]]:
    """Maximum welfare and an attaining slot-to-player permutation."""
    perm = efficient_allocation(instance)
    return social_welfare(instance, perm), perm


def restricted_optimal_welfare(instance: AuctionInstance, subset: Iterable[int]) -> float:
    """Best welfare obtainable by the players in ``subset`` alone (OPT_S).

    Members sorted by effective value take the top ``len(subset)`` slots.
    """
    members = sorted(set(int(i) for i in subset))
    if not members:
        raise ValueError("subset must be non-empty")
    if members[0] < 0 or members[-1] >= instance.n:
        raise ValueError(f"subset {members} out of range for n={instance.n}")
    eff = instance.effective_values
    ranked = sorted(members, key=lambda i: (-eff[i], i))
    return float(sum(instance.alphas[k] * eff[i] for k, i in enumerate(ranked)))


def utilities_for_own_bids(
    instance: AuctionInstance,
    bids: Sequence[float],
    player: int,
    own_bids: np.ndarray,
) -> np.ndarray:
    """Utility of ``player`` for each candidate bid in ``own_bids`` against fixed opponents.

    Vectorized counterfactual evaluation; agrees with :func:`run_auction`
    including the lower-index tie-break.
    """
    g = instance.gammas
    opp = sorted(
        ((g[j] * float(bids[j]), j) for j in range(instance.n) if j != player), key=lambda t: (-t[0], t[1])
    )
    opp_eff = np.array([e for e, _ in opp])
    favoured = np.array([j < player for _, j in opp], dtype=bool)
    below = np.array([e for e, _ in opp] + [0.0])
    a = np.asarray(instance.alphas)

    x = g[player] * np.atleast_1d(np.asarray(own_bids, dtype=float))[:, None]
    slot = ((opp_eff > x) | ((opp_eff == x) & favoured)).sum(axis=1)
    return a[slot] * (g[player] * instance.valuations[player] - below[slot])
