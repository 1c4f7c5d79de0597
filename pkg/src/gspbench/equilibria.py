"""Exact best responses, Nash verification and weak feasibility of allocations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .auction import (
    AuctionInstance,
    check_bids,
    check_permutation,
    efficient_allocation,
    inverse_permutation,
    run_auction,
)


@dataclass(frozen=True)
class BestResponse:
    utility: float
    slot: int
    bid: float


@dataclass
class EquilibriumReport:
    per_player_regret: list[float]
    max_regret: float
    is_equilibrium: bool
    witness_deviations: list[tuple[int, float] | None]
    utilities: list[float] = field(default_factory=list)
    best_utilities: list[float] = field(default_factory=list)
    players: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_player_regret": self.per_player_regret,
            "max_regret": self.max_regret,
            "is_equilibrium": self.is_equilibrium,
            "witness_deviations": [
                None if w is None else {"slot": w[0], "bid": w[1]} for w in self.witness_deviations
            ],
            "utilities": self.utilities,
            "best_utilities": self.best_utilities,
            "players": self.players,
        }


def _sorted_opponents(instance: AuctionInstance, bids: Sequence[float], player: int) -> list[tuple[float, int]]:
    g = instance.gammas
    opp = [(g[j] * bids[j], j) for j in range(instance.n) if j != player]
    opp.sort(key=lambda t: (-t[0], t[1]))
    return opp


def best_response(instance: AuctionInstance, bids: Sequence[float], player: int) -> BestResponse:
    """Supremal utility ``player`` can reach by changing only her own bid.

    Utility is piecewise constant in the own bid, so enumerating target slots is
    exact. If a slot needs a bid strictly above a threshold, the reported
    utility is the supremum and the witness bid is the next float up.
    """
    bids = check_bids(instance, bids)
    n = instance.n
    if not 0 <= player < n:
        raise ValueError(f"player index {player} out of range for n={n}")
    a = instance.alphas
    g_i = instance.gammas[player]
    v_i = instance.valuations[player]
    ev = g_i * v_i
    # below[k]: effective bid of the opponent that would sit right under slot k
    below: list[tuple[float, int | None]] = _sorted_opponents(instance, bids, player) + [(0.0, None)]

    def placed(x: float) -> tuple[float, int, float]:
        # slot actually won by bid x: ties with favoured opponents can lift it above the target
        e_x = g_i * x
        k = sum(1 for e, j in below[:-1] if e > e_x or (e == e_x and j < player))
        return a[k] * (ev - below[k][0]), k, x

    bids_to_try = [0.0]
    for k in range(n):
        e, j = below[k]
        favoured = j is None or player < j
        if ev > e or (ev == e and favoured):
            x = e / g_i
            # smallest float whose effective bid clears the threshold in float arithmetic
            while g_i * x < e or (not favoured and g_i * x == e):
                x = math.nextafter(x, math.inf)
            bids_to_try.append(min(x, v_i))
    candidates = [placed(x) for x in bids_to_try]

    best = max(c[0] for c in candidates)
    tied = [c for c in candidates if c[0] >= best - 1e-12 * max(1.0, abs(best))]
    util, slot, bid = min(tied, key=lambda c: (c[2], -c[1]))
    return BestResponse(utility=best, slot=slot, bid=bid)


def _report(
    instance: AuctionInstance,
    bids: Sequence[float],
    players: Iterable[int],
    passes,
) -> EquilibriumReport:
    bids = check_bids(instance, bids)
    outcome = run_auction(instance, bids)
    players = sorted(set(players))
    regrets = [0.0] * instance.n
    witnesses: list[tuple[int, float] | None] = [None] * instance.n
    best_utils = list(outcome.utilities)
    ok = True
    for i in players:
        br = best_response(instance, bids, i)
        u = outcome.utilities[i]
        regrets[i] = max(0.0, br.utility - u)
        witnesses[i] = (br.slot, br.bid)
        best_utils[i] = br.utility
        ok = ok and passes(u, br.utility)
    max_regret = max(regrets[i] for i in players)
    return EquilibriumReport(
        per_player_regret=regrets,
        max_regret=max_regret,
        is_equilibrium=bool(ok),
        witness_deviations=witnesses,
        utilities=list(outcome.utilities),
        best_utilities=best_utils,
        players=players,
    )


def verify_pure_ne(instance: AuctionInstance, bids: Sequence[float], tolerance: float = 1e-9) -> EquilibriumReport:
    return _report(instance, bids, range(instance.n), lambda u, best: best - u <= tolerance)


def verify_epsilon_ne(
    instance: AuctionInstance, bids: Sequence[float], epsilon: float, tolerance: float = 1e-9
) -> EquilibriumReport:
    """Multiplicative approximate equilibrium: every player earns at least (1-eps) of her best response."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
    return _report(
        instance, bids, range(instance.n), lambda u, best: u >= (1.0 - epsilon) * best - tolerance
    )


def verify_s_ne(
    instance: AuctionInstance, bids: Sequence[float], subset: Iterable[int], tolerance: float = 1e-9
) -> EquilibriumReport:
    """Nash condition checked only for the players in ``subset``; others may bid arbitrarily (but conservatively)."""
    subset = sorted(set(int(i) for i in subset))
    if not subset:
        raise ValueError("subset must be non-empty")
    if subset[0] < 0 or subset[-1] >= instance.n:
        raise ValueError(f"subset {subset} out of range for n={instance.n}")
    return _report(instance, bids, subset, lambda u, best: best - u <= tolerance)


# -- weak feasibility ---------------------------------------------------------


@dataclass(frozen=True)
class WeakFeasibility:
    holds: bool
    violations: tuple[tuple[int, int], ...]


def _scale(alphas: np.ndarray, eff: np.ndarray) -> float:
    s = float(alphas[0] * eff.max()) if len(alphas) else 0.0
    return s if s > 0 else 1.0


def weak_feasibility(
    instance: AuctionInstance, permutation: Sequence[int], tolerance: float = 1e-9
) -> WeakFeasibility:
    """Check every ordered slot pair (i, j) of a slot-to-player permutation.

    The ratio condition alpha_j/alpha_i + e_pi(i)/e_pi(j) >= 1 is evaluated in
    its cleared form alpha_j e_pi(j) >= alpha_i (e_pi(j) - e_pi(i)), which is
    what the equilibrium argument produces and needs no 0/0 convention.
    """
    perm = check_permutation(permutation, instance.n)
    a = np.asarray(instance.alphas)
    eff = instance.effective_values[list(perm)]
    gap = a[:, None] * (eff[None, :] - eff[:, None]) - a[None, :] * eff[None, :]
    bad = np.argwhere(gap > tolerance * _scale(a, instance.effective_values))
    violations = tuple((int(i), int(j)) for i, j in bad)
    return WeakFeasibility(holds=not violations, violations=violations)


def weakly_feasible_mask(
    alphas: np.ndarray, effective_values: np.ndarray, perms: np.ndarray, tolerance: float = 1e-9
) -> np.ndarray:
    """Vectorized weak feasibility for a batch of permutations (rows of ``perms``)."""
    a = np.asarray(alphas, dtype=float)
    e = np.asarray(effective_values, dtype=float)[perms]
    gap = a[None, :, None] * (e[:, None, :] - e[:, :, None]) - a[None, None, :] * e[:, None, :]
    return ~(gap > tolerance * _scale(a, np.asarray(effective_values, dtype=float))).any(axis=(1, 2))


# -- allocation structure -----------------------------------------------------


@dataclass(frozen=True)
class AllocationStructure:
    permutation: tuple[int, ...]
    cycles: tuple[tuple[int, ...], ...]
    is_irreducible: bool
    is_proper: bool


def efficient_ranks(instance: AuctionInstance) -> tuple[int, ...]:
    """Slot each player gets in the efficient allocation (ties by index)."""
    return inverse_permutation(efficient_allocation(instance))


def allocation_structure(instance: AuctionInstance, permutation: Sequence[int]) -> AllocationStructure:
    """Cycle decomposition of the slot graph G(pi) and the proper flag.

    Players are identified with their efficient slot, so the player ranked r
    contributes the edge r -> (slot she actually occupies).
    """
    perm = check_permutation(permutation, instance.n)
    n = instance.n
    rank = efficient_ranks(instance)
    eff_order = efficient_allocation(instance)
    sigma = inverse_permutation(perm)
    succ = [sigma[eff_order[s]] for s in range(n)]

    seen = [False] * n
    cycles = []
    for start in range(n):
        if seen[start]:
            continue
        cycle = []
        s = start
        while not seen[s]:
            seen[s] = True
            cycle.append(s)
            s = succ[s]
        cycles.append(tuple(cycle))

    a = instance.alphas
    proper = all(
        rank[perm[i]] < rank[perm[j]]
        for i in range(n)
        for j in range(i + 1, n)
        if a[i] == a[j]
    )
    return AllocationStructure(
        permutation=perm, cycles=tuple(cycles), is_irreducible=len(cycles) == 1, is_proper=proper
    )


# -- best-response iteration --------------------------------------------------


def best_response_dynamics(
    instance: AuctionInstance,
    rng: np.random.Generator,
    start: Sequence[float] | None = None,
    max_rounds: int = 200,
    tolerance: float = 1e-9,
) -> tuple[float, ...] | None:
    """Round-robin best-response iteration; returns a verified pure NE or None.

    A player moves only if she gains more than ``tolerance``; she then bids a
    uniformly random amount among the bids that secure her best slot.
    """
    n = instance.n
    v = np.asarray(instance.valuations)
    g = instance.gammas
    bids = list(rng.uniform(0.0, 1.0, n) * v if start is None else check_bids(instance, start))
    for _ in range(max_rounds):
        moved = False
        for i in rng.permutation(n):
            i = int(i)
            u = run_auction(instance, bids).utilities[i]
            br = best_response(instance, bids, i)
            if br.utility - u <= tolerance:
                continue
            opp = _sorted_opponents(instance, bids, i)
            upper = v[i] if br.slot == 0 else min(v[i], opp[br.slot - 1][0] / g[i])
            lo = br.bid
            bid = lo + rng.uniform(0.0, 0.999) * (upper - lo) if upper > lo else lo
            bids[i] = float(min(max(bid, 0.0), v[i]))
            # the random interior bid may miss the slot on exact ties; fall back to the witness
            if run_auction(instance, bids).utilities[i] < br.utility - tolerance:
                bids[i] = br.bid
            moved = True
        if not moved:
            bids_t = tuple(bids)
            if verify_pure_ne(instance, bids_t, tolerance).is_equilibrium:
                return bids_t
            return None
    return None
