"""Worst-case inefficiency of weakly feasible allocations.

Closed forms for two and three players, exhaustive enumeration for small n and
a derivative-free numeric maximizer for n <= 6.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .auction import (
    AuctionInstance,
    check_permutation,
    efficient_allocation,
    inverse_permutation,
    optimal_welfare,
    social_welfare,
)
from .equilibria import allocation_structure, efficient_ranks, weak_feasibility, weakly_feasible_mask
from .numerics import golden_max

log = logging.getLogger(__name__)

# worst-case inefficiency of any weakly feasible allocation
FULL_INFO_BOUND = (61.0 + 7.0 * math.sqrt(217.0)) / 128.0
THEORY_TOL = 1e-6
MAX_ENUMERATION_N = 8


@dataclass
class SearchResult:
    best_ratio: float
    witness_instance: AuctionInstance
    witness_allocation: tuple[int, ...]
    iterations: int
    method: str
    budget_exhausted: bool = False
    theory_violation: bool = False
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        inst = self.witness_instance
        return {
            "best_ratio": self.best_ratio,
            "witness_instance": {
                "n": inst.n,
                "alphas": list(inst.alphas),
                "valuations": list(inst.valuations),
                "gammas": list(inst.gammas),
            },
            "witness_allocation": list(self.witness_allocation),
            "iterations": self.iterations,
            "method": self.method,
            "budget_exhausted": self.budget_exhausted,
            "theory_violation": self.theory_violation,
            "details": self.details,
        }


def inefficiency(instance: AuctionInstance, permutation: Sequence[int]) -> float:
    """OPT / SW; +inf when only SW vanishes, 1 when both do."""
    perm = check_permutation(permutation, instance.n)
    opt, _ = optimal_welfare(instance)
    sw = social_welfare(instance, perm)
    if sw <= 0.0:
        return 1.0 if opt <= 0.0 else math.inf
    return opt / sw


def _ratios(alphas: np.ndarray, eff: np.ndarray, perms: np.ndarray) -> np.ndarray:
    opt = float(np.sum(alphas * np.sort(eff)[::-1]))
    sw = (alphas[None, :] * eff[perms]).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(sw > 0, opt / np.where(sw > 0, sw, 1.0), np.inf if opt > 0 else 1.0)
    return out


_PERM_CACHE: dict[int, np.ndarray] = {}


def all_permutations(n: int) -> np.ndarray:
    if n not in _PERM_CACHE:
        _PERM_CACHE[n] = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    return _PERM_CACHE[n]


def enumerate_weakly_feasible(
    instance: AuctionInstance, tolerance: float = 1e-9
) -> list[tuple[tuple[int, ...], float]]:
    """Every weakly feasible slot-to-player permutation with its inefficiency, worst first."""
    n = instance.n
    if n > MAX_ENUMERATION_N:
        raise ValueError(f"enumeration over {n}! permutations refused; n must be <= {MAX_ENUMERATION_N}")
    perms = all_permutations(n)
    a = np.asarray(instance.alphas)
    eff = instance.effective_values
    mask = weakly_feasible_mask(a, eff, perms, tolerance)
    ratios = _ratios(a, eff, perms[mask])
    rows = [(tuple(int(x) for x in p), float(r)) for p, r in zip(perms[mask], ratios)]
    rows.sort(key=lambda t: (-t[1], t[0]))
    return rows


def max_weakly_feasible_ratio(instance: AuctionInstance, tolerance: float = 1e-9) -> tuple[float, tuple[int, ...]]:
    rows = enumerate_weakly_feasible(instance, tolerance)
    return rows[0][1], rows[0][0]


# -- symmetry and reduction ---------------------------------------------------


def transpose_instance(
    instance: AuctionInstance, permutation: Sequence[int]
) -> tuple[AuctionInstance, tuple[int, ...]]:
    """Swap the roles of click-through rates and effective values.

    Players are relabelled by efficient rank first. The new game has CTRs equal
    to the sorted effective values, valuations equal to the old CTRs, unit
    quality factors, and allocation pi^{-1}; OPT, SW and weak feasibility are
    all preserved.
    """
    perm = check_permutation(permutation, instance.n)
    order = efficient_allocation(instance)
    rank = efficient_ranks(instance)
    eff = instance.effective_values
    ranked_perm = [rank[p] for p in perm]
    new = AuctionInstance(alphas=[eff[p] for p in order], valuations=instance.alphas)
    return new, inverse_permutation(ranked_perm)


@dataclass(frozen=True)
class Subgame:
    slots: tuple[int, ...]
    players: tuple[int, ...]
    instance: AuctionInstance
    permutation: tuple[int, ...]
    ratio: float
    weakly_feasible: bool


@dataclass(frozen=True)
class Reduction:
    ratio: float
    subgames: tuple[Subgame, ...]
    bound_holds: bool


def reduce_and_bound(instance: AuctionInstance, permutation: Sequence[int], tolerance: float = 1e-9) -> Reduction:
    """Split an allocation along the cycles of G(pi) into independent subgames."""
    perm = check_permutation(permutation, instance.n)
    structure = allocation_structure(instance, perm)
    rank = efficient_ranks(instance)
    subgames = []
    for cycle in structure.cycles:
        slots = tuple(sorted(cycle))
        players = tuple(sorted((perm[s] for s in slots), key=lambda p: rank[p]))
        local = {p: t for t, p in enumerate(players)}
        sub = AuctionInstance(
            alphas=[instance.alphas[s] for s in slots],
            valuations=[instance.valuations[p] for p in players],
            gammas=[instance.gammas[p] for p in players],
        )
        sub_perm = tuple(local[perm[s]] for s in slots)
        subgames.append(
            Subgame(
                slots=slots,
                players=players,
                instance=sub,
                permutation=sub_perm,
                ratio=inefficiency(sub, sub_perm),
                weakly_feasible=weak_feasibility(sub, sub_perm, tolerance).holds,
            )
        )
    ratio = inefficiency(instance, perm)
    holds = ratio <= max(s.ratio for s in subgames) + tolerance
    if not holds:
        raise RuntimeError(f"cycle reduction bound violated for {instance} / {perm}")
    return Reduction(ratio=ratio, subgames=tuple(subgames), bound_holds=holds)


def irreducible_permutations(n: int, halve: bool = True) -> list[tuple[int, ...]]:
    """Slot-to-player permutations (players by efficient rank) whose G(pi) is a single cycle.

    With ``halve`` only those where player 0 sits above the slot index of the
    player in slot 0 are kept; the transpose covers the rest.
    """
    out = []
    for perm in itertools.permutations(range(n)):
        sigma = inverse_permutation(perm)
        s, length = 0, 0
        while True:
            s = sigma[s]
            length += 1
            if s == 0:
                break
        if length != n:
            continue
        if halve and n > 1 and not sigma[0] <= perm[0]:
            continue
        out.append(perm)
    return out


# -- closed forms -------------------------------------------------------------


def n2_ratio(beta: float, lam: float) -> float:
    """Inefficiency of the swapped allocation with alpha = (1, beta), v = (1, lam)."""
    return (1.0 + beta * lam) / (beta + lam)


def worst_case_n2() -> SearchResult:
    # (1 + beta*lam)/(beta + lam) <= (1 + s^2/4)/s with s = beta + lam >= 1 from the
    # constraint beta >= 1 - lam; the bound decreases in s so s = 1, beta = lam = 1/2
    beta = lam = 0.5
    ratio = n2_ratio(beta, lam)
    witness = AuctionInstance(alphas=[1.0, beta], valuations=[1.0, lam])
    return SearchResult(
        best_ratio=ratio,
        witness_instance=witness,
        witness_allocation=(1, 0),
        iterations=1,
        method="closed-form",
        details={"beta": beta, "lambda": lam},
    )


def n3_mu(lam: float) -> float:
    """Maximizing third value (relative to the first) for the irreducible 3-cycle."""
    return lam + 1.0 - math.sqrt(lam**3 + 1.0)


def n3_ratio_bound(lam: float) -> float:
    return (lam * lam + lam + 2.0 - 2.0 * math.sqrt(lam**3 + 1.0)) / lam


def n3_ratio(beta: float, delta: float, lam: float, mu: float) -> float:
    """Inefficiency of the allocation (3, 1, 2) with alpha = (1, beta, delta), v = (1, lam, mu)."""
    return (1.0 + beta * lam + delta * mu) / (mu + beta + delta * lam)


def worst_case_n3() -> SearchResult:
    lam, ratio, evals = golden_max(n3_ratio_bound, 1e-9, 1.0, xtol=1e-12)
    mu = n3_mu(lam)
    beta = 1.0 - mu
    delta = 1.0 - mu / lam
    # built in the (3, 1, 2) form, reported in the transposed (2, 3, 1) form
    former = AuctionInstance(alphas=[1.0, beta, delta], valuations=[1.0, lam, mu])
    witness, alloc = transpose_instance(former, (2, 0, 1))
    return SearchResult(
        best_ratio=ratio,
        witness_instance=witness,
        witness_allocation=alloc,
        iterations=evals,
        method="closed-form",
        details={"beta": beta, "delta": delta, "lambda": lam, "mu": mu},
    )


# -- numeric search -----------------------------------------------------------


def _decode(x: np.ndarray, n: int, perm: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Box coordinates -> (alphas, valuations, infeasibility) with alpha_1 = v_1 = 1.

    The last n-1 coordinates are successive valuation ratios. Each alpha_j is
    placed at a fraction of its weakly feasible interval [lb_j, alpha_{j-1}],
    so the active constraints of a worst case become faces of the box.
    """
    v = np.concatenate(([1.0], np.cumprod(x[n - 1 :])))
    e = v[perm]
    a = np.empty(n)
    a[0] = 1.0
    short = 0.0
    for j in range(1, n):
        lb = 0.0
        if e[j] > 0:
            lb = max(0.0, float(np.max(a[:j] * (1.0 - e[:j] / e[j]))))
        ub = a[j - 1]
        if lb > ub:
            short += lb - ub
            lb = ub
        a[j] = lb + x[j - 1] * (ub - lb)
    return a, v, short


class _Objective:
    def __init__(self, n: int, perm: tuple[int, ...], tolerance: float):
        self.n = n
        self.perm = np.asarray(perm)
        self.tol = tolerance
        self.evals = 0

    def violation(self, a: np.ndarray, v: np.ndarray) -> float:
        e = v[self.perm]
        gap = a[:, None] * (e[None, :] - e[:, None]) - a[None, :] * e[None, :]
        return float(gap.max())

    def ratio(self, a: np.ndarray, v: np.ndarray) -> float:
        sw = float(np.dot(a, v[self.perm]))
        return float(np.dot(a, v)) / sw if sw > 0 else math.inf

    def __call__(self, x: np.ndarray) -> tuple[float, bool]:
        """Penalized value: ratio (>= 1) when feasible, below 1 otherwise."""
        self.evals += 1
        a, v, short = _decode(x, self.n, self.perm)
        if short > 0:
            return 1.0 - short, False
        if self.violation(a, v) > self.tol:
            return 1.0 - self.violation(a, v), False
        return self.ratio(a, v), True


def _line_bounds(x: np.ndarray, d: np.ndarray) -> tuple[float, float]:
    lo, hi = -math.inf, math.inf
    for xi, di in zip(x, d):
        if di > 0:
            lo, hi = max(lo, -xi / di), min(hi, (1.0 - xi) / di)
        elif di < 0:
            lo, hi = max(lo, (1.0 - xi) / di), min(hi, -xi / di)
    return lo, hi


def _search_permutation(args) -> tuple[float, np.ndarray | None, int, bool]:
    n, perm, budget, seed, perm_index, tolerance = args
    obj = _Objective(n, perm, tolerance)
    dim = 2 * (n - 1)
    best_val, best_x = -math.inf, None
    restart = 0
    interrupted = False
    while obj.evals < budget:
        rng = np.random.default_rng([seed, perm_index, restart])
        restart += 1
        x = rng.uniform(0.0, 1.0, 2 * (n - 1))
        val, feasible = obj(x)
        while not feasible and obj.evals < budget:
            # equal click-through rates make every allocation weakly feasible
            x[: n - 1] = 1.0 - 0.5 * (1.0 - x[: n - 1])
            val, feasible = obj(x)
        if not feasible:
            break
        prev_x = x.copy()
        converged = False
        while obj.evals < budget:
            start_val = val
            directions = [np.eye(dim)[k] for k in range(dim)]
            directions += [rng.normal(size=dim) for _ in range(2)]
            if not np.array_equal(prev_x, x):
                directions.append(x - prev_x)
            prev_x = x.copy()
            for d in directions:
                if obj.evals >= budget:
                    break
                lo, hi = _line_bounds(x, d)
                if not hi > lo:
                    continue
                t, fv, _ = golden_max(lambda t: obj(np.clip(x + t * d, 0.0, 1.0))[0], lo, hi, xtol=1e-12 * max(1.0, hi - lo))
                cand = np.clip(x + t * d, 0.0, 1.0)
                cval, cfeas = obj(cand)
                if cfeas and cval > val:
                    x, val = cand, cval
            if val > best_val:
                best_val, best_x = val, x.copy()
            if val - start_val <= 1e-13:
                converged = True
                break
        interrupted = not converged
    return best_val, best_x, obj.evals, interrupted


def worst_case_numeric(
    n: int,
    permutation: Sequence[int] | None = None,
    budget: int = 20_000,
    seed: int = 0,
    tolerance: float = 1e-12,
    workers: int | None = None,
) -> SearchResult:
    """Maximize inefficiency over sorted (alpha, v) in [0,1]^(2n), gamma = 1, alpha_1 = v_1 = 1.

    ``budget`` counts objective evaluations per permutation. Without an explicit
    permutation every irreducible permutation is searched (half of them, by the
    transpose symmetry). Restarts use RNG streams keyed by (seed, permutation,
    restart), so results are reproducible and independent of ``workers``.
    """
    if not 2 <= n <= 6:
        raise ValueError(f"numeric search supports 2 <= n <= 6, got n={n}")
    perms = [check_permutation(permutation, n)] if permutation is not None else irreducible_permutations(n)
    tasks = [(n, p, budget, seed, k, tolerance) for k, p in enumerate(perms)]
    if workers and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_search_permutation, tasks))
    else:
        results = [_search_permutation(t) for t in tasks]

    total_evals = sum(r[2] for r in results)
    best_k = max(range(len(results)), key=lambda k: (results[k][0], -k))
    best_val, best_x, _, _ = results[best_k]
    if best_x is None:
        # no feasible point found for any permutation: fall back to the efficient allocation
        inst = AuctionInstance([1.0] * n, [1.0] * n)
        return SearchResult(1.0, inst, tuple(range(n)), total_evals, "numeric-maximization", budget_exhausted=True)
    perm = perms[best_k]
    a, v, _ = _decode(best_x, n, np.asarray(perm))
    inst = AuctionInstance(alphas=a, valuations=v)
    ratio = inefficiency(inst, perm)
    violation = ratio > FULL_INFO_BOUND + THEORY_TOL
    if violation:
        log.error("theory violation: ratio %.9f > %.9f at %s / %s", ratio, FULL_INFO_BOUND, inst, perm)
    return SearchResult(
        best_ratio=ratio,
        witness_instance=inst,
        witness_allocation=perm,
        iterations=total_evals,
        method="numeric-maximization",
        budget_exhausted=any(r[3] for r in results),
        theory_violation=violation,
        details={"permutations_searched": len(perms), "seed": seed, "budget_per_permutation": budget},
    )
