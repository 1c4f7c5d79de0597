"""Numeric certificates for the analytic constructions behind the PoA bounds.

Semi-smoothness of GSP under the randomized deviation with density
1/(v - y), the (beta, delta)-bounded and beta-bounded functions, the technical
lemmas of the pure-equilibrium analysis, the headline constants and the
non-smoothness witness.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .auction import AuctionInstance, check_bids, optimal_welfare, run_auction
from .numerics import bisect, golden_max

E_FACTOR = 1.0 - 1.0 / math.e
R_BOUND = (61.0 + 7.0 * math.sqrt(217.0)) / 128.0
ZETA = 0.129567
DEFAULT_KAPPA, DEFAULT_LAMBDA, DEFAULT_MU = 1.7507, 0.225, 0.7966
DEFAULT_TOL = 1e-9


# -- semi-smoothness ----------------------------------------------------------


def _opponents(instance: AuctionInstance, bids: Sequence[float], player: int) -> tuple[list[float], list[int]]:
    g = instance.gammas
    opp = sorted(((g[j] * bids[j], j) for j in range(instance.n) if j != player), key=lambda t: (-t[0], t[1]))
    return [e for e, _ in opp], [j for _, j in opp]


def _slot_for(eff_bid: float, opp_eff: list[float], opp_idx: list[int], player: int) -> int:
    return sum(1 for e, j in zip(opp_eff, opp_idx) if e > eff_bid or (e == eff_bid and j < player))


def expected_deviation_utility(instance: AuctionInstance, bids: Sequence[float], player: int) -> float:
    """E[u_i(b', b_-i)] for b' with density 1/(v_i - y) on [0, v_i (1 - 1/e)], in closed form.

    The deviation interval is cut at the opponents' thresholds e_(k)/gamma_i.
    On each piece the slot and the price are constant and the piece carries
    probability ln((v - a)/(v - b)).
    """
    bids = check_bids(instance, bids)
    v = instance.valuations[player]
    if v <= 0.0:
        return 0.0
    g_i = instance.gammas[player]
    a = instance.alphas
    opp_eff, opp_idx = _opponents(instance, bids, player)
    below = opp_eff + [0.0]
    top = v * E_FACTOR
    cuts = sorted({0.0, top} | {e / g_i for e in opp_eff if 0.0 < e / g_i < top})
    # quantile of y under the deviation law, ln(v / (v - y)); the top cut is pinned to 1 so
    # tiny valuations cannot underflow v - y to zero
    quantile = lambda y: 1.0 if y == top else -math.log1p(-y / v)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (lo + hi)
        k = _slot_for(g_i * mid, opp_eff, opp_idx, player)
        total += a[k] * (g_i * v - below[k]) * (quantile(hi) - quantile(lo))
    return total


def deviation_lower_bound(instance: AuctionInstance, bids: Sequence[float], player: int) -> float:
    """(1 - 1/e) a_nu(i) gamma_i v_i - a_nu(i) (effective bid currently in slot nu(i))."""
    bids = check_bids(instance, bids)
    _, eff_perm = optimal_welfare(instance)
    nu = eff_perm.index(player)
    occupant = run_auction(instance, bids).slot_to_player[nu]
    a = instance.alphas[nu]
    return E_FACTOR * a * instance.gammas[player] * instance.valuations[player] - a * instance.gammas[occupant] * bids[occupant]


def half_deviation_utility(instance: AuctionInstance, bids: Sequence[float], player: int) -> float:
    """u_i when player i alone switches to the deterministic bid v_i / 2."""
    dev = list(check_bids(instance, bids))
    dev[player] = instance.valuations[player] / 2.0
    return run_auction(instance, dev).utilities[player]


def check_semi_smooth(instance: AuctionInstance, bids: Sequence[float], deviation: str = "randomized") -> float:
    """Margin of sum_i u_i(b'_i, b_-i) >= lam * OPT - SW(b).

    ``deviation="randomized"`` uses the 1/(v - y) density with lam = 1 - 1/e;
    ``deviation="half"`` uses b'_i = v_i / 2 with lam = 1/2.
    """
    bids = check_bids(instance, bids)
    if deviation == "randomized":
        lam, dev = E_FACTOR, expected_deviation_utility
    elif deviation == "half":
        lam, dev = 0.5, half_deviation_utility
    else:
        raise ValueError(f"unknown deviation {deviation!r}; use 'randomized' or 'half'")
    opt, _ = optimal_welfare(instance)
    sw = run_auction(instance, bids).welfare
    return sum(dev(instance, bids, i) for i in range(instance.n)) - (lam * opt - sw)


@dataclass(frozen=True)
class SmoothnessWitness:
    instance: AuctionInstance
    s: tuple[float, float]
    s_star: tuple[float, float]
    violation: float


def smoothness_counterexample(lam: float, mu: float) -> SmoothnessWitness:
    """Two-slot game where sum_i u_i(s*_i, s_-i) >= lam SW(s*) - mu SW(s) fails.

    CTRs (1, x), values (1, x), s = (0, 3x/4), s* = (x/2, x/4) with
    x = min(0.9, lam / (8 (1 + mu))).
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}; every game is (0, mu)-smooth")
    if mu < 0:
        raise ValueError(f"mu must be non-negative, got {mu}")
    x = min(0.9, lam / (8.0 * (1.0 + mu)))
    inst = AuctionInstance(alphas=[1.0, x], valuations=[1.0, x])
    s = (0.0, 0.75 * x)
    s_star = (0.5 * x, 0.25 * x)
    lhs = run_auction(inst, (s_star[0], s[1])).utilities[0] + run_auction(inst, (s[0], s_star[1])).utilities[1]
    rhs = lam * run_auction(inst, s_star).welfare - mu * run_auction(inst, s).welfare
    violation = rhs - lhs
    if not violation > 0:
        raise RuntimeError(f"no smoothness violation found for lambda={lam}, mu={mu}")
    return SmoothnessWitness(instance=inst, s=s, s_star=s_star, violation=violation)


# -- certificates -------------------------------------------------------------


@dataclass
class Check:
    name: str
    worst_margin: float
    passed: bool
    where: float | None = None

    def to_dict(self) -> dict:
        return {"name": self.name, "worst_margin": self.worst_margin, "passed": self.passed, "where": self.where}


@dataclass
class CertificateReport:
    title: str
    checks: list[Check]
    grid_size: int
    tolerance: float
    values: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, margin: float, where: float | None = None) -> Check:
        check = Check(name, float(margin), bool(margin >= -self.tolerance), where)
        self.checks.append(check)
        return check

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "passed": self.passed,
            "grid_size": self.grid_size,
            "tolerance": self.tolerance,
            "checks": [c.to_dict() for c in self.checks],
            "values": self.values,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        lines = [f"{self.title}: {'PASS' if self.passed else 'FAIL'} (grid {self.grid_size}, tol {self.tolerance:g})"]
        for c in self.checks:
            at = "" if c.where is None else f" at {c.where:.6g}"
            lines.append(f"  [{'ok' if c.passed else 'FAIL'}] {c.name}: worst margin {c.worst_margin:.6g}{at}")
        for k, v in self.values.items():
            lines.append(f"  {k} = {v:.10g}" if isinstance(v, float) else f"  {k} = {v}")
        return "\n".join(lines)


def _worst(z: np.ndarray, margins: np.ndarray) -> tuple[float, float]:
    k = int(np.argmin(margins))
    return float(margins[k]), float(z[k])


@dataclass(frozen=True)
class BoundedFnSpec:
    """Parameters of the piecewise function g for the Bayesian (bayes) or learning (full-info) bound."""

    variant: str
    lam: float
    kappa: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        if self.variant == "bayes":
            if not self.kappa > 1.0:
                raise ValueError(f"kappa must exceed 1, got {self.kappa}")
            if not 0.0 <= self.lam <= self.mu < 1.0:
                raise ValueError(f"need 0 <= lambda <= mu < 1, got lambda={self.lam}, mu={self.mu}")
        elif self.variant == "full-info":
            if not 0.0 < self.lam < 1.0:
                raise ValueError(f"lambda must lie in (0, 1), got {self.lam}")
        else:
            raise ValueError(f"unknown variant {self.variant!r}; use 'bayes' or 'full-info'")

    @property
    def beta(self) -> float:
        if self.variant == "bayes":
            return (self.kappa - 1.0) * self.mu
        return self.lam / (1.0 - self.lam)

    @property
    def delta(self) -> float:
        return self.kappa - 1.0 if self.variant == "bayes" else self.beta

    @property
    def poa_bound(self) -> float:
        if self.variant == "bayes":
            return (1.0 + self.delta) / self.beta
        return 1.0 + 1.0 / self.beta

    def density(self) -> Callable[[float], float]:
        lam, mu, kappa = self.lam, self.mu, self.kappa
        if self.variant == "bayes":
            c = (kappa - 1.0) * (1.0 - mu)
            return lambda y: kappa / (1.0 - y) if y < lam else (c / (1.0 - y) ** 2 if y < mu else 0.0)
        return lambda y: 1.0 / ((1.0 - lam) * (1.0 - y)) if y <= lam else 0.0

    def tail_mass(self, z):
        """Closed form of the integral of g over [z, 1]."""
        z = np.asarray(z, dtype=float)
        lam, mu, kappa = self.lam, self.mu, self.kappa
        if self.variant == "bayes":
            c = (kappa - 1.0) * (1.0 - mu)
            zm = np.clip(z, lam, mu)
            second = c * (1.0 / (1.0 - mu) - 1.0 / (1.0 - zm))
            zl = np.minimum(z, lam)
            first = kappa * np.log((1.0 - zl) / (1.0 - lam))
            return first + second
        zl = np.minimum(z, lam)
        return np.log((1.0 - zl) / (1.0 - lam)) / (1.0 - lam)

    def tail_weighted(self, z):
        """Closed form of the integral of (1 - y) g(y) over [z, 1]."""
        z = np.asarray(z, dtype=float)
        lam, mu, kappa = self.lam, self.mu, self.kappa
        if self.variant == "bayes":
            c = (kappa - 1.0) * (1.0 - mu)
            zm = np.clip(z, lam, mu)
            zl = np.minimum(z, lam)
            return kappa * (lam - zl) + c * np.log((1.0 - zm) / (1.0 - mu))
        return (lam - np.minimum(z, lam)) / (1.0 - lam)

    def total_mass(self) -> float:
        return float(self.tail_mass(0.0))


def _z_grid(grid_size: int, breakpoints: Sequence[float]) -> np.ndarray:
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    return np.unique(np.concatenate((np.linspace(0.0, 1.0, grid_size), np.asarray(breakpoints, dtype=float))))


def bayes_parameter_conditions(kappa: float, lam: float, mu: float) -> tuple[float, float]:
    """The two conditions on (kappa, lambda, mu); the first must be <= 1, the second >= 0."""
    c1 = (kappa - 1.0) * (mu - lam) / (1.0 - lam) - kappa * math.log(1.0 - lam)
    c2 = (kappa - 1.0) * (1.0 - mu) * math.log((1.0 - lam) / (1.0 - mu)) - (kappa - 1.0) * mu + kappa * lam
    return c1, c2


def verify_bounded_function(
    spec: BoundedFnSpec, grid_size: int = 10_000, tolerance: float = DEFAULT_TOL
) -> CertificateReport:
    """Check properties (i)-(iii) of a (beta, delta)-bounded function and the parameter conditions."""
    if spec.variant != "bayes":
        raise ValueError("verify_bounded_function expects the bayes variant")
    beta, delta = spec.beta, spec.delta
    report = CertificateReport("bounded function (bayes)", [], grid_size, tolerance)
    z = _z_grid(grid_size, [spec.lam, spec.mu])
    report.add("(i) integral of g <= 1", 1.0 - spec.total_mass())
    report.add("(ii) (1-z) int_z^1 g >= beta - delta z", *_worst(z, (1.0 - z) * spec.tail_mass(z) - (beta - delta * z)))
    report.add(
        "(iii) int_z^1 (1-y) g >= beta - (1+delta) z",
        *_worst(z, spec.tail_weighted(z) - (beta - (1.0 + delta) * z)),
    )
    c1, c2 = bayes_parameter_conditions(spec.kappa, spec.lam, spec.mu)
    report.add("parameter condition 1 <= 1", 1.0 - c1)
    report.add("parameter condition 2 >= 0", c2)
    report.values.update(
        {"beta": beta, "delta": delta, "condition_1": c1, "condition_2": c2, "poa_bound": spec.poa_bound}
    )
    return report


def verify_cor_bounded_function(
    lam: float, grid_size: int = 10_000, tolerance: float = DEFAULT_TOL
) -> CertificateReport:
    """Check the two properties of the beta-bounded function 1/((1-lam)(1-y)) on [0, lam]."""
    spec = BoundedFnSpec("full-info", lam)
    beta = spec.beta
    report = CertificateReport("bounded function (full information)", [], grid_size, tolerance)
    z = _z_grid(grid_size, [lam])
    mass = -math.log(1.0 - lam) / (1.0 - lam)
    report.add("(i) integral of g <= 1", 1.0 - mass)
    report.add("(ii) int_z^1 (1-y) g >= beta - (1+beta) z", *_worst(z, spec.tail_weighted(z) - (beta - (1.0 + beta) * z)))
    report.values.update({"lambda": lam, "beta": beta, "integral": mass, "poa_bound": spec.poa_bound})
    return report


def solve_lambda_root() -> float:
    """Root of 1 - lam + ln(1 - lam) = 0 in (0, 1), by bisection."""
    f = lambda lam: 1.0 - lam + math.log(1.0 - lam)
    # f(0) = 1 > 0 and f -> -inf as lam -> 1
    return bisect(f, 0.0, 1.0 - 1e-9, xtol=1e-12)


# -- technical lemmas ---------------------------------------------------------


def technical_objective(beta, delta, lam, mu, r: float = R_BOUND):
    return mu + beta * (1.0 - lam / r) + delta * (lam - mu) - 1.0 / r


def technical_g(lam, r: float = R_BOUND):
    return 1.0 - 1.0 / r - lam / r + lam**2 / r - lam**3 / (4.0 * r * r)


def technical_lambda_star(r: float = R_BOUND) -> float:
    return (4.0 * r - 2.0 * math.sqrt(4.0 * r * r - 3.0 * r)) / 3.0


def zeta_gap(lam, zeta: float = ZETA):
    """(lam^3 + 1) - (1 - zeta lam + lam^2/2)^2, non-negative on [0, 1]."""
    return (lam**3 + 1.0) - (1.0 - zeta * lam + lam**2 / 2.0) ** 2


def zeta_g(lam, zeta: float = ZETA):
    """zeta_gap(lam) / lam."""
    return -(lam**3) / 4.0 + (1.0 + zeta) * lam**2 - (1.0 + zeta**2) * lam + 2.0 * zeta


def zeta_lambda_star(zeta: float = ZETA) -> float:
    return (4.0 + 4.0 * zeta - 2.0 * math.sqrt(zeta**2 + 8.0 * zeta + 1.0)) / 3.0


def _program_min(lam: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Minimum of the technical objective over (beta, delta) at each (lam, mu).

    The objective is linear in beta and delta, so both ends of each feasible
    interval are evaluated.
    """
    b_lo = np.maximum(0.0, 1.0 - mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        d_lo = np.maximum(0.0, 1.0 - mu / lam)
    vals = [technical_objective(b, d, lam, mu) for b in (b_lo, 1.0) for d in (d_lo, 1.0)]
    return np.minimum.reduce(vals)


def minimize_technical_program(step: float = 1e-3, refine_steps: int = 3) -> tuple[float, float, float]:
    """Grid-minimize the program over 0 < mu <= lam <= 1; returns (min, lam, mu)."""
    grid = np.arange(step, 1.0 + step / 2, step)
    lam, mu = np.meshgrid(grid, grid, indexing="ij")
    mask = mu <= lam
    vals = np.where(mask, _program_min(lam, mu), np.inf)
    k = np.unravel_index(np.argmin(vals), vals.shape)
    best, bl, bm = float(vals[k]), float(lam[k]), float(mu[k])
    h = step
    for _ in range(refine_steps):
        local = np.linspace(-2 * h, 2 * h, 81)
        lam, mu = np.meshgrid(np.clip(bl + local, 1e-12, 1.0), np.clip(bm + local, 1e-12, 1.0), indexing="ij")
        mu = np.minimum(mu, lam)
        vals = _program_min(lam, mu)
        k = np.unravel_index(np.argmin(vals), vals.shape)
        if vals[k] < best:
            best, bl, bm = float(vals[k]), float(lam[k]), float(mu[k])
        h /= 20.0
    return best, bl, bm


def verify_technical_lemmas(grid_size: int = 10_001, tolerance: float = DEFAULT_TOL) -> CertificateReport:
    report = CertificateReport("technical lemmas", [], grid_size, tolerance)
    prog_min, pl, pm = minimize_technical_program()
    # (a) the program's minimum is 0, attained; grid noise allowed up to 1e-7
    report.checks.append(Check("(a) program minimum >= 0", prog_min, bool(prog_min >= -1e-7), pl))

    lam = np.linspace(0.0, 1.0, grid_size)
    report.add("(b) g(lambda) >= 0 on [0, 1]", *_worst(lam, technical_g(lam)))
    ls = technical_lambda_star()
    g_star = technical_g(ls)
    report.checks.append(Check("(b) |g(lambda*)| <= 1e-6", 1e-6 - abs(g_star), bool(abs(g_star) <= 1e-6), ls))

    report.add("(c) (lambda^3+1) - (1 - zeta lambda + lambda^2/2)^2 >= 0", *_worst(lam, zeta_gap(lam)))
    zs = zeta_lambda_star()
    report.add("(c) g_zeta(lambda*) > 0", zeta_g(zs), zs)
    report.values.update(
        {
            "r": R_BOUND,
            "program_min": prog_min,
            "program_argmin_lambda": pl,
            "program_argmin_mu": pm,
            "lambda_star": ls,
            "g_lambda_star": float(g_star),
            "zeta": ZETA,
            "zeta_lambda_star": zs,
            "zeta_g_lambda_star": float(zeta_g(zs)),
        }
    )
    return report


# -- constants ----------------------------------------------------------------


def approx_equilibrium_bound(eps: float, kappa: float = DEFAULT_KAPPA, mu: float = DEFAULT_MU) -> float:
    """PoA bound for eps-Bayes-Nash equilibria: 1/mu + (1 - eps)^{-1} / ((kappa - 1) mu)."""
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"eps must lie in [0, 1), got {eps}")
    return 1.0 / mu + 1.0 / ((1.0 - eps) * (kappa - 1.0) * mu)


@dataclass(frozen=True)
class Constant:
    """A computed constant next to the value quoted for it.

    ``truncated`` marks quoted values that cut digits instead of rounding;
    those are compared after truncating to the same number of decimals.
    """

    name: str
    value: float
    quoted: float
    truncated: bool = False

    @property
    def diff(self) -> float:
        if not self.truncated:
            return abs(self.value - self.quoted)
        digits = len(repr(self.quoted).split(".")[1])
        scale = 10.0**digits
        return abs(math.floor(self.value * scale + 1e-9) / scale - self.quoted)


def theoretical_constants() -> list[Constant]:
    root = solve_lambda_root()
    n3_lam, n3_val, _ = golden_max(
        lambda l: (l * l + l + 2.0 - 2.0 * math.sqrt(l**3 + 1.0)) / l, 1e-9, 1.0, xtol=1e-12
    )
    kappa, mu = DEFAULT_KAPPA, DEFAULT_MU
    return [
        Constant("semi-smooth Bayes PoA 2/(1-1/e)", 2.0 / E_FACTOR, 3.164),
        Constant("half-deviation Bayes PoA (mu+1)/lambda at (1/2, 1)", (1.0 + 1.0) / 0.5, 4.0),
        Constant("bounded-function Bayes PoA kappa/((kappa-1)mu)", kappa / ((kappa - 1.0) * mu), 2.9276),
        Constant("Bayes PoA headline", kappa / ((kappa - 1.0) * mu), 2.927, truncated=True),
        Constant("full-information CCE 1/lambda", 1.0 / root, 2.3102),
        Constant("full-information CCE headline", 1.0 / root, 2.310),
        Constant("pure NE upper bound r", R_BOUND, 1.28216),
        Constant("pure NE headline", R_BOUND, 1.282),
        Constant("two-player PoA", 1.25, 1.25),
        Constant("three-player PoA 1+2 zeta", 1.0 + 2.0 * ZETA, 1.259134),
        Constant("three-player closed-form maximum", n3_val, 1.259134),
        Constant("eps-BNE first term 1/mu", 1.0 / mu, 1.2553),
        Constant("eps-BNE second term 1/((kappa-1)mu)", 1.0 / ((kappa - 1.0) * mu), 1.6722),
        Constant("eps-BNE bound at eps=0", approx_equilibrium_bound(0.0), 2.9275),
    ]


def verify_constants(tolerance: float = 5e-4) -> CertificateReport:
    report = CertificateReport("theoretical constants", [], 0, tolerance)
    for c in theoretical_constants():
        report.checks.append(Check(f"{c.name} = {c.value:.6f} (quoted {c.quoted})", tolerance - c.diff, c.diff <= tolerance))
        report.values[c.name] = c.value
    return report


def verify_counterexample(lam: float = E_FACTOR, mu: float = 1.0) -> CertificateReport:
    report = CertificateReport("non-smoothness witness", [], 0, 0.0)
    w = smoothness_counterexample(lam, mu)
    report.checks.append(Check(f"strict violation at (lambda, mu) = ({lam:.6g}, {mu:.6g})", w.violation, w.violation > 0))
    report.values.update({"x": w.instance.alphas[1], "violation": w.violation})
    return report
