"""Canonical instances, random generators and JSON (de)serialization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .auction import AuctionInstance

PROB_TOL = 1e-12


class InstanceFormatError(ValueError):
    """A document that cannot be parsed or violates an instance invariant."""


@dataclass(frozen=True)
class SupportPoint:
    prob: float
    valuations: tuple[float, ...]
    gammas: tuple[float, ...]


@dataclass(frozen=True)
class JointDistribution:
    """Finite-support distribution over (valuations, gammas) with shared CTRs."""

    alphas: tuple[float, ...]
    support: tuple[SupportPoint, ...]

    def __init__(self, alphas: Sequence[float], support):
        alphas = tuple(float(a) for a in alphas)
        points = []
        for item in support:
            if isinstance(item, SupportPoint):
                points.append(item)
                continue
            prob, vals, *rest = item
            gammas = rest[0] if rest and rest[0] is not None else [1.0] * len(vals)
            points.append(SupportPoint(float(prob), tuple(float(v) for v in vals), tuple(float(g) for g in gammas)))
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "support", tuple(points))
        self._validate()

    def _validate(self) -> None:
        if not self.support:
            raise ValueError("distribution support is empty")
        probs = [p.prob for p in self.support]
        if any(not p > 0 for p in probs):
            raise ValueError("support probabilities must be strictly positive")
        if abs(math.fsum(probs) - 1.0) > PROB_TOL:
            raise ValueError(f"support probabilities must sum to 1 within {PROB_TOL}, got {math.fsum(probs)!r}")
        for k in range(len(self.support)):
            self.instance(k)

    @property
    def n(self) -> int:
        return len(self.alphas)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p.prob for p in self.support])

    def instance(self, k: int) -> AuctionInstance:
        p = self.support[k]
        return AuctionInstance(self.alphas, p.valuations, p.gammas)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Indices of support points drawn i.i.d."""
        probs = self.probabilities
        return rng.choice(len(probs), size=size, p=probs / probs.sum())

    def types(self, player: int) -> tuple[float, ...]:
        """Distinct valuations of ``player`` across the support, ascending."""
        return tuple(sorted({p.valuations[player] for p in self.support}))


# -- canonical instances ------------------------------------------------------

_CANONICAL = {
    "poa2": ((1.0, 0.5), (1.0, 0.5), (0.0, 0.5)),
    "poa3": ((1.0, 0.55071, 0.4704), (1.0, 0.5296, 0.14583), (0.0, 0.5296, 0.14583)),
}


def paper_instance(name: str) -> tuple[AuctionInstance, tuple[float, ...]]:
    """The lower-bound instances for two and three players with their equilibrium bids."""
    if name not in _CANONICAL:
        raise ValueError(f"unknown canonical instance {name!r}; choose from {sorted(_CANONICAL)}")
    alphas, vals, bids = _CANONICAL[name]
    return AuctionInstance(alphas, vals), bids


# -- random generators --------------------------------------------------------


def _parse_model(model: str) -> tuple[str, float | None]:
    if model.startswith("geometric-decay"):
        inner = model[len("geometric-decay") :]
        if inner:
            if not (inner.startswith("(") and inner.endswith(")")):
                raise ValueError(f"malformed model {model!r}; expected geometric-decay(delta)")
            try:
                delta = float(inner[1:-1])
            except ValueError as exc:
                raise ValueError(f"malformed decay parameter in {model!r}") from exc
        else:
            delta = 0.5
        if not 0.0 < delta <= 1.0:
            raise ValueError(f"geometric decay must lie in (0, 1], got {delta}")
        return "geometric-decay", delta
    if model in ("uniform-sorted", "paper-like"):
        return model, None
    raise ValueError(f"unknown model {model!r}; choose uniform-sorted, geometric-decay(delta) or paper-like")


def _draw(rng: np.random.Generator, n: int, model: str) -> np.ndarray:
    kind, delta = _parse_model(model)
    if kind == "uniform-sorted":
        return np.sort(rng.uniform(0.0, 1.0, n))[::-1]
    if kind == "geometric-decay":
        return delta ** np.arange(n)
    # leading 1 followed by successive ratios in [0, 1], as in the worst-case analysis
    return np.concatenate(([1.0], np.cumprod(rng.uniform(0.0, 1.0, n - 1))))


def random_instance(
    seed: int,
    n: int,
    alpha_model: str = "uniform-sorted",
    value_model: str = "uniform-sorted",
    random_gammas: bool = False,
) -> AuctionInstance:
    """Random instance with CTRs and valuations drawn from the named models."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    alphas = _draw(rng, n, alpha_model)
    vals = _draw(rng, n, value_model)
    gammas = np.exp(rng.uniform(math.log(0.5), math.log(2.0), n)) if random_gammas else np.ones(n)
    return AuctionInstance(alphas, vals, gammas)


# -- JSON serialization -------------------------------------------------------


def _read_json(path: str | Path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise InstanceFormatError(f"{path}: top level must be a JSON object")
    return doc


def _field(doc: dict, name: str, where: str):
    if name not in doc:
        raise InstanceFormatError(f"{where}: missing field {name!r}")
    return doc[name]


def _numbers(value, name: str, where: str) -> list[float]:
    if not isinstance(value, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
        raise InstanceFormatError(f"{where}: field {name!r} must be a list of numbers")
    return [float(x) for x in value]


def _check_n(doc: dict, n: int, where: str) -> None:
    declared = _field(doc, "n", where)
    if declared != n:
        raise InstanceFormatError(f"{where}: field 'n' is {declared} but 'alphas' has {n} entries")


def instance_to_dict(instance: AuctionInstance) -> dict:
    return {
        "n": instance.n,
        "alphas": list(instance.alphas),
        "valuations": list(instance.valuations),
        "gammas": list(instance.gammas),
    }


def instance_from_dict(doc: dict, where: str = "instance") -> AuctionInstance:
    alphas = _numbers(_field(doc, "alphas", where), "alphas", where)
    vals = _numbers(_field(doc, "valuations", where), "valuations", where)
    gammas = _numbers(doc["gammas"], "gammas", where) if "gammas" in doc else None
    _check_n(doc, len(alphas), where)
    try:
        return AuctionInstance(alphas, vals, gammas)
    except ValueError as exc:
        raise InstanceFormatError(f"{where}: {exc}") from exc


def save_instance(instance: AuctionInstance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(instance), indent=2) + "\n", encoding="utf-8")


def load_instance(path: str | Path) -> AuctionInstance:
    return instance_from_dict(_read_json(path), str(path))


def distribution_to_dict(dist: JointDistribution) -> dict:
    return {
        "n": dist.n,
        "alphas": list(dist.alphas),
        "support": [
            {"prob": p.prob, "valuations": list(p.valuations), "gammas": list(p.gammas)} for p in dist.support
        ],
    }


def distribution_from_dict(doc: dict, where: str = "distribution") -> JointDistribution:
    alphas = _numbers(_field(doc, "alphas", where), "alphas", where)
    _check_n(doc, len(alphas), where)
    support = _field(doc, "support", where)
    if not isinstance(support, list):
        raise InstanceFormatError(f"{where}: field 'support' must be a list")
    points = []
    for k, item in enumerate(support):
        at = f"{where}: support[{k}]"
        if not isinstance(item, dict):
            raise InstanceFormatError(f"{at} must be an object")
        prob = _field(item, "prob", at)
        if not isinstance(prob, (int, float)) or isinstance(prob, bool):
            raise InstanceFormatError(f"{at}: field 'prob' must be a number")
        vals = _numbers(_field(item, "valuations", at), "valuations", at)
        gammas = _numbers(item["gammas"], "gammas", at) if "gammas" in item else None
        points.append((float(prob), vals, gammas))
    try:
        return JointDistribution(alphas, points)
    except ValueError as exc:
        raise InstanceFormatError(f"{where}: {exc}") from exc


def save_distribution(dist: JointDistribution, path: str | Path) -> None:
    Path(path).write_text(json.dumps(distribution_to_dict(dist), indent=2) + "\n", encoding="utf-8")


def load_distribution(path: str | Path) -> JointDistribution:
    return distribution_from_dict(_read_json(path), str(path))
