"""Multi-knapsack and prosumer instance builders, generators and file I/O."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .pipeline import InfeasibleHeuristic, greedy_feasible
from .problem import ConstrainedProblem, LinearFunction, make_problem

__all__ = [
    "MksSpec",
    "PpSpec",
    "PricePattern",
    "PRICE_KINDS",
    "build_mks",
    "build_pp",
    "generate_prices",
    "random_mks",
    "random_pp",
    "pp_binding",
    "GenerationError",
    "instance_to_dict",
    "save_instance",
    "load_instance",
]

PRICE_KINDS = ("increasing", "decreasing", "up-quadratic", "down-quadratic")
MAX_ATTEMPTS = 100


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MksSpec:
    values: tuple[int, ...]
    weights: tuple[tuple[int, ...], ...]  # weights[item][knapsack]
    capacities: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        object.__setattr__(self, "weights", tuple(tuple(int(w) for w in row) for row in self.weights))
        object.__setattr__(self, "capacities", tuple(int(c) for c in self.capacities))
        if len(self.weights) != len(self.values):
            raise ValueError("need one weight row per item")
        if any(len(row) != len(self.capacities) for row in self.weights):
            raise ValueError("weight rows must have one entry per knapsack")
        if min((*self.values, *self.capacities, *(w for r in self.weights for w in r)), default=1) <= 0:
            raise ValueError("values, weights and capacities must be positive")


@dataclass(frozen=True)
class PpSpec:
    """Loads with profiles ``loads[i]`` (length ``tau_i``) over ``horizon`` steps."""

    horizon: int
    loads: tuple[tuple[int, ...], ...]
    rates: tuple[float, ...]
    capacity: int

    def __post_init__(self):
        object.__setattr__(self, "loads", tuple(tuple(int(v) for v in l) for l in self.loads))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if len(self.rates) != self.horizon:
            raise ValueError(f"need {self.horizon} rates, got {len(self.rates)}")
        for i, l in enumerate(self.loads):
            if len(l) > self.horizon:
                raise ValueError(f"load {i} has tau={len(l)} > horizon {self.horizon}")
            if not l or min(l) <= 0:
                raise ValueError(f"load {i} needs a non-empty positive profile")
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")

    @property
    def taus(self) -> tuple[int, ...]:
        return tuple(len(l) for l in self.loads)

    @property
    def group_sizes(self) -> tuple[int, ...]:
        return tuple(self.horizon - t + 1 for t in self.taus)


@dataclass(frozen=True)
class PricePattern:
    kind: str
    noise: float | None = None  # absolute amplitude; None -> 10% of the mean base rate
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PRICE_KINDS:
            raise ValueError(f"unknown price pattern {self.kind!r}, expected one of {PRICE_KINDS}")


def build_mks(spec: MksSpec, name: str = "") -> ConstrainedProblem:
    """One-hot form with a dummy knapsack: item ``i`` uses vars ``i*(m+1) .. i*(m+1)+m``."""
    n, m = len(spec.values), len(spec.capacities)

    def var(i, j):
        return i * (m + 1) + j

    objective = LinearFunction(0, {var(i, j): spec.values[i] for i in range(n) for j in range(m)})
    groups = [tuple(var(i, j) for j in range(m + 1)) for i in range(n)]
    ineqs = [
        LinearFunction(spec.capacities[j], {var(i, j): -spec.weights[i][j] for i in range(n)})
        for j in range(m)
    ]
    return make_problem(n * (m + 1), objective, groups, ineqs, sense="maximize", name=name).normalized()


def _pp_index(spec: PpSpec) -> list[list[int]]:
    out, nxt = [], 0
    for d in spec.group_sizes:
        out.append(list(range(nxt, nxt + d)))
        nxt += d
    return out


def build_pp(spec: PpSpec, name: str = "") -> ConstrainedProblem:
    """Start-time scheduling: ``x[i, s] = 1`` starts load ``i`` at step ``s``."""
    m = spec.horizon
    index = _pp_index(spec)
    objective: dict[int, float] = {}
    for i, prof in enumerate(spec.loads):
        for s, v in enumerate(index[i]):
            objective[v] = sum(spec.rates[s + k] * prof[k] for k in range(len(prof)))
    ineqs = []
    for t in range(m):
        coeffs = {}
        for i, prof in enumerate(spec.loads):
            tau = len(prof)
            for s in range(max(0, t - tau + 1), min(t, m - tau) + 1):
                coeffs[index[i][s]] = -prof[t - s]
        ineqs.append(LinearFunction(spec.capacity, coeffs))
    n_vars = sum(spec.group_sizes)
    return make_problem(n_vars, LinearFunction(0, objective), [tuple(g) for g in index], ineqs, name=name).normalized()


def pp_binding(spec: PpSpec) -> list[bool]:
    """Whether each step's capacity can be exceeded by some start-time choice.

    Loads choose their start independently, so the worst case at step ``t``
    is the sum over loads of their largest possible draw at ``t``.
    """
    m = spec.horizon
    out = []
    for t in range(m):
        worst = 0
        for prof in spec.loads:
            tau = len(prof)
            draws = [prof[t - s] for s in range(max(0, t - tau + 1), min(t, m - tau) + 1)]
            worst += max(draws, default=0)
        out.append(worst > spec.capacity)
    return out


def generate_prices(pattern: PricePattern, m: int) -> np.ndarray:
    """Noisy price curve of length ``m``; deterministic for a fixed seed."""
    if m < 1:
        raise ValueError("m must be positive")
    t = np.arange(m, dtype=float)
    if pattern.kind == "increasing":
        base = 1 + t
    elif pattern.kind == "decreasing":
        base = m - t
    elif pattern.kind == "up-quadratic":
        base = 1 + t**2 / m
    else:
        base = 1 + (m**2 - t**2) / m
    amp = 0.1 * base.mean() if pattern.noise is None else pattern.noise
    rng = np.random.default_rng(pattern.seed)
    return base + rng.uniform(-amp, amp, size=m) if amp > 0 else base


def random_mks(n: int, m: int, seed: int = 0, max_value: int = 10, max_weight: int = 10) -> MksSpec:
    rng = np.random.default_rng(seed)
    values = rng.integers(1, max_value + 1, size=n)
    weights = rng.integers(1, max_weight + 1, size=(n, m))
    capacities = np.maximum(1, weights.sum(axis=0) // 2)
    return MksSpec(tuple(values), tuple(map(tuple, weights)), tuple(capacities))


def random_pp(
    taus: Sequence[int],
    horizon: int,
    pattern: PricePattern,
    seed: int = 0,
    max_draw: int = 2,
    capacity: int | None = None,
) -> PpSpec:
    """Random integer load profiles, regenerated until every step is binding and feasible."""
    rng = np.random.default_rng(seed)
    rates = tuple(generate_prices(pattern, horizon))
    for _ in range(MAX_ATTEMPTS):
        loads = tuple(tuple(int(v) for v in rng.integers(1, max_draw + 1, size=tau)) for tau in taus)
        cap = capacity if capacity is not None else int(rng.integers(max_draw, max_draw * len(taus) + 1))
        spec = PpSpec(horizon, loads, rates, cap)
        if not all(pp_binding(spec)):
            continue
        try:
            greedy_feasible(build_pp(spec))
        except InfeasibleHeuristic:
            continue
        return spec
    raise GenerationError(f"no binding, feasible instance after {MAX_ATTEMPTS} attempts")


def instance_to_dict(problem: ConstrainedProblem, family: str, spec, seed=None) -> dict:
    data = problem.to_dict()
    spec_dict = asdict(spec) if hasattr(spec, "__dataclass_fields__") else dict(spec)
    data["meta"] = {"family": family, "name": problem.name, "spec": _plain(spec_dict), "seed": seed}
    return data


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def save_instance(path, problem: ConstrainedProblem, family: str, spec, seed=None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(instance_to_dict(problem, family, spec, seed), indent=1, sort_keys=True) + "\n")
    return path


def load_instance(path) -> ConstrainedProblem:
    path = Path(path)
    data = json.loads(path.read_text())
    name = data.get("meta", {}).get("name") or path.stem
    return ConstrainedProblem.from_dict(data, name=name)
