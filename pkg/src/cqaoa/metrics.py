"""Solution quality, circuit layer accounting and time-to-solution."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .problem import ConstrainedProblem, bounds

__all__ = [
    "LayerCounts",
    "ScalingFit",
    "raar",
    "random_average",
    "value_distribution",
    "greedy_edge_coloring",
    "interaction_edges",
    "qpe_register_size",
    "circuit_layers",
    "tts",
    "tts_star",
    "scaling_fit",
]


def raar(expectation: float, random_avg: float, optimum: float) -> float:
    """Random-adjusted approximation ratio: 0 for random sampling, 1 when always optimal."""
    denom = random_avg - optimum
    if abs(denom) <= 1e-12 * max(1.0, abs(random_avg)):
        raise ZeroDivisionError("random average equals the optimum")
    return (random_avg - expectation) / denom


def value_distribution(g) -> tuple[int, np.ndarray]:
    """Exact distribution of an integer linear function under uniform random bits.

    Returns ``(offset, probs)`` with ``probs[k] = P(g(x) == offset + k)``.
    """
    lo, hi = bounds(g)
    lo, hi = int(lo), int(hi)
    probs = np.zeros(hi - lo + 1)
    probs[0] = 1.0
    # start from the minimum; each variable raises g by |c| with probability 1/2
    for c in g.coefficients.values():
        step = abs(int(c))
        shifted = np.zeros_like(probs)
        shifted[step:] = probs[: len(probs) - step]
        probs = 0.5 * (probs + shifted)
    return lo, probs


def random_average(problem: ConstrainedProblem, eta: float) -> float:
    """Mean evaluation cost over uniformly random assignments of the active variables.

    The objective term follows from linearity; each inequality contributes
    ``eta * P(g < 0)`` from its exact value distribution and each one-hot
    group ``eta * (1 - d / 2**d)``.
    """
    problem = problem.normalized()
    f = problem.objective
    mean = f.constant + 0.5 * sum(f.coefficients.values())
    for g in problem.inequalities:
        lo, probs = value_distribution(g)
        neg = max(0, min(len(probs), -lo))
        mean += eta * probs[:neg].sum()
    for grp in problem.one_hot_groups:
        d = len(grp)
        mean += eta * (1 - d / 2**d)
    return float(mean)


def greedy_edge_coloring(edges: Iterable[tuple[int, int]]) -> tuple[int, dict]:
    """Colour edges in lexicographic order with the smallest free colour.

    Returns the number of colours and the colour of every edge.
    """
    edges = sorted({tuple(sorted(e)) for e in edges})
    used: dict = {}
    colors = {}
    for a, b in edges:
        if a == b:
            raise ValueError("self loops are not allowed")
        taken = used.get(a, set()) | used.get(b, set())
        c = 0
        while c in taken:
            c += 1
        colors[(a, b)] = c
        used.setdefault(a, set()).add(c)
        used.setdefault(b, set()).add(c)
    return (max(colors.values()) + 1 if colors else 0), colors


def interaction_edges(poly: dict, same_site: Sequence[Sequence[int]] = ()) -> tuple[set, bool]:
    """Two-body interaction edges of a polynomial and whether it has any non-constant term.

    Pairs inside one entry of ``same_site`` vanish on the feasible subspace
    and are skipped.
    """
    owner = {v: i for i, grp in enumerate(same_site) for v in grp}
    edges, nonconst = set(), False
    for mono in poly:
        if not mono:
            continue
        if any(owner.get(a, -1) == owner.get(b, -2) for a, b in combinations(mono, 2)):
            continue
        nonconst = True
        edges.update(combinations(sorted(mono), 2))
    return edges, nonconst


def qpe_register_size(g_minus: float, g_plus: float) -> int:
    span = max(abs(g_minus), abs(g_plus), 1)
    return 1 + math.ceil(math.log2(span))


@dataclass(frozen=True)
class LayerCounts:
    l_init: int
    l_cost: int
    l_mixer: int
    l_if: int = 0
    l_f: int = 0

    def total(self, p: int) -> int:
        return self.l_init + p * (self.l_cost + self.l_mixer)


def circuit_layers(model) -> LayerCounts:
    """Layer counts for a compiled model under all-to-all connectivity."""
    layout = model.layout
    qubits = [s for s in layout.sites if not s.is_qudit]
    qudits = [s for s in layout.sites if s.is_qudit]
    l_init = l_mixer = 0
    if qubits:
        l_init = l_mixer = 1
    if qudits:
        d_max = max(s.dim for s in qudits)
        l_init = max(l_init, 2 * math.ceil(math.log2(d_max)))
        l_mixer = max(l_mixer, 6 if any(s.dim % 2 for s in qudits) else 4)

    edges, nonconst = interaction_edges(model.effective_cost, [s.variables for s in qudits])
    l_f = greedy_edge_coloring(edges)[0] if edges else int(nonconst)

    l_if = 0
    if model.if_constraints:
        qpe_edges, m_max, nxt = [], 0, -1
        for g in model.if_constraints:
            m = qpe_register_size(*bounds(g))
            m_max = max(m_max, m)
            for _ in range(m):
                # negative ids keep QPE qubits apart from problem variables
                qpe_edges += [(nxt, v) for v in g.support]
                nxt -= 1
        l_phase = greedy_edge_coloring(qpe_edges)[0]
        l_if = 2 * l_phase + 2 * (2 * m_max - 1) + 1
    return LayerCounts(l_init, l_f + l_if, l_mixer, l_if, l_f)


def tts(p_opt: float, layers: int) -> float:
    """Layers times shots for a 99% chance of one optimal sample; ``inf`` if unreachable."""
    if p_opt <= 0:
        return math.inf
    if p_opt >= 1:
        return float(layers)
    shots = math.log(0.01) / math.log1p(-p_opt)
    return float(layers * math.ceil(shots - 1e-9))


def tts_star(values: Iterable[float]) -> float | None:
    finite = [v for v in values if math.isfinite(v)]
    return min(finite) if finite else None


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r2: float
    n_points: int

    @property
    def base(self) -> float:
        """Growth factor of TTS* per doubling of the search space."""
        return 2.0**self.slope

    def predict(self, search_space) -> np.ndarray:
        return 2.0 ** (self.intercept + self.slope * np.log2(search_space))


def scaling_fit(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """Least-squares line through ``(log2 S, log2 TTS*)``."""
    pts = [(s, t) for s, t in points if t is not None and math.isfinite(t)]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points for a fit, got {len(pts)}")
    x = np.log2([s for s, _ in pts])
    y = np.log2([t for _, t in pts])
    if np.any(~np.isfinite(x)) or np.any(~np.isfinite(y)):
        raise ValueError("points must be positive")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (intercept + slope * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(float(slope), float(intercept), r2, len(pts))
