"""Method pipelines: QUBO, XY, IF and IF+XY compilations of a constrained problem.

=======  ==============  ================  ====================
method   one-hot groups  inequalities      tensor entries
=======  ==============  ================  ====================
qubo     quadratic       slack + quadratic ``2**(N + M)``
xy       qudit (XY)      slack + quadratic ``2**(K + M) prod d``
if       quadratic       step penalty      ``2**N``
ifxy     qudit (XY)      step penalty      ``2**K prod d``
=======  ==============  ================  ====================
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from math import prod
from typing import Sequence

import numpy as np

from . import bitcost
from .bitcost import Layout, Site, poly_add, poly_from_linear, poly_scale, poly_square
from .problem import ConstrainedProblem, LinearFunction, bounds, validate
from .sim import DEFAULT_MEM_CAP, MemoryCapExceeded

__all__ = [
    "METHODS",
    "PipelineConfig",
    "SlackEncoding",
    "CompiledModel",
    "InfeasibleHeuristic",
    "normalize_method",
    "slack_encoding",
    "slack_values",
    "greedy_feasible",
    "relaxed_minimum",
    "compute_rho",
    "exact_optimum",
    "compile",
    "layout_for",
]

logger = logging.getLogger(__name__)

METHODS = ("qubo", "xy", "if", "ifxy")
_ALIASES = {"if+xy": "ifxy", "if_xy": "ifxy", "ifxy": "ifxy", "qubo": "qubo", "xy": "xy", "if": "if"}
RHO_MIN = 1.0


class InfeasibleHeuristic(RuntimeError):
    pass


def normalize_method(method: str) -> str:
    try:
        return _ALIASES[method.lower()]
    except KeyError:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}") from None


@dataclass(frozen=True)
class PipelineConfig:
    """Method selection and penalty magnitudes.

    ``eta=None`` selects the benchmark policy: ``|f(x*)|`` from an exhaustive
    scan. ``qubo_penalty=None`` reuses ``eta`` when it is known and ``rho``
    otherwise.
    """

    method: str = "ifxy"
    eta: float | None = None
    rho: float | None = None
    qubo_penalty: float | None = None
    rho_min: float = RHO_MIN
    mem_cap: int = DEFAULT_MEM_CAP

    def __post_init__(self):
        object.__setattr__(self, "method", normalize_method(self.method))
        if self.eta is not None and self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.rho is not None and self.rho <= 0:
            raise ValueError("rho must be positive")


@dataclass(frozen=True)
class SlackEncoding:
    """Binary slack spanning ``[0, g_plus]``: weights ``1, 2, ..., 2**(M-2), a``."""

    g_plus: int
    n_bits: int
    last_coefficient: int
    first_var: int = 0

    @property
    def coefficients(self) -> tuple[int, ...]:
        if self.n_bits == 0:
            return ()
        return tuple(2**l for l in range(self.n_bits - 1)) + (self.last_coefficient,)

    @property
    def variables(self) -> tuple[int, ...]:
        return tuple(range(self.first_var, self.first_var + self.n_bits))

    def poly(self) -> dict:
        return {(v,): c for v, c in zip(self.variables, self.coefficients)}


def slack_encoding(g_plus: int, first_var: int = 0) -> SlackEncoding:
    # bit_length rather than ceil(log2): powers of two would otherwise leave gaps
    g_plus = int(g_plus)
    if g_plus <= 0:
        return SlackEncoding(g_plus, 0, 0, first_var)
    m = g_plus.bit_length()
    return SlackEncoding(g_plus, m, g_plus - 2 ** (m - 1) + 1, first_var)


def slack_values(enc: SlackEncoding) -> set[int]:
    """All integers reachable by the slack register."""
    values = {0}
    for c in enc.coefficients:
        values |= {v + c for v in values}
    return values


def greedy_feasible(problem: ConstrainedProblem, max_nodes: int = 200_000) -> np.ndarray:
    """Depth-first search over groups then free variables, cheapest option first.

    Branches are pruned when some inequality cannot reach zero even with the
    most favourable choice for every undecided group or variable.
    """
    problem = problem.normalized()
    c_obj = problem.objective.coefficients
    units: list[tuple[tuple[int, ...], list[tuple[int, ...]]]] = []
    for g in problem.one_hot_groups:
        opts = sorted(((v,) for v in g), key=lambda o: (c_obj.get(o[0], 0), o[0]))
        units.append((g, opts))
    for v in problem.free_vars:
        opts = [(), (v,)] if c_obj.get(v, 0) >= 0 else [(v,), ()]
        units.append(((v,), opts))

    ineqs = problem.inequalities
    n_ineq = len(ineqs)

    def contrib(option):
        return np.array([sum(g.coefficients.get(v, 0) for v in option) for g in ineqs], dtype=float)

    unit_contribs = [[contrib(o) for o in opts] for _, opts in units]
    unit_max = [np.max(np.stack(cs), axis=0) if n_ineq else np.zeros(0) for cs in unit_contribs]
    suffix = [np.zeros(n_ineq)]
    for um in reversed(unit_max):
        suffix.append(suffix[-1] + um)
    suffix = suffix[::-1]

    base = np.array([g.constant for g in ineqs], dtype=float)
    chosen: list[int] = [0] * len(units)
    nodes = 0

    def search(k: int, partial: np.ndarray) -> bool:
        nonlocal nodes
        nodes += 1
        if nodes > max_nodes:
            raise InfeasibleHeuristic("search budget exhausted")
        if np.any(partial + suffix[k] < 0):
            return False
        if k == len(units):
            return True
        for i, cvec in enumerate(unit_contribs[k]):
            chosen[k] = i
            if search(k + 1, partial + cvec):
                return True
        return False

    if not search(0, base):
        raise InfeasibleHeuristic("instance infeasible for heuristic")
    x = np.zeros(problem.n_vars, dtype=np.int8)
    for (_, opts), i in zip(units, chosen):
        for v in opts[i]:
            x[v] = 1
    return problem.expand(x)


def relaxed_minimum(problem: ConstrainedProblem) -> float:
    """Minimum of the objective over the one-hot simplices and the unit box."""
    problem = problem.normalized()
    c = problem.objective.coefficients
    total = problem.objective.constant
    for g in problem.one_hot_groups:
        total += min(c.get(v, 0) for v in g)
    for v in problem.free_vars:
        total += min(0, c.get(v, 0))
    return total


def compute_rho(problem: ConstrainedProblem, rho_min: float = RHO_MIN) -> float:
    """Step-penalty magnitude: a heuristic feasible value minus the relaxed bound."""
    problem = problem.normalized()
    x1 = greedy_feasible(problem)
    rho = problem.objective_value(x1) - relaxed_minimum(problem)
    return float(max(rho, rho_min))


def layout_for(problem: ConstrainedProblem, method: str, slack: Sequence[SlackEncoding] = ()) -> Layout:
    method = normalize_method(method)
    problem = problem.normalized()
    if method in ("xy", "ifxy"):
        sites = [Site(2, (v,)) for v in problem.free_vars]
    else:
        sites = [Site(2, (v,)) for v in problem.active_vars]
    if method in ("xy", "qubo"):
        sites += [Site(2, (v,), slack=True) for enc in slack for v in enc.variables]
    if method in ("xy", "ifxy"):
        sites += [Site(len(g), tuple(g)) for g in problem.one_hot_groups]
    return Layout(tuple(sites))


def exact_optimum(problem: ConstrainedProblem, mem_cap: int = DEFAULT_MEM_CAP) -> tuple[float, list[np.ndarray]]:
    """Optimal value and all optimal assignments by exhaustive scan of the one-hot space."""
    problem = problem.normalized()
    layout = layout_for(problem, "ifxy")
    if layout.size > mem_cap:
        raise MemoryCapExceeded(f"exhaustive scan needs {layout.size} entries")
    keys = bitcost.packed_keys(layout)
    f = bitcost.tensor_of(problem.objective, layout, keys)
    ok = bitcost.violation_count(problem, layout, keys) == 0
    if not ok.any():
        raise InfeasibleHeuristic("problem has no feasible assignment")
    best = float(f[ok].min())
    tol = 1e-9 * max(1.0, abs(best))
    idx = np.argwhere(ok & (np.abs(f - best) <= tol))
    return best, [problem.expand(layout.decode(i, problem.n_vars)) for i in idx]


@dataclass(frozen=True)
class CompiledModel:
    """A problem compiled for one method, with lazily brute-forced tensors."""

    problem: ConstrainedProblem
    method: str
    layout: Layout
    effective_cost: dict
    if_constraints: tuple[LinearFunction, ...]
    slack: tuple[SlackEncoding, ...]
    rho: float | None
    eta: float
    qubo_penalty: float
    optimum: float | None = None
    mem_cap: int = DEFAULT_MEM_CAP
    meta: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.layout.shape

    @property
    def n_entries(self) -> int:
        return self.layout.size

    @property
    def search_space(self) -> int:
        """Number of candidate solutions once slack legs are discarded."""
        return prod(s.dim for s in self.layout.sites if not s.slack)

    @property
    def n_slack(self) -> int:
        return sum(enc.n_bits for enc in self.slack)

    @property
    def compute_shape(self) -> tuple[int, ...]:
        return tuple(1 if s.slack else s.dim for s in self.layout.sites)

    @cached_property
    def _compute_keys(self) -> np.ndarray:
        return bitcost.packed_keys(self.layout, self.compute_shape)

    @cached_property
    def phase_cost(self) -> np.ndarray:
        """Effective cost plus step penalties, over the full tensor shape."""
        keys = bitcost.packed_keys(self.layout)
        cost = bitcost.tensor_of(self.effective_cost, self.layout, keys)
        if self.if_constraints:
            gs = [bitcost.tensor_of(g, self.layout, self._compute_keys) for g in self.if_constraints]
            cost = bitcost.apply_step_penalties(cost, gs, self.rho)
        return cost

    @cached_property
    def phase_scale(self) -> float:
        """Largest objective magnitude on the compute space; unit for phase angles."""
        m = float(np.abs(self.objective_tensor).max())
        return m if m > 0 else 1.0

    @cached_property
    def objective_tensor(self) -> np.ndarray:
        return bitcost.tensor_of(self.problem.objective, self.layout, self._compute_keys)

    @cached_property
    def violation_tensor(self) -> np.ndarray:
        return bitcost.violation_count(self.problem, self.layout, self._compute_keys)

    @property
    def feasible_tensor(self) -> np.ndarray:
        return self.violation_tensor == 0

    @property
    def eval_cost(self) -> np.ndarray:
        """Evaluation cost ``F``; carries length-1 slack axes for broadcasting."""
        return self.objective_tensor + self.eta * self.violation_tensor

    def summary(self) -> dict:
        return {
            "method": self.method,
            "n_vars": self.problem.n_vars,
            "n_free": self.problem.n_free,
            "group_sizes": list(self.problem.group_sizes),
            "n_inequalities": len(self.problem.inequalities),
            "n_slack": self.n_slack,
            "shape": list(self.shape),
            "n_entries": self.n_entries,
            "search_space": self.search_space,
            "key_bits": self.layout.total_bits,
            "rho": self.rho,
            "eta": self.eta,
            "qubo_penalty": self.qubo_penalty,
            "optimum": self.optimum,
        }


def compile(problem: ConstrainedProblem, config: PipelineConfig | None = None, optimum: float | None = None) -> CompiledModel:
    """Compile ``problem`` for ``config.method``.

    Raises :class:`MemoryCapExceeded` before any tensor is allocated when the
    layout exceeds ``config.mem_cap`` entries.
    """
    config = config or PipelineConfig()
    problems = validate(problem.normalized())
    if problems:
        raise ValueError("invalid problem: " + "; ".join(problems))
    problem = problem.normalized()
    method = config.method

    slack: list[SlackEncoding] = []
    if method in ("xy", "qubo"):
        nxt = problem.n_vars
        for g in problem.inequalities:
            enc = slack_encoding(bounds(g).g_plus, nxt)
            slack.append(enc)
            nxt += enc.n_bits
    layout = layout_for(problem, method, slack)
    if layout.size > config.mem_cap:
        raise MemoryCapExceeded(f"{method}: {layout.size} entries exceed cap {config.mem_cap}")

    if optimum is None and config.eta is None:
        optimum, _ = exact_optimum(problem, config.mem_cap)
    eta = config.eta if config.eta is not None else (abs(optimum) or 1.0)

    rho = config.rho
    if rho is None and method in ("if", "ifxy"):
        rho = compute_rho(problem, config.rho_min)
    qubo_penalty = config.qubo_penalty if config.qubo_penalty is not None else eta

    cost = poly_from_linear(problem.objective)
    if method in ("if", "qubo"):
        for g in problem.one_hot_groups:
            lin = {(): 1.0, **{(v,): -1.0 for v in g}}
            cost = poly_add(cost, poly_scale(poly_square(lin), qubo_penalty))
    if method in ("xy", "qubo"):
        for g, enc in zip(problem.inequalities, slack):
            diff = poly_add(poly_from_linear(g), poly_scale(enc.poly(), -1))
            cost = poly_add(cost, poly_scale(poly_square(diff), qubo_penalty))
    if_constraints = problem.inequalities if method in ("if", "ifxy") else ()

    model = CompiledModel(
        problem=problem,
        method=method,
        layout=layout,
        effective_cost=cost,
        if_constraints=tuple(if_constraints),
        slack=tuple(slack),
        rho=rho,
        eta=float(eta),
        qubo_penalty=float(qubo_penalty),
        optimum=optimum,
        mem_cap=config.mem_cap,
    )
    logger.debug("compiled %s: %s", method, model.summary())
    return model
