"""Linear objectives with one-hot groups and integer inequality constraints.

A :class:`ConstrainedProblem` always stores its objective in minimization
form. Maximization inputs are negated on construction via :meth:`from_dict`
or the ``sense`` argument of :func:`make_problem`; the original sense is kept
for serialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

__all__ = [
    "LinearFunction",
    "ConstrainedProblem",
    "ConstraintBounds",
    "Substitution",
    "make_problem",
    "validate",
    "bounds",
    "evaluate",
    "is_feasible",
]

SENSES = ("minimize", "maximize")


class ConstraintBounds(NamedTuple):
    g_minus: float
    g_plus: float


class Substitution(NamedTuple):
    """``x[var] = offset + scale * x[source]``; ``source`` is None for constants."""

    source: int | None
    offset: int
    scale: int


@dataclass(frozen=True)
class LinearFunction:
    """``constant + sum(coefficients[i] * x[i])`` over binary variables."""

    constant: float = 0
    coefficients: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        coeffs = {int(i): c for i, c in dict(self.coefficients).items() if c != 0}
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def from_terms(cls, constant=0, terms: Iterable[Sequence] = ()) -> "LinearFunction":
        coeffs: dict[int, float] = {}
        for idx, c in terms:
            coeffs[int(idx)] = coeffs.get(int(idx), 0) + c
        return cls(constant, coeffs)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(sorted(self.coefficients))

    @property
    def is_integral(self) -> bool:
        values = [self.constant, *self.coefficients.values()]
        return all(float(v).is_integer() for v in values)

    def __call__(self, x) -> float:
        return evaluate(self, x)

    def __neg__(self) -> "LinearFunction":
        return LinearFunction(-self.constant, {i: -c for i, c in self.coefficients.items()})

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        """Evaluate on a batch of assignments with shape ``(..., N)``."""
        X = np.asarray(X)
        out = np.full(X.shape[:-1], self.constant, dtype=float)
        for i, c in self.coefficients.items():
            out = out + c * X[..., i]
        return out

    def substitute(self, subs: Mapping[int, Substitution]) -> "LinearFunction":
        constant = self.constant
        coeffs: dict[int, float] = {}
        for i, c in self.coefficients.items():
            if i in subs:
                s = subs[i]
                constant += c * s.offset
                if s.source is not None and s.scale:
                    coeffs[s.source] = coeffs.get(s.source, 0) + c * s.scale
            else:
                coeffs[i] = coeffs.get(i, 0) + c
        return LinearFunction(_as_int_if_integral(constant), {i: _as_int_if_integral(c) for i, c in coeffs.items()})

    def to_dict(self) -> dict:
        return {
            "constant": _jsonable(self.constant),
            "terms": [[i, _jsonable(self.coefficients[i])] for i in self.support],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "LinearFunction":
        return cls.from_terms(data.get("constant", 0), data.get("terms", ()))


def _as_int_if_integral(v):
    if isinstance(v, (int, np.integer)):
        return int(v)
    if float(v).is_integer():
        return int(v)
    return float(v)


def _jsonable(v):
    return _as_int_if_integral(v)


@dataclass(frozen=True)
class ConstrainedProblem:
    """Minimize ``objective`` s.t. every inequality ``g(x) >= 0`` and one-hot groups.

    ``substitutions`` and ``rewritten_groups`` are populated by
    :meth:`normalized`: groups of size two keep their first member as a free
    variable and tie the second to its complement, groups of size one fix
    their member to 1. Substituted variables no longer appear in any function.
    """

    n_vars: int
    objective: LinearFunction
    one_hot_groups: tuple[tuple[int, ...], ...] = ()
    inequalities: tuple[LinearFunction, ...] = ()
    sense: str = "minimize"
    substitutions: Mapping[int, Substitution] = field(default_factory=dict)
    rewritten_groups: tuple[tuple[int, ...], ...] = ()
    name: str = ""

    def __post_init__(self):
        if self.sense not in SENSES:
            raise ValueError(f"sense must be one of {SENSES}, got {self.sense!r}")
        object.__setattr__(self, "one_hot_groups", tuple(tuple(int(v) for v in g) for g in self.one_hot_groups))
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        object.__setattr__(self, "rewritten_groups", tuple(tuple(g) for g in self.rewritten_groups))
        object.__setattr__(self, "substitutions", dict(self.substitutions))

    @property
    def group_sizes(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.one_hot_groups)

    @cached_property
    def active_vars(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n_vars) if i not in self.substitutions)

    @cached_property
    def free_vars(self) -> tuple[int, ...]:
        grouped = {v for g in self.one_hot_groups for v in g}
        return tuple(i for i in self.active_vars if i not in grouped)

    @property
    def n_free(self) -> int:
        return len(self.free_vars)

    @property
    def is_normalized(self) -> bool:
        return all(len(g) >= 3 for g in self.one_hot_groups)

    def normalized(self) -> "ConstrainedProblem":
        """Rewrite groups with fewer than three members by substitution."""
        if self.is_normalized:
            return self
        subs = dict(self.substitutions)
        keep, rewritten = [], list(self.rewritten_groups)
        for g in self.one_hot_groups:
            if len(g) == 2:
                subs[g[1]] = Substitution(g[0], 1, -1)
                rewritten.append(g)
            elif len(g) == 1:
                subs[g[0]] = Substitution(None, 1, 0)
                rewritten.append(g)
            else:
                keep.append(g)
        return replace(
            self,
            objective=self.objective.substitute(subs),
            inequalities=tuple(g.substitute(subs) for g in self.inequalities),
            one_hot_groups=tuple(keep),
            substitutions=subs,
            rewritten_groups=tuple(rewritten),
        )

    def expand(self, x: np.ndarray) -> np.ndarray:
        """Fill substituted variables of ``x`` (shape ``(..., N)``) from their sources."""
        x = np.array(x, dtype=np.int8, copy=True)
        for var, s in self.substitutions.items():
            if s.source is None:
                x[..., var] = s.offset
            else:
                x[..., var] = s.offset + s.scale * x[..., s.source]
        return x

    def objective_value(self, x) -> float:
        return evaluate(self.objective, x)

    def to_dict(self) -> dict:
        sign = -1 if self.sense == "maximize" else 1
        obj = self.objective if sign == 1 else -self.objective
        return {
            "n_vars": self.n_vars,
            "sense": self.sense,
            "objective": obj.to_dict(),
            "one_hot_groups": [list(g) for g in (*self.one_hot_groups, *self.rewritten_groups)],
            "inequalities": [g.to_dict() for g in self.inequalities],
        }

    @classmethod
    def from_dict(cls, data: Mapping, name: str = "") -> "ConstrainedProblem":
        return make_problem(
            data["n_vars"],
            LinearFunction.from_dict(data["objective"]),
            data.get("one_hot_groups", ()),
            [LinearFunction.from_dict(g) for g in data.get("inequalities", ())],
            sense=data.get("sense", "minimize"),
            name=name,
        )


def make_problem(n_vars, objective, one_hot_groups=(), inequalities=(), sense="minimize", name="") -> ConstrainedProblem:
    """Build a problem, negating the objective for maximization."""
    if sense not in SENSES:
        raise ValueError(f"sense must be one of {SENSES}, got {sense!r}")
    if not isinstance(objective, LinearFunction):
        objective = LinearFunction(*objective) if isinstance(objective, tuple) else LinearFunction(0, objective)
    if sense == "maximize":
        objective = -objective
    return ConstrainedProblem(int(n_vars), objective, tuple(one_hot_groups), tuple(inequalities), sense, name=name)


def validate(problem: ConstrainedProblem) -> list[str]:
    """Return human readable violations of the problem format; empty means valid."""
    out = []
    n = problem.n_vars
    owner: dict[int, int] = {}
    for gi, g in enumerate(problem.one_hot_groups):
        if len(g) < 3:
            out.append(f"group {gi}: d_i must exceed 2 (got {len(g)})")
        if len(set(g)) != len(g):
            out.append(f"group {gi}: repeated member")
        for v in g:
            if not 0 <= v < n:
                out.append(f"group {gi}: index {v} out of range")
            elif v in owner and owner[v] != gi:
                out.append(f"overlap at var {v} (groups {owner[v]} and {gi})")
            else:
                owner[v] = gi
    functions = [("objective", problem.objective)] + [(f"inequality {j}", g) for j, g in enumerate(problem.inequalities)]
    for label, fn in functions:
        for i in fn.coefficients:
            if not 0 <= i < n:
                out.append(f"{label}: index {i} out of range")
            elif i in problem.substitutions:
                out.append(f"{label}: references substituted var {i}")
    for j, g in enumerate(problem.inequalities):
        if not g.is_integral:
            out.append(f"inequality {j}: non-integer coefficients")
    return out


def bounds(g: LinearFunction) -> ConstraintBounds:
    """Exact min and max of a linear function over the binary cube."""
    lo = g.constant + sum(min(0, c) for c in g.coefficients.values())
    hi = g.constant + sum(max(0, c) for c in g.coefficients.values())
    return ConstraintBounds(_as_int_if_integral(lo), _as_int_if_integral(hi))


def evaluate(f: LinearFunction, x) -> float:
    x = np.asarray(x)
    total = f.constant
    for i, c in f.coefficients.items():
        if not 0 <= i < x.shape[-1]:
            raise IndexError(f"variable {i} out of range for assignment of length {x.shape[-1]}")
        total += c * int(x[i])
    return total


def is_feasible(problem: ConstrainedProblem, x) -> bool:
    x = np.asarray(x)
    if x.shape != (problem.n_vars,):
        raise ValueError(f"expected assignment of length {problem.n_vars}, got shape {x.shape}")
    for g in (*problem.one_hot_groups, *problem.rewritten_groups):
        if int(sum(x[v] for v in g)) != 1:
            return False
    for var, s in problem.substitutions.items():
        if s.source is None and x[var] != s.offset:
            return False
    return all(evaluate(g, x) >= 0 for g in problem.inequalities)
