"""Independent reference implementations used by the tests.

Nothing here calls into the package's compilation or simulation code; the
functions work on plain assignments of the original variables.
"""

import itertools

import numpy as np

from cqaoa.problem import ConstrainedProblem, LinearFunction, make_problem


def all_assignments(n):
    """All 2**n bit vectors, variable 0 most significant."""
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64)


def lin_value(f, x):
    return f.constant + sum(c * x[i] for i, c in f.coefficients.items())


def group_violations(problem, x):
    groups = list(problem.one_hot_groups) + list(problem.rewritten_groups)
    return sum(1 for g in groups if sum(x[v] for v in g) != 1)


def ineq_violations(problem, x):
    return sum(1 for g in problem.inequalities if lin_value(g, x) < 0)


def feasible(problem, x):
    return group_violations(problem, x) == 0 and ineq_violations(problem, x) == 0


def brute_optimum(problem):
    """Optimal value over every feasible bit vector of the raw problem."""
    best = np.inf
    for x in all_assignments(problem.n_vars):
        if feasible(problem, x):
            best = min(best, lin_value(problem.objective, x))
    return best


def eval_cost(problem, x, eta):
    return lin_value(problem.objective, x) + eta * (group_violations(problem, x) + ineq_violations(problem, x))


def random_problem(rng, sizes=(3, 4), n_free=1, n_ineq=1, coef=3, name="rand"):
    """Problem with one-hot groups of the given sizes, free variables and integer inequalities.

    Inequalities have the form ``b - sum w_i x_i >= 0`` with ``b`` chosen so
    the all-first-member assignment is feasible.
    """
    n = sum(sizes) + n_free
    groups, nxt = [], 0
    for d in sizes:
        groups.append(tuple(range(nxt, nxt + d)))
        nxt += d
    objective = LinearFunction(0, {i: float(np.round(rng.uniform(-5, 5), 3)) for i in range(n)})
    ineqs = []
    for _ in range(n_ineq):
        w = {i: int(rng.integers(1, coef + 1)) for i in range(n) if rng.random() < 0.7}
        base = sum(w.get(g[0], 0) for g in groups)
        slack = int(rng.integers(0, max(1, sum(w.values()) - base) + 1))
        ineqs.append(LinearFunction(base + slack, {i: -c for i, c in w.items()}))
    return make_problem(n, objective, groups, ineqs, name=name)


# ---------------------------------------------------------------------------
# full 2**N qubit simulator


def _apply(psi, gate, qubits):
    k = len(qubits)
    g = gate.reshape((2,) * (2 * k))
    out = np.tensordot(g, psi, axes=(list(range(k, 2 * k)), list(qubits)))
    return np.moveaxis(out, list(range(k)), list(qubits))


_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]])
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def rxx_ryy(beta):
    """R_XX(beta) R_YY(beta), with R_PP(t) = cos(t/2) I - i sin(t/2) P x P."""
    c, s = np.cos(beta / 2), np.sin(beta / 2)
    eye = np.eye(4)
    rxx = c * eye - 1j * s * np.kron(_X, _X)
    ryy = c * eye - 1j * s * np.kron(_Y, _Y)
    return rxx @ ryy


def givens(theta):
    """Keeps weight one: |10> -> cos|10> + sin|01>."""
    c, s = np.cos(theta), np.sin(theta)
    g = np.eye(4, dtype=complex)
    # basis order 00, 01, 10, 11
    g[np.ix_([1, 2], [1, 2])] = [[c, s], [-s, c]]
    return g


def brick_wall_layers(members):
    """Gate pairs of the ring mixer brick wall, in application order."""
    d = len(members)
    even = [(members[i], members[i + 1]) for i in range(0, d - 1, 2)]
    odd = [(members[i], members[i + 1]) for i in range(1, d - 1, 2)]
    closure = [(members[d - 1], members[0])]
    return [even, odd + closure] if d % 2 == 0 else [even, odd, closure]


class FullSpace:
    """Gate-level simulation of the IF+XY circuit on all N qubits."""

    def __init__(self, problem, rho):
        self.problem = problem
        self.n = problem.n_vars
        self.rho = rho
        grouped = {v for g in problem.one_hot_groups for v in g}
        self.free = [v for v in range(self.n) if v not in grouped]
        X = all_assignments(self.n)
        self.cost = np.array(
            [lin_value(problem.objective, x) + rho * ineq_violations(problem, x) for x in X]
        ).reshape((2,) * self.n)
        self.one_hot = np.array([group_violations(problem, x) == 0 for x in X]).reshape((2,) * self.n)

    def initial(self):
        psi = np.zeros((2,) * self.n, dtype=complex)
        psi[(0,) * self.n] = 1
        for v in self.free:
            psi = _apply(psi, _H, [v])
        for g in self.problem.one_hot_groups:
            d = len(g)
            psi = _apply(psi, _X, [g[0]])
            for k in range(d - 1):
                psi = _apply(psi, givens(np.arccos(np.sqrt(1 / (d - k)))), [g[k], g[k + 1]])
        return psi

    def evolve(self, gammas, betas):
        psi = self.initial()
        for gamma, beta in zip(gammas, betas):
            psi = psi * np.exp(-1j * gamma * self.cost)
            rx = np.cos(beta) * np.eye(2) - 1j * np.sin(beta) * _X
            for v in self.free:
                psi = _apply(psi, rx, [v])
            gate = rxx_ryy(beta)
            for g in self.problem.one_hot_groups:
                for layer in brick_wall_layers(g):
                    for a, b in layer:
                        psi = _apply(psi, gate, [a, b])
        return psi
