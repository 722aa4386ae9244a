"""scikit-learn style wrapper around compile + depth ladder."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import pipeline, qaoa, sim
from .problem import ConstrainedProblem, is_feasible, validate

__all__ = ["ConstrainedQAOA", "check_problem"]


def check_problem(problem) -> ConstrainedProblem:
    if not isinstance(problem, ConstrainedProblem):
        raise TypeError(f"expected a ConstrainedProblem, got {type(problem).__name__}")
    msgs = validate(problem.normalized())
    if msgs:
        raise ValueError("invalid problem: " + "; ".join(msgs))
    return problem


class ConstrainedQAOA(BaseEstimator):
    """Fit optimizes the QAOA angles for one problem; predict samples solutions.

    The "training data" is the problem itself, so ``fit`` takes a
    :class:`ConstrainedProblem` instead of a feature matrix.

    Examples
    --------
    >>> est = ConstrainedQAOA(method="ifxy", p_max=3).fit(problem)   # doctest: +SKIP
    >>> est.predict(10, random_state=0)                               # doctest: +SKIP
    """

    def __init__(self, method="ifxy", p_max=12, eta=None, rho=None, mem_cap=sim.DEFAULT_MEM_CAP,
                 max_iterations=100, seed=0):
        self.method = method
        self.p_max = p_max
        self.eta = eta
        self.rho = rho
        self.mem_cap = mem_cap
        self.max_iterations = max_iterations
        self.seed = seed

    def fit(self, problem, y=None):
        problem = check_problem(problem)
        config = pipeline.PipelineConfig(self.method, eta=self.eta, rho=self.rho, mem_cap=self.mem_cap)
        self.model_ = pipeline.compile(problem, config)
        settings = qaoa.OptimizerSettings(max_iterations=self.max_iterations, seed=self.seed)
        self.reports_ = qaoa.run_ladder(self.model_, self.p_max, settings)
        self.schedule_ = qaoa.Schedule(self.reports_[-1].gammas, self.reports_[-1].betas)
        self.problem_ = problem.normalized()
        return self

    def _check_fitted(self):
        if not hasattr(self, "schedule_"):
            raise NotFittedError("call fit() first")

    def predict_proba(self) -> np.ndarray:
        """Probabilities over the layout tensor with slack legs traced out."""
        self._check_fitted()
        state = qaoa.Evaluator(self.model_).state(self.schedule_)
        return sim.marginal_probabilities(state, self.model_.layout.slack_axes)

    def predict(self, n_samples: int = 1, random_state=None) -> np.ndarray:
        """Sample ``n_samples`` full assignments of the original variables."""
        probs = self.predict_proba()
        flat = probs.reshape(-1)
        rng = np.random.default_rng(random_state)
        idx = rng.choice(flat.size, size=n_samples, p=flat / flat.sum())
        out = np.empty((n_samples, self.problem_.n_vars), dtype=np.int8)
        for k, i in enumerate(idx):
            multi = np.unravel_index(i, probs.shape)
            out[k] = self.problem_.expand(self.model_.layout.decode(multi, self.problem_.n_vars))
        return out

    def score(self, problem=None, y=None) -> float:
        """RAAR at the final depth."""
        self._check_fitted()
        return float(self.reports_[-1].raar)

    def best_solution(self, n_samples: int = 256, random_state=None):
        """Best feasible sampled assignment and its objective value, or ``(None, inf)``."""
        best, value = None, np.inf
        for x in self.predict(n_samples, random_state):
            if is_feasible(self.problem_, x):
                v = self.problem_.objective_value(x)
                if v < value:
                    best, value = x, v
        return best, value
