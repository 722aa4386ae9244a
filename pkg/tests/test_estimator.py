import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

import oracle
from cqaoa.estimator import ConstrainedQAOA, check_problem
from cqaoa.instances import PricePattern, build_pp, random_pp
from cqaoa.problem import LinearFunction, make_problem


@pytest.fixture(scope="module")
def problem():
    return build_pp(random_pp((3, 3), 5, PricePattern("increasing", seed=1), seed=3), "pp")


def test_params_and_clone():
    est = ConstrainedQAOA(method="xy", p_max=4, eta=2.0)
    params = est.get_params()
    assert params["method"] == "xy" and params["p_max"] == 4 and params["eta"] == 2.0
    c = clone(est.set_params(seed=5))
    assert c.get_params() == est.get_params() and c is not est


def test_not_fitted():
    with pytest.raises(NotFittedError):
        ConstrainedQAOA().predict_proba()
    with pytest.raises(NotFittedError):
        ConstrainedQAOA().score()


def test_check_problem():
    with pytest.raises(TypeError):
        check_problem(np.zeros((3, 3)))
    bad = make_problem(3, LinearFunction(0, {0: 1.0}), [(0, 1, 2)], [LinearFunction(0.5, {0: 1})])
    with pytest.raises(ValueError):
        check_problem(bad)


@pytest.mark.parametrize("method", ["ifxy", "xy"])
def test_fit_predict_score(problem, method):
    est = ConstrainedQAOA(method=method, p_max=4).fit(problem)
    assert len(est.reports_) == 4 and est.schedule_.p == 4
    probs = est.predict_proba()
    assert probs.sum() == pytest.approx(1.0)
    assert 0 < est.score() <= 1
    xs = est.predict(50, random_state=0)
    assert xs.shape == (50, problem.n_vars)
    # ifxy never leaves the one-hot subspace
    for x in xs:
        assert not oracle.group_violations(problem, x)
    assert np.array_equal(xs, est.predict(50, random_state=0))
    best, value = est.best_solution(200, random_state=1)
    assert oracle.feasible(problem, best)
    assert value >= oracle.brute_optimum(problem) - 1e-9
