import itertools

import numpy as np
import pytest

import oracle
from cqaoa.instances import (
    GenerationError,
    MksSpec,
    PpSpec,
    PricePattern,
    build_mks,
    build_pp,
    generate_prices,
    load_instance,
    random_mks,
    random_pp,
    save_instance,
)
from cqaoa.problem import ConstrainedProblem, validate


def raw(problem):
    return ConstrainedProblem.from_dict(problem.to_dict())


def test_mks_tiny_structure():
    p = build_mks(MksSpec((1, 1), ((1,), (1,)), (1,)))
    r = raw(p)
    assert r.n_vars == 4
    assert [len(g) for g in r.one_hot_groups] == [2, 2]
    assert len(r.inequalities) == 1
    # d=2 groups are rewritten into single free variables
    assert p.one_hot_groups == () and p.n_free == 2
    assert validate(p) == []


def test_mks_counts():
    p = build_mks(random_mks(3, 2, seed=0))
    assert p.n_vars == 9 and p.group_sizes == (3, 3, 3) and len(p.inequalities) == 2
    assert validate(p) == []


def test_mks_optimum_matches_enumeration():
    spec = random_mks(6, 2, seed=5)
    p = build_mks(spec)
    m = len(spec.capacities)
    best = -np.inf
    # item i goes to knapsack choice[i]; m means the dummy
    for choice in itertools.product(range(m + 1), repeat=6):
        load = [sum(spec.weights[i][j] for i in range(6) if choice[i] == j) for j in range(m)]
        if all(l <= c for l, c in zip(load, spec.capacities)):
            best = max(best, sum(spec.values[i] for i in range(6) if choice[i] < m))
    from cqaoa.pipeline import exact_optimum

    value, _ = exact_optimum(p)
    assert value == -best


def test_pp_counts():
    spec = PpSpec(5, ((1, 1), (2, 1)), (1, 2, 3, 4, 5), 3)
    p = build_pp(spec)
    assert p.n_vars == 8 and p.group_sizes == (4, 4) and len(p.inequalities) == 5


def test_pp_comb1_0_shape():
    spec = random_pp((3, 3), 5, PricePattern("increasing", seed=0), seed=0)
    p = build_pp(spec)
    assert p.n_vars == 6 and spec.horizon == 5 and len(spec.loads) == 2 and p.group_sizes == (3, 3)


def _usage(spec, starts, t):
    total = 0
    for prof, s in zip(spec.loads, starts):
        if s <= t < s + len(prof):
            total += prof[t - s]
    return total


def test_pp_functions_match_direct_model():
    spec = PpSpec(6, ((1, 2, 1), (2, 2)), (3.0, 1.5, 2.0, 0.5, 4.0, 1.0), 3)
    p = raw(build_pp(spec))
    offsets = np.cumsum([0, *spec.group_sizes])
    for starts in itertools.product(*(range(d) for d in spec.group_sizes)):
        x = np.zeros(p.n_vars, dtype=int)
        for i, s in enumerate(starts):
            x[offsets[i] + s] = 1
        cost = sum(spec.rates[s + k] * prof[k] for prof, s in zip(spec.loads, starts) for k in range(len(prof)))
        assert oracle.lin_value(p.objective, x) == pytest.approx(cost)
        for t in range(spec.horizon):
            assert oracle.lin_value(p.inequalities[t], x) == spec.capacity - _usage(spec, starts, t)


@pytest.mark.parametrize("kind", ["increasing", "decreasing", "up-quadratic", "down-quadratic"])
def test_generated_pp_binding_and_valid(kind):
    spec = random_pp((3, 2), 5, PricePattern(kind, seed=3), seed=7)
    p = build_pp(spec)
    assert validate(p) == []
    all_starts = list(itertools.product(*(range(d) for d in spec.group_sizes)))
    for t in range(spec.horizon):
        assert any(_usage(spec, s, t) > spec.capacity for s in all_starts), f"step {t} not binding"
    assert any(all(_usage(spec, s, t) <= spec.capacity for t in range(spec.horizon)) for s in all_starts)


def test_generation_exhausted():
    with pytest.raises(GenerationError):
        # both loads span the whole horizon, so usage >= 2 exceeds the capacity everywhere
        random_pp((3, 3), 3, PricePattern("increasing"), seed=0, capacity=1)


def test_prices_shapes():
    inc = generate_prices(PricePattern("increasing", noise=0), 4)
    assert np.all(np.diff(inc) >= 0)
    dec = generate_prices(PricePattern("decreasing", noise=0), 4)
    assert np.all(np.diff(dec) <= 0)
    down = generate_prices(PricePattern("down-quadratic", noise=0), 6)
    assert np.all(np.diff(down, 2) < 0)
    up = generate_prices(PricePattern("up-quadratic", noise=0), 6)
    assert np.all(np.diff(up, 2) > 0)


def test_prices_deterministic_and_noisy():
    a = generate_prices(PricePattern("up-quadratic", seed=4), 8)
    b = generate_prices(PricePattern("up-quadratic", seed=4), 8)
    c = generate_prices(PricePattern("up-quadratic", seed=5), 8)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    base = generate_prices(PricePattern("up-quadratic", noise=0), 8)
    assert np.all(np.abs(a - base) <= 0.1 * base.mean() + 1e-12)


def test_bad_specs():
    with pytest.raises(ValueError):
        PpSpec(3, ((1, 1, 1, 1),), (1, 1, 1), 2)
    with pytest.raises(ValueError):
        MksSpec((1,), ((0,),), (1,))
    with pytest.raises(ValueError):
        PricePattern("sideways")


def test_save_load_round_trip(tmp_path):
    spec = random_pp((3, 3), 5, PricePattern("decreasing", seed=1), seed=2)
    p = build_pp(spec, "inst")
    path = save_instance(tmp_path / "a.json", p, "pp", spec, seed=2)
    q = load_instance(path).normalized()
    assert q.name == "inst"
    assert q.objective == p.objective and q.inequalities == p.inequalities and q.one_hot_groups == p.one_hot_groups
    save_instance(tmp_path / "b.json", p, "pp", spec, seed=2)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
