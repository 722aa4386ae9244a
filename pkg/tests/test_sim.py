import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from cqaoa import sim
from cqaoa.instances import PricePattern, build_pp, random_pp
from cqaoa.pipeline import PipelineConfig, compile


def test_init_state_uniform():
    psi = sim.init_state((3, 3))
    assert np.allclose(psi, 1 / 3)
    psi = sim.init_state((2, 2))
    assert np.allclose(psi, 1 / 2)
    psi = sim.init_state((2, 5, 3, 2))
    assert np.linalg.norm(psi) == pytest.approx(1)


def test_memory_cap():
    with pytest.raises(sim.MemoryCapExceeded):
        sim.init_state((2,) * 10, mem_cap=512)


def test_phase_examples():
    rng = np.random.default_rng(0)
    psi = sim.init_state((2, 3)) * np.exp(1j * rng.normal(size=(2, 3)))
    cost = rng.normal(size=(2, 3))
    assert np.allclose(sim.apply_phase(psi, cost, 0.0), psi)
    out = sim.apply_phase(psi, np.full((2, 3), 2.5), 0.3)
    assert np.allclose(out, psi * np.exp(-0.75j))
    assert np.allclose(np.abs(sim.apply_phase(psi, cost, 1.1)), np.abs(psi))
    with pytest.raises(ValueError):
        sim.apply_phase(psi, np.zeros((3, 2)), 0.1)


def test_rx_matrix():
    assert np.allclose(sim.rx_matrix(0), np.eye(2))
    assert np.allclose(sim.rx_matrix(np.pi / 2), -1j * np.array([[0, 1], [1, 0]]))
    for b in np.random.default_rng(1).uniform(-4, 4, 5):
        r = sim.rx_matrix(b)
        assert np.allclose(r @ r.conj().T, np.eye(2), atol=1e-14)


def _weight_one_restriction(members, beta):
    """Gate-level brick wall on len(members) qubits, restricted to single-excitation states."""
    d = len(members)
    cols = []
    for k in range(d):
        psi = np.zeros((2,) * d, dtype=complex)
        idx = [0] * d
        idx[k] = 1
        psi[tuple(idx)] = 1
        for layer in oracle.brick_wall_layers(list(range(d))):
            for a, b in layer:
                psi = oracle._apply(psi, oracle.rxx_ryy(beta), [a, b])
        col = []
        for l in range(d):
            j = [0] * d
            j[l] = 1
            col.append(psi[tuple(j)])
        # no leakage out of the single-excitation sector
        assert np.isclose(np.linalg.norm(col), 1, atol=1e-12)
        cols.append(col)
    return np.array(cols).T


@pytest.mark.parametrize("d", [3, 4, 5, 6, 7])
def test_ring_mixer_matches_brick_wall_circuit(d):
    for beta in (0.0, 0.37, -1.2, 2.9):
        assert np.allclose(sim.build_ring_mixer(d, beta), _weight_one_restriction(list(range(d)), beta), atol=1e-12)


@pytest.mark.parametrize("d", [3, 4, 5, 8])
def test_ring_mixer_unitary_and_inverse(d):
    assert np.allclose(sim.build_ring_mixer(d, 0.0), np.eye(d))
    u = sim.build_ring_mixer(d, 0.81)
    assert np.allclose(u @ u.conj().T, np.eye(d), atol=1e-12)
    assert np.allclose(np.linalg.norm(u, axis=0), 1, atol=1e-12)
    # the inverse runs the factors at -beta in reverse order
    inv = np.eye(d)
    for f in sim.ring_mixer_factors(d, -0.81):
        inv = inv @ f
    assert np.allclose(u @ inv, np.eye(d), atol=1e-12)


def test_ring_mixer_small_d():
    with pytest.raises(ValueError):
        sim.build_ring_mixer(2, 0.1)


def test_ring_mixer_derivative_fd():
    for d in (3, 4, 5):
        h = 1e-6
        fd = (sim.build_ring_mixer(d, 0.4 + h) - sim.build_ring_mixer(d, 0.4 - h)) / (2 * h)
        assert np.allclose(sim.ring_mixer_derivative(d, 0.4), fd, atol=1e-8)


def test_x_mixer_examples():
    psi = np.array([1, 0], dtype=complex)
    out = sim.apply_x_mixer(psi, np.pi / 4)
    assert np.allclose(out, [np.cos(np.pi / 4), -1j * np.sin(np.pi / 4)])
    rng = np.random.default_rng(2)
    psi = rng.normal(size=(2, 3, 2)) + 1j * rng.normal(size=(2, 3, 2))
    assert np.allclose(sim.apply_x_mixer(psi, 0.0, [0, 2]), psi)


@pytest.mark.parametrize("k", [1, 4, 10])
def test_x_mixer_matches_full_space(k):
    rng = np.random.default_rng(k)
    psi = rng.normal(size=(2,) * k) + 1j * rng.normal(size=(2,) * k)
    beta = 0.53
    ref = psi.copy()
    r = sim.rx_matrix(beta)
    for q in range(k):
        ref = oracle._apply(ref, r, [q])
    assert np.allclose(sim.apply_x_mixer(psi, beta), ref, atol=1e-12)
    # the kernel works on a copy
    assert not np.shares_memory(sim.apply_x_mixer(psi, beta), psi)


def test_qudit_mixer_examples():
    rng = np.random.default_rng(3)
    psi = rng.normal(size=(2, 3, 4)) + 0j
    assert np.allclose(sim.apply_qudit_mixer(psi, 1, np.eye(3)), psi)
    perm = np.eye(3)[[1, 0, 2]]
    out = sim.apply_qudit_mixer(psi, 1, perm)
    assert np.allclose(out[:, 0], psi[:, 1]) and np.allclose(out[:, 1], psi[:, 0])
    with pytest.raises(ValueError):
        sim.apply_qudit_mixer(psi, 1, np.eye(4))
    u = sim.build_ring_mixer(4, 0.3)
    out = sim.apply_qudit_mixer(psi / np.linalg.norm(psi), 2, u)
    assert np.linalg.norm(out) == pytest.approx(1)


def test_phase_and_qudit_mixer_commute_on_disjoint_axes():
    rng = np.random.default_rng(4)
    psi = rng.normal(size=(3, 4)) + 1j * rng.normal(size=(3, 4))
    cost = np.broadcast_to(rng.normal(size=(3, 1)), (3, 4))
    u = sim.build_ring_mixer(4, 0.6)
    a = sim.apply_qudit_mixer(sim.apply_phase(psi, cost, 0.7), 1, u)
    b = sim.apply_phase(sim.apply_qudit_mixer(psi, 1, u), cost, 0.7)
    assert np.allclose(a, b)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.sampled_from([2, 3, 4, 5]), min_size=1, max_size=5), st.lists(st.floats(-3, 3), min_size=2, max_size=8))
def test_norm_preserved(dims, angles):
    rng = np.random.default_rng(len(dims))
    psi = sim.init_state(dims)
    cost = rng.normal(size=dims)
    qubits = [a for a, d in enumerate(dims) if d == 2]
    for g, b in zip(angles[::2], angles[1::2]):
        psi = sim.apply_phase(psi, cost, g)
        psi = sim.apply_x_mixer(psi, b, qubits)
        for a, d in enumerate(dims):
            if d > 2:
                psi = sim.apply_qudit_mixer(psi, a, sim.build_ring_mixer(d, b))
    assert abs(np.vdot(psi, psi).real - 1) < 1e-9


def test_expectation_examples():
    rng = np.random.default_rng(5)
    cost = rng.normal(size=(2, 3))
    assert sim.expectation(sim.init_state((2, 3)), cost) == pytest.approx(cost.mean())
    basis = np.zeros((2, 3), dtype=complex)
    basis[1, 2] = 1
    assert sim.expectation(basis, cost) == pytest.approx(cost[1, 2])
    psi = rng.normal(size=(2, 3)) + 1j * rng.normal(size=(2, 3))
    loop = sum(abs(psi[i]) ** 2 * cost[i] for i in np.ndindex(2, 3))
    assert sim.expectation(psi, cost) == pytest.approx(loop)
    with pytest.raises(ValueError):
        sim.expectation(psi, np.zeros((3, 2)))


def _model(method):
    spec = random_pp((3, 3), 5, PricePattern("increasing", seed=1), seed=3)
    return compile(build_pp(spec), PipelineConfig(method))


def test_stats_basis_state_at_optimum():
    model = _model("ifxy")
    idx = np.unravel_index(np.argmin(np.where(model.feasible_tensor, model.objective_tensor, np.inf)), model.shape)
    psi = np.zeros(model.shape, dtype=complex)
    psi[idx] = 1
    st_ = sim.measurement_stats(psi, model.objective_tensor, model.feasible_tensor, model.optimum)
    assert st_["p_opt"] == 1 and st_["p90"] == 1


def test_stats_uniform_on_comb1_0_shape():
    model = _model("ifxy")
    assert model.shape == (3, 3)
    st_ = sim.measurement_stats(sim.init_state(model.shape), model.objective_tensor, model.feasible_tensor, model.optimum)
    assert st_["n_optimal"] == 1
    assert st_["p_opt"] == pytest.approx(1 / 9)


def test_stats_marginalize_slack():
    model = _model("xy")
    rng = np.random.default_rng(6)
    psi = rng.normal(size=model.shape) + 1j * rng.normal(size=model.shape)
    psi /= np.linalg.norm(psi)
    st_ = sim.measurement_stats(psi, model.objective_tensor, model.feasible_tensor, model.optimum, model.layout.slack_axes)
    prob = model.problem
    total = 0.0
    for idx in np.ndindex(*model.shape):
        x = model.layout.decode(idx, prob.n_vars)
        if oracle.feasible(prob, x) and abs(oracle.lin_value(prob.objective, x) - model.optimum) < 1e-9:
            total += abs(psi[idx]) ** 2
    assert st_["p_opt"] == pytest.approx(total)


def test_stats_p90_set():
    # objective values 10, 10.5, 11, 12 on four feasible states; D_90 = f <= 11
    obj = np.array([10.0, 10.5, 11.0, 12.0])
    feas = np.array([True, True, True, True])
    psi = np.full(4, 0.5, dtype=complex)
    s = sim.measurement_stats(psi, obj, feas, 10.0)
    assert s["p_opt"] == pytest.approx(0.25) and s["p90"] == pytest.approx(0.75)
    # negative optimum -12: D_90 is f <= -10.8, i.e. {-12, -11}
    s = sim.measurement_stats(psi, -obj[::-1], feas, -12.0)
    assert s["p90"] == pytest.approx(0.5)
