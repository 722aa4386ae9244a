"""Dense state-tensor simulation over mixed qubit/qudit layouts.

States are complex128 numpy arrays shaped like the layout. Qudit legs hold
only the Hamming-weight-one sector of their one-hot group, so the XY ring
mixer acts on them as a ``d x d`` matrix.
"""

from __future__ import annotations

from math import prod, sqrt
from typing import Sequence

import numpy as np

from . import _kernels

__all__ = [
    "DEFAULT_MEM_CAP",
    "MemoryCapExceeded",
    "init_state",
    "apply_phase",
    "rx_matrix",
    "ring_mixer_factors",
    "build_ring_mixer",
    "ring_mixer_derivative",
    "apply_site_matrix",
    "apply_x_mixer",
    "axis_strides",
    "apply_qudit_mixer",
    "expectation",
    "measurement_stats",
]

DEFAULT_MEM_CAP = 2**28


class MemoryCapExceeded(MemoryError):
    pass


def check_size(shape: Sequence[int], mem_cap: int = DEFAULT_MEM_CAP) -> int:
    n = prod(shape)
    if n > mem_cap:
        raise MemoryCapExceeded(f"state tensor needs {n} entries ({16 * n / 2**30:.2f} GiB), cap is {mem_cap}")
    return n


def init_state(shape: Sequence[int], mem_cap: int = DEFAULT_MEM_CAP) -> np.ndarray:
    """Product of |+> states and W states: uniform over the reduced tensor."""
    n = check_size(shape, mem_cap)
    return np.full(tuple(shape), 1 / sqrt(n), dtype=complex)


def apply_phase(state: np.ndarray, cost: np.ndarray, gamma: float, out: np.ndarray | None = None) -> np.ndarray:
    if np.shape(cost) != state.shape and np.broadcast_shapes(np.shape(cost), state.shape) != state.shape:
        raise ValueError(f"cost shape {np.shape(cost)} does not match state {state.shape}")
    return np.multiply(state, np.exp(-1j * gamma * cost), out=out)


def rx_matrix(beta: float) -> np.ndarray:
    """``R_X(2 beta) = exp(-i beta X)``."""
    c, s = np.cos(beta), np.sin(beta)
    return np.array([[c, -1j * s], [-1j * s, c]])


def _pair_block(d: int, pairs, beta: float) -> np.ndarray:
    u = np.eye(d, dtype=complex)
    r = rx_matrix(beta)
    for a, b in pairs:
        u[np.ix_([a, b], [a, b])] = r
    return u


def ring_pairs(d: int) -> list[list[tuple[int, int]]]:
    """Level pairs coupled by each brick-wall factor, in application order."""
    if d < 3:
        raise ValueError(f"ring mixer needs d >= 3, got {d}")
    even = [(i, i + 1) for i in range(0, d - 1, 2)]
    odd = [(i, i + 1) for i in range(1, d - 1, 2)]
    if d % 2 == 0:
        return [even, odd + [(d - 1, 0)]]
    return [even, odd, [(d - 1, 0)]]


def ring_mixer_factors(d: int, beta: float) -> list[np.ndarray]:
    """``[U_even, U_odd(, U_last)]``; the mixer is their product in reverse order."""
    return [_pair_block(d, pairs, beta) for pairs in ring_pairs(d)]


def build_ring_mixer(d: int, beta: float) -> np.ndarray:
    u = np.eye(d, dtype=complex)
    for f in ring_mixer_factors(d, beta):
        u = f @ u
    return u


def ring_mixer_derivative(d: int, beta: float) -> np.ndarray:
    """Exact ``dU/dbeta`` of the ring mixer by the product rule."""
    factors = ring_mixer_factors(d, beta)
    gens = []
    for pairs in ring_pairs(d):
        h = np.zeros((d, d), dtype=complex)
        for a, b in pairs:
            h[a, b] = h[b, a] = 1
        gens.append(h)
    total = np.zeros((d, d), dtype=complex)
    for k in range(len(factors)):
        term = np.eye(d, dtype=complex)
        for j, f in enumerate(factors):
            term = (-1j * gens[j] @ f if j == k else f) @ term
        total += term
    return total


def apply_site_matrix(state: np.ndarray, axis: int, matrix: np.ndarray) -> np.ndarray:
    """Mode-``axis`` product of ``matrix`` with the state tensor."""
    d = state.shape[axis]
    if matrix.shape != (d, d):
        raise ValueError(f"matrix {matrix.shape} does not match axis {axis} of dimension {d}")
    pre = prod(state.shape[:axis])
    post = prod(state.shape[axis + 1 :])
    out = np.matmul(matrix, state.reshape(pre, d, post))
    return out.reshape(state.shape)


def axis_strides(shape: Sequence[int], axes: Sequence[int]) -> np.ndarray:
    """C-order element strides of the given axes."""
    return np.array([prod(shape[a + 1 :]) for a in axes], dtype=np.int64)


def apply_x_mixer(state: np.ndarray, beta: float, qubit_axes: Sequence[int] | None = None) -> np.ndarray:
    """Apply ``R_X(2 beta)`` along every qubit axis (all axes of dimension 2 by default)."""
    if qubit_axes is None:
        qubit_axes = [a for a, d in enumerate(state.shape) if d == 2]
    out = np.array(state, dtype=complex, order="C", copy=True)
    _kernels.rx_axes(out.reshape(-1), axis_strides(state.shape, qubit_axes), float(beta))
    return out


def apply_qudit_mixer(state: np.ndarray, qudit_axis: int, matrix: np.ndarray) -> np.ndarray:
    return apply_site_matrix(state, qudit_axis, matrix)


def expectation(state: np.ndarray, cost: np.ndarray) -> float:
    probs = np.abs(state) ** 2
    if np.shape(cost) != probs.shape and np.broadcast_shapes(np.shape(cost), probs.shape) != probs.shape:
        raise ValueError(f"cost shape {np.shape(cost)} does not match state {state.shape}")
    return float(np.sum(probs * cost))


def marginal_probabilities(state: np.ndarray, slack_axes: Sequence[int] = ()) -> np.ndarray:
    """Probabilities with the slack axes traced out (kept as length-1 axes)."""
    probs = np.abs(state) ** 2
    if slack_axes:
        probs = probs.sum(axis=tuple(slack_axes), keepdims=True)
    return probs


def measurement_stats(
    state: np.ndarray,
    objective: np.ndarray,
    feasible: np.ndarray,
    optimum: float,
    slack_axes: Sequence[int] = (),
    atol: float = 1e-9,
) -> dict:
    """Probability of optimal and near-optimal feasible outcomes.

    ``objective`` and ``feasible`` may carry length-1 slack axes. Degenerate
    optima are summed. Near-optimal means ``f(x) <= f* + 0.1 |f*|``.
    """
    probs = marginal_probabilities(state, slack_axes)
    objective = np.broadcast_to(objective, probs.shape)
    feasible = np.broadcast_to(feasible, probs.shape)
    tol = atol * max(1.0, abs(optimum))
    opt_mask = feasible & (np.abs(objective - optimum) <= tol)
    near_mask = feasible & (objective <= optimum + 0.1 * abs(optimum) + tol)
    return {
        "p_opt": float(probs[opt_mask].sum()),
        "p90": float(probs[near_mask].sum()),
        "p_feasible": float(probs[feasible].sum()),
        "n_optimal": int(opt_mask.sum()),
    }
