"""In-place numba kernels on flat C-ordered state vectors.

An axis is addressed by its dimension and its stride (product of the
dimensions after it).
"""

import numba
import numpy as np


@numba.njit(cache=True)
def rx_axis(psi, stride, c, s):
    # s is the off-diagonal entry -i sin(beta)
    n = psi.shape[0]
    for block in range(0, n, 2 * stride):
        for j in range(block, block + stride):
            a0 = psi[j]
            a1 = psi[j + stride]
            psi[j] = c * a0 + s * a1
            psi[j + stride] = s * a0 + c * a1


@numba.njit(cache=True)
def rx_axes(psi, strides, beta):
    c = np.cos(beta)
    s = -1j * np.sin(beta)
    for k in range(strides.shape[0]):
        rx_axis(psi, strides[k], c, s)


@numba.njit(cache=True)
def matrix_axis(psi, dim, stride, u):
    n = psi.shape[0]
    buf = np.empty(dim, dtype=np.complex128)
    for block in range(0, n, dim * stride):
        for j in range(block, block + stride):
            for a in range(dim):
                buf[a] = psi[j + a * stride]
            for a in range(dim):
                acc = 0j
                for b in range(dim):
                    acc += u[a, b] * buf[b]
                psi[j + a * stride] = acc


@numba.njit(cache=True)
def phase(psi, cost, gamma):
    for i in range(psi.shape[0]):
        t = -gamma * cost[i]
        psi[i] *= complex(np.cos(t), np.sin(t))


@numba.njit(cache=True)
def flip_overlap(lam, psi, stride):
    """sum conj(lam) * X_axis psi for the axis with the given stride."""
    n = psi.shape[0]
    acc = 0j
    for block in range(0, n, 2 * stride):
        for j in range(block, block + stride):
            acc += np.conj(lam[j]) * psi[j + stride] + np.conj(lam[j + stride]) * psi[j]
    return acc


@numba.njit(cache=True)
def matrix_overlap(lam, psi, dim, stride, g):
    """sum conj(lam) * (g applied along the axis) psi."""
    n = psi.shape[0]
    acc = 0j
    for block in range(0, n, dim * stride):
        for j in range(block, block + stride):
            for a in range(dim):
                row = 0j
                for b in range(dim):
                    row += g[a, b] * psi[j + b * stride]
                acc += np.conj(lam[j + a * stride]) * row
    return acc


@numba.njit(cache=True)
def weighted_overlap(lam, psi, w):
    acc = 0j
    for i in range(psi.shape[0]):
        acc += np.conj(lam[i]) * w[i] * psi[i]
    return acc
