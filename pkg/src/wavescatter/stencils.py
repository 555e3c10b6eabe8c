"""Finite-difference weights on arbitrary nodes (Fornberg's algorithm)."""

from __future__ import annotations

import numpy as np


def fd_weights(nodes: np.ndarray, x0: float, order: int) -> np.ndarray:
    """Weights w such that sum(w * f(nodes)) approximates f^(order)(x0).

    Classic recursive construction; exact for polynomials of degree
    len(nodes) - 1, so a p-point stencil gives order p - order accuracy
    on smooth data.
    """
    nodes = np.asarray(nodes, dtype=float)
    n = nodes.size
    if order >= n:
        raise ValueError("need more nodes than the derivative order")
    c = np.zeros((n, order + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = nodes[0] - x0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def centered_time_weights(times: np.ndarray, t0: float, order: int) -> np.ndarray:
    """FD weights for d^order/dt^order at t0 from a cluster of sample times."""
    return fd_weights(np.asarray(times, dtype=float), float(t0), order)


def derivative_matrix(nodes: np.ndarray, order: int, stencil: int = 5) -> np.ndarray:
    """Dense differentiation matrix on arbitrary nodes using local stencils.

    Each row uses the `stencil` nearest nodes (one-sided at the ends), so the
    matrix is banded with bandwidth stencil - 1.
    """
    nodes = np.asarray(nodes, dtype=float)
    n = nodes.size
    if stencil > n:
        stencil = n
    D = np.zeros((n, n))
    half = stencil // 2
    for i in range(n):
        lo = min(max(i - half, 0), n - stencil)
        sl = slice(lo, lo + stencil)
        D[i, sl] = fd_weights(nodes[sl], nodes[i], order)
    return D
