"""Compiled O(N^2) pair kernels for the free-space field and potential.

Reduction contract: work is parallel over targets, each target accumulates
its source sum in fixed index order, so results are bit-identical for any
thread count.
"""

import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numpy as np
from numba import njit, prange

_FOUR_PI = 4.0 * np.pi


@njit(parallel=True, cache=True)
def efield_direct(targets, positions, weights, eps2):
    """Softened Coulomb field of the weighted cloud at each target point.

    E(x) = sum_j w_j (x - x_j) / (4 pi (|x - x_j|^2 + eps2)^{3/2})

    A target coinciding with a source contributes a zero numerator, so the
    self term vanishes without special-casing.
    """
    nt = targets.shape[0]
    ns = positions.shape[0]
    out = np.empty((nt, 3))
    for i in prange(nt):
        tx = targets[i, 0]
        ty = targets[i, 1]
        tz = targets[i, 2]
        ax = 0.0
        ay = 0.0
        az = 0.0
        for j in range(ns):
            dx = tx - positions[j, 0]
            dy = ty - positions[j, 1]
            dz = tz - positions[j, 2]
            r2 = dx * dx + dy * dy + dz * dz + eps2
            c = weights[j] / (_FOUR_PI * r2 * np.sqrt(r2))
            ax += c * dx
            ay += c * dy
            az += c * dz
        out[i, 0] = ax
        out[i, 1] = ay
        out[i, 2] = az
    return out


@njit(parallel=True, cache=True)
def potential_energy_direct(positions, weights, eps2):
    """Softened pair potential energy (1/2) sum_{i != j} w_i w_j G(x_i - x_j)
    with G(r) = 1 / (4 pi (|r|^2 + eps2)^{1/2}).
    """
    n = positions.shape[0]
    acc = np.zeros(n)
    for i in prange(n):
        xi = positions[i, 0]
        yi = positions[i, 1]
        zi = positions[i, 2]
        s = 0.0
        for j in range(n):
            if j == i:
                continue
            dx = xi - positions[j, 0]
            dy = yi - positions[j, 1]
            dz = zi - positions[j, 2]
            r2 = dx * dx + dy * dy + dz * dz + eps2
            s += weights[j] / (_FOUR_PI * np.sqrt(r2))
        acc[i] = 0.5 * weights[i] * s
    total = 0.0
    for i in range(n):
        total += acc[i]
    return total


@njit(parallel=True, cache=True)
def softened_inverse_square_sum(ref, positions, weights, eps2, mask):
    """sum over masked particles of w_j / (|x_j - ref|^2 + eps2)."""
    n = positions.shape[0]
    part = np.zeros(n)
    for j in prange(n):
        if mask[j]:
            dx = positions[j, 0] - ref[0]
            dy = positions[j, 1] - ref[1]
            dz = positions[j, 2] - ref[2]
            part[j] = weights[j] / (dx * dx + dy * dy + dz * dz + eps2)
    total = 0.0
    for j in range(n):
        total += part[j]
    return total
