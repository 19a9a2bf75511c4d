"""Compiled two-index coordinate-descent core for the box/equality dual QP.

Solves min_a 1/2 a^T Q a + q^T a subject to y^T a = 0 and 0 <= a <= C by
repeatedly picking the maximal violating pair and taking the clipped Newton
step along the feasibility-preserving direction.  The gradient is maintained
incrementally; callers refresh it between chunks to cancel drift.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def smo_chunk(Q, q, y, C, alpha, grad, tol, max_steps):  # pragma: no cover - jit
    m = alpha.shape[0]
    steps = 0
    while True:
        gmax = -1e300
        gmin = 1e300
        i = -1
        j = -1
        for t in range(m):
            v = -y[t] * grad[t]
            at = alpha[t]
            if (y[t] > 0.0 and at < C) or (y[t] < 0.0 and at > 0.0):
                if v > gmax:
                    gmax = v
                    i = t
            if (y[t] > 0.0 and at > 0.0) or (y[t] < 0.0 and at < C):
                if v < gmin:
                    gmin = v
                    j = t
        if i < 0 or j < 0:
            return steps, 0.0
        resid = gmax - gmin
        if resid <= tol or steps >= max_steps:
            return steps, resid

        curv = Q[i, i] + Q[j, j] - 2.0 * y[i] * y[j] * Q[i, j]
        if curv < 1e-12:
            curv = 1e-12
        step = resid / curv
        lim_i = C - alpha[i] if y[i] > 0.0 else alpha[i]
        lim_j = alpha[j] if y[j] > 0.0 else C - alpha[j]
        if step > lim_i:
            step = lim_i
        if step > lim_j:
            step = lim_j

        dai = y[i] * step
        daj = -y[j] * step
        alpha[i] += dai
        alpha[j] += daj
        # keep the box exact; snaps move entries by at most one ulp
        if alpha[i] < 0.0:
            alpha[i] = 0.0
        elif alpha[i] > C:
            alpha[i] = C
        if alpha[j] < 0.0:
            alpha[j] = 0.0
        elif alpha[j] > C:
            alpha[j] = C
        for t in range(m):
            grad[t] += Q[t, i] * dai + Q[t, j] * daj
        steps += 1


def kkt_pair_residual(alpha: np.ndarray, grad: np.ndarray, y: np.ndarray, C: float) -> float:
    """Max violating-pair gap for the current multipliers (0 when optimal)."""
    v = -y * grad
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    if not up.any() or not low.any():
        return 0.0
    return max(0.0, float(v[up].max() - v[low].min()))
