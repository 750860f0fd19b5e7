"""Numba kernel for the coordinate-descent inner loop."""
import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def cd_burst(x, idx, beta, lam, pen_w, v, t, q, max_sweeps, tol):
    """Cyclic coordinate-descent sweeps on a weighted quadratic objective.

    Minimizes 0.5 * mean(v * (t - x @ dbeta - d0)^2) + lam * sum w_j |beta_j|
    in-place: each coordinate step updates beta[j] exactly and folds the
    change into the working residual t; every sweep ends with an exact
    intercept step. Only columns listed in idx are visited.

    Args:
        x: Fortran-ordered design, shape (n, d).
        idx: column indices to cycle over.
        beta: coefficient vector, updated in place.
        lam: penalty level.
        pen_w: per-column penalty weights (finite).
        v: working observation weights.
        t: working residual, updated in place.
        q: per-column curvature mean(v * x_j^2); columns with q <= 0 skipped.
        max_sweeps: sweep budget for this call.
        tol: stop when the largest coefficient change in a sweep is <= tol.

    Returns:
        (sweeps used, last max coefficient change, cumulative intercept shift)
    """
    n = x.shape[0]
    maxd = 0.0
    shift = 0.0
    for s in range(max_sweeps):
        maxd = 0.0
        for wi in range(idx.shape[0]):
            j = idx[wi]
            qj = q[j]
            if qj <= 0.0:
                continue
            col = x[:, j]
            g = 0.0
            for i in range(n):
                g += v[i] * col[i] * t[i]
            g /= n
            u = g + qj * beta[j]
            th = lam * pen_w[j]
            if u > th:
                new = (u - th) / qj
            elif u < -th:
                new = (u + th) / qj
            else:
                new = 0.0
            diff = new - beta[j]
            if diff != 0.0:
                for i in range(n):
                    t[i] -= diff * col[i]
                beta[j] = new
                ad = abs(diff)
                if ad > maxd:
                    maxd = ad
        sv = 0.0
        svt = 0.0
        for i in range(n):
            sv += v[i]
            svt += v[i] * t[i]
        d0 = svt / sv
        for i in range(n):
            t[i] -= d0
        shift += d0
        if abs(d0) > maxd:
            maxd = abs(d0)
        if maxd <= tol:
            return s + 1, maxd, shift
    return max_sweeps, maxd, shift
