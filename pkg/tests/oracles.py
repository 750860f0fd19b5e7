"""Independent reference implementations used to pin expected test values.

Everything here is deliberately slow and simple: dense grid searches,
brute-force column hashing, and direct numerical integration. None of it
shares code with the package under test.
"""
from itertools import combinations

import numpy as np
from scipy import integrate
from scipy.special import expit


# ---------------------------------------------------------------------------
# Penalized-regression grid oracle
# ---------------------------------------------------------------------------

def _profile_intercept_gaussian(x, y, betas, offset):
    """Optimal intercept for each candidate beta row (closed form)."""
    resid = y[None, :] - offset[None, :] - betas @ x.T
    return resid.mean(axis=1)


def _profile_intercept_logistic(x, y, betas, offset, iters=60):
    """Optimal intercept per candidate beta row by scalar Newton steps."""
    eta_base = offset[None, :] + betas @ x.T
    b0 = np.zeros(betas.shape[0])
    for _ in range(iters):
        p = expit(eta_base + b0[:, None])
        grad = (y[None, :] - p).mean(axis=1)
        hess = (p * (1 - p)).mean(axis=1)
        hess = np.maximum(hess, 1e-12)
        step = grad / hess
        b0 += step
        if np.max(np.abs(step)) < 1e-12:
            break
    return b0


def _objective(x, y, loss, betas, b0, offset, lam, weights):
    eta = offset[None, :] + betas @ x.T + b0[:, None]
    if loss == "gaussian":
        fit = 0.5 * ((y[None, :] - eta) ** 2).mean(axis=1)
    else:
        p = np.clip(expit(eta), 1e-12, 1 - 1e-12)
        fit = -(y[None, :] * np.log(p) + (1 - y[None, :]) * np.log(1 - p)).mean(axis=1)
    pen = lam * (np.abs(betas) * weights[None, :]).sum(axis=1)
    return fit + pen


def grid_lasso_oracle(x, y, loss, lam, weights=None, offset=None,
                      bound=5.0, final_step=5e-4):
    """Minimize (mean loss) + lam * sum_j w_j |beta_j| by hierarchical grid
    search over the penalized coefficients, profiling out the intercept.

    Works for up to 3 columns. The objective is convex, so shrinking the grid
    around the running argmin converges to the global optimum.

    Returns (beta, intercept, objective_value).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = x.shape
    if d > 3:
        raise ValueError("grid oracle supports at most 3 penalized columns")
    if weights is None:
        weights = np.ones(d)
    weights = np.asarray(weights, dtype=float)
    if offset is None:
        offset = np.zeros(n)

    centers = np.zeros(d)
    half = float(bound)
    step = half / 10.0
    best = None
    while True:
        axes = [np.arange(c - half, c + half + step / 2, step)
                for c in centers]
        # always include exact zero per axis: L1 solutions sit there
        axes = [np.unique(np.concatenate([ax, [0.0]])) for ax in axes]
        mesh = np.meshgrid(*axes, indexing="ij")
        betas = np.stack([m.ravel() for m in mesh], axis=1)
        finite = np.isfinite(weights)
        if not finite.all():
            keep = np.all(betas[:, ~finite] == 0.0, axis=1)
            betas = betas[keep]
        w_eff = np.where(finite, weights, 0.0)
        if loss == "gaussian":
            b0 = _profile_intercept_gaussian(x, y, betas, offset)
        else:
            b0 = _profile_intercept_logistic(x, y, betas, offset)
        vals = _objective(x, y, loss, betas, b0, offset, lam, w_eff)
        k = int(np.argmin(vals))
        best = (betas[k].copy(), float(b0[k]), float(vals[k]))
        centers = betas[k]
        if step <= final_step:
            return best
        half = 2.5 * step
        step = step / 5.0


# ---------------------------------------------------------------------------
# Basis / dedup oracle
# ---------------------------------------------------------------------------

def dedup_column_count_oracle(x, max_degree, thin=None):
    """Brute-force count of distinct non-constant indicator columns.

    Enumerates every coordinate subset up to max_degree and every candidate
    knot row, materializes each column, and counts unique column patterns.
    `thin` optionally maps each dimension's values onto a reduced value set
    first (list of arrays, one per dim, or None).
    """
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    xs = x.copy()
    if thin is not None:
        for j, vals in enumerate(thin):
            if vals is None:
                continue
            vals = np.sort(np.asarray(vals, dtype=float))
            idx = np.searchsorted(vals, xs[:, j], side="right") - 1
            xs[:, j] = vals[np.clip(idx, 0, len(vals) - 1)]
    seen = set()
    for size in range(1, max_degree + 1):
        for S in combinations(range(p), size):
            rows = {tuple(r) for r in xs[:, S]}
            for knot in rows:
                col = np.all(x[:, S] >= np.asarray(knot), axis=1)
                if col.all() or not col.any():
                    continue
                seen.add(col.tobytes())
    return len(seen)


# ---------------------------------------------------------------------------
# Simulation-DGP oracles
# ---------------------------------------------------------------------------

def dgp_propensity(w):
    w = np.asarray(w, dtype=float)
    return expit(0.5 - w[..., 2] + 2.0 * w[..., 2] * w[..., 1]
                 - 2.5 * w[..., 3])


def dgp_outcome_mean(w, a):
    w = np.asarray(w, dtype=float)
    w1 = w[..., 0]
    return expit(-2.0 * w1 * (w1 > -0.5) - w[..., 2]
                 + 2.0 * w[..., 1] * w[..., 2] + a)


def true_ate_quadrature():
    """E[Q(1,W) - Q(0,W)] by direct integration over the DGP covariate law.

    W2 in {0,1} each w.p. 1/2; W1, W3 ~ U(-1,1); W4 plays no role in the
    outcome. The integrand separates over (W1) and (W2, W3).
    """
    def mean_q(a):
        total = 0.0
        for w2 in (0, 1):
            def f(w3, w1):
                return expit(-2.0 * w1 * (w1 > -0.5) - w3 + 2.0 * w2 * w3 + a)
            val, _ = integrate.dblquad(f, -1, 1, -1, 1, epsabs=1e-12,
                                       epsrel=1e-12)
            total += 0.5 * val / 4.0
        return total

    return mean_q(1.0) - mean_q(0.0)


def true_arm_mean_quadrature(a):
    """E[Q(a, W)] by the same integration."""
    total = 0.0
    for w2 in (0, 1):
        def f(w3, w1):
            return expit(-2.0 * w1 * (w1 > -0.5) - w3 + 2.0 * w2 * w3 + a)
        val, _ = integrate.dblquad(f, -1, 1, -1, 1, epsabs=1e-12,
                                   epsrel=1e-12)
        total += 0.5 * val / 4.0
    return total


# ---------------------------------------------------------------------------
# Small-model oracles
# ---------------------------------------------------------------------------

def stratified_ate_oracle(w_binary, a, y):
    """Exact nonparametric ATE for a single binary covariate: within-stratum
    arm-mean differences averaged over the covariate distribution."""
    w_binary = np.asarray(w_binary)
    a = np.asarray(a)
    y = np.asarray(y, dtype=float)
    out = 0.0
    for lvl in (0, 1):
        m = w_binary == lvl
        if not m.any():
            continue
        y1 = y[m & (a == 1)].mean()
        y0 = y[m & (a == 0)].mean()
        out += m.mean() * (y1 - y0)
    return out


def stratified_ate_cells_oracle(w, a, y):
    """Exact nonparametric ATE over the cells of a discrete covariate
    matrix: within-cell arm-mean differences weighted by cell frequency.
    Every cell must contain both arms."""
    w = np.asarray(w, dtype=float)
    a = np.asarray(a)
    y = np.asarray(y, dtype=float)
    out = 0.0
    for cell in np.unique(w, axis=0):
        m = np.all(w == cell, axis=1)
        out += m.mean() * (y[m & (a == 1)].mean() - y[m & (a == 0)].mean())
    return out


def offset_logistic_eps_oracle(h, y, offset, lo=-10.0, hi=10.0):
    """1-D fluctuation coefficient by dense golden-ratio-free grid refinement
    of the offset-logistic likelihood."""
    h = np.asarray(h, dtype=float)
    y = np.asarray(y, dtype=float)
    offset = np.asarray(offset, dtype=float)

    def nll(eps):
        p = np.clip(expit(offset[None, :] + eps[:, None] * h[None, :]),
                    1e-12, 1 - 1e-12)
        return -(y[None, :] * np.log(p)
                 + (1 - y[None, :]) * np.log(1 - p)).mean(axis=1)

    center, half = 0.0, max(abs(lo), abs(hi))
    for _ in range(12):
        eps = np.linspace(center - half, center + half, 201)
        vals = nll(eps)
        center = float(eps[int(np.argmin(vals))])
        half = half / 50.0
    return center
