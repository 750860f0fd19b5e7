"""Weighted-penalty L1 path solver for logistic and gaussian loss.

The solver minimizes, over an intercept and coefficient vector,

    (mean loss) + lambda * sum_j w_j |beta_j|

along a decreasing lambda path with warm starts. Loss terms are mean-scaled:
(1/n) negative log-likelihood for logistic, (1/(2n)) squared error for
gaussian. Infinite penalty weights are implemented as hard column exclusion.

Per path point the solver runs IRLS rounds; each quadratic subproblem is
attacked by short coordinate-descent bursts interleaved with exact penalized
least-squares solves on the current active set (Cholesky on a cached weighted
Gram matrix, with LARS-style sign projection). The exact solves are what keep
heavily collinear indicator designs tractable; plain cyclic descent on them
needs millions of sweeps to move correlated coefficient blocks. Every
returned fit carries a KKT certificate (kkt_gap) computed from the exact
score vector; budget-exhausted fits are flagged via converged=False rather
than silently returned.

An unpenalized IRLS fitter for low-dimensional logistic models lives here
too (irls_fit).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg as sla
from scipy.special import expit, logit

from ._kernels import cd_burst

# floor for IRLS working probabilities/weights
PMIN = 1e-5


class SolverError(RuntimeError):
    """Unrecoverable solver failure, such as irreparably degenerate CV folds."""


def soft_threshold(z, t):
    """L1 proximal step: sign(z) * max(|z| - t, 0). Accepts scalars or arrays."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0):
        raise ValueError("threshold must be non-negative")
    out = np.sign(z) * np.maximum(np.abs(z) - t_arr, 0.0)
    return float(out) if np.isscalar(z) else out


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty configuration for one fit.

    Attributes:
        weights: non-negative per-column weights; np.inf pins a coefficient
            to zero; None means all ones. The intercept is never penalized.
        lambda_path: strictly decreasing positive grid; None lets fit_path
            build the default grid from the data.
        gamma: weight exponent recorded by upstream callers (bookkeeping
            only; the solver uses weights as given).
    """
    weights: np.ndarray | None = None
    lambda_path: np.ndarray | None = None
    gamma: float = 0.0


@dataclass(frozen=True)
class PathControl:
    """Solver tolerances and budgets.

    tol_coef: inner stop, max coefficient change per sweep.
    tol_dev: outer IRLS stop, absolute deviance change.
    kkt_tol: certificate tolerance on the score vector.
    max_sweeps: coordinate sweep budget per path point.
    max_irls: IRLS round budget per path point (logistic only).
    max_kkt_rounds: screening/violator-admission cycles per path point.
    max_solves: exact active-set solves per path point.
    dev_ratio_max: truncate the path once 1 - dev/dev_null exceeds this.
    min_dev_gain: truncate on relative deviance-gain stall between points.
    burst: sweeps per coordinate-descent burst between exact solves.
    n_lambda / lambda_min_ratio: default grid shape.
    """
    tol_coef: float = 1e-7
    tol_dev: float = 1e-6
    kkt_tol: float = 1e-6
    max_sweeps: int = 10_000
    max_irls: int = 50
    max_kkt_rounds: int = 40
    max_solves: int = 30
    dev_ratio_max: float = 0.90
    min_dev_gain: float = 1e-5
    burst: int = 8
    n_lambda: int = 100
    lambda_min_ratio: float = 1e-4


@dataclass(frozen=True)
class PenalizedFit:
    """One solved path point (or the CV-selected fit).

    beta is dense with exact zeros; excluded (infinite-weight) columns are
    always zero. kkt_gap is the largest violation of the stationarity
    conditions at the returned coefficients; converged means
    kkt_gap <= kkt_tol within budget. cv_folds/fold_fits/cv_loss are set
    only on fits returned by cv_fit.
    """
    intercept: float
    beta: np.ndarray
    lambda_selected: float
    loss: str
    offset_used: bool
    kkt_gap: float
    converged: bool
    lambda_index: int
    dev_ratio: float
    sweeps: int
    cv_folds: np.ndarray | None = None
    fold_fits: tuple | None = None
    lambda_path: np.ndarray | None = None
    cv_loss: np.ndarray | None = None

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.beta))

    def linear_predictor(self, x, offset=None) -> np.ndarray:
        eta = np.asarray(x, dtype=np.float64) @ self.beta + self.intercept
        if offset is not None:
            eta = eta + offset
        return eta

    def predict(self, x, offset=None) -> np.ndarray:
        """Fitted mean: expit(eta) for logistic loss, eta for gaussian."""
        eta = self.linear_predictor(x, offset)
        return expit(eta) if self.loss == "logistic" else eta


def _nll(y, eta, loss):
    if loss == "logistic":
        p = np.clip(expit(eta), 1e-12, 1.0 - 1e-12)
        return float(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean())
    r = y - eta
    return float(0.5 * (r * r).mean())


def _intercept_mle(y, loss, offset):
    if loss == "gaussian":
        return float((y - offset).mean())
    if not offset.any():
        return float(logit(np.clip(y.mean(), PMIN, 1.0 - PMIN)))
    b0 = 0.0
    for _ in range(60):
        p = expit(offset + b0)
        grad = float((y - p).mean())
        hess = max(float((p * (1.0 - p)).mean()), 1e-12)
        step = grad / hess
        b0 += step
        if abs(step) < 1e-13:
            break
    return b0


def lambda_grid(x, y, loss, weights=None, offset=None, n_lambda=100,
                min_ratio=1e-4):
    """Default log-spaced grid from lambda_max down to min_ratio*lambda_max.

    lambda_max is the largest |score_j| / w_j at the intercept-only model
    over columns with finite positive weight; at that level every penalized
    coefficient is exactly zero. Falls back to 1.0 when degenerate (no
    eligible columns, or the null model already has zero score).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    w = np.ones(x.shape[1]) if weights is None else np.asarray(
        weights, dtype=np.float64)
    off = np.zeros(n) if offset is None else np.asarray(offset,
                                                        dtype=np.float64)
    b0 = _intercept_mle(y, loss, off)
    mu = expit(off + b0) if loss == "logistic" else off + b0
    g = x.T @ (y - mu) / n
    ok = np.isfinite(w) & (w > 0)
    lam_max = float(np.max(np.abs(g[ok]) / w[ok])) if ok.any() else 0.0
    if not np.isfinite(lam_max) or lam_max <= 0.0:
        lam_max = 1.0
    # nudge above the exact entry point so every coefficient is exactly zero
    # at the top of the grid despite division/multiplication roundoff
    lam_max *= 1.0 + 1e-9
    return np.geomspace(lam_max, min_ratio * lam_max, n_lambda)


class _GramCache:
    """Weighted Gram columns over the ever-active set of one IRLS quadratic.

    Rebuilding X_A' V X_A from scratch for every exact solve dominates the
    runtime; caching it and growing by blocks as the active set expands makes
    repeated solves nearly free.
    """

    def __init__(self, x):
        self.x = x
        d = x.shape[1]
        cap = min(max(64, d + 1), 512)
        self.pos = np.full(d, -1, np.int64)
        self.ea = np.empty(cap, np.int64)
        self.k = 0
        self.g = np.empty((cap, cap))
        self.c1 = np.empty(cap)
        self.v = None
        self.sv = 0.0
        self.cap = cap

    def reset(self, v):
        self.v = v
        self.sv = float(v.sum())
        self.k = 0
        self.pos[:] = -1

    def ensure(self, cols):
        x, v = self.x, self.v
        n = x.shape[0]
        new = [j for j in cols if self.pos[j] < 0]
        if not new:
            return
        if self.k + len(new) > self.cap:
            grow = max(self.cap * 2, self.k + len(new) + 64)
            g2 = np.empty((grow, grow))
            g2[:self.k, :self.k] = self.g[:self.k, :self.k]
            self.g = g2
            c2 = np.empty(grow)
            c2[:self.k] = self.c1[:self.k]
            self.c1 = c2
            e2 = np.empty(grow, np.int64)
            e2[:self.k] = self.ea[:self.k]
            self.ea = e2
            self.cap = grow
        xn = x[:, new]
        xv = xn * v[:, None]
        m = len(new)
        if self.k:
            blk = xv.T @ x[:, self.ea[:self.k]] / n
            self.g[self.k:self.k + m, :self.k] = blk
            self.g[:self.k, self.k:self.k + m] = blk.T
        self.g[self.k:self.k + m, self.k:self.k + m] = xv.T @ xn / n
        self.c1[self.k:self.k + m] = xv.sum(axis=0) / n
        for i, j in enumerate(new):
            self.pos[j] = self.k + i
            self.ea[self.k + i] = j
        self.k += m


def _active_solve(cache, active, beta, z, v, lam, pen_w, t):
    """Exact penalized solve on the active set at the current signs.

    Solves the stationarity system for the quadratic subproblem, dropping
    coordinates whose solution flips sign (up to 4 rounds), and accepts the
    move only if the penalized quadratic objective does not increase. On
    acceptance beta and t are updated in place and the new intercept is
    returned; otherwise returns None and leaves the state untouched.
    """
    x = cache.x
    n = x.shape[0]
    a = list(active)
    for _ in range(4):
        k = len(a)
        if k == 0 or k + 1 > 4000:
            return None
        cache.ensure(a)
        sel = cache.pos[a]
        m = np.empty((k + 1, k + 1))
        m[:k, :k] = cache.g[np.ix_(sel, sel)]
        m[:k, k] = cache.c1[sel]
        m[k, :k] = cache.c1[sel]
        m[k, k] = cache.sv / n
        s = np.sign(beta[a])
        rhs = np.empty(k + 1)
        rhs[:k] = x[:, a].T @ (v * z) / n - lam * pen_w[a] * s
        rhs[k] = float((v * z).sum()) / n
        try:
            c = sla.cho_factor(m, lower=True, check_finite=False)
            sol = sla.cho_solve(c, rhs, check_finite=False)
        except sla.LinAlgError:
            eps = 1e-10 * max(np.trace(m), 1e-30) / (k + 1)
            try:
                c = sla.cho_factor(m + eps * np.eye(k + 1), lower=True,
                                   check_finite=False)
            except sla.LinAlgError:
                return None
            sol = sla.cho_solve(c, rhs, check_finite=False)
            for _ in range(3):
                sol += sla.cho_solve(c, rhs - m @ sol, check_finite=False)
        flip = np.sign(sol[:k]) * s < 0
        if not flip.any():
            new_b0 = float(sol[k])
            t_new = z - x[:, a] @ sol[:k] - new_b0
            f_old = 0.5 * float((v * t * t).mean()) + lam * float(
                (pen_w[active] * np.abs(beta[active])).sum())
            f_new = 0.5 * float((v * t_new * t_new).mean()) + lam * float(
                (pen_w[a] * np.abs(sol[:k])).sum())
            if f_new > f_old + 1e-12:
                return None
            beta[active] = 0.0
            beta[a] = sol[:k]
            t[:] = t_new
            return new_b0
        a = [j for j, fl in zip(a, flip) if not fl]
    return None


def _solve_path(x, y, loss, pw, lams, off, ctl):
    """Warm-started path solve on a design with finite weights only.

    Returns a list of dicts, one per solved path point; the path may stop
    early on the deviance-ratio cap or on a deviance-gain stall.
    """
    n, d = x.shape
    beta = np.zeros(d)
    b0 = _intercept_mle(y, loss, off)
    eta = off + b0
    nll_null = max(_nll(y, eta, loss), 1e-30)
    if loss == "logistic":
        resid = y - expit(eta)
    else:
        resid = y - eta
    grad = x.T @ resid / n if d else np.zeros(0)
    cache = _GramCache(x)
    gaussian_cached = False
    out = []
    prev_devr = 0.0
    max_irls = ctl.max_irls if loss == "logistic" else 1
    for li, lam in enumerate(lams):
        lam_prev = lams[li - 1] if li else lam
        work_mask = (beta != 0) | (np.abs(grad) >= pw * (2.0 * lam - lam_prev))
        sweeps_tot = 0
        nsolve = 0
        converged = False
        gap = np.inf
        tol_eff = ctl.tol_coef
        for _ in range(ctl.max_kkt_rounds):
            for _ in range(max_irls):
                if loss == "logistic":
                    p_exact = expit(eta)
                    pc = np.clip(p_exact, PMIN, 1.0 - PMIN)
                    # floor only the curvature; the exact residual in the
                    # numerator keeps the IRLS fixed point at the true
                    # stationarity conditions
                    v = pc * (1.0 - pc)
                    t = (y - p_exact) / v
                    cache.reset(v)
                else:
                    v = np.ones(n)
                    t = y - eta
                    if not gaussian_cached:
                        cache.reset(v)
                        gaussian_cached = True
                obj_before = _nll(y, eta, loss) + lam * float(
                    (pw * np.abs(beta)).sum())
                beta_in = beta.copy()
                b0_in = b0
                eta_in = eta
                z = (eta - off) + t
                work = np.flatnonzero(work_mask)
                q = np.zeros(d)
                if work.size:
                    xw = x[:, work]
                    q[work] = np.einsum("i,ij,ij->j", v, xw, xw) / n
                sw, maxd, shift = cd_burst(x, work, beta, lam, pw, v, t, q,
                                           ctl.burst, tol_eff)
                sweeps_tot += sw
                b0 += shift
                while maxd > tol_eff and sweeps_tot < ctl.max_sweeps:
                    if nsolve < ctl.max_solves:
                        active = np.flatnonzero(beta)
                        nb0 = _active_solve(cache, active, beta, z, v, lam,
                                            pw, t)
                        nsolve += 1
                        if nb0 is not None:
                            b0 = nb0
                        sw, maxd, shift = cd_burst(x, work, beta, lam, pw, v,
                                                   t, q, ctl.burst, tol_eff)
                    else:
                        sw, maxd, shift = cd_burst(x, work, beta, lam, pw, v,
                                                   t, q, 200, tol_eff)
                        if sw == 200:
                            sweeps_tot += sw
                            b0 += shift
                            break
                    sweeps_tot += sw
                    b0 += shift
                eta = off + (z - t)
                obj_after = _nll(y, eta, loss) + lam * float(
                    (pw * np.abs(beta)).sum())
                if loss == "logistic" and obj_after > obj_before + 1e-10:
                    # quadratic approximation overshot; keep the better point
                    beta = beta_in
                    b0 = b0_in
                    eta = eta_in
                    break
                if abs(obj_before - obj_after) <= ctl.tol_dev \
                        or sweeps_tot >= ctl.max_sweeps:
                    break
            if loss == "logistic":
                resid = y - expit(eta)
            else:
                resid = y - eta
            grad = x.T @ resid / n if d else np.zeros(0)
            gap = abs(float(resid.mean()))
            nz = beta != 0
            if nz.any():
                gap = max(gap, float(np.abs(
                    grad[nz] - lam * pw[nz] * np.sign(beta[nz])).max()))
            if (~nz).any():
                gap = max(gap, max(float(
                    (np.abs(grad[~nz]) - lam * pw[~nz]).max()), 0.0))
            viol = ~nz & (np.abs(grad) - lam * pw > ctl.kkt_tol) & ~work_mask
            if viol.any() and sweeps_tot < ctl.max_sweeps:
                work_mask |= viol
                continue
            if gap <= ctl.kkt_tol:
                converged = True
                break
            # near miss: tighten the inner tolerance and polish again
            if sweeps_tot < ctl.max_sweeps and tol_eff > 1e-12:
                tol_eff *= 0.01
                continue
            break
        devr = 1.0 - _nll(y, eta, loss) / nll_null
        out.append(dict(beta=beta.copy(), intercept=b0, lam=float(lam),
                        lambda_index=li, kkt_gap=float(gap),
                        converged=bool(converged), sweeps=int(sweeps_tot),
                        dev_ratio=float(devr)))
        if devr > ctl.dev_ratio_max or (
                li and devr - prev_devr < ctl.min_dev_gain * max(devr, 1e-12)):
            break
        prev_devr = devr
    return out


def fit_path(x, y, loss, pen, offset=None, control=None):
    """Solve the weighted-L1 path for one design.

    Args:
        x: design matrix (n, d); indicator designs are the intended use but
            any real matrix works.
        y: response; in [0, 1] for logistic loss (fractional values allowed).
        loss: "logistic" or "gaussian".
        pen: PenaltySpec; infinite weights exclude columns outright.
        offset: optional fixed per-observation addition to the linear
            predictor.
        control: PathControl overrides.

    Returns:
        list of PenalizedFit, one per solved path point (warm-started, in
        path order; possibly shorter than the grid due to truncation).
    """
    ctl = control or PathControl()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("design must be 2-dimensional")
    n, d = x.shape
    if y.shape != (n,):
        raise ValueError("response length must match design rows")
    if loss not in ("logistic", "gaussian"):
        raise ValueError(f"unknown loss {loss!r}")
    if loss == "logistic" and (y.min() < 0.0 or y.max() > 1.0):
        raise ValueError("logistic loss needs y in [0, 1]")
    w = np.ones(d) if pen.weights is None else np.asarray(pen.weights,
                                                          dtype=np.float64)
    if w.shape != (d,):
        raise ValueError("penalty weights length must match design columns")
    if np.any(w < 0) or np.any(np.isnan(w)):
        raise ValueError("penalty weights must be non-negative")
    if offset is not None and np.shape(offset) != (n,):
        raise ValueError("offset length must match design rows")
    if pen.lambda_path is None:
        lams = lambda_grid(x, y, loss, w, offset, ctl.n_lambda,
                           ctl.lambda_min_ratio)
    else:
        lams = np.asarray(pen.lambda_path, dtype=np.float64)
        if lams.ndim != 1 or lams.size == 0 or np.any(lams <= 0):
            raise ValueError("lambda path must be positive and non-empty")
        if lams.size > 1 and not np.all(np.diff(lams) < 0):
            raise ValueError("lambda path must be strictly decreasing")
    off = np.zeros(n) if offset is None else np.asarray(offset,
                                                        dtype=np.float64)
    if off.shape != (n,):
        raise ValueError("offset length must match design rows")
    keep = np.isfinite(w)
    xs = np.asfortranarray(x if keep.all() else x[:, keep])
    raw = _solve_path(xs, y, loss, w[keep], lams, off, ctl)
    fits = []
    for r in raw:
        beta = np.zeros(d)
        beta[keep] = r["beta"]
        fits.append(PenalizedFit(
            intercept=float(r["intercept"]), beta=beta,
            lambda_selected=r["lam"], loss=loss,
            offset_used=offset is not None, kkt_gap=r["kkt_gap"],
            converged=r["converged"], lambda_index=r["lambda_index"],
            dev_ratio=r["dev_ratio"], sweeps=r["sweeps"]))
    return fits


def _fold_assignment(n, v, seed, attempt):
    entropy = seed if attempt == 0 else (seed, 7919, attempt)
    rng = np.random.default_rng(entropy)
    perm = rng.permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % v
    return folds


def _degenerate(y, folds, v):
    for k in range(v):
        yk = y[folds == k]
        if yk.size == 0 or yk.min() == yk.max():
            return True
    return False


def cv_fit(x, y, loss, weights=None, v=5, seed=0, offset=None, control=None,
           folds=None, fold_weights=None, rule="min"):
    """Cross-validated path fit: select lambda, refit on all data.

    The grid is built from the full data; each training fold solves the same
    grid so validation losses align by index. Selection minimizes the pooled
    held-out loss; ties go to the largest lambda. The returned fit is the
    full-data path point at the selected lambda, carrying the fold
    assignment and the v fold fits at that same lambda.

    Args:
        x, y, loss, offset, control: as in fit_path.
        weights: penalty weights for the full-data fit (None = ones).
        v: fold count (>= 2, <= n).
        seed: fold-assignment seed.
        folds: optional explicit assignment in {0..v-1}; skips reseeding.
        fold_weights: optional per-fold penalty weight vectors (length v)
            used for the fold paths in place of `weights`, for callers whose
            weights are themselves estimated and must be re-estimated on
            training data.
        rule: "min" selects the loss-minimizing lambda; "1se" selects the
            largest lambda whose fold-averaged loss is within one standard
            error (across folds) of the minimum, favoring sparser fits.

    Raises:
        SolverError: if under logistic loss any fold is single-class after
            10 reseeds (or with explicit folds).
    """
    if rule not in ("min", "1se"):
        raise ValueError(f"unknown selection rule {rule!r}")
    ctl = control or PathControl()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if not isinstance(v, (int, np.integer)) or v < 2:
        raise ValueError("need at least 2 folds")
    if n < v:
        raise ValueError("more folds than observations")
    off = None if offset is None else np.asarray(offset, dtype=np.float64)
    w = np.ones(x.shape[1]) if weights is None else np.asarray(
        weights, dtype=np.float64)
    if fold_weights is not None and len(fold_weights) != v:
        raise ValueError("fold_weights must have one entry per fold")

    if folds is not None:
        folds = np.asarray(folds, dtype=np.int64)
        if folds.shape != (n,) or folds.min() < 0 or folds.max() >= v:
            raise ValueError("fold assignment must map each row to 0..v-1")
        if loss == "logistic" and _degenerate(y, folds, v):
            raise SolverError("a fold has a single outcome class")
    else:
        for attempt in range(11):
            cand = _fold_assignment(n, v, seed, attempt)
            if loss != "logistic" or not _degenerate(y, cand, v):
                folds = cand
                break
        else:
            raise SolverError(
                "could not build folds with both outcome classes in every "
                "fold after 10 reseeds")

    lams = lambda_grid(x, y, loss, w, off, ctl.n_lambda, ctl.lambda_min_ratio)
    full = fit_path(x, y, loss, PenaltySpec(w, lams), off, ctl)
    n_usable = len(full)
    paths = []
    for k in range(v):
        tr = folds != k
        wk = w if fold_weights is None else np.asarray(fold_weights[k],
                                                       dtype=np.float64)
        off_tr = None if off is None else off[tr]
        pk = fit_path(x[tr], y[tr], loss, PenaltySpec(wk, lams), off_tr, ctl)
        paths.append(pk)
        n_usable = min(n_usable, len(pk))

    val = np.zeros(n_usable)
    fold_means = np.zeros((v, n_usable))
    for k in range(v):
        va = folds == k
        xv = x[va]
        yv = y[va]
        bmat = np.stack([f.beta for f in paths[k][:n_usable]], axis=1)
        b0s = np.array([f.intercept for f in paths[k][:n_usable]])
        eta = xv @ bmat + b0s[None, :]
        if off is not None:
            eta += off[va][:, None]
        if loss == "logistic":
            p = np.clip(expit(eta), 1e-12, 1.0 - 1e-12)
            cell = -(yv[:, None] * np.log(p)
                     + (1.0 - yv[:, None]) * np.log(1.0 - p))
        else:
            cell = 0.5 * (yv[:, None] - eta) ** 2
        total = cell.sum(axis=0)
        fold_means[k] = total / max(int(va.sum()), 1)
        val += total
    val /= n
    sel = int(np.argmin(val))
    if rule == "1se":
        mean_across = fold_means.mean(axis=0)
        se = float(fold_means[:, sel].std(ddof=1)) / np.sqrt(v)
        sel = int(np.argmax(mean_across <= mean_across[sel] + se))
    return replace(full[sel],
                   cv_folds=folds,
                   fold_fits=tuple(paths[k][sel] for k in range(v)),
                   lambda_path=lams,
                   cv_loss=val)


@dataclass(frozen=True)
class IrlsFit:
    """Unpenalized logistic MLE result.

    flagged means separation was detected (some |coefficient| exceeded the
    cap during iteration) and coefficients were capped.
    """
    coef: np.ndarray
    converged: bool
    flagged: bool
    n_iter: int


def irls_fit(x, y, tol=1e-8, max_iter=100, cap=20.0):
    """Newton-Raphson logistic MLE for low-dimensional designs.

    The design must carry its own intercept column if one is wanted. Iterates
    to max |score| <= tol with step halving; separation (|coef| > cap on the
    logit scale) stops iteration with capped, flagged coefficients.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError("design/response shapes do not match")
    n, d = x.shape
    coef = np.zeros(d)
    for it in range(1, max_iter + 1):
        eta = x @ coef
        p = expit(eta)
        g = x.T @ (y - p) / n
        if float(np.abs(g).max()) <= tol:
            return IrlsFit(coef, True, False, it - 1)
        w = np.maximum(p * (1.0 - p), 1e-10)
        h = (x * w[:, None]).T @ x / n
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(h, g, rcond=None)[0]
        nll0 = _nll(y, eta, "logistic")
        scale = 1.0
        new = coef + step
        for _ in range(30):
            new = coef + scale * step
            if _nll(y, x @ new, "logistic") <= nll0 + 1e-12:
                break
            scale *= 0.5
        coef = new
        if np.any(np.abs(coef) > cap):
            coef = np.clip(coef, -cap, cap)
            return IrlsFit(coef, False, True, it)
    return IrlsFit(coef, False, False, max_iter)
