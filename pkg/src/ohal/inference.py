"""Variance estimation, Wald intervals, and a percentile bootstrap.

Two variance estimators back the Wald intervals for the targeted
estimators: the plain influence-function variance, and a partially
cross-validated variant that re-evaluates the influence function on each
validation fold using the nuisance fits trained without that fold. The
latter reuses fits the cross-validated lasso selections already produced,
so it costs essentially nothing extra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .data import Dataset
from .nuisance import NuisanceBundle
from .tmle import AteResult, d_r, eif

__all__ = [
    "CiResult",
    "if_variance",
    "fold_influence",
    "cv_if_variance",
    "wald_ci",
    "bootstrap_percentile",
    "bootstrap_percentile_many",
    "ate_inference",
]

_METHODS = ("if", "cv_if", "plain_if", "bootstrap")


@dataclass(frozen=True)
class CiResult:
    """A confidence interval with its standard-error provenance."""

    lower: float
    upper: float
    level: float
    se: float
    method: str

    def __post_init__(self):
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        if self.lower > self.upper:
            raise ValueError("lower bound exceeds upper bound")
        if self.se < 0.0:
            raise ValueError("se must be non-negative")
        if self.method not in _METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def width(self) -> float:
        return self.upper - self.lower


def if_variance(eif_values) -> float:
    """Empirical variance (divisor n) of influence values."""
    vals = np.asarray(eif_values, dtype=np.float64)
    if vals.ndim != 1 or vals.size < 2:
        raise ValueError("need at least 2 influence values")
    return float(np.mean((vals - vals.mean()) ** 2))


def fold_influence(d: Dataset, bundle: NuisanceBundle) -> np.ndarray:
    """Influence values with each row evaluated by its held-out fold fits.

    For a row in validation fold v, D - D_r is computed from the fold-v
    (untargeted) outcome, propensity, and reduced fits; the plug-in term
    inside D uses the full-sample mean of the fold-v outcome predictions.
    """
    if len(bundle.fold_bundles) == 0:
        raise ValueError("bundle carries no fold fits")
    folds = bundle.folds
    v = int(folds.max()) + 1
    if len(bundle.fold_bundles) != v:
        raise ValueError("missing fold bundle")
    out = np.empty(d.n)
    for k, fb in enumerate(bundle.fold_bundles):
        va = folds == k
        q_v = fb.qbar(d.w)
        psi_v = float(q_v.mean())
        wk = d.w[va]
        a_k, y_k, q_k = d.a[va], d.y[va], q_v[va]
        out[va] = eif(a_k, y_k, q_k, fb.gbar(wk), psi_v) \
            - d_r(a_k, y_k, q_k, fb.g_r1(wk), fb.g_r2(wk))
    return out


def cv_if_variance(values, folds) -> float:
    """Average of per-validation-fold empirical variances.

    Args:
        values: per-observation influence values, already evaluated with
            held-out fits (see fold_influence).
        folds: validation-fold assignment partitioning the rows.
    """
    vals = np.asarray(values, dtype=np.float64)
    folds = np.asarray(folds)
    if vals.shape != folds.shape:
        raise ValueError("values and folds must align")
    v = int(folds.max()) + 1
    total = 0.0
    for k in range(v):
        vk = vals[folds == k]
        if vk.size == 0:
            raise ValueError("validation folds must partition the rows")
        total += float(np.mean((vk - vk.mean()) ** 2))
    return total / v


def wald_ci(psi: float, variance: float, n: int, alpha: float = 0.05,
            method: str = "if") -> CiResult:
    """Wald interval psi +/- z_{1-alpha/2} sqrt(variance / n)."""
    if variance < 0.0:
        raise ValueError("variance must be non-negative")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    se = float(np.sqrt(variance))
    half = norm.ppf(1.0 - alpha / 2.0) * se / np.sqrt(n)
    return CiResult(lower=float(psi - half), upper=float(psi + half),
                    level=1.0 - alpha, se=se, method=method)


def bootstrap_percentile_many(estimators: dict, d: Dataset, b: int = 500,
                              seed: int = 0, alpha: float = 0.05) -> dict:
    """Percentile bootstrap for several estimators sharing resamples.

    Rows are resampled with replacement b times with per-replicate seeded
    streams; every estimator (a Dataset -> real callable, keyed by name)
    sees the same resample, so estimators caching an expensive shared fit
    per dataset pay for it once. Each interval takes the empirical
    alpha/2 and 1 - alpha/2 quantiles (linear interpolation) of that
    estimator's replicate values. Replicates where an estimator raises
    are skipped and counted for that estimator alone.

    Raises:
        RuntimeError: an estimator failed on more than 10 percent of
            replicates.
    """
    if b < 2:
        raise ValueError("need at least 2 bootstrap replicates")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if len(estimators) == 0:
        raise ValueError("need at least one estimator")
    estimates = {name: [] for name in estimators}
    failures = {name: 0 for name in estimators}
    for r in range(b):
        rng = np.random.default_rng((seed, 104729, r))
        idx = rng.integers(0, d.n, d.n)
        resample = Dataset(w=d.w[idx], a=d.a[idx], y=d.y[idx],
                           column_names=d.column_names)
        for name, estimator in estimators.items():
            try:
                estimates[name].append(float(estimator(resample)))
            except (ValueError, RuntimeError):
                failures[name] += 1
    out = {}
    for name in estimators:
        if failures[name] > 0.1 * b:
            raise RuntimeError(
                f"bootstrap failed on {failures[name]} of {b} replicates "
                f"for {name}")
        vals = estimates[name]
        lo, hi = np.quantile(vals, [alpha / 2.0, 1.0 - alpha / 2.0])
        se = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        out[name] = CiResult(lower=float(lo), upper=float(hi),
                             level=1.0 - alpha, se=se, method="bootstrap")
    return out


def bootstrap_percentile(estimator, d: Dataset, b: int = 500, seed: int = 0,
                         alpha: float = 0.05) -> CiResult:
    """Percentile bootstrap interval for a single Dataset -> real
    estimator; see bootstrap_percentile_many."""
    return bootstrap_percentile_many({"estimate": estimator}, d, b, seed,
                                     alpha)["estimate"]


def ate_inference(d: Dataset, result: AteResult,
                  alpha: float = 0.05) -> tuple[CiResult, CiResult]:
    """Plain and partially cross-validated Wald intervals for an ATE fit."""
    ci_plain = wald_ci(result.psi, if_variance(result.eif_values), d.n,
                       alpha, method="if")
    vals = fold_influence(d, result.arm1.bundle) \
        - fold_influence(d.relabel_treatment(), result.arm0.bundle)
    ci_cv = wald_ci(result.psi, cv_if_variance(vals, result.folds), d.n,
                    alpha, method="cv_if")
    return ci_plain, ci_cv
