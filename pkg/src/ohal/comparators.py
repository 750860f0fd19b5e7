"""Reference ATE estimators: parametric GLMs, adaptive-lasso propensity
variants, and the plain nonparametric TMLE.

These provide the comparison points for the doubly robust targeted
estimator: G-computation and inverse-probability weighting with
user-specified logistic models, their counterparts built on a main-terms
adaptive-lasso propensity, and a one-covariate TMLE with unweighted
indicator-basis fits for both nuisances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .data import Dataset
from .inference import (CiResult, bootstrap_percentile, cv_if_variance,
                        if_variance, wald_ci)
from .nuisance import (OhalConfig, fit_outcome_hal, fit_propensity_hal,
                       ohal_weights, shared_folds)
from .solver import cv_fit, irls_fit
from .tmle import eif, offset_logistic_mle

__all__ = [
    "OAL_GAMMA",
    "ModelSpec",
    "ComparatorResult",
    "HalTmleResult",
    "main_terms_spec",
    "hajek",
    "gcomp_glm",
    "iptw_glm",
    "oal_fit",
    "oal_propensity",
    "onestep_arm",
    "iptw_oal",
    "tmle_oal",
    "tmle_oal_point",
    "tmle_hal",
]

# Default weight exponent for the main-terms adaptive-lasso propensity.
# Sharper than the indicator-basis default because the screening role of
# this estimator needs near-zero outcome coefficients to translate into
# effectively infinite penalties.
OAL_GAMMA = 3.0

_PCLIP = 1e-12
_LABELS = ("correct", "main_terms")
_W_KINDS = ("col", "prod", "gate")


def _w_term(w, t) -> np.ndarray:
    if t[0] == "col":
        return w[:, t[1]]
    if t[0] == "prod":
        return w[:, t[1]] * w[:, t[2]]
    return w[:, t[1]] * (w[:, t[1]] > t[2])


@dataclass(frozen=True)
class ModelSpec:
    """A parametric design built from covariate transforms.

    Each term is a tuple: ("col", j) for raw column j, ("prod", j, k) for
    the product of columns j and k, ("gate", j, t) for column j gated by
    the indicator of exceeding threshold t, ("treat",) for the treatment
    indicator itself, and ("treat", inner) for the treatment times one of
    the covariate terms. Treatment terms are valid in outcome models only.
    """

    terms: tuple
    label: str

    def __post_init__(self):
        if len(self.terms) == 0:
            raise ValueError("terms must be non-empty")
        if self.label not in _LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        for t in self.terms:
            if t[0] in _W_KINDS:
                continue
            if t[0] != "treat":
                raise ValueError(f"unknown term kind {t[0]!r}")
            if len(t) == 2 and t[1][0] not in _W_KINDS:
                raise ValueError("treat terms may only wrap covariate terms")

    @property
    def has_treatment(self) -> bool:
        return any(t[0] == "treat" for t in self.terms)

    def design(self, w, a=None) -> np.ndarray:
        """Evaluate the terms column-wise on covariate rows w.

        Treatment values a are required when the spec contains treatment
        terms; pass the counterfactual level to build potential-outcome
        designs.
        """
        w = np.asarray(w, dtype=np.float64)
        cols = []
        for t in self.terms:
            if t[0] == "treat":
                if a is None:
                    raise ValueError(
                        "spec contains treatment terms but no treatment "
                        "values were given")
                av = np.broadcast_to(np.asarray(a, dtype=np.float64),
                                     w.shape[:1])
                cols.append(av if len(t) == 1 else av * _w_term(w, t[1]))
            else:
                cols.append(_w_term(w, t))
        return np.column_stack(cols)


def main_terms_spec(p: int, treatment: bool = False) -> ModelSpec:
    """All p raw covariate columns as main effects.

    With treatment=True the treatment indicator is prepended, giving the
    main-terms outcome model.
    """
    terms = tuple(("col", j) for j in range(p))
    if treatment:
        terms = (("treat",),) + terms
    return ModelSpec(terms=terms, label="main_terms")


@dataclass(frozen=True)
class ComparatorResult:
    """Point estimate with a bootstrap confidence interval."""

    psi: float
    ci: CiResult
    flagged: bool = False


def _gcomp_point(d: Dataset, spec: ModelSpec):
    x = np.column_stack([np.ones(d.n), spec.design(d.w, d.a)])
    fit = irls_fit(x, d.y)
    x1 = np.column_stack([np.ones(d.n), spec.design(d.w, 1.0)])
    x0 = np.column_stack([np.ones(d.n), spec.design(d.w, 0.0)])
    psi = float(np.mean(expit(x1 @ fit.coef) - expit(x0 @ fit.coef)))
    return psi, fit.flagged


def gcomp_glm(d: Dataset, outcome_spec: ModelSpec, b: int = 500,
              seed: int = 0, alpha: float = 0.05) -> ComparatorResult:
    """G-computation: logistic outcome model, plug-in contrast of the
    counterfactual predictions."""
    if not outcome_spec.has_treatment:
        raise ValueError("outcome spec must include a treatment term")
    psi, flagged = _gcomp_point(d, outcome_spec)
    ci = bootstrap_percentile(lambda dd: _gcomp_point(dd, outcome_spec)[0],
                              d, b, seed, alpha)
    return ComparatorResult(psi=psi, ci=ci, flagged=flagged)


def hajek(a, y, g) -> float:
    """Stabilized (Hajek) weighted-mean contrast of the two arms."""
    wt = a / g
    wc = (1.0 - a) / (1.0 - g)
    return float(wt @ y / wt.sum() - wc @ y / wc.sum())


def _iptw_point(d: Dataset, spec: ModelSpec, delta: float):
    x = np.column_stack([np.ones(d.n), spec.design(d.w)])
    fit = irls_fit(x, d.a)
    g = np.clip(expit(x @ fit.coef), delta, 1.0 - delta)
    return hajek(d.a, d.y, g), fit.flagged


def iptw_glm(d: Dataset, propensity_spec: ModelSpec, b: int = 500,
             seed: int = 0, alpha: float = 0.05,
             delta: float = 0.01) -> ComparatorResult:
    """Stabilized (normalized-weight) IPTW with a logistic propensity."""
    if propensity_spec.has_treatment:
        raise ValueError("propensity spec cannot include treatment terms")
    psi, flagged = _iptw_point(d, propensity_spec, delta)
    ci = bootstrap_percentile(
        lambda dd: _iptw_point(dd, propensity_spec, delta)[0],
        d, b, seed, alpha)
    return ComparatorResult(psi=psi, ci=ci, flagged=flagged)


def oal_fit(d: Dataset, gamma: float = OAL_GAMMA, v_folds: int = 10,
            seed: int = 0, delta: float = 0.01):
    """Main-terms outcome-adaptive lasso propensity.

    A main-terms logistic outcome model on (A, W) supplies coefficients
    alpha_j; the propensity is a weighted-lasso logistic fit of A on W
    with penalty weights |alpha_j|^(-gamma) (the treatment coefficient is
    not used) and lambda chosen by V-fold cross-validation under the
    one-standard-error rule. Covariates are standardized first so the
    weight exponent compares coefficients on a common scale, and the
    default exponent is deliberately aggressive: this estimator exists to
    screen out instruments, covariates that predict treatment but carry
    little outcome signal, and a milder exponent routinely keeps them
    because their outcome coefficients are small without being zero.

    Returns:
        (predictions clipped to [delta, 1 - delta], selected fit or None
        when every weight is infinite). The fit's coefficients are on the
        standardized covariate scale.
    """
    mu = d.w.mean(axis=0)
    sd = d.w.std(axis=0)
    sd[sd == 0.0] = 1.0
    ws = (d.w - mu) / sd
    x_out = np.column_stack([np.ones(d.n), d.a, ws])
    alpha_hat = irls_fit(x_out, d.y).coef[2:]
    weights = ohal_weights(alpha_hat, gamma)
    if not np.isfinite(weights).any():
        g = np.full(d.n, np.clip(d.a.mean(), delta, 1.0 - delta))
        return g, None
    fit = cv_fit(ws, d.a, "logistic", weights=weights, v=v_folds,
                 seed=seed, rule="1se")
    g = np.clip(expit(ws @ fit.beta + fit.intercept), delta, 1.0 - delta)
    return g, fit


def oal_propensity(d: Dataset, gamma: float = OAL_GAMMA,
                   v_folds: int = 10,
                   seed: int = 0, delta: float = 0.01) -> np.ndarray:
    """Propensity predictions from the main-terms adaptive lasso."""
    return oal_fit(d, gamma, v_folds, seed, delta)[0]


def iptw_oal(d: Dataset, gamma: float = OAL_GAMMA, b: int = 500,
             seed: int = 0,
             alpha: float = 0.05, v_folds: int = 10,
             delta: float = 0.01) -> ComparatorResult:
    """Stabilized IPTW with the adaptive-lasso propensity."""

    def point(dd):
        return hajek(dd.a, dd.y, oal_propensity(dd, gamma, v_folds, seed,
                                                 delta))

    psi = point(d)
    ci = bootstrap_percentile(point, d, b, seed, alpha)
    return ComparatorResult(psi=psi, ci=ci)


def onestep_arm(a, y, q, g):
    """Single-fluctuation targeting of one arm's plug-in mean.

    Args:
        a: indicator of the arm of interest.
        q: initial outcome regression predictions for that arm.
        g: probability of the arm of interest given covariates.

    Returns:
        (psi, per-observation influence values, cap flag).
    """
    q = np.clip(q, _PCLIP, 1.0 - _PCLIP)
    eta = logit(q)
    h = 1.0 / g
    rows = a == 1
    eps, flagged = offset_logistic_mle(y[rows], h[rows], eta[rows])
    q_star = expit(eta + eps * h)
    psi = float(q_star.mean())
    return psi, eif(a, y, q_star, g, psi), flagged


def tmle_oal_point(d: Dataset, gamma: float = OAL_GAMMA,
                   v_folds: int = 10,
                   seed: int = 0, delta: float = 0.01, g=None):
    """Point estimate of the single-fluctuation TMLE with a main-terms
    GLM outcome and adaptive-lasso propensity.

    A precomputed propensity vector g skips the adaptive-lasso fit (used
    when several estimators share one fit per bootstrap resample).

    Returns:
        (psi, separation/cap flag).
    """
    x = np.column_stack([np.ones(d.n), d.a, d.w])
    fit = irls_fit(x, d.y)
    ones = np.ones(d.n)
    eta1 = np.column_stack([ones, ones, d.w]) @ fit.coef
    eta0 = np.column_stack([ones, 0.0 * ones, d.w]) @ fit.coef
    if g is None:
        g = oal_propensity(d, gamma, v_folds, seed, delta)
    psi1, _, f1 = onestep_arm(d.a, d.y, expit(eta1), g)
    psi0, _, f0 = onestep_arm(1.0 - d.a, d.y, expit(eta0), 1.0 - g)
    return psi1 - psi0, fit.flagged or f1 or f0


def tmle_oal(d: Dataset, gamma: float = OAL_GAMMA, b: int = 500,
             seed: int = 0,
             alpha: float = 0.05, v_folds: int = 10,
             delta: float = 0.01) -> ComparatorResult:
    """Single-fluctuation TMLE on a main-terms GLM outcome and the
    adaptive-lasso propensity."""
    psi, flagged = tmle_oal_point(d, gamma, v_folds, seed, delta)
    ci = bootstrap_percentile(
        lambda dd: tmle_oal_point(dd, gamma, v_folds, seed, delta)[0],
        d, b, seed, alpha)
    return ComparatorResult(psi=psi, ci=ci, flagged=flagged)


@dataclass(frozen=True)
class HalTmleResult:
    """Plain TMLE estimate with both interval flavors."""

    psi: float
    ci_if: CiResult
    ci_cv: CiResult
    flagged: bool = False


def tmle_hal(d: Dataset, cfg: OhalConfig, alpha: float = 0.05, folds=None,
             outcome_one=None, outcome_zero=None,
             propensity=None) -> HalTmleResult:
    """Single-fluctuation TMLE with indicator-basis outcome and propensity
    fits.

    Both arms share one unweighted propensity fit (the control arm uses
    its complement). The plain interval uses the influence-function
    variance; the second re-evaluates the influence function per
    validation fold with that fold's held-out fits.

    Args:
        outcome_one, outcome_zero, propensity: optional precomputed fits
            (for callers evaluating several estimators on one dataset);
            they must have been fit with the same fold assignment.
    """
    if folds is None:
        folds = shared_folds(d, cfg)
    q1 = outcome_one if outcome_one is not None \
        else fit_outcome_hal(d, 1, cfg, folds=folds)
    q0 = outcome_zero if outcome_zero is not None \
        else fit_outcome_hal(d, 0, cfg, folds=folds)
    g_fit = propensity if propensity is not None \
        else fit_propensity_hal(d, cfg, folds=folds)
    g = g_fit.predict(d.w)
    a0 = 1.0 - d.a
    psi1, d1, f1 = onestep_arm(d.a, d.y, q1.predict(d.w), g)
    psi0, d0, f0 = onestep_arm(a0, d.y, q0.predict(d.w), 1.0 - g)
    psi = psi1 - psi0
    ci_if = wald_ci(psi, if_variance(d1 - d0), d.n, alpha,
                    method="plain_if")
    vals = np.empty(d.n)
    for k in range(cfg.v_folds):
        va = folds == k
        q1_v = q1.fold(k).predict(d.w)
        q0_v = q0.fold(k).predict(d.w)
        g_v = g_fit.fold(k).predict(d.w)
        d1_v = eif(d.a[va], d.y[va], q1_v[va], g_v[va], float(q1_v.mean()))
        d0_v = eif(a0[va], d.y[va], q0_v[va], 1.0 - g_v[va],
                   float(q0_v.mean()))
        vals[va] = d1_v - d0_v
    ci_cv = wald_ci(psi, cv_if_variance(vals, folds), d.n, alpha,
                    method="cv_if")
    return HalTmleResult(psi=psi, ci_if=ci_if, ci_cv=ci_cv,
                         flagged=f1 or f0)
