"""Nuisance regressions for the doubly robust ATE pipeline.

Four regressions feed the targeting step: an outcome regression fit within
the treated subgroup, a propensity score whose lasso penalty is reweighted
by the outcome fit's coefficients (columns the outcome model ignored are
excluded outright), and two univariate "reduced" regressions of treatment
behavior on the fitted outcome values. All four share one cross-validation
fold assignment so the retained per-fold fits are mutually coherent, which
the partially cross-validated variance estimator relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .basis import HalBasis, design_matrix, enumerate_basis
from .data import Dataset
from .solver import (PathControl, PenalizedFit, PenaltySpec, SolverError,
                     _degenerate, _fold_assignment, cv_fit, fit_path)

__all__ = [
    "OhalConfig",
    "HalFit",
    "FoldNuisance",
    "NuisanceBundle",
    "ohal_weights",
    "fit_outcome_hal",
    "fit_propensity_ohal",
    "fit_propensity_hal",
    "fit_reduced_regressions",
    "shared_folds",
    "fit_nuisances",
]


@dataclass(frozen=True)
class OhalConfig:
    """Tuning knobs for the nuisance pipeline.

    Attributes:
        gamma: exponent of the outcome-adaptive penalty weights
            |alpha_j|^(-gamma); 0 recovers the plain unweighted lasso.
        v_folds: cross-validation fold count for every lasso fit.
        max_degree: highest interaction order of indicator basis functions
            (None = basis default).
        max_knots_per_dim: per-coordinate knot thinning (None = basis
            default).
        truncation_delta: propensity-type predictions are clipped to
            [delta, 1 - delta].
        seed: fold-assignment seed.
    """

    gamma: float = 1.0
    v_folds: int = 10
    max_degree: int | None = None
    max_knots_per_dim: int | None = None
    truncation_delta: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError("gamma must be finite and non-negative")
        if not isinstance(self.v_folds, (int, np.integer)) or self.v_folds < 2:
            raise ValueError("v_folds must be an integer >= 2")
        if not 0.0 < self.truncation_delta < 0.5:
            raise ValueError("truncation_delta must lie in (0, 0.5)")


@dataclass(frozen=True)
class HalFit:
    """A fitted indicator-basis regression bound to its basis.

    Either wraps a penalized path fit or, in degenerate cases (constant
    response, or every column excluded by infinite penalty weights),
    represents a constant prediction.

    Attributes:
        basis: the indicator basis the coefficients index.
        loss: "logistic" or "gaussian"; sets the prediction link.
        fit: the selected penalized fit, or None for constant fits.
        truncation: if set, predictions are clipped to [t, 1 - t].
        constant: fixed prediction used when fit is None.
        flagged: True when the fit degenerated to a constant for a reason
            worth surfacing in diagnostics (all columns excluded).
    """

    basis: HalBasis
    loss: str
    fit: PenalizedFit | None
    truncation: float | None = None
    constant: float | None = None
    flagged: bool = False

    def __post_init__(self):
        if (self.fit is None) == (self.constant is None):
            raise ValueError("exactly one of fit and constant must be set")
        if self.loss not in ("logistic", "gaussian"):
            raise ValueError(f"unknown loss {self.loss!r}")

    @property
    def alpha(self) -> np.ndarray:
        """Coefficient vector over the basis columns (zeros if constant)."""
        if self.fit is None:
            return np.zeros(len(self.basis))
        return self.fit.beta

    def predict(self, x) -> np.ndarray:
        """Predictions on the response scale for covariate rows x."""
        x = np.asarray(x, dtype=np.float64)
        if self.fit is None:
            out = np.full(x.shape[0], self.constant)
        else:
            nz = np.flatnonzero(self.fit.beta)
            eta = np.full(x.shape[0], self.fit.intercept)
            if nz.size:
                sub = HalBasis(
                    functions=tuple(self.basis.functions[j] for j in nz),
                    source_n=self.basis.source_n, n_dim=self.basis.n_dim,
                    max_degree=self.basis.max_degree)
                eta += design_matrix(sub, x) @ self.fit.beta[nz]
            out = expit(eta) if self.loss == "logistic" else eta
        if self.truncation is not None:
            out = np.clip(out, self.truncation, 1.0 - self.truncation)
        return out

    def fold(self, k: int) -> "HalFit":
        """The fold-k counterpart fit (trained without fold k's rows)."""
        if self.fit is None:
            return self
        if self.fit.fold_fits is None:
            raise ValueError("fit carries no per-fold fits")
        return HalFit(basis=self.basis, loss=self.loss,
                      fit=self.fit.fold_fits[k], truncation=self.truncation)


def ohal_weights(alpha_hat, gamma: float) -> np.ndarray:
    """Penalty weights |alpha_j|^(-gamma); zero coefficients map to inf."""
    if not np.isfinite(gamma) or gamma < 0:
        raise ValueError("gamma must be finite and non-negative")
    a = np.abs(np.asarray(alpha_hat, dtype=np.float64))
    if gamma == 0:
        return np.ones_like(a)
    with np.errstate(divide="ignore"):
        return a ** -gamma


def _predictions(f, x) -> np.ndarray:
    """Evaluate a prediction function or fitted object on rows x."""
    out = f.predict(x) if hasattr(f, "predict") else f(x)
    return np.asarray(out, dtype=np.float64)


def fit_outcome_hal(d: Dataset, arm: int, cfg: OhalConfig,
                    folds=None) -> HalFit:
    """Cross-validated logistic indicator-basis fit of Y on W within an arm.

    Args:
        d: dataset with scaled outcome.
        arm: 0 or 1; the fit uses only rows with that treatment value.
        cfg: pipeline configuration.
        folds: optional fold assignment over all n rows (values 0..V-1);
            the arm subgroup inherits its restriction. None assigns folds
            from cfg.seed.

    Returns:
        HalFit whose basis is enumerated from the arm subgroup's covariate
        rows. A constant-outcome subgroup yields an intercept-only constant
        fit.
    """
    if arm not in (0, 1):
        raise ValueError("arm must be 0 or 1")
    mask = d.a == arm
    m = int(mask.sum())
    if m < 2 * cfg.v_folds:
        raise ValueError(
            f"arm {arm} subgroup has {m} observations; "
            f"{cfg.v_folds}-fold cross-validation needs at least "
            f"{2 * cfg.v_folds}")
    ws = d.w[mask]
    ys = d.y[mask]
    basis = enumerate_basis(ws, cfg.max_degree, cfg.max_knots_per_dim)
    if ys.min() == ys.max():
        return HalFit(basis=basis, loss="logistic", fit=None,
                      constant=float(ys[0]))
    sub_folds = None if folds is None else np.asarray(folds)[mask]
    fit = cv_fit(design_matrix(basis, ws), ys, "logistic",
                 v=cfg.v_folds, seed=cfg.seed, folds=sub_folds)
    return HalFit(basis=basis, loss="logistic", fit=fit)


def _constant_propensity(d: Dataset, basis: HalBasis,
                         cfg: OhalConfig) -> HalFit:
    return HalFit(basis=basis, loss="logistic", fit=None,
                  truncation=cfg.truncation_delta,
                  constant=float(d.a.mean()), flagged=True)


def fit_propensity_ohal(d: Dataset, outcome_fit: HalFit, cfg: OhalConfig,
                        folds=None) -> HalFit:
    """Outcome-adaptive propensity fit of A on W.

    Uses the outcome fit's basis column-for-column; each column's lasso
    penalty is weighted by |alpha_j|^(-gamma) from the outcome
    coefficients, so columns the outcome model dropped are excluded from
    the propensity model entirely. Per-fold paths reweight from the
    matching per-fold outcome fit so the retained fold fits remain honest
    about what was estimated on training data.
    """
    weights = ohal_weights(outcome_fit.alpha, cfg.gamma)
    basis = outcome_fit.basis
    if not np.isfinite(weights).any():
        return _constant_propensity(d, basis, cfg)
    fold_weights = None
    if cfg.gamma > 0 and outcome_fit.fit is not None \
            and outcome_fit.fit.fold_fits is not None:
        fold_weights = [ohal_weights(f.beta, cfg.gamma)
                        for f in outcome_fit.fit.fold_fits]
    fit = cv_fit(design_matrix(basis, d.w), d.a, "logistic",
                 weights=weights, v=cfg.v_folds, seed=cfg.seed,
                 folds=folds, fold_weights=fold_weights)
    return HalFit(basis=basis, loss="logistic", fit=fit,
                  truncation=cfg.truncation_delta)


def fit_propensity_hal(d: Dataset, cfg: OhalConfig, basis: HalBasis = None,
                       folds=None) -> HalFit:
    """Plain (unit-weight) cross-validated propensity fit of A on W."""
    if basis is None:
        basis = enumerate_basis(d.w, cfg.max_degree, cfg.max_knots_per_dim)
    fit = cv_fit(design_matrix(basis, d.w), d.a, "logistic",
                 v=cfg.v_folds, seed=cfg.seed, folds=folds)
    return HalFit(basis=basis, loss="logistic", fit=fit,
                  truncation=cfg.truncation_delta)


def _fit_reduced(u: np.ndarray, a: np.ndarray, g: np.ndarray,
                 cfg: OhalConfig, folds) -> tuple[HalFit, HalFit]:
    """Univariate reduced fits given outcome predictions u and gbar g."""
    z = (a - g) / g
    basis = enumerate_basis(u[:, None], 1, cfg.max_knots_per_dim)
    if len(basis) == 0:
        one = HalFit(basis=basis, loss="logistic", fit=None,
                     truncation=cfg.truncation_delta,
                     constant=float(a.mean()))
        two = HalFit(basis=basis, loss="gaussian", fit=None,
                     constant=float(z.mean()))
        return one, two
    x = design_matrix(basis, u[:, None])
    f1 = cv_fit(x, a, "logistic", v=cfg.v_folds, seed=cfg.seed, folds=folds)
    f2 = cv_fit(x, z, "gaussian", v=cfg.v_folds, seed=cfg.seed, folds=folds)
    one = HalFit(basis=basis, loss="logistic", fit=f1,
                 truncation=cfg.truncation_delta)
    two = HalFit(basis=basis, loss="gaussian", fit=f2)
    return one, two


def fit_reduced_regressions(d: Dataset, qbar, gbar, cfg: OhalConfig,
                            folds=None) -> tuple[HalFit, HalFit]:
    """Fit the two univariate reduced regressions on u = qbar(W).

    The first is a cross-validated logistic fit of A on u with truncated
    predictions; the second a gaussian fit of (A - gbar(W)) / gbar(W) on u,
    untruncated. Both share the basis enumerated from u. A constant u
    degenerates both to constants.

    Args:
        d: dataset.
        qbar: outcome prediction function (or fitted object) over W.
        gbar: truncated propensity prediction function over W.
        cfg: pipeline configuration.
        folds: optional shared fold assignment over all rows.
    """
    u = _predictions(qbar, d.w)
    g = _predictions(gbar, d.w)
    return _fit_reduced(u, d.a, g, cfg, folds)


_NO_TRUNC = {"dev_ratio_max": 1.0, "min_dev_gain": 0.0}


def _refit_at(x: np.ndarray, y: np.ndarray, loss: str,
              reference: PenalizedFit) -> PenalizedFit:
    """Solve a fresh design down the reference fit's grid, to its lambda."""
    prefix = reference.lambda_path[:reference.lambda_index + 1]
    ctl = PathControl(**_NO_TRUNC)
    return fit_path(x, y, loss, PenaltySpec(lambda_path=prefix),
                    control=ctl)[-1]


def _reduced_fold(d: Dataset, u_v: np.ndarray, g_v: np.ndarray, k: int,
                  folds: np.ndarray, full_one: HalFit, full_two: HalFit,
                  cfg: OhalConfig) -> tuple[HalFit, HalFit]:
    """Rebuild the reduced fits for fold k from fold-k nuisance predictions.

    The fold-k outcome and propensity fits induce their own u and g, so
    the reduced regressions are refit on training rows at the full fit's
    selected penalty (same grid, prefix solve) rather than recycled.
    """
    tr = folds != k
    a_tr = d.a[tr]
    z = (d.a - g_v) / g_v
    basis = enumerate_basis(u_v[tr][:, None], 1, cfg.max_knots_per_dim)
    if len(basis) == 0 or full_one.fit is None:
        one = HalFit(basis=basis, loss="logistic", fit=None,
                     truncation=cfg.truncation_delta,
                     constant=float(a_tr.mean()))
    else:
        x = design_matrix(basis, u_v[tr][:, None])
        one = HalFit(basis=basis, loss="logistic",
                     fit=_refit_at(x, a_tr, "logistic", full_one.fit),
                     truncation=cfg.truncation_delta)
    if len(basis) == 0 or full_two.fit is None:
        two = HalFit(basis=basis, loss="gaussian", fit=None,
                     constant=float(z[tr].mean()))
    else:
        x = design_matrix(basis, u_v[tr][:, None])
        two = HalFit(basis=basis, loss="gaussian",
                     fit=_refit_at(x, z[tr], "gaussian", full_two.fit))
    return one, two


@dataclass(frozen=True)
class FoldNuisance:
    """Per-fold nuisance fits, each trained without that fold's rows."""

    outcome: HalFit
    propensity: HalFit
    reduced_one: HalFit
    reduced_two: HalFit

    def qbar(self, w) -> np.ndarray:
        return self.outcome.predict(w)

    def gbar(self, w) -> np.ndarray:
        return self.propensity.predict(w)

    def g_r1(self, w) -> np.ndarray:
        return self.reduced_one.predict(self.qbar(w)[:, None])

    def g_r2(self, w) -> np.ndarray:
        return self.reduced_two.predict(self.qbar(w)[:, None])


@dataclass(frozen=True)
class NuisanceBundle:
    """All nuisance fits for one arm's pipeline run.

    The reduced regressions take the fitted outcome value as covariate, so
    g_r1 and g_r2 compose through qbar. fold_bundles[k] holds the fits
    trained without fold k, used by the partially cross-validated variance
    estimator; folds maps each row to its validation fold.
    """

    outcome: HalFit
    propensity: HalFit
    reduced_one: HalFit
    reduced_two: HalFit
    folds: np.ndarray
    fold_bundles: tuple[FoldNuisance, ...]
    truncation_delta: float

    def qbar(self, w) -> np.ndarray:
        return self.outcome.predict(w)

    def gbar(self, w) -> np.ndarray:
        return self.propensity.predict(w)

    def g_r1(self, w) -> np.ndarray:
        return self.reduced_one.predict(self.qbar(w)[:, None])

    def g_r2(self, w) -> np.ndarray:
        return self.reduced_two.predict(self.qbar(w)[:, None])


def shared_folds(d: Dataset, cfg: OhalConfig) -> np.ndarray:
    """Build one fold assignment usable by both arms' pipelines.

    Reseeds (up to 10 retries) until, within every fold, both treatment
    arms are present and neither arm's outcome values are constant, so
    every cross-validated fit in either arm's pipeline accepts the
    assignment.

    Raises:
        SolverError: if no acceptable assignment is found.
    """
    one = d.a == 1
    # a globally constant outcome within an arm short-circuits that arm's
    # cross-validated fits entirely, so it imposes no per-fold requirement
    check_one = d.y[one].min() < d.y[one].max()
    check_zero = d.y[~one].min() < d.y[~one].max()
    for attempt in range(11):
        cand = _fold_assignment(d.n, cfg.v_folds, cfg.seed, attempt)
        if _degenerate(d.a, cand, cfg.v_folds):
            continue
        if check_one and _degenerate(d.y[one], cand[one], cfg.v_folds):
            continue
        if check_zero and _degenerate(d.y[~one], cand[~one], cfg.v_folds):
            continue
        return cand
    raise SolverError(
        "could not build folds giving every fold both treatment arms and "
        "non-constant outcomes in each arm after 10 reseeds")


def fit_nuisances(d: Dataset, cfg: OhalConfig, folds=None,
                  outcome=None) -> NuisanceBundle:
    """Run the full nuisance pipeline for the treated arm of d.

    For the other arm, relabel the treatment first (Dataset's
    relabel_treatment) and pass the same fold assignment; the pipelines are
    then exact mirror images.

    Args:
        d: dataset (arm of interest coded as a = 1).
        cfg: pipeline configuration.
        folds: optional precomputed assignment (see shared_folds). None
            builds one from cfg.seed validating this arm's requirements
            only.
        outcome: optional precomputed treated-arm outcome fit (for callers
            reusing it across estimators); must match cfg and folds.
    """
    if outcome is not None and folds is None:
        raise ValueError("a precomputed outcome fit requires explicit folds")
    if folds is None:
        one = d.a == 1
        check_one = d.y[one].min() < d.y[one].max()
        for attempt in range(11):
            cand = _fold_assignment(d.n, cfg.v_folds, cfg.seed, attempt)
            if _degenerate(d.a, cand, cfg.v_folds):
                continue
            if check_one and _degenerate(d.y[one], cand[one], cfg.v_folds):
                continue
            folds = cand
            break
        else:
            raise SolverError(
                "could not build folds giving every fold both treatment "
                "arms and non-constant treated outcomes after 10 reseeds")
    else:
        folds = np.asarray(folds, dtype=np.int64)
        if folds.shape != (d.n,):
            raise ValueError("fold assignment length must match dataset")

    if outcome is None:
        outcome = fit_outcome_hal(d, 1, cfg, folds=folds)
    propensity = fit_propensity_ohal(d, outcome, cfg, folds=folds)
    one, two = fit_reduced_regressions(d, outcome, propensity, cfg,
                                       folds=folds)
    bundles = []
    for k in range(cfg.v_folds):
        q_v = outcome.fold(k)
        g_v = propensity.fold(k)
        u_v = q_v.predict(d.w)
        gbar_v = g_v.predict(d.w)
        one_v, two_v = _reduced_fold(d, u_v, gbar_v, k, folds, one, two, cfg)
        bundles.append(FoldNuisance(outcome=q_v, propensity=g_v,
                                    reduced_one=one_v, reduced_two=two_v))
    return NuisanceBundle(outcome=outcome, propensity=propensity,
                          reduced_one=one, reduced_two=two, folds=folds,
                          fold_bundles=tuple(bundles),
                          truncation_delta=cfg.truncation_delta)
