"""Targeted plug-in estimation of arm means and the average treatment effect.

The influence function D has the usual inverse-probability-weighted
residual plus plug-in form. A second, "reduced" term D_r captures the
first-order cost of the propensity fit converging to a coarsened projection
rather than the true propensity score. Targeting alternates two
one-parameter offset-logistic fluctuations of the outcome regression, one
per term, until both empirical means are below c_n = 1 / (sqrt(n) ln n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .data import Dataset
from .nuisance import NuisanceBundle, OhalConfig, fit_nuisances, shared_folds

__all__ = [
    "ConvergenceError",
    "TargetedFit",
    "ArmEstimate",
    "AteResult",
    "c_n",
    "eif",
    "d_r",
    "offset_logistic_mle",
    "target",
    "estimate_arm",
    "estimate_ate",
]

_PCLIP = 1e-12
_EPS_CAP = 10.0


class ConvergenceError(RuntimeError):
    """Targeting failed to satisfy the stopping rule within max_iter.

    Attributes:
        trace: list of (|P_n D|, |P_n D_r|) pairs, one per iteration
            including the initial state.
    """

    def __init__(self, message: str, trace):
        super().__init__(message)
        self.trace = trace


def c_n(n: int) -> float:
    """Stopping tolerance 1 / (sqrt(n) ln n) for the targeting loop."""
    if n < 2:
        raise ValueError("need n >= 2")
    return 1.0 / (math.sqrt(n) * math.log(n))


def eif(a, y, qbar_w, gbar_w, psi):
    """Efficient influence function (a/g)(y - q) + q - psi."""
    a = np.asarray(a, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return (a / np.asarray(gbar_w)) * (y - np.asarray(qbar_w)) \
        + np.asarray(qbar_w) - psi


def d_r(a, y, qbar_w, g_r1_w, g_r2_w):
    """Reduced influence term a (g_r2 / g_r1) (y - q)."""
    a = np.asarray(a, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ratio = np.asarray(g_r2_w) / np.asarray(g_r1_w)
    return a * ratio * (y - np.asarray(qbar_w))


def offset_logistic_mle(y, h, offset, tol=1e-10, max_iter=100,
                        cap=_EPS_CAP):
    """One-dimensional Newton MLE for epsilon in expit(offset + eps * h).

    Maximizes the Bernoulli log-likelihood with step halving; the estimate
    is capped at |eps| <= cap and flagged when the cap binds.

    Returns:
        (eps, flagged) pair.
    """
    y = np.asarray(y, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    offset = np.asarray(offset, dtype=np.float64)
    if not np.any(h):
        return 0.0, False
    eps = 0.0

    def nll(e):
        eta = offset + e * h
        return float(np.sum(np.logaddexp(0.0, eta) - y * eta))

    cur = nll(eps)
    for _ in range(max_iter):
        p = expit(offset + eps * h)
        score = float(h @ (y - p))
        info = float((h * h) @ (p * (1.0 - p)))
        if info <= 0.0:
            break
        step = score / info
        while abs(step) > 1e-14:
            cand = min(max(eps + step, -cap), cap)
            val = nll(cand)
            if val <= cur + 1e-12:
                break
            step *= 0.5
        else:
            break
        moved = cand - eps
        eps, cur = cand, val
        if abs(moved) <= tol:
            break
    return eps, bool(abs(eps) >= cap)


@dataclass(frozen=True)
class TargetedFit:
    """Result of the iterative two-covariate targeting loop.

    The targeted outcome regression adds the accumulated fluctuations to
    the initial fit on the logit scale:
    logit q*(w) = logit q(w) + (sum eps_r) h_r(w) + (sum eps_2) h_n(w),
    with h_r = g_r2 / g_r1 and h_n = 1 / gbar.
    """

    bundle: NuisanceBundle
    iterations: int
    final_pn_d: float
    final_pn_dr: float
    epsilon_history: tuple
    flagged: bool

    @property
    def eps_r_total(self) -> float:
        return float(sum(e[0] for e in self.epsilon_history))

    @property
    def eps_2_total(self) -> float:
        return float(sum(e[1] for e in self.epsilon_history))

    def predict(self, w) -> np.ndarray:
        """Targeted outcome regression q*(w)."""
        q0 = np.clip(self.bundle.qbar(w), _PCLIP, 1.0 - _PCLIP)
        eta = logit(q0)
        if self.epsilon_history:
            h_r = self.bundle.g_r2(w) / self.bundle.g_r1(w)
            h_n = 1.0 / self.bundle.gbar(w)
            eta = eta + self.eps_r_total * h_r + self.eps_2_total * h_n
        return expit(eta)


def target(d: Dataset, bundle: NuisanceBundle, c_n_value: float = None,
           max_iter: int = 100) -> TargetedFit:
    """Run the iterative targeting loop for the treated arm of d.

    Each iteration fits two one-parameter offset-logistic regressions on
    the treated rows: first with covariate h_r = g_r2/g_r1, then with
    covariate h_n = 1/gbar. The loop stops once |P_n D| and |P_n D_r| are
    both below the tolerance (checked before the first iteration, so an
    already-targeted fit returns with zero iterations).

    Raises:
        ConvergenceError: stopping rule unmet after max_iter iterations.
    """
    cn = c_n(d.n) if c_n_value is None else float(c_n_value)
    if cn <= 0:
        raise ValueError("stopping tolerance must be positive")
    w, a, y = d.w, d.a, d.y
    treated = a == 1
    q0 = np.clip(bundle.qbar(w), _PCLIP, 1.0 - _PCLIP)
    gbar = bundle.gbar(w)
    h_r = bundle.g_r2(w) / bundle.g_r1(w)
    h_n = 1.0 / gbar
    g_r1 = bundle.g_r1(w)
    g_r2 = bundle.g_r2(w)

    eta = logit(q0)
    history = []
    flagged = False
    trace = []

    def scores(eta_now):
        q = expit(eta_now)
        psi = float(q.mean())
        pn_d = float(np.mean(eif(a, y, q, gbar, psi)))
        pn_dr = float(np.mean(d_r(a, y, q, g_r1, g_r2)))
        return pn_d, pn_dr

    pn_d, pn_dr = scores(eta)
    trace.append((abs(pn_d), abs(pn_dr)))
    iterations = 0
    while not (abs(pn_d) < cn and abs(pn_dr) < cn):
        if iterations >= max_iter:
            raise ConvergenceError(
                f"targeting did not satisfy |P_n D| < {cn:.3g} and "
                f"|P_n D_r| < {cn:.3g} within {max_iter} iterations "
                f"(final |P_n D| = {abs(pn_d):.3g}, "
                f"|P_n D_r| = {abs(pn_dr):.3g})", trace)
        eps_r, f1 = offset_logistic_mle(y[treated], h_r[treated],
                                        eta[treated])
        eta = eta + eps_r * h_r
        eps_2, f2 = offset_logistic_mle(y[treated], h_n[treated],
                                        eta[treated])
        eta = eta + eps_2 * h_n
        flagged = flagged or f1 or f2
        history.append((eps_r, eps_2))
        iterations += 1
        pn_d, pn_dr = scores(eta)
        trace.append((abs(pn_d), abs(pn_dr)))

    return TargetedFit(bundle=bundle, iterations=iterations,
                       final_pn_d=pn_d, final_pn_dr=pn_dr,
                       epsilon_history=tuple(history), flagged=flagged)


@dataclass(frozen=True)
class ArmEstimate:
    """Targeted plug-in estimate of one arm's mean outcome."""

    psi: float
    eif_values: np.ndarray
    targeted: TargetedFit
    bundle: NuisanceBundle


def estimate_arm(d: Dataset, arm: int, cfg: OhalConfig, folds=None,
                 outcome=None) -> ArmEstimate:
    """Estimate E[Y(arm)] via the full nuisance + targeting pipeline.

    For arm 0 the treatment indicator is relabeled so the identical
    machinery runs on the mirrored dataset. An optional precomputed
    outcome fit for the requested arm (with matching folds) is passed
    through to the nuisance pipeline.
    """
    if arm not in (0, 1):
        raise ValueError("arm must be 0 or 1")
    dd = d if arm == 1 else d.relabel_treatment()
    bundle = fit_nuisances(dd, cfg, folds=folds, outcome=outcome)
    tf = target(dd, bundle)
    q_star = tf.predict(dd.w)
    psi = float(q_star.mean())
    vals = eif(dd.a, dd.y, q_star, bundle.gbar(dd.w), psi) \
        - d_r(dd.a, dd.y, q_star, bundle.g_r1(dd.w), bundle.g_r2(dd.w))
    return ArmEstimate(psi=psi, eif_values=vals, targeted=tf, bundle=bundle)


@dataclass(frozen=True)
class AteResult:
    """Arm-1 minus arm-0 targeted estimates on the scaled outcome.

    Confidence intervals are attached downstream from eif_values (plain)
    and the per-arm fold bundles (partially cross-validated).
    """

    psi: float
    arm1: ArmEstimate
    arm0: ArmEstimate
    eif_values: np.ndarray
    folds: np.ndarray


def estimate_ate(d: Dataset, cfg: OhalConfig, folds=None, outcome_one=None,
                 outcome_zero=None) -> AteResult:
    """Estimate the ATE with both arm pipelines sharing fold assignments.

    Precomputed fold assignments and per-arm outcome fits may be supplied
    by callers that reuse them across estimators.
    """
    if folds is None:
        folds = shared_folds(d, cfg)
    arm1 = estimate_arm(d, 1, cfg, folds=folds, outcome=outcome_one)
    arm0 = estimate_arm(d, 0, cfg, folds=folds, outcome=outcome_zero)
    return AteResult(psi=arm1.psi - arm0.psi, arm1=arm1, arm0=arm0,
                     eif_values=arm1.eif_values - arm0.eif_values,
                     folds=folds)
