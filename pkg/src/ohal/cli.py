"""Command-line front door: estimate an ATE from a CSV file or run the
Monte Carlo benchmark study.

Exit codes: 0 success, 2 usage or data error, 3 convergence or solver
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .comparators import (OAL_GAMMA, gcomp_glm, iptw_glm, iptw_oal,
                          main_terms_spec, tmle_hal, tmle_oal)
from .data import DataError, load_csv, unscale_effect
from .inference import CiResult, ate_inference
from .nuisance import OhalConfig
from .simulation import SimConfig, run_monte_carlo, write_tables
from .tmle import estimate_ate

__all__ = ["RunReport", "cmd_estimate", "cmd_simulate", "main"]

SCHEMA_VERSION = 1

_CLI_ESTIMATORS = ("drtmle_ohal", "tmle_hal", "gcomp_glm", "iptw_glm",
                   "iptw_oal", "tmle_oal")


@dataclass(frozen=True)
class RunReport:
    """Machine-readable record of one estimation run.

    The estimate, standard errors, and interval bounds are on the
    original outcome scale. Interval entries are dicts mirroring
    CiResult; se_cv and ci_cv are null for estimators without a
    cross-validated variance.
    """

    schema_version: int
    estimate: float
    n: int
    se_if: float
    se_cv: float
    ci_if: dict
    ci_cv: dict
    diagnostics: dict
    config: dict
    timing_seconds: float


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ohal",
        description="Doubly robust ATE estimation with an outcome-adaptive "
                    "indicator-basis propensity.")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser(
        "estimate", help="estimate the average treatment effect from a "
                         "headered CSV file")
    est.add_argument("data", help="path to the CSV file")
    est.add_argument("--treatment", required=True,
                     help="name of the binary treatment column")
    est.add_argument("--outcome", required=True,
                     help="name of the outcome column")
    est.add_argument("--gamma", type=float, default=None,
                     help="adaptive-lasso weight exponent (default 1 for "
                          "the indicator-basis estimators, 3 for the "
                          "main-terms adaptive-lasso estimators)")
    est.add_argument("--v-folds", type=int, default=10,
                     help="cross-validation folds (default 10)")
    est.add_argument("--max-degree", type=int, default=None,
                     help="maximum basis interaction degree")
    est.add_argument("--max-knots", type=int, default=None,
                     help="maximum knots per covariate")
    est.add_argument("--truncation", type=float, default=0.01,
                     help="propensity truncation level (default 0.01)")
    est.add_argument("--alpha", type=float, default=0.05,
                     help="1 - confidence level (default 0.05)")
    est.add_argument("--seed", type=int, default=0, help="RNG seed")
    est.add_argument("--estimator", choices=_CLI_ESTIMATORS,
                     default="drtmle_ohal",
                     help="estimator to run (GLM variants use main-terms "
                          "models on the CSV covariates)")
    est.add_argument("--no-scale", action="store_true",
                     help="take the outcome as already lying in [0, 1]")
    est.add_argument("--bootstrap-b", type=int, default=500,
                     help="bootstrap replicates for GLM/OAL estimators")
    est.add_argument("--out", default=None,
                     help="write the JSON report here instead of stdout")
    est.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: OHAL_THREADS or all "
                          "cores)")

    sim = sub.add_parser(
        "simulate", help="run the Monte Carlo benchmark study")
    sim.add_argument("--n", type=int, required=True, help="sample size")
    sim.add_argument("--reps", type=int, required=True,
                     help="replicate count")
    sim.add_argument("--seed", type=int, default=0, help="master seed")
    sim.add_argument("--estimators", default=None,
                     help="comma-separated estimator names (default: all)")
    sim.add_argument("--out-dir", default=".",
                     help="directory for the table files")
    sim.add_argument("--bootstrap-b", type=int, default=500,
                     help="bootstrap replicates for GLM/OAL estimators")
    sim.add_argument("--alpha", type=float, default=0.05,
                     help="1 - confidence level (default 0.05)")
    sim.add_argument("--v-folds", type=int, default=None,
                     help="cross-validation folds (default: by sample "
                          "size)")
    sim.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: OHAL_THREADS or all "
                          "cores)")
    return parser


def _resolve_threads(value) -> int:
    if value is not None:
        return max(1, int(value))
    env = os.environ.get("OHAL_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _ci_dict(ci: CiResult, y_range: float) -> dict:
    return {"lower": ci.lower * y_range, "upper": ci.upper * y_range,
            "level": ci.level, "se": ci.se * y_range, "method": ci.method}


def _arm_diagnostics(arm, w) -> dict:
    tf = arm.targeted
    g = arm.bundle.gbar(w)
    alpha = arm.bundle.outcome.alpha
    return {
        "targeting_iterations": tf.iterations,
        "abs_pn_d": abs(tf.final_pn_d),
        "abs_pn_dr": abs(tf.final_pn_dr),
        "propensity_min": float(g.min()),
        "propensity_max": float(g.max()),
        "excluded_basis_count": int(np.sum(alpha == 0.0)),
        "basis_count": int(alpha.size),
        "epsilon_capped": bool(tf.flagged),
        "propensity_degenerate": bool(arm.bundle.propensity.flagged),
    }


def _estimate_drtmle(d, cfg, args):
    res = estimate_ate(d, cfg)
    ci_if, ci_cv = ate_inference(d, res, alpha=args.alpha)
    diagnostics = {
        "arm1": _arm_diagnostics(res.arm1, d.w),
        "arm0": _arm_diagnostics(res.arm0, d.w),
    }
    return res.psi, ci_if, ci_cv, diagnostics


def _estimate_tmle_hal(d, cfg, args):
    r = tmle_hal(d, cfg, alpha=args.alpha)
    diagnostics = {"targeting_iterations": 1,
                   "epsilon_capped": bool(r.flagged)}
    return r.psi, r.ci_if, r.ci_cv, diagnostics


def _estimate_comparator(d, cfg, args):
    p = d.w.shape[1]
    if args.estimator == "gcomp_glm":
        r = gcomp_glm(d, main_terms_spec(p, treatment=True),
                      b=args.bootstrap_b, seed=args.seed, alpha=args.alpha)
    elif args.estimator == "iptw_glm":
        r = iptw_glm(d, main_terms_spec(p), b=args.bootstrap_b,
                     seed=args.seed, alpha=args.alpha,
                     delta=args.truncation)
    elif args.estimator == "iptw_oal":
        r = iptw_oal(d, args.gamma, b=args.bootstrap_b, seed=args.seed,
                     alpha=args.alpha, v_folds=args.v_folds,
                     delta=args.truncation)
    else:
        r = tmle_oal(d, args.gamma, b=args.bootstrap_b, seed=args.seed,
                     alpha=args.alpha, v_folds=args.v_folds,
                     delta=args.truncation)
    return r.psi, r.ci, None, {"separation_flagged": bool(r.flagged)}


def cmd_estimate(args) -> RunReport:
    """Run one estimator on a CSV file and emit the JSON report."""
    t0 = time.time()
    d, scaling = load_csv(args.data, treatment_col=args.treatment,
                          outcome_col=args.outcome,
                          scale=not args.no_scale)
    if args.gamma is None:
        args.gamma = (OAL_GAMMA
                      if args.estimator in ("iptw_oal", "tmle_oal")
                      else 1.0)
    cfg = OhalConfig(gamma=args.gamma, v_folds=args.v_folds,
                     max_degree=args.max_degree,
                     max_knots_per_dim=args.max_knots,
                     truncation_delta=args.truncation, seed=args.seed)
    if args.estimator == "drtmle_ohal":
        psi, ci_if, ci_cv, diagnostics = _estimate_drtmle(d, cfg, args)
    elif args.estimator == "tmle_hal":
        psi, ci_if, ci_cv, diagnostics = _estimate_tmle_hal(d, cfg, args)
    else:
        psi, ci_if, ci_cv, diagnostics = _estimate_comparator(d, cfg, args)
    y_range = scaling.range
    report = RunReport(
        schema_version=SCHEMA_VERSION,
        estimate=unscale_effect(psi, scaling),
        n=d.n,
        se_if=ci_if.se * y_range,
        se_cv=None if ci_cv is None else ci_cv.se * y_range,
        ci_if=_ci_dict(ci_if, y_range),
        ci_cv=None if ci_cv is None else _ci_dict(ci_cv, y_range),
        diagnostics=diagnostics,
        config={
            "data": args.data, "treatment": args.treatment,
            "outcome": args.outcome, "gamma": args.gamma,
            "v_folds": args.v_folds, "max_degree": args.max_degree,
            "max_knots": args.max_knots, "truncation": args.truncation,
            "alpha": args.alpha, "seed": args.seed,
            "estimator": args.estimator, "scale": not args.no_scale,
            "bootstrap_b": args.bootstrap_b,
            "outcome_min": scaling.y_min, "outcome_max": scaling.y_max,
        },
        timing_seconds=time.time() - t0)
    text = json.dumps(asdict(report), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return report


def cmd_simulate(args) -> list:
    """Run the Monte Carlo study and write the table files."""
    estimators = None
    if args.estimators:
        estimators = tuple(s.strip() for s in args.estimators.split(",")
                           if s.strip())
    cfg = SimConfig(n=args.n, reps=args.reps, seed=args.seed,
                    estimators=estimators, alpha=args.alpha,
                    bootstrap_b=args.bootstrap_b, v_folds=args.v_folds)
    rows = run_monte_carlo(cfg, threads=_resolve_threads(args.threads))
    return write_tables(rows, args.out_dir)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "estimate":
            cmd_estimate(args)
        else:
            for path in cmd_simulate(args):
                print(path)
    except (DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
