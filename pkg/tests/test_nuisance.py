"""Nuisance pipeline: outcome fit, adaptive propensity, reduced regressions."""
import numpy as np
import pytest

from ohal.basis import design_matrix, enumerate_basis
from ohal.data import Dataset
from ohal.nuisance import (HalFit, OhalConfig, fit_nuisances, fit_outcome_hal,
                           fit_propensity_hal, fit_propensity_ohal,
                           fit_reduced_regressions, ohal_weights,
                           shared_folds)
from dgp import draw, draw_w, true_outcome, true_propensity


CFG = OhalConfig(v_folds=5, seed=3)


def test_ohal_weights_values():
    assert ohal_weights(0.5, 1.0) == pytest.approx(2.0)
    assert ohal_weights(0.0, 2.3) == np.inf
    assert ohal_weights(1.7, 0.0) == pytest.approx(1.0)
    np.testing.assert_allclose(ohal_weights([0.5, 0.0, 2.0], 1.0),
                               [2.0, np.inf, 0.5])
    np.testing.assert_allclose(ohal_weights([0.0, 3.0], 0.0), [1.0, 1.0])
    np.testing.assert_allclose(ohal_weights([2.0, 4.0], 2.0), [0.25, 0.0625])
    with pytest.raises(ValueError):
        ohal_weights([1.0], -0.5)


def test_config_validation():
    with pytest.raises(ValueError):
        OhalConfig(gamma=-1.0)
    with pytest.raises(ValueError):
        OhalConfig(v_folds=1)
    with pytest.raises(ValueError):
        OhalConfig(truncation_delta=0.0)
    with pytest.raises(ValueError):
        OhalConfig(truncation_delta=0.5)


def test_halfit_requires_exactly_one_of_fit_and_constant():
    b = enumerate_basis(np.array([[0.1], [0.7]]))
    with pytest.raises(ValueError):
        HalFit(basis=b, loss="logistic", fit=None)
    with pytest.raises(ValueError):
        HalFit(basis=b, loss="poisson", fit=None, constant=0.5)


def test_outcome_constant_subgroup_predicts_constant():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(60, 2))
    a = np.tile([0.0, 1.0], 30)
    y = np.where(a == 1, 0.37, rng.random(60))
    fit = fit_outcome_hal(Dataset(w=w, a=a, y=y), 1, CFG)
    np.testing.assert_array_equal(fit.predict(rng.normal(size=(9, 2))),
                                  np.full(9, 0.37))
    np.testing.assert_array_equal(fit.alpha, np.zeros(len(fit.basis)))

    y1 = np.where(a == 1, 1.0, rng.random(60))
    fit1 = fit_outcome_hal(Dataset(w=w, a=a, y=y1), 1, CFG)
    np.testing.assert_array_equal(fit1.predict(w[:4]), np.ones(4))


def test_outcome_small_subgroup_names_arm():
    rng = np.random.default_rng(1)
    w = rng.normal(size=(30, 2))
    a = np.r_[np.ones(6), np.zeros(24)]
    y = rng.random(30)
    with pytest.raises(ValueError, match="arm 1"):
        fit_outcome_hal(Dataset(w=w, a=a, y=y), 1, CFG)
    with pytest.raises(ValueError):
        fit_outcome_hal(Dataset(w=w, a=a, y=y), 2, CFG)


def test_outcome_fit_deterministic():
    d = draw(150, seed=11)
    f1 = fit_outcome_hal(d, 1, CFG)
    f2 = fit_outcome_hal(d, 1, CFG)
    assert f1.fit.intercept == f2.fit.intercept
    np.testing.assert_array_equal(f1.alpha, f2.alpha)


def test_halfit_predict_matches_full_design_product():
    d = draw(120, seed=5)
    fit = fit_outcome_hal(d, 1, CFG)
    wnew = draw_w(np.random.default_rng(9), 40)
    eta = design_matrix(fit.basis, wnew) @ fit.fit.beta + fit.fit.intercept
    from scipy.special import expit
    np.testing.assert_allclose(fit.predict(wnew), expit(eta), atol=1e-12)


def test_outcome_fit_recovers_truth_large_sample():
    d = draw(2000, seed=21)
    fit = fit_outcome_hal(d, 1, OhalConfig(seed=3))
    wtest = draw_w(np.random.default_rng(77), 2000)
    mse = np.mean((fit.predict(wtest) - true_outcome(wtest, 1.0)) ** 2)
    assert mse <= 0.01


def test_propensity_ohal_excludes_outcome_zero_columns():
    d = draw(500, seed=8)
    qfit = fit_outcome_hal(d, 1, CFG)
    gfit = fit_propensity_ohal(d, qfit, CFG)
    assert gfit.basis is qfit.basis
    dropped = qfit.alpha == 0
    assert dropped.any()
    np.testing.assert_array_equal(gfit.fit.beta[dropped],
                                  np.zeros(dropped.sum()))
    g = gfit.predict(d.w)
    assert g.min() >= CFG.truncation_delta
    assert g.max() <= 1.0 - CFG.truncation_delta


def test_propensity_ohal_constant_outcome_gives_mean_treatment():
    rng = np.random.default_rng(2)
    w = rng.normal(size=(80, 2))
    a = (rng.random(80) < 0.4).astype(float)
    a[:2] = [0.0, 1.0]
    y = np.where(a == 1, 0.5, rng.random(80))
    d = Dataset(w=w, a=a, y=y)
    qfit = fit_outcome_hal(d, 1, CFG)
    gfit = fit_propensity_ohal(d, qfit, CFG)
    assert gfit.flagged
    expected = np.clip(a.mean(), 0.01, 0.99)
    np.testing.assert_allclose(gfit.predict(w[:7]), np.full(7, expected))


def test_propensity_gamma_zero_equals_plain_hal():
    d = draw(200, seed=14)
    cfg = OhalConfig(gamma=0.0, v_folds=5, seed=3)
    folds = shared_folds(d, cfg)
    qfit = fit_outcome_hal(d, 1, cfg, folds=folds)
    g_adaptive = fit_propensity_ohal(d, qfit, cfg, folds=folds)
    g_plain = fit_propensity_hal(d, cfg, basis=qfit.basis, folds=folds)
    assert g_adaptive.fit.intercept == g_plain.fit.intercept
    np.testing.assert_array_equal(g_adaptive.fit.beta, g_plain.fit.beta)


def test_propensity_hal_recovers_truth_large_sample():
    d = draw(2000, seed=33)
    fit = fit_propensity_hal(d, OhalConfig(seed=3))
    wtest = draw_w(np.random.default_rng(55), 2000)
    mse = np.mean((fit.predict(wtest) - true_propensity(wtest)) ** 2)
    assert mse <= 0.01


def test_propensity_hal_deterministic():
    d = draw(150, seed=4)
    f1 = fit_propensity_hal(d, CFG)
    f2 = fit_propensity_hal(d, CFG)
    np.testing.assert_array_equal(f1.fit.beta, f2.fit.beta)


def _flat_region_dataset(n, seed):
    # outcome regression rises for w < 0 and is flat for w >= 0, while the
    # propensity keeps moving there; indicator basis functions with
    # non-negative knots carry treatment information but no outcome signal
    rng = np.random.default_rng(seed)
    w = rng.uniform(-6.0, 6.0, n)
    from scipy.special import expit
    qbar = expit(1.2 * np.minimum(w, 0.0) + 0.5)
    gbar = expit(0.8 * w)
    a = (rng.random(n) < gbar).astype(float)
    y = np.clip(qbar + rng.normal(0.0, 0.05, n), 0.0, 1.0)
    return Dataset(w=w[:, None], a=a, y=y)


def test_flat_outcome_region_screens_propensity_basis():
    d = _flat_region_dataset(500, seed=6)
    qfit = fit_outcome_hal(d, 1, CFG)
    gfit = fit_propensity_ohal(d, qfit, CFG)
    knots = np.array([f.knots[0] for f in gfit.basis.functions])
    selected = knots[gfit.fit.beta != 0]
    assert selected.size > 0
    assert (selected < 0).all()
    grid = np.linspace(0.0, 6.0, 200)[:, None]
    g = gfit.predict(grid)
    assert np.ptp(g) == 0.0


def test_reduced_regressions_ranges_and_determinism():
    d = draw(400, seed=17)
    qfit = fit_outcome_hal(d, 1, CFG)
    gfit = fit_propensity_ohal(d, qfit, CFG)
    r1, r2 = fit_reduced_regressions(d, qfit, gfit, CFG)
    u = qfit.predict(d.w)[:, None]
    p1 = r1.predict(u)
    assert p1.min() >= CFG.truncation_delta
    assert p1.max() <= 1.0 - CFG.truncation_delta
    r1b, r2b = fit_reduced_regressions(d, qfit, gfit, CFG)
    np.testing.assert_array_equal(r1.fit.beta, r1b.fit.beta)
    np.testing.assert_array_equal(r2.fit.beta, r2b.fit.beta)
    assert r2.truncation is None


def test_reduced_constant_covariate_degenerates_to_means():
    d = draw(100, seed=19)
    qbar = lambda w: np.full(len(w), 0.4)
    gbar = lambda w: np.full(len(w), 0.5)
    r1, r2 = fit_reduced_regressions(d, qbar, gbar, CFG)
    np.testing.assert_allclose(r1.predict(np.full((5, 1), 0.4)),
                               np.full(5, np.clip(d.a.mean(), 0.01, 0.99)))
    z = (d.a - 0.5) / 0.5
    np.testing.assert_allclose(r2.predict(np.full((5, 1), 0.4)),
                               np.full(5, z.mean()))


def test_reduced_independent_treatment_near_intercept_only():
    # treatment carries no information about u, so the logistic reduced fit
    # should stay close to the marginal treatment rate
    rng = np.random.default_rng(23)
    n = 500
    w = rng.normal(size=(n, 2))
    a = (rng.random(n) < 0.45).astype(float)
    y = rng.random(n)
    d = Dataset(w=w, a=a, y=y)
    qbar = lambda w_: 1.0 / (1.0 + np.exp(-w_[:, 0]))
    gbar = lambda w_: np.full(len(w_), a.mean())
    r1, _ = fit_reduced_regressions(d, qbar, gbar, CFG)
    p = r1.predict(qbar(w)[:, None])
    assert np.max(np.abs(p - a.mean())) <= 0.05


def test_reduced_second_regression_small_without_instrument():
    # with the instrument's propensity coefficient zeroed, the adaptive
    # propensity limit matches the true propensity and the second reduced
    # regression targets zero
    d = draw(2000, seed=29, w4_coef=0.0)
    bundle = fit_nuisances(d, CFG)
    vals = bundle.g_r2(d.w)
    assert np.mean(np.abs(vals)) <= 0.05


def test_shared_folds_cover_requirements():
    d = draw(120, seed=31)
    cfg = OhalConfig(v_folds=4, seed=0)
    folds = shared_folds(d, cfg)
    assert folds.shape == (120,)
    for k in range(4):
        sel = folds == k
        assert {0.0, 1.0} <= set(d.a[sel])
        for arm in (0, 1):
            ya = d.y[sel & (d.a == arm)]
            assert ya.size and ya.min() < ya.max()
    np.testing.assert_array_equal(folds, shared_folds(d, cfg))


def test_fit_nuisances_bundle_structure():
    d = draw(250, seed=41)
    cfg = OhalConfig(v_folds=4, seed=1)
    folds = shared_folds(d, cfg)
    b = fit_nuisances(d, cfg, folds=folds)
    assert len(b.fold_bundles) == 4
    np.testing.assert_array_equal(b.folds, folds)
    assert b.truncation_delta == cfg.truncation_delta
    lo, hi = cfg.truncation_delta, 1.0 - cfg.truncation_delta
    for view in (b, *b.fold_bundles):
        g = view.gbar(d.w)
        assert g.min() >= lo and g.max() <= hi
        p1 = view.g_r1(d.w)
        assert p1.min() >= lo and p1.max() <= hi
        q = view.qbar(d.w)
        assert q.min() >= 0.0 and q.max() <= 1.0
    # composition: reduced fits take the fitted outcome value as covariate
    u = b.qbar(d.w)[:, None]
    np.testing.assert_array_equal(b.g_r1(d.w), b.reduced_one.predict(u))
    np.testing.assert_array_equal(b.g_r2(d.w), b.reduced_two.predict(u))


def test_fit_nuisances_arm_mirror():
    d = draw(250, seed=43)
    cfg = OhalConfig(v_folds=4, seed=2)
    folds = shared_folds(d, cfg)
    b0 = fit_nuisances(d.relabel_treatment(), cfg, folds=folds)
    manual = fit_outcome_hal(d.relabel_treatment(), 1, cfg, folds=folds)
    np.testing.assert_array_equal(b0.outcome.alpha, manual.alpha)
    # the mirrored pipeline's outcome fit is trained on the original arm-0
    # rows: its basis was enumerated from exactly those covariates
    assert b0.outcome.basis.source_n == int((d.a == 0).sum())


def test_fold_bundles_differ_from_full_fit():
    d = draw(250, seed=47)
    cfg = OhalConfig(v_folds=4, seed=5)
    b = fit_nuisances(d, cfg)
    full_q = b.qbar(d.w)
    assert any(not np.array_equal(fb.qbar(d.w), full_q)
               for fb in b.fold_bundles)
