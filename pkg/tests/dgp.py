"""Synthetic benchmark data-generating process shared by test modules.

Four covariates: W1 ~ U(-1,1), W2 ~ Bernoulli(0.5), W3 ~ U(-1,1),
W4 ~ U(0,1). Treatment depends on (W2, W3, W4); the outcome depends on
(W1, W2, W3) and treatment. W4 influences treatment only, making it an
instrument unless its coefficient is zeroed.
"""

import numpy as np
from scipy.special import expit

from ohal.data import Dataset

W4_COEF = -2.5


def draw_w(rng, n):
    w1 = rng.uniform(-1.0, 1.0, n)
    w2 = rng.integers(0, 2, n).astype(np.float64)
    w3 = rng.uniform(-1.0, 1.0, n)
    w4 = rng.uniform(0.0, 1.0, n)
    return np.column_stack([w1, w2, w3, w4])


def true_propensity(w, w4_coef=W4_COEF):
    w = np.asarray(w, dtype=np.float64)
    return expit(0.5 - w[:, 2] + 2.0 * w[:, 2] * w[:, 1] + w4_coef * w[:, 3])


def true_outcome(w, a):
    w = np.asarray(w, dtype=np.float64)
    eta = (-2.0 * w[:, 0] * (w[:, 0] > -0.5) - w[:, 2]
           + 2.0 * w[:, 1] * w[:, 2] + a)
    return expit(eta)


def draw(n, seed, w4_coef=W4_COEF):
    rng = np.random.default_rng(seed)
    w = draw_w(rng, n)
    a = (rng.random(n) < true_propensity(w, w4_coef)).astype(np.float64)
    y = (rng.random(n) < true_outcome(w, a)).astype(np.float64)
    return Dataset(w=w, a=a, y=y)
