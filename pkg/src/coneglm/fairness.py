"""Fairness sweep: refit a classifier under shrinking covariance bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .constraints import FairnessCovariance, disparate_impact, fairness_covariance
from .families import GlmModel
from .fit import FitResult, hglm_fit


def accuracy(y, predicted) -> float:
    return float(np.mean(np.asarray(y) == np.asarray(predicted)))


def auc(y, score) -> float:
    """Area under the ROC curve via the rank-sum (trapezoidal) identity."""
    y = np.asarray(y).astype(bool)
    n1, n0 = y.sum(), (~y).sum()
    if n1 == 0 or n0 == 0:
        return math.nan
    r = rankdata(np.asarray(score, dtype=float))
    return float((r[y].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


@dataclass
class SweepRow:
    alpha: float
    bounds: np.ndarray
    covariance: np.ndarray
    disparate_impact: np.ndarray
    accuracy: float
    auc: float
    status: str
    fit: FitResult


def fair_sweep(model: GlmModel, W, alphas, threshold: float = 0.5, names=(), **fit_kwargs) -> list:
    """Fit with ``c_k = alpha * s_k`` for every alpha in ``alphas``.

    ``s_k = |cov(w_k, x'beta_hat)|`` at the unconstrained fit.  Metrics are
    computed in-sample, labelling ``mu >= threshold`` as positive.
    """
    W = np.asarray(W, dtype=float)
    W = W[:, None] if W.ndim == 1 else W
    alphas = [float(a) for a in alphas]
    if any(not 0.0 <= a <= 1.0 for a in alphas):
        raise ValueError("alphas must lie in [0, 1]")
    base = hglm_fit(model, **fit_kwargs)
    if not base.ok:
        raise RuntimeError(f"unconstrained fit failed with status {base.status}")
    s = np.abs(fairness_covariance(W, model.X, base.coefficients))
    rows = []
    for a in alphas:
        c = a * s
        fit = hglm_fit(model, [FairnessCovariance(W, c, tuple(names))], **fit_kwargs)
        if fit.ok:
            mu = model.family_link.linkinv(model.X @ fit.coefficients)
            pred = (mu >= threshold).astype(int)
            label = (model.y >= 0.5).astype(int)
            cov = fairness_covariance(W, model.X, fit.coefficients)
            di = np.array([disparate_impact(pred, W[:, k]) for k in range(W.shape[1])])
            rows.append(SweepRow(a, c, cov, di, accuracy(label, pred), auc(label, mu), fit.status, fit))
        else:
            nan = np.full(W.shape[1], np.nan)
            rows.append(SweepRow(a, c, nan, nan, math.nan, math.nan, fit.status, fit))
    return rows
