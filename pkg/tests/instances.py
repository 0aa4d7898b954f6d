"""Seeded random GLM instances whose maximum likelihood estimate is interior."""

from __future__ import annotations

import numpy as np

from coneglm.families import FamilyLink, GlmModel

FAMILY_LINKS = [
    ("gaussian", "identity"),
    ("binomial", "logit"),
    ("binomial", "probit"),
    ("binomial", "log"),
    ("poisson", "log"),
    ("poisson", "identity"),
    ("poisson", "sqrt"),
]


def random_instance(family: str, link: str, rng, n=None, p=None, sparse: int | None = None) -> GlmModel:
    """Intercept plus ``p - 1`` covariates in [-1, 1].

    The true means stay well inside the link domain (log-binomial means
    below exp(-1), identity/sqrt Poisson means above 1), so the MLE is
    interior with overwhelming probability.  ``sparse`` keeps only that many
    non-zero true slopes.
    """
    n = int(rng.integers(80, 201)) if n is None else n
    p = int(rng.integers(2, 9)) if p is None else p
    X = np.column_stack([np.ones(n), rng.uniform(-1, 1, size=(n, p - 1))])
    slopes = rng.normal(size=p - 1)
    if sparse is not None:
        slopes[rng.permutation(p - 1)[sparse:]] = 0.0
    weights = np.ones(n)
    if family == "gaussian":
        beta = np.concatenate([[1.0], 2.0 * slopes])
        y = X @ beta + rng.normal(size=n)
    elif family == "binomial":
        trials = rng.integers(1, 6, size=n)
        if link == "log":
            beta = np.concatenate([[-2.0], 0.8 * slopes / max(1.0, np.abs(slopes).sum())])
            mu = np.exp(X @ beta)
        else:
            beta = np.concatenate([[0.2], 0.8 * slopes])
            mu = 1.0 / (1.0 + np.exp(-X @ beta))
        y = rng.binomial(trials, mu) / trials
        weights = trials.astype(float)
    else:
        if link == "log":
            mu = np.exp(X @ np.concatenate([[1.0], 0.5 * slopes]))
        elif link == "identity":
            mu = X @ np.concatenate([[10.0], 6.0 * slopes / max(1.0, np.abs(slopes).sum())])
        else:
            mu = (X @ np.concatenate([[3.0], 1.5 * slopes / max(1.0, np.abs(slopes).sum())])) ** 2
        y = rng.poisson(mu).astype(float)
    return GlmModel(X, y, FamilyLink.of(family, link), weights=weights, intercept=True)
