import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coneglm.fairness import accuracy, auc, fair_sweep
from coneglm.families import FamilyLink, GlmModel
from coneglm.fit import hglm_fit


def _pairwise_auc(y, s):
    pos, neg = s[y == 1], s[y == 0]
    wins = sum((p > q) + 0.5 * (p == q) for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(-5, 5)), min_size=2, max_size=40))
def test_auc_matches_pairwise_count(pairs):
    y = np.array([p[0] for p in pairs])
    s = np.array([p[1] for p in pairs], dtype=float)
    if y.min() == y.max():
        assert math.isnan(auc(y, s))
    else:
        assert auc(y, s) == pytest.approx(_pairwise_auc(y, s), abs=1e-12)


def test_accuracy():
    assert accuracy([1, 0, 1, 1], [1, 1, 1, 0]) == 0.5


def test_fair_sweep_alpha_zero_removes_covariance(rng):
    n = 250
    w = (rng.random(n) < 0.5).astype(float)
    X = np.column_stack([np.ones(n), rng.normal(size=n) + w, rng.normal(size=n)])
    y = (rng.random(n) < 1 / (1 + np.exp(-(X @ [0.0, 1.2, -0.5])))).astype(float)
    m = GlmModel(X, y, FamilyLink.of("binomial", "logit"), ("(Intercept)", "a", "b"), intercept=True)
    rows = fair_sweep(m, w, [0.0, 1.0])
    assert abs(rows[0].covariance[0]) <= 1e-6
    assert rows[1].bounds[0] > 0
    # at alpha = 1 the unconstrained optimum is still feasible
    free = hglm_fit(m).coefficients
    np.testing.assert_allclose(rows[1].fit.coefficients, free, atol=1e-6)
    with pytest.raises(ValueError):
        fair_sweep(m, w, [1.5])
