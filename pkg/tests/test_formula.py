import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coneglm.families import FamilyLink, GlmModel
from coneglm.fit import hglm_fit
from coneglm.formula import (
    Factor,
    Formula,
    FormulaError,
    Term,
    agg_binomial,
    build_model_matrix,
    format_formula,
    orthogonal_poly,
    parse_formula,
    read_csv,
)

# -- parsing -------------------------------------------------------------------

_names = st.sampled_from(["a", "b", "x1", "temp", "Dose.mg", "z_2"])
_factor = st.one_of(
    _names.map(lambda c: Factor("raw", c)),
    _names.map(lambda c: Factor("log", c)),
    _names.map(lambda c: Factor("sqrt", c)),
    _names.map(lambda c: Factor("square", c)),
    st.tuples(_names, st.integers(1, 6)).map(lambda t: Factor("poly", t[0], t[1])),
)
_term = st.lists(_factor, min_size=1, max_size=3, unique=True).map(lambda fs: Term(tuple(fs)))


@st.composite
def _formulas(draw):
    terms = draw(st.lists(_term, min_size=0, max_size=4, unique_by=lambda t: t.label()))
    resp = draw(st.one_of(st.just("y"), st.just(("s", "f"))))
    return Formula(resp, tuple(terms), draw(st.booleans()))


@settings(max_examples=150, deadline=None)
@given(_formulas())
def test_format_then_parse_is_identity(f):
    assert parse_formula(format_formula(f)) == f


def test_parse_surface():
    f = parse_formula("cbind(s, f) ~ 0 + log(x) + poly(t, 3) + a:b + I(z^2) + .")
    assert f.response == ("s", "f") and not f.intercept
    assert [t.label() for t in f.terms] == ["log(x)", "poly(t, 3)", "a:b", "I(z^2)", "."]
    assert parse_formula("y ~ 1").terms == ()


@pytest.mark.parametrize("text,pos", [
    ("y ~ a + $b", 8),
    ("y ~ a +", 7),
    ("y ~ foo(a)", 4),
    ("y ~ I(a^3)", 8),
    ("y ~ a + a", 8),
    ("y a", 2),
    ("y ~ poly(a, 0)", 12),
])
def test_parse_errors_carry_position(text, pos):
    with pytest.raises(FormulaError) as err:
        parse_formula(text)
    assert err.value.pos == pos
    assert f"position {pos}" in str(err.value)


def test_empty_formula_is_rejected():
    with pytest.raises(FormulaError):
        parse_formula("   ")


# -- design matrices ---------------------------------------------------------------

TABLE = pd.DataFrame({
    "y": [1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
    "x": [1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
    "g": ["b", "a", "c", "a", "b", "c"],
    "h": ["u", "v", "u", "v", "u", "v"],
})


def test_reference_coding_with_intercept():
    fr = build_model_matrix("y ~ g + log(x)", TABLE)
    assert fr.column_names == ("(Intercept)", "gb", "gc", "log(x)")
    np.testing.assert_array_equal(fr.X[:, 1], [1, 0, 0, 0, 1, 0])
    np.testing.assert_allclose(fr.X[:, 3], np.log(TABLE.x))


def test_full_coding_without_intercept():
    fr = build_model_matrix("y ~ 0 + g", TABLE)
    assert fr.column_names == ("ga", "gb", "gc")
    np.testing.assert_array_equal(fr.X.sum(axis=1), 1.0)


def test_interaction_columns():
    fr = build_model_matrix("y ~ x + h + x:h", TABLE)
    assert fr.column_names == ("(Intercept)", "x", "hv", "x:hv")
    np.testing.assert_array_equal(fr.X[:, 3], TABLE.x * (TABLE.h == "v"))


def test_interaction_of_categorical_with_unspanned_main_effect_uses_full_coding():
    fr = build_model_matrix("y ~ x:h", TABLE)
    assert fr.column_names == ("(Intercept)", "x:hu", "x:hv")


def test_dot_expands_remaining_columns():
    fr = build_model_matrix("y ~ .", TABLE[["y", "x"]])
    assert fr.column_names == ("(Intercept)", "x")


def test_binary_string_response_and_counts_response():
    t = pd.DataFrame({"r": ["no", "yes", "yes"], "s": [1, 0, 3], "f": [1, 0, 1], "x": [1.0, 2.0, 3.0]})
    assert build_model_matrix("r ~ x", t).y.tolist() == [0.0, 1.0, 1.0]
    fr = build_model_matrix("cbind(s, f) ~ x", t)
    assert fr.y.tolist() == [0.5, 0.75] and fr.weights.tolist() == [2.0, 4.0]
    assert fr.row_index.tolist() == [0, 2]


@pytest.mark.parametrize("formula,exc", [
    ("y ~ missing", KeyError),
    ("nope ~ x", KeyError),
    ("y ~ log(g)", ValueError),
    ("y ~ sqrt(y) + log(y)", None),
])
def test_design_errors(formula, exc):
    if exc is None:
        build_model_matrix(formula, TABLE)
        return
    with pytest.raises(exc):
        build_model_matrix(formula, TABLE)


def test_log_of_non_positive_is_rejected():
    with pytest.raises(ValueError):
        build_model_matrix("y ~ log(x)", TABLE.assign(x=TABLE.x - 4))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=8, max_size=40, unique=True), st.integers(1, 5))
def test_orthogonal_poly_is_orthonormal_and_centred(xs, degree):
    x = np.asarray(xs)
    if np.ptp(x) < 1e-3:
        return
    P = orthogonal_poly(x, min(degree, len(x) - 2))
    np.testing.assert_allclose(P.T @ P, np.eye(P.shape[1]), atol=1e-8)
    np.testing.assert_allclose(P.sum(axis=0), 0.0, atol=1e-8)


def test_orthogonal_poly_spans_monomials():
    x = np.linspace(0, 3, 10)
    P = orthogonal_poly(x, 3)
    B = np.column_stack([np.ones(10), P])
    for d in range(4):
        coef, *_ = np.linalg.lstsq(B, x**d, rcond=None)
        np.testing.assert_allclose(B @ coef, x**d, atol=1e-9)


def test_poly_degree_must_be_below_unique_count():
    with pytest.raises(ValueError):
        orthogonal_poly([1.0, 2.0, 3.0], 3)


def test_read_csv_rejects_missing_values(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("y,x\n1,2\n3,\n")
    with pytest.raises(ValueError, match="x"):
        read_csv(path)
    path.write_text("y,x\n1,2\n3,4\n")
    assert read_csv(path).shape == (2, 2)


# -- aggregation ---------------------------------------------------------------------


def _binary_table(rng, n=400):
    return pd.DataFrame({
        "y": rng.integers(0, 2, n),
        "a": rng.integers(0, 3, n),
        "b": rng.choice(["lo", "hi"], n),
    })


def test_agg_binomial_conserves_counts(rng):
    t = _binary_table(rng)
    out = agg_binomial("y ~ a + b", t)
    assert list(out.columns) == ["success", "failure", "a", "b"]
    assert out.success.sum() == t.y.sum() and out.failure.sum() == (1 - t.y).sum()
    assert len(out) == len(t.groupby(["a", "b"]))
    for _, row in out.iterrows():
        grp = t[(t.a == row.a) & (t.b == row.b)]
        assert row.success == grp.y.sum() and row.success + row.failure == len(grp)


def test_aggregated_fit_matches_raw_fit(rng):
    t = _binary_table(rng)
    agg = agg_binomial("y ~ a + b", t)

    def fit(formula, table):
        fr = build_model_matrix(formula, table)
        m = GlmModel(fr.X, fr.y, FamilyLink.of("binomial", "logit"), fr.column_names, fr.weights, fr.intercept)
        return hglm_fit(m)

    raw = fit("y ~ a + b", t)
    grouped = fit("cbind(success, failure) ~ a + b", agg)
    np.testing.assert_allclose(grouped.coefficients, raw.coefficients, atol=1e-6)


def test_agg_binomial_rejects_continuous_and_non_binary():
    t = pd.DataFrame({"y": [0, 1, 1], "x": [0.5, 1.5, 2.5]})
    with pytest.raises(ValueError):
        agg_binomial("y ~ x", t)
    with pytest.raises(ValueError):
        agg_binomial("y ~ x", t.assign(y=[0, 1, 2], x=[1, 2, 3]))
