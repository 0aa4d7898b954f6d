"""A small model-formula language, design-matrix construction and binomial aggregation.

Supported surface::

    response ~ [0 +] term + term + ...
    response := name | cbind(successes, failures)
    term     := factor (":" factor)*  |  "."
    factor   := name | log(name) | sqrt(name) | I(name^2) | poly(name, degree)
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .families import INTERCEPT


class FormulaError(ValueError):
    """Malformed formula; the message carries the 0-based character position."""

    def __init__(self, message: str, text: str = "", pos: int | None = None):
        if pos is not None:
            message = f"{message} at position {pos}: {text!r}"
        super().__init__(message)
        self.pos = pos


@dataclass(frozen=True)
class Factor:
    kind: str  # raw | log | sqrt | square | poly
    column: str
    degree: int = 1

    def label(self) -> str:
        if self.kind == "raw":
            return self.column
        if self.kind == "square":
            return f"I({self.column}^2)"
        if self.kind == "poly":
            return f"poly({self.column}, {self.degree})"
        return f"{self.kind}({self.column})"


@dataclass(frozen=True)
class Term:
    factors: tuple

    def label(self) -> str:
        return ":".join(f.label() for f in self.factors)

    @property
    def variables(self) -> frozenset:
        return frozenset(f.label() for f in self.factors)


DOT = Term((Factor("raw", "."),))


@dataclass(frozen=True)
class Formula:
    response: str | tuple
    terms: tuple
    intercept: bool = True

    @property
    def counts_response(self) -> bool:
        return isinstance(self.response, tuple)

    def response_columns(self) -> tuple:
        return self.response if self.counts_response else (self.response,)


_TOKEN = re.compile(r"\s*(?:(?P<num>\d+(?:\.\d*)?)|(?P<name>[A-Za-z_.][A-Za-z0-9_.]*|`[^`]+`)|(?P<op>[~+:(),^]))")


def _tokenize(text: str):
    pos, out = 0, []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise FormulaError("unexpected character", text, pos + len(text[pos:]) - len(text[pos:].lstrip()))
        kind = m.lastgroup
        val = m.group(kind)
        if kind == "name" and val.startswith("`"):
            val = val[1:-1]
        out.append((kind, val, m.start(kind)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        tok = self.toks[self.i]
        if (kind and tok[0] != kind) or (value is not None and tok[1] != value):
            want = value or kind
            got = tok[1] or "end of input"
            raise FormulaError(f"expected {want!r}, found {got!r}", self.text, tok[2])
        self.i += 1
        return tok

    def name(self) -> str:
        return self.take("name")[1]

    def formula(self) -> Formula:
        resp = self.response()
        self.take("op", "~")
        intercept = True
        if self.peek()[0] == "num":
            tok = self.take("num")
            if tok[1] not in ("0", "1"):
                raise FormulaError("only 0 or 1 may appear as a constant term", self.text, tok[2])
            intercept = tok[1] == "1"
            if self.peek()[0] == "end":
                return Formula(resp, (), intercept)
            self.take("op", "+")
        terms, seen = [], {}
        while True:
            start = self.peek()[2]
            term = self.term()
            if term.label() in seen:
                raise FormulaError(f"duplicate term {term.label()!r}", self.text, start)
            seen[term.label()] = start
            terms.append(term)
            if self.peek()[0] == "end":
                break
            self.take("op", "+")
        return Formula(resp, tuple(terms), intercept)

    def response(self):
        tok = self.peek()
        if tok[0] == "name" and tok[1] == "cbind":
            self.take()
            self.take("op", "(")
            a = self.name()
            self.take("op", ",")
            b = self.name()
            self.take("op", ")")
            if a == b:
                raise FormulaError("cbind() needs two different columns", self.text, tok[2])
            return (a, b)
        return self.name()

    def term(self) -> Term:
        factors = [self.factor()]
        while self.peek()[1] == ":":
            self.take()
            factors.append(self.factor())
        if any(f.column == "." for f in factors) and len(factors) > 1:
            raise FormulaError("'.' cannot be part of an interaction", self.text, self.peek()[2])
        return Term(tuple(factors))

    def factor(self) -> Factor:
        tok = self.take("name")
        if self.peek()[1] != "(":
            return Factor("raw", tok[1])
        fn = tok[1]
        self.take("op", "(")
        if fn in ("log", "sqrt"):
            col = self.name()
            self.take("op", ")")
            return Factor(fn, col)
        if fn == "I":
            col = self.name()
            self.take("op", "^")
            power = self.take("num")
            if power[1] != "2":
                raise FormulaError("only squares are supported inside I()", self.text, power[2])
            self.take("op", ")")
            return Factor("square", col)
        if fn == "poly":
            col = self.name()
            self.take("op", ",")
            deg = self.take("num")
            if not deg[1].isdigit() or int(deg[1]) < 1:
                raise FormulaError("poly() degree must be a positive integer", self.text, deg[2])
            self.take("op", ")")
            return Factor("poly", col, int(deg[1]))
        raise FormulaError(f"unknown function {fn!r}", self.text, tok[2])


def parse_formula(text: str) -> Formula:
    if not text or not text.strip():
        raise FormulaError("empty formula")
    return _Parser(text).formula()


def format_formula(f: Formula) -> str:
    """Canonical text; ``parse_formula(format_formula(f)) == f``."""
    resp = f"cbind({f.response[0]}, {f.response[1]})" if f.counts_response else f.response
    terms = [t.label() for t in f.terms]
    if not f.intercept:
        terms = ["0"] + terms
    return f"{resp} ~ {' + '.join(terms) if terms else '1'}"


# -- data --------------------------------------------------------------------


def read_csv(path) -> pd.DataFrame:
    """Read a comma-separated table with a header; NA cells are rejected."""
    df = pd.read_csv(path, sep=",", decimal=".", encoding="utf-8")
    if df.isna().any().any():
        bad = [c for c in df.columns if df[c].isna().any()]
        raise ValueError(f"missing values in column(s): {', '.join(map(str, bad))}")
    return df


def _is_categorical(s: pd.Series) -> bool:
    return not pd.api.types.is_numeric_dtype(s) or pd.api.types.is_bool_dtype(s)


def orthogonal_poly(x, degree: int) -> np.ndarray:
    """Orthonormal polynomial basis of degree 1..d (QR of the centred Vandermonde)."""
    x = np.asarray(x, dtype=float)
    if degree >= np.unique(x).size:
        raise ValueError("poly() degree must be less than the number of unique points")
    V = np.vander(x - x.mean(), degree + 1, increasing=True)
    Q, R = np.linalg.qr(V)
    Z = Q * np.sign(np.diag(R))
    return Z[:, 1:]


@dataclass
class ModelFrame:
    X: np.ndarray
    column_names: tuple
    y: np.ndarray
    weights: np.ndarray
    intercept: bool
    row_index: np.ndarray


def _expand_dot(f: Formula, table: pd.DataFrame) -> list:
    used = set(f.response_columns())
    terms = []
    for t in f.terms:
        if t == DOT:
            terms += [Term((Factor("raw", c),)) for c in table.columns if c not in used]
        else:
            terms.append(t)
    return terms


def _factor_columns(fac: Factor, table: pd.DataFrame, full: bool):
    if fac.column not in table.columns:
        raise KeyError(f"column {fac.column!r} not found in data")
    s = table[fac.column]
    if _is_categorical(s):
        if fac.kind != "raw":
            raise ValueError(f"{fac.label()} applied to a categorical column")
        levels = sorted(s.astype(str).unique())
        keep = levels if full else levels[1:]
        vals = s.astype(str).to_numpy()
        return [f"{fac.column}{lv}" for lv in keep], [(vals == lv).astype(float) for lv in keep]
    x = s.to_numpy(dtype=float)
    if fac.kind == "raw":
        return [fac.column], [x]
    if fac.kind == "log":
        if np.any(x <= 0):
            raise ValueError(f"log() of non-positive values in {fac.column!r}")
        return [fac.label()], [np.log(x)]
    if fac.kind == "sqrt":
        if np.any(x < 0):
            raise ValueError(f"sqrt() of negative values in {fac.column!r}")
        return [fac.label()], [np.sqrt(x)]
    if fac.kind == "square":
        return [fac.label()], [x**2]
    P = orthogonal_poly(x, fac.degree)
    return [f"{fac.label()}{d}" for d in range(1, fac.degree + 1)], list(P.T)


def build_model_matrix(formula: Formula | str, table: pd.DataFrame) -> ModelFrame:
    """Design matrix, response and weights for ``formula`` over ``table``.

    Categorical factors use reference coding (first level alphabetically
    dropped) when the term without that factor is already spanned, and full
    coding otherwise.  A ``cbind(s, f)`` response yields proportions with the
    trial counts as weights; rows with zero trials are dropped.
    """
    f = parse_formula(formula) if isinstance(formula, str) else formula
    for c in f.response_columns():
        if c not in table.columns:
            raise KeyError(f"response column {c!r} not found in data")
    if table.isna().any().any():
        raise ValueError("data contains missing values")
    n = len(table)
    terms = _expand_dot(f, table)
    cols: list = []
    names: list = []
    if f.intercept:
        cols.append(np.ones(n))
        names.append(INTERCEPT)
    spanned = {frozenset()} if f.intercept else set()
    for term in terms:
        parts = []
        for fac in term.factors:
            rest = term.variables - {fac.label()}
            cat = fac.column in table.columns and _is_categorical(table[fac.column])
            full = cat and rest not in spanned
            parts.append(_factor_columns(fac, table, full))
            if cat and full and not rest:
                spanned.add(frozenset())
        spanned.add(term.variables)
        tnames, tcols = [""], [np.ones(n)]
        for pn, pc in parts:
            tnames = [f"{a}:{b}" if a else b for a in tnames for b in pn]
            tcols = [a * b for a in tcols for b in pc]
        names += tnames
        cols += tcols
    if len(set(names)) != len(names):
        dup = sorted({nm for nm in names if names.count(nm) > 1})
        raise ValueError(f"duplicate design columns: {dup}")
    X = np.column_stack(cols) if cols else np.zeros((n, 0))
    keep = np.ones(n, dtype=bool)
    if f.counts_response:
        s = table[f.response[0]].to_numpy(dtype=float)
        fl = table[f.response[1]].to_numpy(dtype=float)
        if np.any(s < 0) or np.any(fl < 0):
            raise ValueError("success/failure counts must be non-negative")
        tot = s + fl
        keep = tot > 0
        y = np.divide(s, tot, out=np.zeros(n), where=keep)
        w = tot
    else:
        r = table[f.response]
        if _is_categorical(r):
            levels = sorted(r.astype(str).unique())
            if len(levels) != 2:
                raise ValueError(f"categorical response {f.response!r} must have two levels")
            y = (r.astype(str).to_numpy() == levels[1]).astype(float)
        else:
            y = r.to_numpy(dtype=float)
        w = np.ones(n)
    return ModelFrame(X[keep], tuple(names), y[keep], w[keep], f.intercept, np.flatnonzero(keep))


def agg_binomial(formula: Formula | str, table: pd.DataFrame, success: str = "success",
                 failure: str = "failure") -> pd.DataFrame:
    """Collapse duplicated covariate rows of a binary-response table into counts."""
    f = parse_formula(formula) if isinstance(formula, str) else formula
    if f.counts_response:
        raise ValueError("agg_binomial expects a single binary response")
    resp = table[f.response]
    if _is_categorical(resp):
        levels = sorted(resp.astype(str).unique())
        if len(levels) > 2:
            raise ValueError("response must have at most two levels")
        yv = (resp.astype(str).to_numpy() == levels[-1]).astype(int) if len(levels) == 2 else np.zeros(len(resp), int)
    else:
        yv = resp.to_numpy(dtype=float)
        if not np.all(np.isin(yv, (0.0, 1.0))):
            raise ValueError("response must be binary (0/1)")
        yv = yv.astype(int)
    covs: list = []
    for t in _expand_dot(f, table):
        for fac in t.factors:
            if fac.column not in table.columns:
                raise KeyError(f"column {fac.column!r} not found in data")
            if fac.column not in covs:
                covs.append(fac.column)
    for c in covs:
        s = table[c]
        if not _is_categorical(s):
            v = s.to_numpy(dtype=float)
            if np.any(v != np.round(v)):
                raise ValueError(f"column {c!r} looks continuous; aggregation would not reduce the data")
    work = table[covs].copy()
    work[success] = yv
    work[failure] = 1 - yv
    out = work.groupby(covs, sort=False, dropna=False)[[success, failure]].sum().reset_index()
    return out[[success, failure] + covs]
