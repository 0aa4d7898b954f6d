"""Holistic constraint specifications and their attachment to a conic program.

Coefficient-level constraints are stated on the original coefficient scale
and mapped into the solver's scaled space through ``beta_orig = T beta_s + t``.
Selection binaries ``z_j`` (one per non-intercept column) are created the
first time a spec needs them and coupled through ``-M z_j <= beta_s_j <= M z_j``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .conic import ConicProgram
from .families import INTERCEPT
from .reformulate import VariableLayout

_DIRS = {"<=": "<=", "≤": "<=", "<": "<=", ">=": ">=", "≥": ">=", ">": ">=",
         "==": "==", "=": "=="}


def _names(vars_) -> tuple[str, ...]:
    if isinstance(vars_, str):
        return (vars_,)
    return tuple(str(v) for v in vars_)


@dataclass(frozen=True)
class KMax:
    k: int
    type = "k_max"

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise ValueError(f"k_max needs a non-negative integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))


@dataclass(frozen=True)
class GroupSparsity:
    vars: tuple
    k: int = 1
    type = "group_sparsity"

    def __post_init__(self):
        object.__setattr__(self, "vars", _names(self.vars))
        if not 0 <= self.k <= len(self.vars):
            raise ValueError(f"group_sparsity k={self.k} outside 0..{len(self.vars)}")


@dataclass(frozen=True)
class RhoMax:
    rho: float
    exclude: tuple = (INTERCEPT,)
    use: str = "everything"
    method: str = "pearson"
    type = "rho_max"

    def __post_init__(self):
        object.__setattr__(self, "exclude", _names(self.exclude))
        _check_rho(self.rho, self.method)


@dataclass(frozen=True)
class GroupInOut:
    vars: tuple
    type = "group_inout"

    def __post_init__(self):
        object.__setattr__(self, "vars", _names(self.vars))


@dataclass(frozen=True)
class Include:
    vars: tuple
    type = "include"

    def __post_init__(self):
        object.__setattr__(self, "vars", _names(self.vars))


@dataclass(frozen=True)
class Lower:
    bounds: dict
    type = "lower"

    def __post_init__(self):
        object.__setattr__(self, "bounds", {str(k): float(v) for k, v in dict(self.bounds).items()})


@dataclass(frozen=True)
class Upper:
    bounds: dict
    type = "upper"

    def __post_init__(self):
        object.__setattr__(self, "bounds", {str(k): float(v) for k, v in dict(self.bounds).items()})


@dataclass(frozen=True, eq=False)
class Linear:
    """Rows ``L beta  dir  rhs`` with ``L``'s columns named by ``columns``.

    With ``on_big_m`` the rows act on the selection binaries instead of beta.
    """

    L: np.ndarray
    columns: tuple
    dir: tuple
    rhs: np.ndarray
    on_big_m: bool = False
    type = "linear"

    def __post_init__(self):
        L = np.atleast_2d(np.asarray(self.L, dtype=float))
        cols = _names(self.columns)
        if L.shape[1] != len(cols):
            raise ValueError(f"L has {L.shape[1]} columns but {len(cols)} names were given")
        dirs = (self.dir,) * L.shape[0] if isinstance(self.dir, str) else tuple(self.dir)
        if len(dirs) != L.shape[0]:
            raise ValueError("one direction per row of L is required")
        try:
            dirs = tuple(_DIRS[d] for d in dirs)
        except KeyError as exc:
            raise ValueError(f"unknown direction {exc.args[0]!r}") from None
        rhs = np.broadcast_to(np.asarray(self.rhs, dtype=float), (L.shape[0],)).copy()
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "dir", dirs)
        object.__setattr__(self, "rhs", rhs)

    def __eq__(self, other):
        return (isinstance(other, Linear) and self.columns == other.columns
                and self.dir == other.dir and self.on_big_m == other.on_big_m
                and np.array_equal(self.L, other.L) and np.array_equal(self.rhs, other.rhs))


@dataclass(frozen=True)
class GroupEqual:
    vars: tuple
    type = "group_equal"

    def __post_init__(self):
        object.__setattr__(self, "vars", _names(self.vars))


@dataclass(frozen=True)
class SignCoherence:
    vars: tuple
    big_m: float | None = None
    type = "sign_coherence"

    def __post_init__(self):
        object.__setattr__(self, "vars", _names(self.vars))


@dataclass(frozen=True)
class PairwiseSignCoherence:
    rho: float = 0.9
    exclude: tuple = (INTERCEPT,)
    use: str = "everything"
    method: str = "pearson"
    type = "pairwise_sign_coherence"

    def __post_init__(self):
        object.__setattr__(self, "exclude", _names(self.exclude))
        _check_rho(self.rho, self.method)


@dataclass(frozen=True, eq=False)
class FairnessCovariance:
    """Bound |cov(w_k, x'beta)| <= c_k for each sensitive indicator column w_k."""

    W: np.ndarray
    c: np.ndarray
    names: tuple = ()
    type = "fairness"

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        W = W[:, None] if W.ndim == 1 else W
        c = np.broadcast_to(np.asarray(self.c, dtype=float), (W.shape[1],)).copy()
        if np.any(c < 0) or np.any(np.isnan(c)):
            raise ValueError("fairness bounds c must be non-negative")
        names = _names(self.names) if self.names else tuple(f"w{k}" for k in range(W.shape[1]))
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "names", names)

    def __eq__(self, other):
        return (isinstance(other, FairnessCovariance) and self.names == other.names
                and np.array_equal(self.W, other.W) and np.array_equal(self.c, other.c))


SPEC_TYPES = {cls.type: cls for cls in (KMax, GroupSparsity, RhoMax, GroupInOut, Include, Lower,
                                        Upper, Linear, GroupEqual, SignCoherence,
                                        PairwiseSignCoherence, FairnessCovariance)}


def _check_rho(rho, method):
    if not 0 < rho <= 1:
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    if method != "pearson":
        raise ValueError(f"only the pearson method is supported, got {method!r}")


def spec_to_dict(spec) -> dict:
    """JSON-ready dict for a spec, tagged with its ``type``."""
    out = {"type": spec.type}
    if isinstance(spec, Linear):
        out.update(L=spec.L.tolist(), columns=list(spec.columns), dir=list(spec.dir),
                   rhs=spec.rhs.tolist(), on_big_m=spec.on_big_m)
    elif isinstance(spec, FairnessCovariance):
        out.update(W=spec.W.tolist(), c=[_enc(v) for v in spec.c], names=list(spec.names))
    else:
        for f in spec.__dataclass_fields__:
            v = getattr(spec, f)
            out[f] = list(v) if isinstance(v, tuple) else v
    return out


def _enc(v):
    return None if math.isinf(v) else float(v)


def spec_from_dict(d: dict, table=None):
    """Inverse of :func:`spec_to_dict`.

    A ``fairness`` entry may name ``sensitive`` columns of ``table`` instead
    of carrying the ``W`` matrix, and may give ``c`` with ``null`` for +inf.
    """
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in SPEC_TYPES:
        raise ValueError(f"unknown constraint type {kind!r}; expected one of {sorted(SPEC_TYPES)}")
    if kind == "fairness":
        c = [math.inf if v is None else float(v) for v in np.atleast_1d(d["c"])]
        if "W" in d:
            return FairnessCovariance(np.asarray(d["W"], dtype=float), c, tuple(d.get("names", ())))
        sens = _names(d["sensitive"])
        if table is None:
            raise ValueError("fairness constraint names sensitive columns but no data was given")
        missing = [s for s in sens if s not in table]
        if missing:
            raise ValueError(f"unknown sensitive columns: {missing}")
        return FairnessCovariance(np.column_stack([np.asarray(table[s], dtype=float) for s in sens]),
                                  c, sens)
    if kind == "linear":
        return Linear(d["L"], d["columns"], d.get("dir", "<="), d["rhs"], bool(d.get("on_big_m", False)))
    try:
        return SPEC_TYPES[kind](**d)
    except TypeError as exc:
        raise ValueError(f"bad fields for {kind}: {exc}") from None


def specs_from_json(obj, table=None) -> list:
    if isinstance(obj, dict):
        obj = [obj]
    return [spec_from_dict(d, table) for d in obj]


# -- correlation and fairness helpers --------------------------------------


def correlation_pairs(X, column_names, rho: float, method: str = "pearson",
                      exclude=(INTERCEPT,), use: str = "everything") -> dict:
    """Pairs of columns with |correlation| > rho, mapped to their correlation.

    Keys are ``(name_j, name_k)`` with j < k in column order.
    """
    _check_rho(rho, method)
    if use != "everything":
        raise ValueError(f"only use='everything' is supported, got {use!r}")
    X = np.asarray(X, dtype=float)
    names = list(column_names)
    keep = [j for j, nm in enumerate(names) if nm not in set(exclude)]
    sub = X[:, keep]
    sd = sub.std(axis=0)
    const = [names[keep[j]] for j in np.flatnonzero(sd == 0)]
    if const:
        raise ValueError(f"correlation undefined for constant column(s): {const}")
    if not np.all(np.isfinite(sub)):
        raise ValueError("non-finite values in design matrix")
    R = np.corrcoef(sub, rowvar=False) if len(keep) > 1 else np.ones((1, 1))
    out = {}
    for a, b in itertools.combinations(range(len(keep)), 2):
        if abs(R[a, b]) > rho:
            out[(names[keep[a]], names[keep[b]])] = float(R[a, b])
    return out


def fairness_covariance(W, X, beta) -> np.ndarray:
    """Empirical covariance (1/n) sum (w_i - mean w) x_i'beta per column of W."""
    W = np.asarray(W, dtype=float)
    W = W[:, None] if W.ndim == 1 else W
    eta = np.asarray(X, dtype=float) @ np.asarray(beta, dtype=float)
    return (W - W.mean(axis=0)).T @ eta / W.shape[0]


def build_fairness_rows(W, X, c, column_names) -> Linear:
    """Rows -c_k <= (1/n) sum_i (w_ik - mean_k) x_i'beta <= c_k.

    Infinite c_k drops the pair; c_k = 0 becomes a single equality row.
    """
    W = np.asarray(W, dtype=float)
    W = W[:, None] if W.ndim == 1 else W
    X = np.asarray(X, dtype=float)
    c = np.broadcast_to(np.asarray(c, dtype=float), (W.shape[1],))
    if np.any(c < 0):
        raise ValueError("fairness bounds must be non-negative")
    flat = np.flatnonzero(W.std(axis=0) == 0)
    if flat.size:
        raise ValueError(f"sensitive column(s) {flat.tolist()} have zero variance")
    G = (W - W.mean(axis=0)).T @ X / X.shape[0]
    rows, dirs, rhs = [], [], []
    for k in range(W.shape[1]):
        if math.isinf(c[k]):
            continue
        if c[k] == 0:
            rows.append(G[k])
            dirs.append("==")
            rhs.append(0.0)
        else:
            rows += [G[k], G[k]]
            dirs += ["<=", ">="]
            rhs += [c[k], -c[k]]
    L = np.array(rows).reshape(len(rows), X.shape[1])
    return Linear(L, tuple(column_names), tuple(dirs), np.array(rhs))


def disparate_impact(predicted, w) -> float:
    """P(yhat=1 | w=0) / P(yhat=1 | w=1); NaN when undefined."""
    predicted = np.asarray(predicted)
    w = np.asarray(w)
    if predicted.shape != w.shape:
        raise ValueError("predicted labels and group indicator differ in length")
    unpriv, priv = w == 0, w == 1
    if not unpriv.any() or not priv.any():
        return math.nan
    den = predicted[priv].mean()
    if den == 0:
        return math.nan
    return float(predicted[unpriv].mean() / den)


# -- attachment --------------------------------------------------------------


@dataclass
class AugmentedProgram:
    """The likelihood program with constraint rows and binaries appended."""

    program: ConicProgram
    layout: VariableLayout
    z_index: dict = field(default_factory=dict)
    u_index: dict = field(default_factory=dict)
    big_m: float = 100.0
    # (column index, u variable, same sign) for every sign-coupled coefficient
    sign_pattern: list = field(default_factory=list)
    column_names: tuple = ()

    @property
    def base(self) -> ConicProgram:
        return self.program

    @property
    def z_range(self) -> range | None:
        if not self.z_index:
            return None
        idx = sorted(self.z_index.values())
        return range(idx[0], idx[-1] + 1)


class UnknownColumnError(ValueError):
    pass


def attach(program: ConicProgram, layout: VariableLayout, specs, column_names, big_m: float = 100.0,
           intercept: bool = False, X=None, transform=None) -> AugmentedProgram:
    """Append the rows and binaries for ``specs`` to ``program``.

    ``transform = (T, t)`` maps solver coefficients to the original scale,
    ``beta_orig = T beta_s + t``; it defaults to the identity.  ``X`` is the
    original-scale design, needed by correlation and fairness specs.
    """
    if not big_m > 0:
        raise ValueError("big_m must be positive")
    names = tuple(column_names)
    p = len(names)
    if p != layout.p:
        raise ValueError("column names do not match the program's coefficients")
    col = {nm: j for j, nm in enumerate(names)}
    T, t = (np.eye(p), np.zeros(p)) if transform is None else (np.asarray(transform[0], float),
                                                              np.asarray(transform[1], float))
    specs = list(specs)
    _resolve_names(specs, col)

    b = program.to_builder()
    beta0 = layout.beta.start
    aug = AugmentedProgram(program, layout, big_m=float(big_m), column_names=names)
    selectable = [nm for j, nm in enumerate(names) if not (intercept and j == 0)]

    def zvars():
        if not aug.z_index:
            idx = b.add_variables([f"z[{nm}]" for nm in selectable], 0.0, 1.0, binary=True)
            for nm, zi in zip(selectable, idx):
                aug.z_index[nm] = zi
            rows, cols, vals = [], [], []
            for r, nm in enumerate(selectable):
                j, zi = beta0 + col[nm], aug.z_index[nm]
                rows += [2 * r, 2 * r, 2 * r + 1, 2 * r + 1]
                cols += [j, zi, j, zi]
                vals += [1.0, big_m, -1.0, big_m]
            A = sp.csr_matrix((vals, (rows, cols)), shape=(2 * len(selectable), b.num_vars))
            b.add_linear(A, np.zeros(2 * len(selectable)), ">=")
        return aug.z_index

    def zrow(coefs: dict) -> sp.csr_matrix:
        z = zvars()
        row = np.zeros(b.num_vars)
        for nm, v in coefs.items():
            if nm not in z:
                raise ValueError(f"{nm!r} is the intercept and cannot carry a selection variable")
            row[z[nm]] += v
        return sp.csr_matrix(row)

    def beta_rows(L_orig: np.ndarray, rhs: np.ndarray, dirs):
        # L_orig is q x p on the original scale
        A_s = L_orig @ T
        shift = L_orig @ t
        full = np.zeros((L_orig.shape[0], b.num_vars))
        full[:, beta0:beta0 + p] = A_s
        for d in ("<=", ">=", "=="):
            sel = [i for i, di in enumerate(dirs) if di == d]
            if sel:
                b.add_linear(full[sel], rhs[sel] - shift[sel], d)

    def scaled_beta(nm) -> int:
        j = col[nm]
        if intercept and j == 0 and not np.allclose(T[0], np.eye(p)[0]):
            raise ValueError("sign constraints on a shifted intercept are not supported")
        return beta0 + j

    def sign_rows(pairs, m):
        # pairs: list of (beta index, u index, same_sign flag)
        for j, u, same in pairs:
            aug.sign_pattern.append((j - beta0, u, same))
            # same:   beta >= -m (1 - u)  and  beta <= m u
            # flipped: beta >= -m u       and  beta <= m (1 - u)
            row = np.zeros((2, b.num_vars))
            row[0, j], row[1, j] = 1.0, -1.0
            if same:
                row[0, u], row[1, u] = -m, m
                b.add_linear(row, np.array([-m, 0.0]), ">=")
            else:
                row[0, u], row[1, u] = m, -m
                b.add_linear(row, np.array([0.0, -m]), ">=")

    for spec in specs:
        if isinstance(spec, KMax):
            z = zvars()
            b.add_linear(zrow({nm: 1.0 for nm in z}), [spec.k], "<=")
        elif isinstance(spec, GroupSparsity):
            b.add_linear(zrow({nm: 1.0 for nm in spec.vars}), [spec.k], "<=")
        elif isinstance(spec, RhoMax):
            for (a, c) in _pairs(X, names, spec):
                if a in selectable and c in selectable:
                    b.add_linear(zrow({a: 1.0, c: 1.0}), [1.0], "<=")
        elif isinstance(spec, GroupInOut):
            for a, c in zip(spec.vars, spec.vars[1:]):
                b.add_linear(zrow({a: 1.0, c: -1.0}), [0.0], "==")
        elif isinstance(spec, Include):
            for a in spec.vars:
                b.add_linear(zrow({a: 1.0}), [1.0], "==")
        elif isinstance(spec, (Lower, Upper)):
            d = ">=" if isinstance(spec, Lower) else "<="
            L = np.zeros((len(spec.bounds), p))
            for r, nm in enumerate(spec.bounds):
                L[r, col[nm]] = 1.0
            beta_rows(L, np.array(list(spec.bounds.values())), [d] * len(spec.bounds))
        elif isinstance(spec, Linear):
            if spec.on_big_m:
                for r in range(spec.L.shape[0]):
                    coefs: dict = {}
                    for nm, v in zip(spec.columns, spec.L[r]):
                        if v != 0:
                            coefs[nm] = coefs.get(nm, 0.0) + v
                    b.add_linear(zrow(coefs) if coefs else sp.csr_matrix((1, b.num_vars)),
                                 [spec.rhs[r]], spec.dir[r])
            else:
                L = np.zeros((spec.L.shape[0], p))
                for k, nm in enumerate(spec.columns):
                    L[:, col[nm]] += spec.L[:, k]
                beta_rows(L, spec.rhs, spec.dir)
        elif isinstance(spec, GroupEqual):
            L = np.zeros((len(spec.vars) - 1, p))
            for r, (a, c) in enumerate(zip(spec.vars, spec.vars[1:])):
                L[r, col[a]] += 1.0
                L[r, col[c]] -= 1.0
            beta_rows(L, np.zeros(L.shape[0]), ["=="] * L.shape[0])
        elif isinstance(spec, SignCoherence):
            m = float(spec.big_m) if spec.big_m is not None else float(big_m)
            u = b.add_variables([f"u[{','.join(spec.vars)}]"], 0.0, 1.0, binary=True)[0]
            aug.u_index[spec.vars] = u
            sign_rows([(scaled_beta(nm), u, True) for nm in spec.vars], m)
        elif isinstance(spec, PairwiseSignCoherence):
            for (a, c), r in _pairs(X, names, spec).items():
                u = b.add_variables([f"u[{a},{c}]"], 0.0, 1.0, binary=True)[0]
                aug.u_index[(a, c)] = u
                sign_rows([(scaled_beta(a), u, True), (scaled_beta(c), u, r > 0)], float(big_m))
        elif isinstance(spec, FairnessCovariance):
            if X is None:
                raise ValueError("fairness constraints need the design matrix")
            lin = build_fairness_rows(spec.W, X, spec.c, names)
            if lin.L.shape[0]:
                beta_rows(lin.L, lin.rhs, lin.dir)
        else:
            raise TypeError(f"unsupported constraint spec {spec!r}")
    aug.program = b.build() if specs else program
    return aug


def _pairs(X, names, spec) -> dict:
    if X is None:
        raise ValueError(f"{spec.type} needs the design matrix")
    return correlation_pairs(X, names, spec.rho, spec.method, spec.exclude, spec.use)


def _resolve_names(specs, col: dict) -> None:
    unknown: list[str] = []
    for spec in specs:
        refs: tuple = ()
        if isinstance(spec, (GroupSparsity, GroupInOut, Include, GroupEqual, SignCoherence)):
            refs = spec.vars
        elif isinstance(spec, (Lower, Upper)):
            refs = tuple(spec.bounds)
        elif isinstance(spec, Linear):
            refs = spec.columns
        unknown += [r for r in refs if r not in col and r not in unknown]
    if unknown:
        raise UnknownColumnError(f"unknown column(s): {', '.join(unknown)}")
    lower: dict = {}
    upper: dict = {}
    for spec in specs:
        if isinstance(spec, Lower):
            for k, v in spec.bounds.items():
                lower[k] = max(lower.get(k, -math.inf), v)
        elif isinstance(spec, Upper):
            for k, v in spec.bounds.items():
                upper[k] = min(upper.get(k, math.inf), v)
    bad = [k for k in lower if k in upper and lower[k] > upper[k]]
    if bad:
        raise ValueError(f"contradictory bounds (lower > upper) for: {', '.join(bad)}")
