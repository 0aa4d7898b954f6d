"""End-to-end constrained GLM fitting: scale, reformulate, constrain, solve, unscale."""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .conic import ConeKind, ConicProgram, Solution, SolveStatus
from .constraints import (
    AugmentedProgram,
    FairnessCovariance,
    GroupEqual,
    KMax,
    Linear,
    Lower,
    Upper,
    attach,
    build_fairness_rows,
)
from .families import (
    PROBIT_SCALE,
    Family,
    GlmModel,
    Link,
    aic_bic,
    deviance,
    information_matrix,
    log_likelihood,
    observed_information,
    score,
    null_deviance,
    objective_kernel,
    standard_errors_from_information,
)
from .backends import refine
from .mi import BnbConfig, sequence_solve, solve_mi
from .reformulate import VariableLayout, apply_probit_scaling, build_program

log = logging.getLogger(__name__)

ACTIVE_TOL = 1e-6


class Scaler(str, Enum):
    AUTO = "auto"
    CENTER_STANDARDIZATION = "center_standardization"
    CENTER_MINMAX = "center_minmax"
    STANDARDIZATION = "standardization"
    MINMAX = "minmax"
    OFF = "off"


_CENTERED = {Scaler.CENTER_STANDARDIZATION, Scaler.CENTER_MINMAX}


@dataclass(frozen=True, eq=False)
class ScalingRecord:
    """Per-column ``x_s = (x - shift) / divisor``, plus optional response scaling.

    ``modes`` holds one of off/center/standardize/minmax/center_standardize/
    center_minmax per column.
    """

    modes: tuple
    shift: np.ndarray
    divisor: np.ndarray
    intercept: bool = False
    response_scaled: bool = False
    y_shift: float = 0.0
    y_divisor: float = 1.0

    @property
    def p(self) -> int:
        return len(self.modes)

    def transform(self) -> tuple[np.ndarray, np.ndarray]:
        """``(T, t)`` with ``beta_orig = T beta_scaled + t``."""
        p = self.p
        T = np.diag(1.0 / self.divisor)
        t = np.zeros(p)
        if self.intercept:
            T[0, :] -= self.shift / self.divisor
            T[0, 0] = 1.0
        T = self.y_divisor * T
        if self.intercept:
            t[0] = self.y_shift
        return T, t

    def unscale(self, beta_scaled) -> np.ndarray:
        T, t = self.transform()
        return T @ np.asarray(beta_scaled, dtype=float) + t

    def scale(self, beta) -> np.ndarray:
        T, t = self.transform()
        return np.linalg.solve(T, np.asarray(beta, dtype=float) - t)

    def apply(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.shift) / self.divisor

    def to_dict(self) -> dict:
        return {"modes": list(self.modes), "shift": self.shift.tolist(), "divisor": self.divisor.tolist(),
                "intercept": self.intercept, "response_scaled": self.response_scaled,
                "y_shift": self.y_shift, "y_divisor": self.y_divisor}

    @classmethod
    def identity(cls, p: int, intercept: bool = False) -> "ScalingRecord":
        return cls(("off",) * p, np.zeros(p), np.ones(p), intercept)


def scale_design(X, scaler: str = "auto", intercept: bool = False):
    """Scale the non-intercept columns of ``X``; returns ``(X_scaled, record)``.

    Standard deviations use the n-1 denominator.  Constant columns (and
    zero-range columns under min-max modes) are left unscaled with a warning.
    """
    mode = Scaler(scaler)
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if mode is Scaler.AUTO:
        mode = Scaler.CENTER_STANDARDIZATION if intercept else Scaler.STANDARDIZATION
    if mode in _CENTERED and not intercept:
        raise ValueError(f"scaler {mode.value!r} centers columns and needs an intercept")
    shift, div = np.zeros(p), np.ones(p)
    modes = ["off"] * p
    if mode is Scaler.OFF:
        return X.copy(), ScalingRecord(tuple(modes), shift, div, intercept)
    label = {Scaler.CENTER_STANDARDIZATION: "center_standardize", Scaler.CENTER_MINMAX: "center_minmax",
             Scaler.STANDARDIZATION: "standardize", Scaler.MINMAX: "minmax"}[mode]
    flagged = []
    for j in range(p):
        if intercept and j == 0:
            continue
        x = X[:, j]
        if mode in (Scaler.MINMAX, Scaler.CENTER_MINMAX):
            d = x.max() - x.min()
        else:
            d = x.std(ddof=1) if n > 1 else 0.0
        # spread at rounding level counts as constant
        if not d > 1e-12 * max(1.0, float(np.max(np.abs(x)))):
            flagged.append(j)
            continue
        div[j] = d
        shift[j] = x.mean() if mode in _CENTERED else 0.0
        modes[j] = label
    if flagged:
        warnings.warn(f"columns {flagged} are constant and were left unscaled", stacklevel=2)
    rec = ScalingRecord(tuple(modes), shift, div, intercept)
    return rec.apply(X), rec


def _scale_response(y: np.ndarray, intercept: bool):
    sd = y.std(ddof=1) if y.size > 1 else 0.0
    if not sd > 0:
        return 0.0, 1.0
    return (y.mean() if intercept else 0.0), sd


# -- results ----------------------------------------------------------------


@dataclass
class FitResult:
    column_names: tuple
    coefficients: np.ndarray
    active: np.ndarray
    loglik: float
    deviance: float
    null_deviance: float
    aic: float
    bic: float
    std_errors: np.ndarray
    se_flags: tuple
    status: str
    iterations: int
    nodes: int
    big_m_binding: bool
    family: str
    link: str
    n: int
    k_active: int
    df_residual: int
    df_null: int
    objective: float = math.nan
    scaled_coefficients: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == SolveStatus.OPTIMAL.value

    def coef(self) -> dict:
        return dict(zip(self.column_names, self.coefficients.tolist()))

    def recomputed_aic(self) -> float:
        return aic_bic(self.loglik, self.k_active, self.n)[0]

    def to_dict(self) -> dict:
        def enc(a):
            return [None if not np.isfinite(v) else float(v) for v in np.asarray(a, dtype=float)]

        return {
            "column_names": list(self.column_names),
            "coefficients": enc(self.coefficients),
            "active": [bool(v) for v in self.active],
            "loglik": _num(self.loglik), "deviance": _num(self.deviance),
            "null_deviance": _num(self.null_deviance), "aic": _num(self.aic), "bic": _num(self.bic),
            "std_errors": enc(self.std_errors), "se_flags": list(self.se_flags),
            "status": self.status, "iterations": self.iterations, "nodes": self.nodes,
            "big_m_binding": self.big_m_binding, "family": self.family, "link": self.link,
            "n": self.n, "k_active": self.k_active, "df_residual": self.df_residual,
            "df_null": self.df_null, "objective": _num(self.objective),
            "scaled_coefficients": None if self.scaled_coefficients is None else enc(self.scaled_coefficients),
            "info": _jsonable(self.info),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        def dec(a):
            return np.array([np.nan if v is None else v for v in a], dtype=float)

        return cls(
            tuple(d["column_names"]), dec(d["coefficients"]), np.array(d["active"], dtype=bool),
            _den(d["loglik"]), _den(d["deviance"]), _den(d["null_deviance"]), _den(d["aic"]),
            _den(d["bic"]), dec(d["std_errors"]), tuple(d["se_flags"]), d["status"],
            int(d["iterations"]), int(d["nodes"]), bool(d["big_m_binding"]), d["family"], d["link"],
            int(d["n"]), int(d["k_active"]), int(d["df_residual"]), int(d["df_null"]),
            _den(d.get("objective")),
            None if d.get("scaled_coefficients") is None else dec(d["scaled_coefficients"]),
            dict(d.get("info", {})),
        )

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        return cls.from_dict(json.loads(text))

    def report(self) -> str:
        """Fixed-width summary: coefficient table, deviances and AIC."""
        lines = [f"Family: {self.family}   Link: {self.link}   Status: {self.status}", "",
                 "Coefficients:",
                 f"{'':<24}{'Estimate':>14}{'Std. Error':>14}{'z value':>10}"]
        for nm, b, se, flag in zip(self.column_names, self.coefficients, self.std_errors, self.se_flags):
            ses = f"{se:14.4f}" if np.isfinite(se) else f"{'NA':>14}"
            zv = f"{b / se:10.3f}" if np.isfinite(se) and se > 0 else f"{'NA':>10}"
            note = "" if flag == "ok" else f"  ({flag})"
            lines.append(f"{nm:<24}{b:14.6f}{ses}{zv}{note}")
        lines += [
            "",
            f"Degrees of Freedom: {self.df_null} Total (i.e. Null);  {self.df_residual} Residual",
            f"Null Deviance:      {self.null_deviance:.4g}",
            f"Residual Deviance:  {self.deviance:.4g}    AIC: {self.aic:.4g}",
        ]
        if self.big_m_binding:
            lines.append("Warning: big_m bound is binding; increase big_m.")
        return "\n".join(lines)


def _num(v):
    return None if v is None or not np.isfinite(v) else float(v)


def _den(v):
    return math.nan if v is None else float(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _num(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, Enum):
        return obj.value
    return obj


# -- pipeline ----------------------------------------------------------------


@dataclass
class _Prepared:
    model: GlmModel
    record: ScalingRecord
    T: np.ndarray
    t: np.ndarray
    layout: VariableLayout
    base: ConicProgram
    big_m: float
    specs: list
    scaled: GlmModel


def _prepare(model: GlmModel, specs, big_m, scaler, scale_response, eta_margin) -> _Prepared:
    if scale_response and model.family is not Family.GAUSSIAN:
        raise ValueError("scale_response is only available for the gaussian family")
    Xs, rec = scale_design(model.X, scaler, model.intercept)
    y = model.y
    if scale_response:
        ysh, ydiv = _scale_response(model.y, model.intercept)
        rec = ScalingRecord(rec.modes, rec.shift, rec.divisor, rec.intercept, True, ysh, ydiv)
        y = (model.y - ysh) / ydiv
    fl = model.family_link
    if fl.link is Link.PROBIT:
        fl = type(fl).of(Family.BINOMIAL, Link.LOGIT)
    scaled = GlmModel(Xs, y, fl, model.column_names, model.weights, model.intercept)
    base, layout = build_program(scaled, eta_margin)
    T, t = rec.transform()
    if model.link is Link.PROBIT:
        # constraint rows are stated in probit units; the fit itself is on the logit scale
        T, t = PROBIT_SCALE * T, PROBIT_SCALE * t
    return _Prepared(model, rec, T, t, layout, base, float(big_m), list(specs), scaled)


def _attach(prep: _Prepared, extra=()) -> AugmentedProgram:
    return attach(prep.base, prep.layout, list(prep.specs) + list(extra), prep.model.column_names,
                  prep.big_m, prep.model.intercept, X=prep.model.X, transform=(prep.T, prep.t))


def hglm_fit(model: GlmModel, specs=(), big_m: float = 100.0, scaler: str = "auto",
             scale_response: bool = False, backend="auto", dry_run: bool = False,
             config: BnbConfig | None = None, eta_margin: float = 0.0):
    """Fit ``model`` under the constraint ``specs``.

    Returns a :class:`FitResult`, or with ``dry_run`` the assembled
    :class:`ConicProgram` (likelihood plus constraint rows) without solving.
    """
    prep = _prepare(model, specs, big_m, scaler, scale_response, eta_margin)
    aug = _attach(prep)
    if dry_run:
        return aug.program
    sol = solve_mi(aug.program, config, backend)
    return _finish(prep, aug, _polish(prep, aug, sol, backend))


def _polish(prep: _Prepared, aug: AugmentedProgram, sol: Solution, backend) -> Solution:
    """Shifted re-solve with the binaries held at their solution values."""
    if sol.primal is None:
        return sol
    prog = aug.program
    lo, hi = np.array(prog.lower, dtype=float), np.array(prog.upper, dtype=float)
    bins = np.asarray(prog.binaries, dtype=int)
    if bins.size:
        lo[bins] = hi[bins] = np.round(sol.primal[bins])
    beta = prep.layout.beta

    def evaluate(x):
        return objective_kernel(prep.scaled, x[beta])

    return _face_polish(prep, prog, refine(prog, sol, evaluate, backend, lo, hi))


def _kernel_derivatives(model: GlmModel, beta):
    if model.family is Family.GAUSSIAN:
        wx = model.weights[:, None] * model.X
        return -2.0 * wx.T @ (model.y - model.X @ beta), 2.0 * model.X.T @ wx
    H = observed_information(model, beta)
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        H = information_matrix(model, beta)
    return -score(model, beta), H


def _beta_rows(prog: ConicProgram, beta_idx: np.ndarray, x: np.ndarray):
    """Linear rows that involve only beta once the binaries are fixed.

    Returns ``(G, h, eq)`` meaning ``G beta + h`` is ``== 0`` where ``eq``
    and ``>= 0`` elsewhere; variable bounds on beta are included.
    """
    fixed = np.zeros(prog.num_vars, dtype=bool)
    fixed[list(prog.binaries)] = True
    in_beta = np.zeros(prog.num_vars, dtype=bool)
    in_beta[beta_idx] = True
    G, h, eq = [], [], []
    for blk in prog.blocks:
        if blk.cone.kind not in (ConeKind.ZERO, ConeKind.NONNEGATIVE):
            continue
        A = blk.A.tocsc()
        other = ~(in_beta | fixed)
        keep = np.asarray(abs(A[:, np.flatnonzero(other)]).sum(axis=1)).ravel() == 0
        if not keep.any():
            continue
        A = A[keep]
        G.append(A[:, beta_idx].toarray())
        h.append(A[:, np.flatnonzero(fixed)] @ x[fixed] + blk.b[keep])
        eq.append(np.full(keep.sum(), blk.cone.kind is ConeKind.ZERO))
    lo, hi = np.asarray(prog.lower)[beta_idx], np.asarray(prog.upper)[beta_idx]
    eye = np.eye(len(beta_idx))
    for j in np.flatnonzero(np.isfinite(lo)):
        G.append(eye[j:j + 1]), h.append([-lo[j]]), eq.append([False])
    for j in np.flatnonzero(np.isfinite(hi)):
        G.append(-eye[j:j + 1]), h.append([hi[j]]), eq.append([False])
    if not G:
        return np.zeros((0, len(beta_idx))), np.zeros(0), np.zeros(0, bool)
    return np.vstack(G), np.concatenate(h), np.concatenate(eq).astype(bool)


def _face_polish(prep: _Prepared, prog: ConicProgram, sol: Solution, active_tol: float = 1e-7,
                 feas_tol: float = 1e-9) -> Solution:
    """Newton steps on the exact likelihood restricted to the active face.

    Interior-point accuracy is relative to the objective, which on large
    data leaves coefficient errors far above the solver tolerance.  With the
    binaries fixed and the active rows held at equality, the problem is a
    smooth equality-constrained one; a step is kept only if every row stays
    feasible and the likelihood does not get worse.
    """
    if sol.primal is None:
        return sol
    model = prep.scaled
    x = np.array(sol.primal, dtype=float)
    if len(prog.binaries):
        bins = list(prog.binaries)
        x[bins] = np.round(x[bins])
    beta_idx = np.arange(prep.layout.beta.start, prep.layout.beta.stop)
    beta = x[beta_idx]
    G, h, eq = _beta_rows(prog, beta_idx, x)
    scale = 1.0 + np.abs(h)
    active = eq | (G @ beta + h <= active_tol * scale)
    f0 = objective_kernel(model, beta)
    for _ in range(5):
        cur = _newton_on_face(model, beta, G[active], h[active])
        if cur is None:
            return sol
        res = G @ cur + h
        bad = np.where(eq, np.abs(res) > feas_tol * scale, res < -feas_tol * scale)
        if not bad.any():
            break
        if (bad & active).any():
            return sol
        active |= bad
    else:
        return sol
    # the conic point may sit marginally outside the face, hence the slack
    if not objective_kernel(model, cur) <= f0 + 1e-9 * (1.0 + abs(f0)):
        return sol
    x[beta_idx] = cur
    return Solution(sol.status, x, sol.objective_value, sol.iterations, sol.nodes,
                    dict(sol.info, face_polished=True))


def _newton_on_face(model: GlmModel, beta, Ga, ha, max_iter: int = 30):
    """Minimise the kernel subject to ``Ga beta + ha = 0``, starting near ``beta``."""
    if Ga.shape[0]:
        _, sv, vt = np.linalg.svd(Ga)
        rank = int(np.sum(sv > 1e-10 * max(sv[0], 1.0)))
        N = vt[rank:].T
        beta = beta - np.linalg.lstsq(Ga, Ga @ beta + ha, rcond=None)[0]
    else:
        N = np.eye(len(beta))
    if N.shape[1] == 0:
        return beta
    cur, fcur = beta, objective_kernel(model, beta)
    if not np.isfinite(fcur):
        return None
    for _ in range(max_iter):
        g, H = _kernel_derivatives(model, cur)
        try:
            step = -N @ np.linalg.solve(N.T @ H @ N, N.T @ g)
        except np.linalg.LinAlgError:
            return None
        t = 1.0
        while t > 1e-8:
            cand = cur + t * step
            fc = objective_kernel(model, cand)
            if fc <= fcur:
                break
            t *= 0.5
        else:
            break
        done = np.max(np.abs(cand - cur)) <= 1e-14 * (1.0 + np.max(np.abs(cur)))
        cur, fcur = cand, fc
        if done:
            break
    return cur


def _finish(prep: _Prepared, aug: AugmentedProgram, sol: Solution) -> FitResult:
    model = prep.model
    names = model.column_names
    p = model.p
    base_info = {"solver": sol.info, "scaling": prep.record.to_dict()}
    if sol.primal is None:
        nan = np.full(p, np.nan)
        return FitResult(names, nan, np.zeros(p, bool), math.nan, math.nan, null_deviance(model),
                         math.nan, math.nan, nan, ("not_available",) * p, sol.status.value,
                         sol.iterations, sol.nodes, False, model.family.value, model.link.value,
                         model.n, 0, 0, model.n - int(model.intercept), sol.objective_value, None,
                         base_info)
    x = sol.primal
    beta_s = np.array(x[prep.layout.beta], dtype=float)
    for nm, zi in aug.z_index.items():
        if x[zi] < 0.5:
            beta_s[model.column_index(nm)] = 0.0
    # clip solver-tolerance sign slips so the reported signs honour the binaries
    for j, u, same in aug.sign_pattern:
        if (x[u] > 0.5) == same:
            beta_s[j] = max(beta_s[j], 0.0)
        else:
            beta_s[j] = min(beta_s[j], 0.0)
    if model.link is Link.PROBIT:
        T0, t0 = prep.record.transform()
        beta = apply_probit_scaling(T0 @ beta_s + t0)
    else:
        beta = prep.T @ beta_s + prep.t
    zero_cols = [model.column_index(nm) for nm, zi in aug.z_index.items() if x[zi] < 0.5]
    beta[zero_cols] = 0.0
    active = np.abs(beta) > ACTIVE_TOL
    k_active = int(active.sum()) + (1 if model.family is Family.GAUSSIAN else 0)
    ll = log_likelihood(model, beta)
    dev = deviance(model, beta)
    aic, bic = aic_bic(ll, max(k_active, 1), model.n)
    constrained = constrained_columns(model, beta, prep.specs)
    se, flags = standard_errors(model, beta, active, constrained)
    bound_cols = set(aug.z_index) | {nm for key in aug.u_index for nm in key}
    binding = any(abs(beta_s[model.column_index(nm)]) >= prep.big_m - 1e-6 for nm in bound_cols)
    if binding:
        log.warning("big_m=%g is binding at the solution", prep.big_m)
    base_info["max_violation"] = sol.info.get("max_violation")
    return FitResult(names, beta, active, ll, dev, null_deviance(model), aic, bic, se, tuple(flags),
                     sol.status.value, sol.iterations, sol.nodes, bool(binding), model.family.value,
                     model.link.value, model.n, k_active, model.n - int(active.sum()),
                     model.n - int(model.intercept), sol.objective_value, beta_s, base_info)


def constrained_columns(model: GlmModel, beta, specs, tol: float = 1e-6) -> set:
    """Columns sitting on a bound or inside an active linear/equality row."""
    names = model.column_names
    col = {nm: j for j, nm in enumerate(names)}
    out: set = set()
    for spec in specs:
        if isinstance(spec, Lower) or isinstance(spec, Upper):
            for nm, v in spec.bounds.items():
                if abs(beta[col[nm]] - v) <= tol * max(1.0, abs(v)):
                    out.add(nm)
        elif isinstance(spec, GroupEqual):
            out.update(spec.vars)
        elif isinstance(spec, (Linear, FairnessCovariance)):
            lin = spec if isinstance(spec, Linear) else build_fairness_rows(spec.W, model.X, spec.c, names)
            if lin.on_big_m:
                continue
            for r in range(lin.L.shape[0]):
                val = sum(lin.L[r, k] * beta[col[nm]] for k, nm in enumerate(lin.columns))
                if lin.dir[r] == "==" or abs(val - lin.rhs[r]) <= tol * max(1.0, abs(lin.rhs[r])):
                    out.update(nm for k, nm in enumerate(lin.columns) if lin.L[r, k] != 0)
    return out


def standard_errors(model: GlmModel, beta, active=None, constrained=()):
    """Inverse-information standard errors on the active coefficients.

    Returns ``(se, flags)`` with flags ``ok``, ``inactive``, ``constrained``
    (reported without correction) or ``singular``.  Gaussian errors use the
    dispersion RSS / (n - k).
    """
    beta = np.asarray(beta, dtype=float)
    p = model.p
    if active is None:
        active = np.abs(beta) > ACTIVE_TOL
    idx = np.flatnonzero(active)
    se = np.full(p, np.nan)
    flags = ["inactive"] * p
    if idx.size == 0:
        return se, flags
    sub = model.subset(idx.tolist())
    disp = None
    if model.family is Family.GAUSSIAN:
        resid = model.y - model.X @ beta
        dof = max(model.n - idx.size, 1)
        disp = float(np.sum(model.weights * resid**2) / dof)
    info = information_matrix(sub, beta[idx], dispersion=disp)
    s, singular = standard_errors_from_information(info)
    for pos, j in enumerate(idx):
        se[j] = s[pos]
        if singular[pos]:
            flags[j] = "singular"
        elif model.column_names[j] in constrained:
            flags[j] = "constrained"
        else:
            flags[j] = "ok"
    return se, flags


# -- model sequences -----------------------------------------------------------


@dataclass
class SequenceRow:
    k: int
    aic: float
    bic: float
    loglik: float
    status: str
    fit: FitResult


@dataclass
class SequenceTable:
    rows: list

    def to_text(self) -> str:
        names = self.rows[0].fit.column_names if self.rows else ()
        head = f"{'k_max':>6}{'aic':>10}{'bic':>10}  " + "".join(f"{nm:>14.14}" for nm in names)
        out = [head]
        for r in self.rows:
            coefs = "".join(f"{v:14.6g}" for v in r.fit.coefficients)
            out.append(f"{r.k:>6}{r.aic:10.2f}{r.bic:10.2f}  {coefs}")
        return "\n".join(out)

    def to_dict(self) -> dict:
        return {"rows": [{"k": r.k, "aic": _num(r.aic), "bic": _num(r.bic), "loglik": _num(r.loglik),
                          "status": r.status, "fit": r.fit.to_dict()} for r in self.rows]}


def hglm_seq(model: GlmModel, specs=(), k_values=None, big_m: float = 100.0, scaler: str = "auto",
             scale_response: bool = False, backend="auto", config: BnbConfig | None = None,
             eta_margin: float = 0.0) -> SequenceTable:
    """One fit per k with ``KMax(k)`` appended; rows ordered by k descending."""
    prep = _prepare(model, specs, big_m, scaler, scale_response, eta_margin)
    n_sel = model.p - int(model.intercept)
    if k_values is None:
        k_values = range(1, n_sel + 1)
    augs: dict = {}

    def make(k):
        augs[k] = _attach(prep, [KMax(k)])
        return augs[k].program

    def seed(prev: Solution, program: ConicProgram):
        bins = program.binaries
        beta = np.abs(prev.primal[prep.layout.beta])
        any_aug = next(iter(augs.values()))
        zcol = {zi: model.column_index(nm) for nm, zi in any_aug.z_index.items()}
        scale = 1.0 + beta.max()
        return np.array([prev.primal[b] * (1.0 + beta[zcol[b]] / scale) if b in zcol else prev.primal[b]
                         for b in bins])

    sols = sequence_solve(make, k_values, config, backend, scores=seed)
    rows = []
    for k in sorted(sols, reverse=True):
        sol = _polish(prep, augs[k], sols[k], backend) if k in augs else sols[k]
        fit = _finish(prep, augs.get(k), sol)
        rows.append(SequenceRow(k, fit.aic, fit.bic, fit.loglik, fit.status, fit))
    return SequenceTable(rows)
