"""Continuous conic backends and the presolve shared by all of them.

A backend solves ``min c'x  s.t.  A_k x + b_k in K_k`` over free variables;
binary marks are ignored.  :func:`solve_continuous` first reduces the program
(variable fixings from bounds and singleton linear rows are substituted out)
so that fixed selectors pin their coefficients to exact zeros.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .conic import Cone, ConeBlock, ConeKind, ConicProgram, Solution, SolveStatus, feasibility_report

log = logging.getLogger(__name__)

_LINEAR = (ConeKind.ZERO, ConeKind.NONNEGATIVE)


class CapabilityError(RuntimeError):
    """The selected backend cannot handle a cone present in the program."""


@dataclass
class RawResult:
    status: SolveStatus
    x: np.ndarray | None
    iterations: int
    detail: str = ""


class Backend:
    name = "abstract"
    capabilities: frozenset = frozenset()

    def supports(self, kinds) -> bool:
        return set(kinds) <= self.capabilities

    def solve_standard(self, c, blocks, cones) -> RawResult:  # pragma: no cover - interface
        raise NotImplementedError


class ClarabelBackend(Backend):
    """Interior-point backend built on Clarabel (all cones used here)."""

    name = "clarabel"
    capabilities = frozenset(ConeKind)

    def __init__(self, tol: float = 1e-12, max_iter: int = 200):
        import clarabel  # noqa: F401 - fail at construction when missing

        self.tol = tol
        self.max_iter = max_iter

    def _settings(self, tol):
        import clarabel

        s = clarabel.DefaultSettings()
        s.verbose = False
        s.max_iter = self.max_iter
        s.tol_gap_abs = tol
        s.tol_gap_rel = tol
        s.tol_feas = tol
        s.tol_ktratio = min(1e-6, tol * 100)
        return s

    def _cones(self, cones):
        import clarabel

        out = []
        for cone in cones:
            kind = cone.kind
            if kind is ConeKind.ZERO:
                out.append(clarabel.ZeroConeT(cone.dim))
            elif kind is ConeKind.NONNEGATIVE:
                out.append(clarabel.NonnegativeConeT(cone.dim))
            elif kind is ConeKind.SECOND_ORDER:
                out.append(clarabel.SecondOrderConeT(cone.dim))
            else:
                out.append(clarabel.ExponentialConeT())
        return out

    def solve_standard(self, c, blocks, cones) -> RawResult:
        import clarabel

        n = c.size
        A = sp.vstack([blk[0] for blk in blocks], format="csc") if blocks else sp.csc_matrix((0, n))
        b = np.concatenate([blk[1] for blk in blocks]) if blocks else np.zeros(0)
        P = sp.csc_matrix((n, n))
        ccones = self._cones(cones)
        result = almost = None
        for tol in dict.fromkeys((self.tol, max(self.tol, 1e-10), max(self.tol, 1e-8))):
            solver = clarabel.DefaultSolver(P, c, -A, b, ccones, self._settings(tol))
            sol = solver.solve()
            status = str(sol.status)
            result = RawResult(_clarabel_status(status), np.array(sol.x), int(sol.iterations), status)
            if status == "Solved" or result.status in (SolveStatus.INFEASIBLE, SolveStatus.UNBOUNDED):
                return result
            if status == "AlmostSolved" and almost is None:
                # reduced accuracy: keep it, but prefer a full solve at a looser tolerance
                almost = result
        return almost if almost is not None else result


def _clarabel_status(status: str) -> SolveStatus:
    if status in ("Solved", "AlmostSolved"):
        return SolveStatus.OPTIMAL
    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return SolveStatus.INFEASIBLE
    if status in ("DualInfeasible", "AlmostDualInfeasible"):
        return SolveStatus.UNBOUNDED
    if status in ("MaxIterations", "MaxTime"):
        return SolveStatus.ITERATION_LIMIT
    return SolveStatus.NUMERIC_ERROR


class ScsBackend(Backend):
    """First-order backend built on SCS; lower accuracy than Clarabel."""

    name = "scs"
    capabilities = frozenset(ConeKind)

    def __init__(self, eps: float = 1e-9, max_iters: int = 200_000):
        import scs  # noqa: F401

        self.eps = eps
        self.max_iters = max_iters

    def solve_standard(self, c, blocks, cones) -> RawResult:
        import scs

        order = {ConeKind.ZERO: 0, ConeKind.NONNEGATIVE: 1, ConeKind.SECOND_ORDER: 2,
                 ConeKind.EXPONENTIAL: 3}
        idx = sorted(range(len(cones)), key=lambda k: (order[cones[k].kind], k))
        n = c.size
        A = sp.vstack([blocks[k][0] for k in idx], format="csc") if idx else sp.csc_matrix((0, n))
        b = np.concatenate([blocks[k][1] for k in idx]) if idx else np.zeros(0)
        cone = {"z": 0, "l": 0, "q": [], "ep": 0}
        for k in idx:
            kind = cones[k].kind
            if kind is ConeKind.ZERO:
                cone["z"] += cones[k].dim
            elif kind is ConeKind.NONNEGATIVE:
                cone["l"] += cones[k].dim
            elif kind is ConeKind.SECOND_ORDER:
                cone["q"].append(cones[k].dim)
            else:
                cone["ep"] += 1
        solver = scs.SCS({"A": -A, "b": b, "c": c}, cone, eps_abs=self.eps, eps_rel=self.eps,
                         max_iters=self.max_iters, verbose=False)
        sol = solver.solve()
        info = sol["info"]
        status = info["status"]
        if status in ("solved", "solved_inaccurate"):
            st = SolveStatus.OPTIMAL
        elif status.startswith("infeasible"):
            st = SolveStatus.INFEASIBLE
        elif status.startswith("unbounded"):
            st = SolveStatus.UNBOUNDED
        else:
            st = SolveStatus.NUMERIC_ERROR
        return RawResult(st, np.asarray(sol["x"]), int(info["iter"]), status)


_REGISTRY: dict[str, type] = {}


def register_backend(name: str, factory) -> None:
    """Register a backend factory under ``name`` (later registrations win on clash)."""
    _REGISTRY[name] = factory


register_backend("clarabel", ClarabelBackend)
register_backend("scs", ScsBackend)


def available_backends() -> list[str]:
    names = []
    for name, factory in _REGISTRY.items():
        try:
            factory()
        except ImportError:
            continue
        names.append(name)
    return names


def get_backend(name: str | Backend = "auto", kinds=()) -> Backend:
    """Resolve a backend by name; ``"auto"`` picks the first capable one.

    The ``CONEGLM_BACKEND`` environment variable overrides ``"auto"``.
    """
    if isinstance(name, Backend):
        backend = name
    else:
        if name == "auto":
            name = os.environ.get("CONEGLM_BACKEND", "auto")
        if name == "auto":
            for cand in _REGISTRY:
                try:
                    backend = _REGISTRY[cand]()
                except ImportError:
                    continue
                if backend.supports(kinds):
                    return backend
            raise CapabilityError(f"no registered backend supports cones {sorted(k.value for k in kinds)}")
        if name not in _REGISTRY:
            raise ValueError(f"unknown backend {name!r}; registered: {sorted(_REGISTRY)}")
        backend = _REGISTRY[name]()
    if not backend.supports(kinds):
        missing = set(kinds) - backend.capabilities
        raise CapabilityError(
            f"backend {backend.name} does not support cones {sorted(k.value for k in missing)}"
        )
    return backend


# -- presolve ---------------------------------------------------------------


@dataclass
class Reduction:
    free: np.ndarray
    fixed_values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    infeasible: bool
    reason: str = ""


_FIX_TOL = 1e-12
_ROW_TOL = 1e-9


def _linear_rows(program: ConicProgram):
    mats, offs, eq = [], [], []
    for blk in program.blocks:
        if blk.cone.kind in _LINEAR:
            mats.append(blk.A)
            offs.append(blk.b)
            eq.append(np.full(blk.rows, blk.cone.kind is ConeKind.ZERO))
    if not mats:
        return sp.csr_matrix((0, program.num_vars)), np.zeros(0), np.zeros(0, dtype=bool)
    return sp.vstack(mats, format="csr"), np.concatenate(offs), np.concatenate(eq)


def _crossed(lo, hi) -> np.ndarray:
    scale = np.where(np.isfinite(lo), np.maximum(1.0, np.abs(lo)), 1.0)
    return lo > hi + _ROW_TOL * scale


def presolve(program: ConicProgram, lower=None, upper=None, max_rounds: int = 50) -> Reduction:
    """Tighten bounds from singleton linear rows and detect fixed variables."""
    lo = np.array(program.lower if lower is None else lower, dtype=float)
    hi = np.array(program.upper if upper is None else upper, dtype=float)
    L, c, eq = _linear_rows(program)
    L = L.tocsc()
    for _ in range(max_rounds):
        crossed = _crossed(lo, hi)
        if np.any(crossed):
            bad = int(np.flatnonzero(crossed)[0])
            return Reduction(np.zeros(0, int), lo, lo, hi, True, f"empty bounds for variable {bad}")
        with np.errstate(invalid="ignore"):
            width = hi - lo
        fixed = np.isfinite(width) & (width <= _FIX_TOL * np.maximum(1.0, np.abs(lo)))
        val = np.where(fixed, lo, 0.0)
        lo = np.where(fixed, val, lo)
        hi = np.where(fixed, val, hi)
        if L.shape[0] == 0:
            break
        c_eff = c + L @ val
        Lf = L[:, ~fixed].tocsr()
        free_idx = np.flatnonzero(~fixed)
        nnz = np.diff(Lf.indptr)
        empty = nnz == 0
        slack_bad = np.where(eq, np.abs(c_eff) > _ROW_TOL * np.maximum(1.0, np.abs(c)),
                             c_eff < -_ROW_TOL * np.maximum(1.0, np.abs(c)))
        if np.any(empty & slack_bad):
            return Reduction(np.zeros(0, int), val, lo, hi, True, "a linear row is violated by fixed variables")
        changed = False
        for r in np.flatnonzero(nnz == 1):
            j = free_idx[Lf.indices[Lf.indptr[r]]]
            a = Lf.data[Lf.indptr[r]]
            bound = -c_eff[r] / a
            if eq[r]:
                new_lo, new_hi = max(lo[j], bound), min(hi[j], bound)
            elif a > 0:
                new_lo, new_hi = max(lo[j], bound), hi[j]
            else:
                new_lo, new_hi = lo[j], min(hi[j], bound)
            if new_lo > lo[j] + _FIX_TOL or new_hi < hi[j] - _FIX_TOL:
                # snap nearly-fixed intervals produced by round-off
                if math.isfinite(new_lo) and abs(new_hi - new_lo) <= _ROW_TOL * max(1.0, abs(new_lo)):
                    mid = 0.5 * (new_lo + new_hi)
                    new_lo = new_hi = mid
                lo[j], hi[j] = new_lo, new_hi
                changed = True
        if not changed:
            break
    with np.errstate(invalid="ignore"):
        width = hi - lo
    fixed = np.isfinite(width) & (width <= _FIX_TOL * np.maximum(1.0, np.abs(lo)))
    if np.any(_crossed(lo, hi)):
        return Reduction(np.zeros(0, int), lo, lo, hi, True, "contradictory bounds")
    val = np.where(fixed, lo, 0.0)
    return Reduction(np.flatnonzero(~fixed), val, np.where(fixed, val, lo), np.where(fixed, val, hi), False)


def solve_continuous(program: ConicProgram, backend="auto", lower=None, upper=None) -> Solution:
    """Solve the continuous relaxation (integrality ignored).

    ``lower``/``upper`` override the program's variable bounds, which is how
    branch-and-bound fixes binaries without copying the program.
    """
    be = get_backend(backend, program.cone_kinds())
    red = presolve(program, lower, upper)
    if red.infeasible:
        return Solution(SolveStatus.INFEASIBLE, info={"reason": red.reason})
    free = red.free
    val = red.fixed_values
    blocks, cones = [], []
    for blk in program.blocks:
        A_free = blk.A[:, free]
        b_eff = blk.b + blk.A @ val
        if blk.cone.kind in _LINEAR:
            keep = np.diff(A_free.tocsr().indptr) > 1
            if not np.any(keep):
                continue
            if not np.all(keep):
                # singleton/empty rows were absorbed into bounds by presolve
                A_free = A_free.tocsr()[keep]
                b_eff = b_eff[keep]
                blocks.append((A_free, b_eff))
                cones.append(Cone(blk.cone.kind, int(keep.sum())))
                continue
        blocks.append((A_free, b_eff))
        cones.append(blk.cone)
    lo, hi = red.lower[free], red.upper[free]
    k = free.size
    fin_lo = np.flatnonzero(np.isfinite(lo))
    fin_hi = np.flatnonzero(np.isfinite(hi))
    if fin_lo.size:
        blocks.append((sp.csr_matrix((np.ones(fin_lo.size), (np.arange(fin_lo.size), fin_lo)),
                                     shape=(fin_lo.size, k)), -lo[fin_lo]))
        cones.append(Cone.nonnegative(fin_lo.size))
    if fin_hi.size:
        blocks.append((sp.csr_matrix((-np.ones(fin_hi.size), (np.arange(fin_hi.size), fin_hi)),
                                     shape=(fin_hi.size, k)), hi[fin_hi]))
        cones.append(Cone.nonnegative(fin_hi.size))
    c_full = program.objective
    if k == 0:
        x = val.copy()
        rep = feasibility_report(program, x, 1e-7)
        status = SolveStatus.OPTIMAL if rep.feasible else SolveStatus.INFEASIBLE
        return Solution(status, x if rep.feasible else None, program.objective_at(x), 0)
    raw = be.solve_standard(np.asarray(c_full[free], dtype=float), blocks, cones)
    sol = Solution(raw.status, iterations=raw.iterations, info={"backend": be.name, "detail": raw.detail})
    if raw.status in (SolveStatus.OPTIMAL, SolveStatus.ITERATION_LIMIT) and raw.x is not None:
        x = val.copy()
        x[free] = raw.x
        sol.primal = x
        sol.objective_value = program.objective_at(x)
    return sol


def _shifted(program: ConicProgram, x0: np.ndarray) -> ConicProgram:
    blocks = tuple(ConeBlock(blk.A, blk.b + blk.A @ x0, blk.cone) for blk in program.blocks)
    return ConicProgram(program.num_vars, program.objective, blocks,
                        np.asarray(program.lower) - x0, np.asarray(program.upper) - x0,
                        program.binaries, program.names)


def refine(program: ConicProgram, solution: Solution, evaluate, backend="auto", lower=None,
           upper=None, passes: int = 2, tol: float = 1e-6) -> Solution:
    """Re-solve around ``solution.primal`` in the shifted variable d = x - x0.

    Recentering removes the bulk of the objective from the solver's gap
    tests, so the correction is computed to a finer absolute accuracy.  A
    candidate is kept only if it is feasible at ``tol`` and strictly lowers
    ``evaluate(x)``, an exact evaluation of the objective the program models.
    """
    if solution.primal is None:
        return solution
    be = get_backend(backend, program.cone_kinds())
    lo = np.array(program.lower if lower is None else lower, dtype=float)
    hi = np.array(program.upper if upper is None else upper, dtype=float)
    best = solution.primal
    best_val = evaluate(best)
    for _ in range(passes):
        shifted = _shifted(program, best)
        step = solve_continuous(shifted, be, lo - best, hi - best)
        if step.primal is None:
            break
        cand = best + step.primal
        if not feasibility_report(program, cand, tol).feasible:
            break
        val = evaluate(cand)
        if not val < best_val:
            break
        best, best_val = cand, val
    if best is solution.primal:
        return solution
    info = dict(solution.info, refined=True)
    return Solution(solution.status, best, program.objective_at(best), solution.iterations,
                    solution.nodes, info)
