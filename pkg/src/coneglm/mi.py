"""Branch-and-bound over binary variables on top of a continuous conic backend.

Nodes fix binaries through variable bounds (never extra rows).  Integral or
rounded assignments are re-solved with every binary fixed, which lets the
presolve eliminate deselected coefficients so they come back as exact zeros.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .backends import get_backend, solve_continuous
from .conic import ConeKind, ConicProgram, Solution, SolveStatus, feasibility_report

log = logging.getLogger(__name__)


class NodeOrder(str, Enum):
    BEST_BOUND = "best_bound"
    DEPTH_FIRST = "depth_first"


class Branching(str, Enum):
    MOST_FRACTIONAL = "most_fractional"
    FIRST_FRACTIONAL = "first_fractional"


@dataclass(frozen=True)
class BnbConfig:
    rel_gap: float = 1e-6
    int_tol: float = 1e-5
    max_nodes: int = 10_000
    node_order: NodeOrder = NodeOrder.BEST_BOUND
    branching: Branching = Branching.MOST_FRACTIONAL
    heuristic_depth: int = 6
    feas_tol: float = 1e-6

    def __post_init__(self):
        if not (self.rel_gap > 0 and self.int_tol > 0 and self.feas_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_nodes < 1:
            raise ValueError("max_nodes must be at least 1")
        object.__setattr__(self, "node_order", NodeOrder(self.node_order))
        object.__setattr__(self, "branching", Branching(self.branching))


class _BinaryRows:
    """Linear rows touching only binaries, used to repair rounded assignments."""

    def __init__(self, program: ConicProgram):
        bins = np.asarray(program.binaries, dtype=int)
        self.bins = bins
        pos = np.full(program.num_vars, -1)
        pos[bins] = np.arange(bins.size)
        nonbin = np.ones(program.num_vars, dtype=bool)
        nonbin[bins] = False
        rows = []
        for blk in program.blocks:
            if blk.cone.kind not in (ConeKind.ZERO, ConeKind.NONNEGATIVE):
                continue
            A = blk.A.tocsr()
            touches_cont = np.diff(A[:, nonbin].tocsr().indptr) > 0
            for r in np.flatnonzero(~touches_cont & (np.diff(A.indptr) > 0)):
                cols = A.indices[A.indptr[r]:A.indptr[r + 1]]
                vals = A.data[A.indptr[r]:A.indptr[r + 1]]
                rows.append((pos[cols], vals, blk.b[r], blk.cone.kind is ConeKind.ZERO))
        self.rows = rows

    def _possible(self, assign: np.ndarray) -> bool:
        # assign: 0/1 for decided, -1 for open (open entries may take 0 or 1)
        for idx, vals, off, eq in self.rows:
            a = assign[idx]
            fixed = a >= 0
            base = off + vals[fixed] @ a[fixed]
            free = vals[~fixed]
            hi = base + free[free > 0].sum()
            lo = base + free[free < 0].sum()
            if hi < -1e-9 or (eq and lo > 1e-9):
                return False
        return True

    def greedy(self, score: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray | None:
        """Assign binaries in decreasing ``score`` order, preferring 1 when feasible."""
        assign = np.full(self.bins.size, -1, dtype=float)
        assign[lo > 0.5] = 1.0
        assign[hi < 0.5] = 0.0
        for j in np.argsort(-score, kind="stable"):
            if assign[j] >= 0:
                continue
            for v in ((1.0, 0.0) if score[j] > 0 else (0.0, 1.0)):
                assign[j] = v
                if self._possible(assign):
                    break
            else:
                return None
        return assign

    def satisfied(self, assign: np.ndarray) -> bool:
        return self._possible(assign)


@dataclass
class _Search:
    program: ConicProgram
    backend: object
    config: BnbConfig
    incumbent: Solution | None = None
    nodes: int = 0
    numeric_errors: int = 0
    relaxations: int = 0
    rejected: int = 0
    tried: set = field(default_factory=set)

    @property
    def inc_value(self) -> float:
        return self.incumbent.objective_value if self.incumbent is not None else math.inf

    def tolerance(self) -> float:
        return self.config.rel_gap * (1.0 + abs(self.inc_value))

    def relax(self, lo, hi) -> Solution:
        self.relaxations += 1
        return solve_continuous(self.program, self.backend, lo, hi)

    def try_assignment(self, assign, lo, hi) -> None:
        key = tuple(int(v) for v in assign)
        if key in self.tried:
            return
        self.tried.add(key)
        bins = np.asarray(self.program.binaries, dtype=int)
        lo2, hi2 = lo.copy(), hi.copy()
        lo2[bins] = assign
        hi2[bins] = assign
        sol = self.relax(lo2, hi2)
        if sol.status is not SolveStatus.OPTIMAL:
            if sol.status is SolveStatus.NUMERIC_ERROR:
                self.numeric_errors += 1
            return
        rep = feasibility_report(self.program, sol.primal, self.config.feas_tol)
        if not rep.feasible:
            rel = feasibility_report(self.program, sol.primal, self.config.feas_tol, relative=True)
            if not rel.feasible:
                self.rejected += 1
                log.debug("rejected candidate with violation %.3g", rep.max_violation)
                return
        if sol.objective_value < self.inc_value - 1e-12:
            sol.info["max_violation"] = rep.max_violation
            self.incumbent = sol


def _fractionality(z: np.ndarray) -> np.ndarray:
    return np.minimum(z, 1.0 - z)


def solve_mi(program: ConicProgram, config: BnbConfig | None = None, backend="auto",
             start_scores=None) -> Solution:
    """Minimise over the program with its binaries enforced.

    ``start_scores`` optionally ranks the binaries (one score per entry of
    ``program.binaries``) to build an initial incumbent greedily.
    """
    config = config or BnbConfig()
    be = get_backend(backend, program.cone_kinds())
    if not program.binaries:
        return solve_continuous(program, be)
    t0 = time.perf_counter()
    bins = np.asarray(program.binaries, dtype=int)
    rows = _BinaryRows(program)
    search = _Search(program, be, config)
    lo0 = np.array(program.lower, dtype=float)
    hi0 = np.array(program.upper, dtype=float)
    lo0[bins] = np.ceil(lo0[bins] - 1e-9)
    hi0[bins] = np.floor(hi0[bins] + 1e-9)

    if start_scores is not None:
        assign = rows.greedy(np.asarray(start_scores, dtype=float), lo0[bins], hi0[bins])
        if assign is not None:
            search.try_assignment(assign, lo0, hi0)

    root = search.relax(lo0, hi0)
    root_iters = root.iterations
    if root.status is SolveStatus.INFEASIBLE:
        return Solution(SolveStatus.INFEASIBLE, iterations=root_iters, nodes=1,
                        info={"reason": "root relaxation infeasible"})
    if root.status is not SolveStatus.OPTIMAL:
        if search.incumbent is None:
            return Solution(root.status, iterations=root_iters, nodes=1,
                            info={"reason": f"root relaxation {root.status.value}"})
        root_bound = -math.inf
    else:
        root_bound = root.objective_value

    counter = 0
    heap: list = []

    def push(bound, depth, lo, hi, sol):
        nonlocal counter
        key = (bound, counter) if config.node_order is NodeOrder.BEST_BOUND else (-depth, counter)
        heapq.heappush(heap, (key, counter, depth, bound, lo, hi, sol))
        counter += 1

    push(root_bound, 0, lo0, hi0, root if root.status is SolveStatus.OPTIMAL else None)
    status = SolveStatus.OPTIMAL
    best_open = root_bound
    while heap:
        if config.node_order is NodeOrder.BEST_BOUND:
            best_open = heap[0][3]
            if best_open >= search.inc_value - search.tolerance():
                break
        if search.nodes >= config.max_nodes:
            status = SolveStatus.ITERATION_LIMIT
            break
        _, _, depth, bound, lo, hi, sol = heapq.heappop(heap)
        if bound >= search.inc_value - search.tolerance():
            continue
        search.nodes += 1
        if sol is None:
            sol = search.relax(lo, hi)
        if sol.status is SolveStatus.NUMERIC_ERROR:
            search.numeric_errors += 1
            log.warning("numeric error at node %d; pruned", search.nodes)
            continue
        if sol.status is not SolveStatus.OPTIMAL:
            continue
        if sol.objective_value >= search.inc_value - search.tolerance():
            continue
        z = sol.primal[bins]
        frac = _fractionality(z)
        rounded = np.round(z)
        if np.all(frac <= config.int_tol):
            if rows.satisfied(rounded):
                search.try_assignment(rounded, lo, hi)
            continue
        if depth <= config.heuristic_depth:
            if rows.satisfied(rounded):
                search.try_assignment(rounded, lo, hi)
            assign = rows.greedy(z, lo[bins], hi[bins])
            if assign is not None:
                search.try_assignment(assign, lo, hi)
        open_mask = frac > config.int_tol
        if config.branching is Branching.MOST_FRACTIONAL:
            j = int(np.argmax(np.where(open_mask, frac, -1.0)))
        else:
            j = int(np.flatnonzero(open_mask)[0])
        var = bins[j]
        for v in (1.0, 0.0):
            lo_c, hi_c = lo.copy(), hi.copy()
            lo_c[var] = hi_c[var] = v
            push(sol.objective_value, depth + 1, lo_c, hi_c, None)

    elapsed = time.perf_counter() - t0
    inc = search.incumbent
    if heap and status is SolveStatus.OPTIMAL and config.node_order is NodeOrder.BEST_BOUND:
        bound = min(best_open, inc.objective_value if inc else math.inf)
    elif heap:
        bound = min(item[3] for item in heap)
    else:
        bound = inc.objective_value if inc else math.inf
    info = {
        "root_bound": root_bound,
        "root_iterations": root_iters,
        "best_bound": bound,
        "relaxations": search.relaxations,
        "numeric_errors": search.numeric_errors,
        "rejected": search.rejected,
        "seconds": elapsed,
    }
    if inc is None:
        if status is SolveStatus.ITERATION_LIMIT:
            return Solution(status, nodes=search.nodes, iterations=root_iters, info=info)
        # candidates that failed only on accuracy do not prove infeasibility
        failed = SolveStatus.NUMERIC_ERROR if search.rejected or search.numeric_errors else SolveStatus.INFEASIBLE
        return Solution(failed, nodes=search.nodes, iterations=root_iters, info=info)
    info["max_violation"] = inc.info.get("max_violation")
    info["backend"] = inc.info.get("backend")
    return Solution(status, inc.primal, inc.objective_value, root_iters, search.nodes, info)


def sequence_solve(make_program, k_values, config: BnbConfig | None = None, backend="auto",
                   scores=None) -> dict:
    """Solve one program per k, from the largest k down.

    ``make_program(k)`` returns the program for cardinality ``k``.
    ``scores(solution, program)`` turns the previous solution into binary
    scores seeding the next (smaller) k.  Failures are recorded per k and the
    sweep continues.
    """
    results: dict = {}
    prev = None
    for k in sorted(set(int(k) for k in k_values), reverse=True):
        try:
            program = make_program(k)
            seed = scores(prev, program) if (scores is not None and prev is not None and prev.ok) else None
            sol = solve_mi(program, config, backend, start_scores=seed)
        except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
            log.warning("k=%d failed: %s", k, exc)
            sol = Solution(SolveStatus.NUMERIC_ERROR, info={"error": str(exc)})
        results[k] = sol
        prev = sol
    return results
