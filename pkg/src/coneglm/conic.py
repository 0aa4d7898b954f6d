"""Conic program representation, validation and serialization.

A program minimises ``c' v`` subject to affine blocks ``A v + b`` lying in
a cone, variable bounds and binary marks.  Linear equalities use the zero
cone.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray


class ConeKind(str, Enum):
    ZERO = "zero"
    NONNEGATIVE = "nonnegative"
    SECOND_ORDER = "second_order"
    EXPONENTIAL = "exponential_primal"


@dataclass(frozen=True)
class Cone:
    kind: ConeKind
    dim: int

    def __post_init__(self):
        kind = ConeKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is ConeKind.EXPONENTIAL and self.dim != 3:
            raise ValueError("the exponential cone has dimension 3")
        if kind is ConeKind.SECOND_ORDER and self.dim < 2:
            raise ValueError("second-order cone dimension must be at least 2")
        if kind in (ConeKind.NONNEGATIVE, ConeKind.ZERO) and self.dim < 1:
            raise ValueError("linear cone dimension must be at least 1")

    @classmethod
    def zero(cls, dim: int) -> "Cone":
        return cls(ConeKind.ZERO, dim)

    @classmethod
    def nonnegative(cls, dim: int) -> "Cone":
        return cls(ConeKind.NONNEGATIVE, dim)

    @classmethod
    def second_order(cls, dim: int) -> "Cone":
        return cls(ConeKind.SECOND_ORDER, dim)

    @classmethod
    def exponential(cls) -> "Cone":
        return cls(ConeKind.EXPONENTIAL, 3)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "dim": self.dim}

    @classmethod
    def from_dict(cls, d: dict) -> "Cone":
        return cls(ConeKind(d["kind"]), int(d.get("dim", 3)))


def cone_violation(point, cone: Cone) -> float:
    """How far ``point`` is from ``cone`` (0 inside it).

    Linear cones report the worst entry, the second-order cone reports
    ``||x|| - t`` and the exponential cone the excess ``y exp(x/y) - z``
    (or the boundary-ray conditions when ``y <= 0``).
    """
    v = np.asarray(point, dtype=float)
    if v.shape != (cone.dim,):
        raise ValueError(f"point has dimension {v.size}, cone has {cone.dim}")
    kind = cone.kind
    if kind is ConeKind.ZERO:
        return float(np.max(np.abs(v)))
    if kind is ConeKind.NONNEGATIVE:
        return max(0.0, float(-np.min(v)))
    if kind is ConeKind.SECOND_ORDER:
        return max(0.0, float(np.linalg.norm(v[1:]) - v[0]))
    x, y, z = v
    if y > 0:
        with np.errstate(over="ignore"):
            excess = y * math.exp(x / y) if x / y < 700 else math.inf
        return max(0.0, excess - z)
    return max(0.0, -y) + max(0.0, x) + max(0.0, -z)


def cone_membership(point, cone: Cone, tol: float = 1e-8) -> bool:
    """Whether ``point`` lies in ``cone`` up to ``tol``."""
    v = np.asarray(point, dtype=float)
    if v.shape != (cone.dim,):
        raise ValueError(f"point has dimension {v.size}, cone has {cone.dim}")
    if cone.kind is ConeKind.EXPONENTIAL:
        x, y, z = v
        if y > 0:
            ratio = x / y
            if ratio > 700:
                return False
            if y * math.exp(ratio) <= z + tol:
                return True
        return bool(abs(y) <= tol and x <= tol and z >= -tol)
    return bool(cone_violation(v, cone) <= tol)


@dataclass(frozen=True, eq=False)
class ConeBlock:
    """Affine map ``A v + b`` constrained to ``cone``."""

    A: sp.csr_matrix
    b: NDArray
    cone: Cone

    def __post_init__(self):
        A = sp.csr_matrix(self.A, dtype=float)
        A.sum_duplicates()
        A.eliminate_zeros()
        b = np.asarray(self.b, dtype=float).ravel()
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def rows(self) -> int:
        return self.A.shape[0]

    def evaluate(self, v: NDArray) -> NDArray:
        return self.A @ v + self.b

    def __eq__(self, other):
        if not isinstance(other, ConeBlock):
            return NotImplemented
        return (
            self.cone == other.cone
            and self.A.shape == other.A.shape
            and (self.A != other.A).nnz == 0
            and np.array_equal(self.b, other.b)
        )


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"
    NUMERIC_ERROR = "numeric_error"


@dataclass
class Solution:
    status: SolveStatus
    primal: NDArray | None = None
    objective_value: float = math.nan
    iterations: int = 0
    nodes: int = 0
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


@dataclass(frozen=True, eq=False)
class ConicProgram:
    """An immutable conic program in minimisation form."""

    num_vars: int
    objective: NDArray
    blocks: tuple[ConeBlock, ...]
    lower: NDArray
    upper: NDArray
    binaries: tuple[int, ...] = ()
    names: tuple[str, ...] = ()

    def __post_init__(self):
        for attr in ("objective", "lower", "upper"):
            a = np.array(getattr(self, attr), dtype=float).ravel()
            a.setflags(write=False)
            object.__setattr__(self, attr, a)
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "binaries", tuple(sorted(int(i) for i in self.binaries)))
        object.__setattr__(self, "names", tuple(self.names))

    def __eq__(self, other):
        if not isinstance(other, ConicProgram):
            return NotImplemented
        return (
            self.num_vars == other.num_vars
            and np.array_equal(self.objective, other.objective)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
            and self.binaries == other.binaries
            and self.names == other.names
            and self.blocks == other.blocks
        )

    def cone_kinds(self) -> set[ConeKind]:
        return {blk.cone.kind for blk in self.blocks}

    def row_counts(self) -> Counter:
        """Scalar rows per cone kind (one exponential cone counts as 3)."""
        counts = Counter()
        for blk in self.blocks:
            counts[blk.cone.kind] += blk.rows
        return counts

    def block_counts(self) -> Counter:
        return Counter(blk.cone.kind for blk in self.blocks)

    def objective_at(self, v) -> float:
        return float(self.objective @ np.asarray(v, dtype=float))

    def summary(self) -> str:
        rows = self.row_counts()
        total = sum(rows.values())
        n_int = len(self.binaries)
        lines = [
            f"Minimize a linear objective function of length {self.num_vars} with",
            f"- {self.num_vars - n_int} continuous objective variables,",
        ]
        if n_int:
            lines.append(f"- {n_int} binary objective variables,")
        lines.append("")
        lines.append("subject to")
        lines.append(f"- {total} constraints of type conic.")
        for kind in ConeKind:
            if rows.get(kind):
                lines.append(f"  |- {rows[kind]} conic constraints of type '{kind.value}'")
        return "\n".join(lines)

    def to_builder(self) -> "ProgramBuilder":
        b = ProgramBuilder()
        b._names = list(self.names) or [f"v{i}" for i in range(self.num_vars)]
        b._lower = list(self.lower)
        b._upper = list(self.upper)
        b._objective = list(self.objective)
        b._binaries = set(self.binaries)
        b._blocks = list(self.blocks)
        return b

    # -- JSON ------------------------------------------------------------

    def to_dict(self) -> dict:
        nz = np.flatnonzero(self.objective)
        blocks = []
        for blk in self.blocks:
            coo = blk.A.tocoo()
            blocks.append(
                {
                    "rows": coo.row.tolist(),
                    "cols": coo.col.tolist(),
                    "entries": coo.data.tolist(),
                    "offset": blk.b.tolist(),
                    "cone": blk.cone.to_dict(),
                }
            )
        return {
            "num_vars": self.num_vars,
            "objective": {"indices": nz.tolist(), "values": self.objective[nz].tolist()},
            "blocks": blocks,
            "bounds": [[_enc(lo), _enc(hi)] for lo, hi in zip(self.lower, self.upper)],
            "binaries": list(self.binaries),
            "names": list(self.names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConicProgram":
        n = int(d["num_vars"])
        c = np.zeros(n)
        c[np.asarray(d["objective"]["indices"], dtype=int)] = d["objective"]["values"]
        blocks = []
        for blk in d["blocks"]:
            cone = Cone.from_dict(blk["cone"])
            A = sp.coo_matrix(
                (blk["entries"], (blk["rows"], blk["cols"])), shape=(cone.dim, n)
            ).tocsr()
            blocks.append(ConeBlock(A, blk["offset"], cone))
        bounds = d.get("bounds") or [[None, None]] * n
        lower = [_dec(lo, -math.inf) for lo, _ in bounds]
        upper = [_dec(hi, math.inf) for _, hi in bounds]
        return cls(n, c, tuple(blocks), lower, upper, tuple(d.get("binaries", ())),
                   tuple(d.get("names", ())))

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ConicProgram":
        return cls.from_dict(json.loads(text))


def _enc(x: float):
    return None if math.isinf(x) else float(x)


def _dec(x, default: float) -> float:
    return default if x is None else float(x)


class ProgramBuilder:
    """Mutable, single-owner builder for :class:`ConicProgram`."""

    def __init__(self):
        self._names: list[str] = []
        self._lower: list[float] = []
        self._upper: list[float] = []
        self._objective: list[float] = []
        self._binaries: set[int] = set()
        self._blocks: list[ConeBlock] = []

    @property
    def num_vars(self) -> int:
        return len(self._names)

    def add_variables(self, names, lower=-math.inf, upper=math.inf, binary=False) -> range:
        names = list(names)
        start = self.num_vars
        k = len(names)
        self._names.extend(names)
        self._lower.extend(np.broadcast_to(np.asarray(lower, dtype=float), (k,)).tolist())
        self._upper.extend(np.broadcast_to(np.asarray(upper, dtype=float), (k,)).tolist())
        self._objective.extend([0.0] * k)
        idx = range(start, start + k)
        if binary:
            self._binaries.update(idx)
        return idx

    def set_bounds(self, index: int, lower: float | None = None, upper: float | None = None):
        if lower is not None:
            self._lower[index] = float(lower)
        if upper is not None:
            self._upper[index] = float(upper)

    def set_objective(self, indices, values):
        for i, v in zip(np.atleast_1d(indices), np.atleast_1d(values)):
            self._objective[int(i)] = float(v)

    def add_block(self, A, b, cone: Cone):
        """Add ``A v + b in cone``; ``A`` may have fewer columns than variables."""
        A = sp.csr_matrix(A, dtype=float)
        if A.shape[1] < self.num_vars:
            A = sp.csr_matrix((A.data, A.indices, A.indptr), shape=(A.shape[0], self.num_vars))
        self._blocks.append(ConeBlock(A, b, cone))

    def add_linear(self, A, b, sense: str):
        """Add rows ``A v  sense  b`` with sense in ``<=``, ``>=``, ``==``."""
        A = sp.csr_matrix(A, dtype=float)
        b = np.asarray(b, dtype=float).ravel()
        m = A.shape[0]
        if m == 0:
            return
        if sense in ("<=", "<"):
            self.add_block(-A, b, Cone.nonnegative(m))
        elif sense in (">=", ">"):
            self.add_block(A, -b, Cone.nonnegative(m))
        elif sense in ("==", "="):
            self.add_block(A, -b, Cone.zero(m))
        else:
            raise ValueError(f"unknown constraint direction {sense!r}")

    def build(self) -> ConicProgram:
        n = self.num_vars
        blocks = []
        for blk in self._blocks:
            if blk.A.shape[1] != n:
                A = sp.csr_matrix((blk.A.data, blk.A.indices, blk.A.indptr), shape=(blk.rows, n))
                blk = ConeBlock(A, blk.b, blk.cone)
            blocks.append(blk)
        return ConicProgram(n, self._objective, tuple(blocks), self._lower, self._upper,
                            tuple(sorted(self._binaries)), tuple(self._names))


def validate(program: ConicProgram) -> list[str]:
    """List structural defects; an empty list means the program is well formed."""
    defects = []
    n = program.num_vars
    if n < 1:
        defects.append("program has no variables")
    if program.objective.shape != (n,):
        defects.append(f"objective has length {program.objective.size}, expected {n}")
    if program.lower.shape != (n,) or program.upper.shape != (n,):
        defects.append("bounds length does not match num_vars")
    elif np.any(program.lower > program.upper):
        bad = np.flatnonzero(program.lower > program.upper).tolist()
        defects.append(f"lower bound exceeds upper bound for variables {bad}")
    for k, blk in enumerate(program.blocks):
        if blk.A.shape[0] != blk.cone.dim:
            defects.append(
                f"block {k}: map has {blk.A.shape[0]} rows but cone {blk.cone.kind.value} "
                f"has dimension {blk.cone.dim}"
            )
        if blk.b.shape[0] != blk.A.shape[0]:
            defects.append(f"block {k}: offset length {blk.b.shape[0]} != {blk.A.shape[0]} rows")
        if blk.A.shape[1] != n:
            defects.append(f"block {k}: map has {blk.A.shape[1]} columns, expected {n}")
        if not (np.all(np.isfinite(blk.A.data)) and np.all(np.isfinite(blk.b))):
            defects.append(f"block {k}: non-finite coefficients")
    if program.names:
        if len(program.names) != n:
            defects.append("names length does not match num_vars")
        dup = [name for name, c in Counter(program.names).items() if c > 1]
        if dup:
            defects.append(f"duplicate variable names: {sorted(dup)}")
    for i in program.binaries:
        if not 0 <= i < n:
            defects.append(f"binary index {i} out of range")
        elif program.lower[i] < 0 or program.upper[i] > 1:
            defects.append(f"binary variable {i} has bounds outside [0, 1]")
    return defects


@dataclass
class FeasibilityReport:
    block_violations: NDArray
    bound_violation: float
    integrality_violation: float
    tol: float

    @property
    def max_violation(self) -> float:
        worst = float(self.block_violations.max()) if self.block_violations.size else 0.0
        return max(worst, self.bound_violation)

    @property
    def violated_blocks(self) -> int:
        return int(np.sum(self.block_violations > self.tol))

    @property
    def feasible(self) -> bool:
        return self.max_violation <= self.tol


def feasibility_report(program: ConicProgram, point, tol: float = 1e-6,
                       relative: bool = False) -> FeasibilityReport:
    """Evaluate every cone block and bound at ``point``.

    With ``relative`` each block's violation is divided by ``1 + max|A v + b|``,
    so a block whose entries are large is judged at matching precision.
    """
    v = np.asarray(point, dtype=float)
    if v.shape != (program.num_vars,):
        raise ValueError(f"point has length {v.size}, program has {program.num_vars} variables")
    viol = []
    for blk in program.blocks:
        val = blk.evaluate(v)
        err = cone_violation(val, blk.cone)
        viol.append(err / (1.0 + float(np.max(np.abs(val)))) if relative else err)
    viol = np.array(viol)
    with np.errstate(invalid="ignore"):
        bound = float(np.max(np.concatenate([[0.0], program.lower - v, v - program.upper])))
    if program.binaries:
        zb = v[list(program.binaries)]
        integ = float(np.max(np.abs(zb - np.round(zb))))
    else:
        integ = 0.0
    return FeasibilityReport(viol, bound, integ, tol)
