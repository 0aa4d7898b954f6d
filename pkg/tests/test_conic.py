import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from coneglm.backends import (
    CapabilityError,
    ClarabelBackend,
    ScsBackend,
    available_backends,
    get_backend,
    presolve,
    solve_continuous,
)
from coneglm.conic import (
    Cone,
    ConeKind,
    ConicProgram,
    ProgramBuilder,
    SolveStatus,
    cone_membership,
    cone_violation,
    feasibility_report,
    validate,
)

# -- cones ---------------------------------------------------------------------


@pytest.mark.parametrize("point,inside", [
    ((0.0, 1.0, 1.0), True),           # 1 * e^0 <= 1
    ((1.0, 1.0, math.e), True),
    ((1.0, 1.0, 2.0), False),
    ((-1.0, 0.0, 0.0), True),          # boundary ray x <= 0, y = 0, z >= 0
    ((1.0, 0.0, 5.0), False),
    ((0.0, -1.0, 1.0), False),
])
def test_exponential_membership(point, inside):
    assert cone_membership(np.array(point), Cone.exponential()) is inside


@given(st.floats(-5, 5), st.floats(0.01, 5))
def test_exponential_boundary_points_are_members(x, y):
    z = y * math.exp(x / y)
    assert cone_violation(np.array([x, y, z * (1 + 1e-12)]), Cone.exponential()) <= 1e-9


def test_second_order_and_linear_cones():
    assert cone_membership(np.array([5.0, 3.0, 4.0]), Cone.second_order(3))
    assert not cone_membership(np.array([4.9, 3.0, 4.0]), Cone.second_order(3))
    assert cone_membership(np.array([0.0, 2.0]), Cone.nonnegative(2))
    assert not cone_membership(np.array([0.1]), Cone.zero(1))


def test_cone_dimension_checks():
    with pytest.raises(ValueError):
        Cone(ConeKind.EXPONENTIAL, 2)
    with pytest.raises(ValueError):
        Cone.second_order(1)


# -- programs --------------------------------------------------------------------


def _tiny_exp_program():
    """min t  s.t.  (x, 1, t) in K_exp, x >= 1: optimum t = e."""
    b = ProgramBuilder()
    x, t = b.add_variables(["x", "t"])
    b.set_objective([t], [1.0])
    b.add_block(sp.csr_matrix(([1.0, 1.0], ([0, 2], [x, t])), shape=(3, 2)), [0.0, 1.0, 0.0],
                Cone.exponential())
    b.add_linear([[1.0, 0.0]], [1.0], ">=")
    return b.build()


def test_builder_and_json_round_trip():
    prog = _tiny_exp_program()
    assert validate(prog) == []
    again = ConicProgram.from_json(prog.to_json())
    assert again == prog
    assert prog.row_counts()[ConeKind.EXPONENTIAL] == 3


@pytest.mark.parametrize("backend", ["clarabel", "scs"])
def test_backends_agree_on_exponential_program(backend):
    sol = solve_continuous(_tiny_exp_program(), backend)
    assert sol.status is SolveStatus.OPTIMAL
    assert sol.objective_value == pytest.approx(math.e, abs=1e-5 if backend == "scs" else 1e-8)


def test_infeasible_program_is_reported():
    b = ProgramBuilder()
    b.add_variables(["x"])
    b.add_linear([[1.0]], [1.0], ">=")
    b.add_linear([[1.0]], [0.0], "<=")
    assert solve_continuous(b.build(), "clarabel").status is SolveStatus.INFEASIBLE


def test_unbounded_program_is_reported():
    b = ProgramBuilder()
    x = b.add_variables(["x"])
    b.set_objective(x, [1.0])
    b.add_linear([[1.0]], [5.0], "<=")
    assert solve_continuous(b.build(), "clarabel").status is SolveStatus.UNBOUNDED


def test_validate_reports_defects():
    prog = _tiny_exp_program()
    bad = ConicProgram(prog.num_vars, prog.objective, prog.blocks, [1.0, 0.0], [0.0, 1.0], (), prog.names)
    assert any("lower bound exceeds" in d for d in validate(bad))


def test_feasibility_report_counts_bounds_and_blocks():
    prog = _tiny_exp_program()
    rep = feasibility_report(prog, np.array([1.0, math.e]))
    assert rep.feasible
    rep = feasibility_report(prog, np.array([0.0, 0.5]))
    assert not rep.feasible and rep.violated_blocks >= 1


def test_presolve_fixes_equal_bounds_and_singletons():
    b = ProgramBuilder()
    b.add_variables(["a", "b", "c"], lower=[0.0, -math.inf, 2.0], upper=[1.0, math.inf, 2.0])
    b.add_linear([[0.0, 2.0, 0.0]], [4.0], "<=")
    red = presolve(b.build())
    assert not red.infeasible
    assert red.upper[1] == 2.0
    assert list(red.free) == [0, 1]


def test_presolve_detects_crossed_bounds():
    b = ProgramBuilder()
    b.add_variables(["a"], lower=0.0, upper=1.0)
    b.add_linear([[1.0]], [3.0], ">=")
    assert presolve(b.build()).infeasible


def test_backend_registry_and_env_override(monkeypatch):
    assert {"clarabel", "scs"} <= set(available_backends())
    monkeypatch.setenv("CONEGLM_BACKEND", "scs")
    assert isinstance(get_backend("auto"), ScsBackend)
    monkeypatch.delenv("CONEGLM_BACKEND")
    assert isinstance(get_backend("auto"), ClarabelBackend)
    with pytest.raises((KeyError, ValueError, CapabilityError)):
        get_backend("no-such-solver")


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_lp_relaxation_matches_closed_form(c):
    # min c'x over the box [-1, 1]^3 expressed as rows
    b = ProgramBuilder()
    x = b.add_variables(["x0", "x1", "x2"])
    b.set_objective(x, c)
    b.add_linear(np.eye(3), np.ones(3), "<=")
    b.add_linear(np.eye(3), -np.ones(3), ">=")
    sol = solve_continuous(b.build(), "clarabel")
    assert sol.ok
    assert sol.objective_value == pytest.approx(-np.abs(c).sum(), abs=1e-6)
