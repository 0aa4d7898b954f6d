import itertools

import numpy as np
import pytest

from instances import random_instance

from coneglm.backends import solve_continuous
from coneglm.conic import ProgramBuilder, SolveStatus
from coneglm.constraints import KMax, attach
from coneglm.mi import BnbConfig, NodeOrder, sequence_solve, solve_mi
from coneglm.reformulate import build_program


def _knapsack(values, weights, cap):
    """max v'z  s.t.  w'z <= cap, z binary (as a minimisation)."""
    b = ProgramBuilder()
    z = b.add_variables([f"z{i}" for i in range(len(values))], lower=0.0, upper=1.0, binary=True)
    b.set_objective(z, -np.asarray(values, dtype=float))
    b.add_linear([weights], [cap], "<=")
    return b.build()


def _brute(values, weights, cap):
    best = 0.0
    for bits in itertools.product((0, 1), repeat=len(values)):
        if np.dot(bits, weights) <= cap:
            best = max(best, float(np.dot(bits, values)))
    return best


@pytest.mark.parametrize("order", list(NodeOrder))
@pytest.mark.parametrize("seed", range(4))
def test_knapsack_matches_enumeration(order, seed):
    rng = np.random.default_rng(seed)
    v, w = rng.integers(1, 20, 8).astype(float), rng.integers(1, 10, 8).astype(float)
    cap = float(w.sum() // 2)
    sol = solve_mi(_knapsack(v, w, cap), BnbConfig(node_order=order))
    assert sol.ok
    assert -sol.objective_value == pytest.approx(_brute(v, w, cap), abs=1e-6)
    assert np.allclose(sol.primal, np.round(sol.primal))


def test_infeasible_integer_program():
    b = ProgramBuilder()
    z = b.add_variables(["a", "b"], lower=0.0, upper=1.0, binary=True)
    b.set_objective(z, [1.0, 1.0])
    b.add_linear([[1.0, 1.0]], [1.5], "==")
    assert solve_mi(b.build()).status is SolveStatus.INFEASIBLE


def test_node_limit_reports_iteration_limit():
    rng = np.random.default_rng(0)
    v, w = rng.uniform(1, 2, 14), rng.uniform(1, 2, 14)
    sol = solve_mi(_knapsack(v, w, 7.3), BnbConfig(max_nodes=1, heuristic_depth=0))
    assert sol.status in (SolveStatus.ITERATION_LIMIT, SolveStatus.OPTIMAL)
    if sol.status is SolveStatus.ITERATION_LIMIT:
        assert sol.info["best_bound"] <= sol.objective_value + 1e-9


def test_config_validation():
    with pytest.raises(ValueError):
        BnbConfig(rel_gap=0)
    with pytest.raises(ValueError):
        BnbConfig(max_nodes=0)


def test_sequence_solve_objectives_are_monotone():
    model = random_instance("poisson", "log", np.random.default_rng(4), n=120, p=6, sparse=3)
    base, layout = build_program(model)
    names = tuple(f"x{j}" if j else "(Intercept)" for j in range(model.p))

    def make(k):
        return attach(base, layout, [KMax(k)], names, 100.0, True, X=model.X).program

    sols = sequence_solve(make, [1, 2, 3, 4, 5], BnbConfig())
    vals = [sols[k].objective_value for k in sorted(sols)]
    assert all(a >= b - 1e-7 for a, b in zip(vals, vals[1:]))


def test_mi_logit_kmax_matches_enumeration():
    model = random_instance("binomial", "logit", np.random.default_rng(21), n=100, p=6, sparse=2)
    base, layout = build_program(model)
    names = tuple(f"x{j}" if j else "(Intercept)" for j in range(model.p))
    aug = attach(base, layout, [KMax(2)], names, 100.0, True, X=model.X)
    sol = solve_mi(aug.program)
    best = np.inf
    for pair in itertools.combinations(range(1, model.p), 2):
        sub, _ = build_program(model.subset([0, *pair]))
        best = min(best, solve_continuous(sub).objective_value)
    assert sol.objective_value == pytest.approx(best, abs=1e-6)
