import numpy as np
import pytest

from instances import FAMILY_LINKS, random_instance

from coneglm.backends import solve_continuous
from coneglm.conic import ConeKind, feasibility_report, validate
from coneglm.families import PROBIT_SCALE, newton_mle, objective_kernel
from coneglm.reformulate import apply_probit_scaling, build_gaussian_identity, build_program


@pytest.mark.parametrize("family,link", FAMILY_LINKS)
def test_program_objective_is_likelihood_kernel(family, link):
    model = random_instance(family, link, np.random.default_rng([5, len(family + link)]), n=40, p=3)
    program, layout = build_program(model)
    assert validate(program) == []
    sol = solve_continuous(program)
    assert sol.ok
    assert feasibility_report(program, sol.primal).feasible
    beta = sol.primal[layout.beta]
    logit_model = model.with_link("logit") if link == "probit" else model
    assert sol.objective_value == pytest.approx(objective_kernel(logit_model, beta), abs=1e-6)
    oracle = newton_mle(logit_model).beta
    np.testing.assert_allclose(beta, oracle, atol=1e-5)


@pytest.mark.parametrize("family,link,kinds", [
    ("gaussian", "identity", {ConeKind.SECOND_ORDER}),
    ("binomial", "logit", {ConeKind.EXPONENTIAL}),
    ("binomial", "log", {ConeKind.EXPONENTIAL, ConeKind.NONNEGATIVE}),
    ("poisson", "log", {ConeKind.EXPONENTIAL}),
    ("poisson", "identity", {ConeKind.EXPONENTIAL, ConeKind.NONNEGATIVE}),
    ("poisson", "sqrt", {ConeKind.EXPONENTIAL, ConeKind.SECOND_ORDER}),
])
def test_cone_mix_per_family(family, link, kinds):
    model = random_instance(family, link, np.random.default_rng(1), n=25, p=3)
    program, _ = build_program(model)
    assert program.cone_kinds() == kinds


def test_caesarian_program_shape(caesarian):
    program, layout = build_program(caesarian)
    counts = program.row_counts()
    assert program.num_vars == 18 and len(layout.beta) == 4
    assert counts[ConeKind.EXPONENTIAL] == 42 and counts[ConeKind.NONNEGATIVE] == 7


def test_balanced_soc_gives_same_optimum():
    model = random_instance("gaussian", "identity", np.random.default_rng(9), n=60, p=4)
    a, la = build_gaussian_identity(model, balance=True)
    b, lb = build_gaussian_identity(model, balance=False)
    sa, sb = solve_continuous(a), solve_continuous(b)
    assert sa.objective_value == pytest.approx(sb.objective_value, rel=1e-7)
    np.testing.assert_allclose(sa.primal[la.beta], sb.primal[lb.beta], atol=1e-5)


def test_probit_scaling_constant():
    np.testing.assert_array_equal(apply_probit_scaling([0.0, 1.0, -2.0]), [0.0, PROBIT_SCALE, -2 * PROBIT_SCALE])
