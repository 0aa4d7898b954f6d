"""Conic reformulations of the GLM likelihoods.

Variables are laid out as ``[beta (p) | auxiliaries]``.  Every builder
returns a minimisation program whose optimal value equals the negated
beta-dependent part of the log-likelihood (see
:func:`coneglm.families.objective_kernel`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .conic import Cone, ConicProgram, ProgramBuilder
from .families import PROBIT_SCALE, Family, GlmModel, Link


@dataclass(frozen=True)
class VariableLayout:
    beta: range
    delta: range | None = None
    gamma: range | None = None
    zeta: int | None = None

    @property
    def p(self) -> int:
        return len(self.beta)


def _eta_block(X: np.ndarray, nv: int, sign: float = 1.0) -> sp.csr_matrix:
    """``sign * X beta`` as an n x nv map over the beta columns."""
    n, p = X.shape
    M = sp.csr_matrix(sign * X)
    return sp.hstack([M, sp.csr_matrix((n, nv - p))], format="csr")


def _add_exp_cones(builder: ProgramBuilder, first, third, first_const, third_const):
    """Add the n cones (first_i + c1_i, 1, third_i + c3_i) in K_exp.

    ``first``/``third`` are n x nv sparse maps; the triples are assembled in
    one interleaved matrix and then split into per-observation blocks.
    """
    n, nv = first.shape
    stacked = sp.vstack([first, sp.csr_matrix((n, nv)), third], format="csr")
    order = np.arange(3 * n).reshape(3, n).T.ravel()
    inter = stacked[order]
    inter.sort_indices()
    off = np.empty(3 * n)
    off[0::3] = first_const
    off[1::3] = 1.0
    off[2::3] = third_const
    ip = inter.indptr
    cone = Cone.exponential()
    for i in range(n):
        lo, hi = ip[3 * i], ip[3 * i + 3]
        A = sp.csr_matrix((inter.data[lo:hi], inter.indices[lo:hi], ip[3 * i:3 * i + 4] - lo),
                          shape=(3, nv))
        builder.add_block(A, off[3 * i:3 * i + 3], cone)


def _selector(n: int, nv: int, start: int, scale=1.0) -> sp.csr_matrix:
    """Rows picking variable ``start + i`` (times ``scale``) for i < n."""
    scale = np.broadcast_to(np.asarray(scale, dtype=float), (n,))
    return sp.csr_matrix((scale, (np.arange(n), start + np.arange(n))), shape=(n, nv))


def _beta_vars(builder: ProgramBuilder, model: GlmModel) -> range:
    return builder.add_variables(model.column_names)


def _soc_balance(model: GlmModel) -> float:
    """Constant c for the block (zeta/c + c, zeta/c - c, r).

    Any c > 0 describes the same set zeta >= |r|^2; choosing c^2 near the
    optimal weighted RSS keeps both leading entries of the same magnitude as
    the residual norm, which avoids cancellation in the cone margin.
    """
    sa = np.sqrt(model.weights)
    beta, *_ = np.linalg.lstsq(sa[:, None] * model.X, sa * model.y, rcond=None)
    rss = float(np.sum(model.weights * (model.y - model.X @ beta) ** 2))
    tss = float(np.sum(model.weights * model.y**2))
    floor = 1e-8 * max(tss, 1.0)
    return float(np.sqrt(max(rss, floor))) if tss > 0 else 1.0


def build_gaussian_identity(model: GlmModel, balance: bool = True) -> tuple[ConicProgram, VariableLayout]:
    """min zeta s.t. (zeta/c + c, zeta/c - c, 2 sqrt(a_i)(y_i - x_i'beta)) in SOC.

    With ``balance=False`` c = 1, the textbook (zeta+1, zeta-1, ...) block.
    """
    X, y, a = model.X, model.y, model.weights
    n, p = X.shape
    b = ProgramBuilder()
    beta = _beta_vars(b, model)
    zeta = b.add_variables(["zeta"])[0]
    nv = b.num_vars
    c = _soc_balance(model) if balance else 1.0
    sa = np.sqrt(a)
    top = sp.csr_matrix(([1.0 / c, 1.0 / c], ([0, 1], [zeta, zeta])), shape=(2, nv))
    resid = _eta_block(-2.0 * sa[:, None] * X, nv)
    A = sp.vstack([top, resid], format="csr")
    off = np.concatenate([[c, -c], 2.0 * sa * y])
    b.add_block(A, off, Cone.second_order(n + 2))
    b.set_objective([zeta], [1.0])
    return b.build(), VariableLayout(beta=beta, zeta=zeta)


def build_binomial_logit(model: GlmModel) -> tuple[ConicProgram, VariableLayout]:
    """Logistic likelihood with delta_i >= log(1 + exp(eta_i)).

    The softplus epigraph is written as exp(-delta) + exp(eta - delta) <= 1
    via (-delta_i, 1, gamma_i) and (eta_i - delta_i, 1, 1 - gamma_i).
    """
    X, y, a = model.X, model.y, model.weights
    n, p = X.shape
    b = ProgramBuilder()
    beta = _beta_vars(b, model)
    delta = b.add_variables([f"delta[{i}]" for i in range(n)])
    gamma = b.add_variables([f"gamma[{i}]" for i in range(n)])
    nv = b.num_vars
    eta = _eta_block(X, nv)
    d = _selector(n, nv, delta.start)
    g = _selector(n, nv, gamma.start)
    zeros, ones = np.zeros(n), np.ones(n)
    _add_exp_cones(b, -d, g, zeros, zeros)
    _add_exp_cones(b, eta - d, -g, zeros, ones)
    b.set_objective(beta, -(a * y) @ X)
    b.set_objective(delta, a)
    return b.build(), VariableLayout(beta=beta, delta=delta, gamma=gamma)


def build_binomial_log(model: GlmModel, eta_margin: float = 0.0) -> tuple[ConicProgram, VariableLayout]:
    """Log-binomial likelihood with delta_i <= log(1 - exp(eta_i)) and eta <= 0."""
    X, y, a = model.X, model.y, model.weights
    n, p = X.shape
    b = ProgramBuilder()
    beta = _beta_vars(b, model)
    delta = b.add_variables([f"delta[{i}]" for i in range(n)])
    gamma = b.add_variables([f"gamma[{i}]" for i in range(n)])
    nv = b.num_vars
    eta = _eta_block(X, nv)
    d = _selector(n, nv, delta.start)
    g = _selector(n, nv, gamma.start)
    zeros, ones = np.zeros(n), np.ones(n)
    _add_exp_cones(b, d, -g, zeros, ones)
    _add_exp_cones(b, eta, g, zeros, zeros)
    b.add_block(-eta, np.full(n, -eta_margin), Cone.nonnegative(n))
    b.set_objective(beta, -(a * y) @ X)
    b.set_objective(delta, -(a * (1.0 - y)))
    return b.build(), VariableLayout(beta=beta, delta=delta, gamma=gamma)


def build_poisson_log(model: GlmModel) -> tuple[ConicProgram, VariableLayout]:
    """Poisson log-link likelihood with delta_i >= exp(eta_i)."""
    X, y, a = model.X, model.y, model.weights
    n, p = X.shape
    b = ProgramBuilder()
    beta = _beta_vars(b, model)
    delta = b.add_variables([f"delta[{i}]" for i in range(n)])
    nv = b.num_vars
    eta = _eta_block(X, nv)
    d = _selector(n, nv, delta.start)
    _add_exp_cones(b, eta, d, np.zeros(n), np.zeros(n))
    b.set_objective(beta, -(a * y) @ X)
    b.set_objective(delta, a)
    return b.build(), VariableLayout(beta=beta, delta=delta)


def build_poisson_identity(model: GlmModel, eta_margin: float = 0.0) -> tuple[ConicProgram, VariableLayout]:
    """Poisson identity-link likelihood with delta_i <= log(eta_i), eta >= 0."""
    X, y, a = model.X, model.y, model.weights
    n, p = X.shape
    b = ProgramBuilder()
    beta = _beta_vars(b, model)
    delta = b.add_variables([f"delta[{i}]" for i in range(n)])
    nv = b.num_vars
    eta = _eta_block(X, nv)
    d = _selector(n, nv, delta.start)
    _add_exp_cones(b, d, eta, np.zeros(n), np.zeros(n))
    b.add_block(eta, np.full(n, -eta_margin), Cone.nonnegative(n))
    b.set_objective(beta, a @ X)
    b.set_objective(delta, -(a * y))
    return b.build(), VariableLayout(beta=beta, delta=delta)


def build_poisson_sqrt(model: GlmModel, eta_margin: float = 0.0) -> tuple[ConicProgram, VariableLayout]:
    """Poisson sqrt-link likelihood: 2 y_i delta_i - eta_i^2 with delta_i <= log(eta_i).

    Weights scale the objective and enter the SOC rows as sqrt(a_i), so that
    zeta bounds sum a_i eta_i^2 (through the balanced block of
    :func:`build_gaussian_identity`).
    """
    X, y, a = model.X, model.y, model.weights
    n, p = X.shape
    b = ProgramBuilder()
    beta = _beta_vars(b, model)
    delta = b.add_variables([f"delta[{i}]" for i in range(n)])
    zeta = b.add_variables(["zeta"])[0]
    nv = b.num_vars
    eta = _eta_block(X, nv)
    d = _selector(n, nv, delta.start)
    _add_exp_cones(b, d, eta, np.zeros(n), np.zeros(n))
    # balanced rotated-cone block, see _soc_balance; zeta ~ sum a_i mu_i ~ sum a_i y_i
    c = float(np.sqrt(max(float(a @ y), 1.0)))
    top = sp.csr_matrix(([1.0 / c, 1.0 / c], ([0, 1], [zeta, zeta])), shape=(2, nv))
    sa = np.sqrt(a)
    b.add_block(sp.vstack([top, _eta_block(2.0 * sa[:, None] * X, nv)], format="csr"),
                np.concatenate([[c, -c], np.zeros(n)]), Cone.second_order(n + 2))
    if eta_margin:
        b.add_block(eta, np.full(n, -eta_margin), Cone.nonnegative(n))
    b.set_objective(delta, -2.0 * a * y)
    b.set_objective([zeta], [1.0])
    return b.build(), VariableLayout(beta=beta, delta=delta, zeta=zeta)


def build_program(model: GlmModel, eta_margin: float = 0.0) -> tuple[ConicProgram, VariableLayout]:
    """Dispatch on the model's family-link; probit reuses the logit program."""
    fam, link = model.family, model.link
    if fam is Family.GAUSSIAN:
        return build_gaussian_identity(model)
    if fam is Family.BINOMIAL:
        if link in (Link.LOGIT, Link.PROBIT):
            return build_binomial_logit(model)
        return build_binomial_log(model, eta_margin)
    if link is Link.LOG:
        return build_poisson_log(model)
    if link is Link.IDENTITY:
        return build_poisson_identity(model, eta_margin)
    return build_poisson_sqrt(model, eta_margin)


def apply_probit_scaling(beta) -> np.ndarray:
    """Probit coefficients from logit coefficients (multiply by sqrt(pi/8))."""
    return PROBIT_SCALE * np.asarray(beta, dtype=float)
