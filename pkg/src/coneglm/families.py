"""Family-link definitions and exact likelihood evaluation.

Everything here works on the original (unscaled) model and is used both to
report fit statistics and as an oracle independent of the conic route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import NDArray
from scipy.special import expit, gammaln, log_ndtr, ndtr

PROBIT_SCALE = math.sqrt(math.pi / 8.0)
INTERCEPT = "(Intercept)"


class Family(str, Enum):
    GAUSSIAN = "gaussian"
    BINOMIAL = "binomial"
    POISSON = "poisson"


class Link(str, Enum):
    IDENTITY = "identity"
    LOG = "log"
    LOGIT = "logit"
    PROBIT = "probit"
    SQRT = "sqrt"


SUPPORTED = frozenset(
    {
        (Family.GAUSSIAN, Link.IDENTITY),
        (Family.BINOMIAL, Link.LOGIT),
        (Family.BINOMIAL, Link.PROBIT),
        (Family.BINOMIAL, Link.LOG),
        (Family.POISSON, Link.LOG),
        (Family.POISSON, Link.IDENTITY),
        (Family.POISSON, Link.SQRT),
    }
)

DEFAULT_LINK = {
    Family.GAUSSIAN: Link.IDENTITY,
    Family.BINOMIAL: Link.LOGIT,
    Family.POISSON: Link.LOG,
}


@dataclass(frozen=True)
class FamilyLink:
    """A supported (family, link) pair.

    Only the seven combinations with a conic reformulation can be built;
    anything else raises ``ValueError``.
    """

    family: Family
    link: Link

    def __post_init__(self):
        family = Family(self.family)
        link = Link(self.link)
        if (family, link) not in SUPPORTED:
            raise ValueError(f"unsupported family-link combination: {family.value}+{link.value}")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "link", link)

    @classmethod
    def of(cls, family: str, link: str | None = None) -> "FamilyLink":
        family = Family(family)
        return cls(family, Link(link) if link else DEFAULT_LINK[family])

    def __str__(self) -> str:
        return f"{self.family.value}({self.link.value})"

    # -- link machinery -------------------------------------------------

    def in_domain(self, eta: NDArray) -> bool:
        """Whether every linear predictor lies in the link's domain."""
        if self.family is Family.BINOMIAL and self.link is Link.LOG:
            return bool(np.all(eta <= 0.0))
        if self.family is Family.POISSON and self.link in (Link.IDENTITY, Link.SQRT):
            return bool(np.all(eta >= 0.0))
        return True

    def linkinv(self, eta: NDArray) -> NDArray:
        link = self.link
        if link is Link.IDENTITY:
            return np.array(eta, dtype=float)
        if link is Link.LOG:
            return np.exp(eta)
        if link is Link.LOGIT:
            return expit(eta)
        if link is Link.PROBIT:
            return ndtr(eta)
        return np.square(eta)

    def mu_eta(self, eta: NDArray) -> NDArray:
        """First derivative of the inverse link."""
        link = self.link
        if link is Link.IDENTITY:
            return np.ones_like(eta, dtype=float)
        if link is Link.LOG:
            return np.exp(eta)
        if link is Link.LOGIT:
            p = expit(eta)
            return p * (1.0 - p)
        if link is Link.PROBIT:
            return np.exp(-0.5 * eta**2) / math.sqrt(2.0 * math.pi)
        return 2.0 * eta

    def mu_eta2(self, eta: NDArray) -> NDArray:
        """Second derivative of the inverse link."""
        link = self.link
        if link is Link.IDENTITY:
            return np.zeros_like(eta, dtype=float)
        if link is Link.LOG:
            return np.exp(eta)
        if link is Link.LOGIT:
            p = expit(eta)
            return p * (1.0 - p) * (1.0 - 2.0 * p)
        if link is Link.PROBIT:
            return -eta * np.exp(-0.5 * eta**2) / math.sqrt(2.0 * math.pi)
        return np.full_like(eta, 2.0, dtype=float)

    def variance(self, mu: NDArray) -> NDArray:
        if self.family is Family.GAUSSIAN:
            return np.ones_like(mu, dtype=float)
        if self.family is Family.BINOMIAL:
            return mu * (1.0 - mu)
        return np.array(mu, dtype=float)

    def variance_deriv(self, mu: NDArray) -> NDArray:
        if self.family is Family.GAUSSIAN:
            return np.zeros_like(mu, dtype=float)
        if self.family is Family.BINOMIAL:
            return 1.0 - 2.0 * mu
        return np.ones_like(mu, dtype=float)


def _readonly(a: NDArray) -> NDArray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GlmModel:
    """Response, design matrix with named columns, weights and family-link.

    For binomial models ``y`` holds proportions and ``weights`` the number
    of trials, so ``weights * y`` are the success counts.
    """

    X: NDArray
    y: NDArray
    family_link: FamilyLink
    column_names: tuple[str, ...] = ()
    weights: NDArray | None = None
    intercept: bool | None = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        n, p = X.shape
        if n < 1 or p < 1:
            raise ValueError("design matrix must have at least one row and one column")
        if y.shape[0] != n:
            raise ValueError(f"response has {y.shape[0]} entries, design has {n} rows")
        w = np.ones(n) if self.weights is None else np.asarray(self.weights, dtype=float).ravel()
        if w.shape[0] != n:
            raise ValueError("weights length does not match the number of rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
            raise ValueError("non-finite entries in model data")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        names = tuple(self.column_names) or tuple(f"x{j}" for j in range(p))
        if len(names) != p:
            raise ValueError("column_names length does not match design columns")
        if len(set(names)) != p:
            raise ValueError("column names must be unique")
        fl = self.family_link
        if isinstance(fl, str):
            fl = FamilyLink.of(fl)
        if fl.family is Family.BINOMIAL and np.any((y < 0) | (y > 1)):
            raise ValueError("binomial response must be a proportion in [0, 1]")
        if fl.family is Family.POISSON and np.any(y < 0):
            raise ValueError("poisson response must be nonnegative")
        intercept = self.intercept
        if intercept is None:
            intercept = names[0] == INTERCEPT
        if intercept and not np.all(X[:, 0] == 1.0):
            raise ValueError("intercept column must be all ones")
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "weights", _readonly(w))
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "family_link", fl)
        object.__setattr__(self, "intercept", bool(intercept))

    @classmethod
    def from_counts(cls, X, successes, failures, link="logit", column_names=(), intercept=None):
        """Binomial model from success/failure counts; empty rows are dropped."""
        s = np.asarray(successes, dtype=float)
        f = np.asarray(failures, dtype=float)
        total = s + f
        keep = total > 0
        return cls(
            np.asarray(X, dtype=float)[keep],
            s[keep] / total[keep],
            FamilyLink(Family.BINOMIAL, Link(link)),
            column_names=column_names,
            weights=total[keep],
            intercept=intercept,
        )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def family(self) -> Family:
        return self.family_link.family

    @property
    def link(self) -> Link:
        return self.family_link.link

    def column_index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def subset(self, columns) -> "GlmModel":
        """Model restricted to the given column indices."""
        columns = list(columns)
        names = tuple(self.column_names[j] for j in columns)
        return GlmModel(
            self.X[:, columns],
            self.y,
            self.family_link,
            column_names=names,
            weights=self.weights,
            intercept=self.intercept and bool(columns) and columns[0] == 0,
        )

    def with_link(self, link: str | Link) -> "GlmModel":
        return GlmModel(
            self.X,
            self.y,
            FamilyLink(self.family, Link(link)),
            column_names=self.column_names,
            weights=self.weights,
            intercept=self.intercept,
        )


def _xlogy(x, y):
    """x * log(y) with the 0 * log(0) = 0 convention."""
    out = np.zeros(np.broadcast(x, y).shape)
    nz = np.broadcast_to(x, out.shape) != 0
    xb = np.broadcast_to(x, out.shape)
    yb = np.broadcast_to(y, out.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[nz] = xb[nz] * np.log(yb[nz])
    return out


def _binomial_constant(model: GlmModel) -> float:
    m = model.weights
    k = m * model.y
    return float(np.sum(gammaln(m + 1.0) - gammaln(k + 1.0) - gammaln(m - k + 1.0)))


def _loglik_mu(model: GlmModel, mu: NDArray, eta: NDArray | None = None) -> float:
    fam = model.family
    a, y = model.weights, model.y
    if fam is Family.GAUSSIAN:
        rss = float(np.sum(a * (y - mu) ** 2))
        n = model.n
        if rss <= 0.0:
            return math.inf
        return -0.5 * n * (math.log(2.0 * math.pi * rss / n) + 1.0) + 0.5 * float(np.sum(np.log(a)))
    if fam is Family.BINOMIAL:
        k = a * y
        if model.link is Link.LOGIT and eta is not None:
            # stable form: k*eta - m*log(1+e^eta)
            kern = float(np.sum(k * eta - a * np.logaddexp(0.0, eta)))
        elif model.link is Link.PROBIT and eta is not None:
            kern = float(np.sum(k * log_ndtr(eta) + (a - k) * log_ndtr(-eta)))
        else:
            kern = float(np.sum(_xlogy(k, mu) + _xlogy(a - k, 1.0 - mu)))
        if math.isnan(kern):
            return -math.inf
        return _binomial_constant(model) + kern
    kern = float(np.sum(a * (_xlogy(y, mu) - mu - gammaln(y + 1.0))))
    return -math.inf if math.isnan(kern) else kern


def log_likelihood(model: GlmModel, beta) -> float:
    """Full log-likelihood at ``beta``; ``-inf`` outside the link domain.

    Gaussian uses the profiled (ML) dispersion, binomial includes the log
    binomial coefficients of the counts and Poisson includes ``-log(y!)``,
    so the value is the one AIC is computed from.
    """
    beta = np.asarray(beta, dtype=float)
    eta = model.X @ beta
    if not model.family_link.in_domain(eta):
        return -math.inf
    mu = model.family_link.linkinv(eta)
    return _loglik_mu(model, mu, eta)


def saturated_log_likelihood(model: GlmModel) -> float:
    if model.family is Family.GAUSSIAN:
        return math.inf
    return _loglik_mu(model, model.y)


def objective_kernel(model: GlmModel, beta) -> float:
    """The beta-dependent part of the negative log-likelihood.

    This is the quantity the conic programs minimise: weighted residual sum
    of squares for gaussian, and ``-sum a_i (y_i lambda_i - b(lambda_i))``
    otherwise.  Returns ``inf`` outside the link domain.
    """
    beta = np.asarray(beta, dtype=float)
    eta = model.X @ beta
    if model.family is Family.GAUSSIAN:
        return float(np.sum(model.weights * (model.y - eta) ** 2))
    ll = log_likelihood(model, beta)
    if model.family is Family.BINOMIAL:
        return -(ll - _binomial_constant(model))
    return -(ll + float(np.sum(model.weights * gammaln(model.y + 1.0))))


def deviance(model: GlmModel, beta) -> float:
    """Twice the log-likelihood gap to the saturated model.

    For gaussian this is the weighted residual sum of squares (the deviance
    at unit dispersion), as in the usual GLM convention.
    """
    beta = np.asarray(beta, dtype=float)
    if model.family is Family.GAUSSIAN:
        return objective_kernel(model, beta)
    ll = log_likelihood(model, beta)
    if ll == -math.inf:
        return math.inf
    return max(2.0 * (saturated_log_likelihood(model) - ll), 0.0)


def null_model(model: GlmModel) -> NDArray:
    """Fitted coefficients of the intercept-only model (zeros without intercept)."""
    beta = np.zeros(model.p)
    if not model.intercept:
        return beta
    sub = model.subset([0])
    fit = newton_mle(sub)
    beta[0] = fit.beta[0]
    return beta


def null_deviance(model: GlmModel) -> float:
    if model.intercept:
        return deviance(model.subset([0]), null_model(model)[:1])
    return deviance(model, np.zeros(model.p))


def gaussian_dispersion(model: GlmModel, beta) -> float:
    """ML estimate of the gaussian dispersion (RSS / n)."""
    return objective_kernel(model, beta) / model.n


def score(model: GlmModel, beta) -> NDArray:
    """Gradient of :func:`log_likelihood` with respect to beta."""
    beta = np.asarray(beta, dtype=float)
    fl = model.family_link
    eta = model.X @ beta
    mu = fl.linkinv(eta)
    if model.family is Family.GAUSSIAN:
        phi = gaussian_dispersion(model, beta)
        return model.X.T @ (model.weights * (model.y - mu)) / phi
    w = model.weights * (model.y - mu) * fl.mu_eta(eta) / fl.variance(mu)
    return model.X.T @ w


def information_matrix(model: GlmModel, beta, dispersion: float | None = None) -> NDArray:
    """Expected (Fisher) information ``X' W X`` with the IRLS working weights.

    ``dispersion`` defaults to 1 for binomial/poisson and to the ML estimate
    RSS/n for gaussian.
    """
    beta = np.asarray(beta, dtype=float)
    fl = model.family_link
    eta = model.X @ beta
    mu = fl.linkinv(eta)
    if dispersion is None:
        dispersion = gaussian_dispersion(model, beta) if model.family is Family.GAUSSIAN else 1.0
    w = model.weights * fl.mu_eta(eta) ** 2 / fl.variance(mu) / dispersion
    return model.X.T @ (w[:, None] * model.X)


def observed_information(model: GlmModel, beta) -> NDArray:
    """Negative Hessian of the log-likelihood (fixed dispersion for gaussian)."""
    beta = np.asarray(beta, dtype=float)
    fl = model.family_link
    eta = model.X @ beta
    mu = fl.linkinv(eta)
    if model.family is Family.GAUSSIAN:
        return information_matrix(model, beta)
    v = fl.variance(mu)
    d1 = fl.mu_eta(eta)
    d2 = fl.mu_eta2(eta)
    curv = (d2 * v - d1**2 * fl.variance_deriv(mu)) / v**2
    w = model.weights * (d1**2 / v - (model.y - mu) * curv)
    return model.X.T @ (w[:, None] * model.X)


def standard_errors_from_information(info: NDArray, tol: float = 1e-10):
    """Square roots of the diagonal of ``info^-1``; NaN where singular."""
    p = info.shape[0]
    se = np.full(p, np.nan)
    if p == 0:
        return se, np.zeros(0, dtype=bool)
    evals = np.linalg.eigvalsh(info)
    if evals.min() <= tol * max(evals.max(), 1.0):
        return se, np.ones(p, dtype=bool)
    cov = np.linalg.inv(info)
    diag = np.diag(cov)
    ok = diag > 0
    se[ok] = np.sqrt(diag[ok])
    return se, ~ok


def aic_bic(loglik: float, k_active: int, n: int) -> tuple[float, float]:
    """AIC and BIC from a log-likelihood and a parameter count."""
    if k_active < 1:
        raise ValueError("k_active must be at least 1")
    return -2.0 * loglik + 2.0 * k_active, -2.0 * loglik + math.log(n) * k_active


# -- unconstrained maximum likelihood ------------------------------------


@dataclass
class MleResult:
    beta: NDArray
    converged: bool
    iterations: int
    gradient_norm: float
    loglik: float

    @property
    def status(self) -> str:
        return "converged" if self.converged else "not_converged"


def _start_values(model: GlmModel) -> NDArray:
    fl = model.family_link
    y, a, X = model.y, model.weights, model.X
    if model.family is Family.BINOMIAL:
        ya = (a * y + 0.5) / (a + 1.0)
        if fl.link is Link.LOG:
            z = np.log(ya) - 0.1
        else:
            z = np.log(ya / (1.0 - ya))
    elif fl.link is Link.LOG:
        z = np.log(y + 0.1)
    elif fl.link is Link.SQRT:
        z = np.sqrt(y + 0.1)
    else:
        z = y + 0.1
    beta = np.linalg.lstsq(np.sqrt(a)[:, None] * X, np.sqrt(a) * z, rcond=None)[0]
    eta = X @ beta
    if model.family is Family.BINOMIAL and fl.link is Link.LOG and np.any(eta > -1e-3):
        if model.intercept:
            beta = np.zeros(model.p)
            beta[0] = math.log(float(np.clip(np.sum(a * y) / np.sum(a), 1e-3, 0.9)))
    if model.family is Family.POISSON and fl.link in (Link.IDENTITY, Link.SQRT) and np.any(eta <= 1e-3):
        if model.intercept:
            beta = np.zeros(model.p)
            m = float(np.sum(a * y) / np.sum(a)) + 0.1
            beta[0] = m if fl.link is Link.IDENTITY else math.sqrt(m)
    return beta


def newton_mle(model: GlmModel, max_iter: int = 200, tol: float = 1e-8, start=None) -> MleResult:
    """Unconstrained maximum likelihood by damped Newton iterations.

    Uses the observed Hessian when it is negative definite and Fisher
    scoring otherwise; steps are halved whenever they leave the link domain
    or fail to increase the likelihood.  Convergence means the infinity norm
    of the score is at most ``tol`` (relative to the size of the weights).
    Probit coefficients are the logit fit scaled by sqrt(pi/8).
    """
    if model.link is Link.PROBIT:
        res = newton_mle(model.with_link(Link.LOGIT), max_iter=max_iter, tol=tol, start=start)
        beta = PROBIT_SCALE * res.beta
        return MleResult(beta, res.converged, res.iterations, res.gradient_norm,
                         log_likelihood(model, beta))
    if model.family is Family.GAUSSIAN:
        sw = np.sqrt(model.weights)
        beta = np.linalg.lstsq(sw[:, None] * model.X, sw * model.y, rcond=None)[0]
        g = model.X.T @ (model.weights * (model.y - model.X @ beta))
        return MleResult(beta, True, 1, float(np.max(np.abs(g))), log_likelihood(model, beta))

    beta = _start_values(model) if start is None else np.asarray(start, dtype=float)
    ll = log_likelihood(model, beta)
    if ll == -math.inf:
        return MleResult(beta, False, 0, math.inf, ll)
    scale = max(1.0, float(np.sum(model.weights)) * 1e-3)
    gnorm = math.inf
    for it in range(1, max_iter + 1):
        g = score(model, beta)
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= tol * scale:
            return MleResult(beta, True, it - 1, gnorm, ll)
        H = observed_information(model, beta)
        try:
            np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            H = information_matrix(model, beta)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        for _ in range(60):
            cand = beta + t * step
            ll_c = log_likelihood(model, cand)
            if ll_c >= ll - 1e-12 * abs(ll) and ll_c != -math.inf:
                break
            t *= 0.5
        else:
            return MleResult(beta, False, it, gnorm, ll)
        beta, ll = cand, ll_c
    g = score(model, beta)
    gnorm = float(np.max(np.abs(g)))
    return MleResult(beta, gnorm <= tol * scale, max_iter, gnorm, ll)
