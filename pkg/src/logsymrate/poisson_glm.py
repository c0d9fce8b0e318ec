"""Baseline Poisson GLM with log link and population offset, fit by IRLS.

The mean model is log mu = log population + X beta with X built from the
declared covariate list (intercept, age midpoint, period midpoint, all
untransformed). Standard errors come from the inverse Fisher information
at convergence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy import special

from .data_ingest import ObservationTable
from .errors import DataValidationError, RankDeficiencyError, SpecificationError

PARAMETRIC_COVARIATES = ("intercept", "age", "period")

MAX_IRLS_ITER = 50
REL_DEV_TOL = 1e-10
# score polish target, well inside the 1e-6 * max(1, sum y) invariant
SCORE_TOL_FACTOR = 1e-8


def parametric_design(table: ObservationTable, covariates) -> np.ndarray:
    """Design matrix columns for the declared parametric covariates."""
    cols = []
    for name in covariates:
        if name == "intercept":
            cols.append(np.ones(len(table)))
        elif name == "age":
            cols.append(table.age)
        elif name == "period":
            cols.append(table.period)
        else:
            raise SpecificationError(
                f"unknown covariate {name!r}; expected one of {PARAMETRIC_COVARIATES}"
            )
    if not cols:
        raise SpecificationError("empty covariate list")
    return np.column_stack(cols)


def check_full_rank(X: np.ndarray, names) -> None:
    """Raise RankDeficiencyError naming the dependent columns, if any."""
    scale = np.max(np.abs(X), axis=0)
    scale[scale == 0] = 1.0
    _, R, piv = sla.qr(X / scale, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(X.shape) * np.finfo(float).eps * 10 if diag[0] > 0 else 0.0
    bad = [names[piv[i]] for i in range(len(diag)) if diag[i] <= tol]
    if diag[0] == 0.0:
        bad = list(names)
    if bad:
        raise RankDeficiencyError(
            f"design is rank deficient; collinear column(s): {', '.join(sorted(bad))}"
        )


def _solve_equilibrated(H: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve H x = b with Jacobi scaling, for raw-unit design columns."""
    d = np.sqrt(np.abs(np.diag(H)))
    d[d == 0] = 1.0
    Hs = H / d[:, None] / d[None, :]
    xs = np.linalg.solve(Hs, b / d)
    return xs / d


@dataclass
class PoissonFit:
    beta: np.ndarray
    se: np.ndarray
    cov: np.ndarray
    covariates: tuple
    mu_hat: np.ndarray
    deviance: float
    loglik: float
    aic: float
    iterations: int
    converged: bool
    cell_keys: tuple

    @property
    def label(self) -> str:
        return "poisson"


def _poisson_loglik(y: np.ndarray, mu: np.ndarray) -> float:
    return float(np.sum(special.xlogy(y, mu) - mu - special.gammaln(y + 1.0)))


def _poisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    return float(2.0 * np.sum(special.xlogy(y, y / mu) - (y - mu)))


def fit_poisson(table: ObservationTable, covariates=("intercept", "age", "period")) -> PoissonFit:
    """IRLS fit of the offset Poisson model on the table's raw counts.

    Converges on relative deviance change below 1e-10 (at most 50
    iterations), then takes a few extra Newton steps so the score
    equations X^T (y - mu) = 0 hold to far better than the documented
    1e-6 * max(1, sum y) bound.
    """
    if len(table) == 0:
        raise DataValidationError("empty table")
    covariates = tuple(covariates)
    y = table.deaths
    offset = table.log_pop
    X = parametric_design(table, covariates)
    check_full_rank(X, covariates)

    mu = y + 0.5
    eta = np.log(mu)
    beta = np.zeros(X.shape[1])
    dev = _poisson_deviance(y, mu)
    converged = False
    iterations = 0
    for _ in range(MAX_IRLS_ITER):
        iterations += 1
        work = eta + (y - mu) / mu - offset
        H = X.T @ (mu[:, None] * X)
        b = X.T @ (mu * work)
        try:
            beta = _solve_equilibrated(H, b)
        except np.linalg.LinAlgError as exc:
            raise RankDeficiencyError(f"singular IRLS equations: {exc}") from None
        eta = offset + X @ beta
        mu = np.exp(eta)
        if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
            raise RankDeficiencyError("IRLS produced non-finite fitted means")
        dev_new = _poisson_deviance(y, mu)
        if abs(dev_new - dev) < REL_DEV_TOL * (abs(dev) + REL_DEV_TOL):
            dev = dev_new
            converged = True
            break
        dev = dev_new

    # Newton polish of the raw score; same step form as IRLS.
    score_tol = SCORE_TOL_FACTOR * max(1.0, float(np.sum(y)))
    for _ in range(10):
        score = X.T @ (y - mu)
        if np.max(np.abs(score)) <= score_tol:
            break
        H = X.T @ (mu[:, None] * X)
        beta = beta + _solve_equilibrated(H, score)
        eta = offset + X @ beta
        mu = np.exp(eta)
    dev = _poisson_deviance(y, mu)

    H = X.T @ (mu[:, None] * X)
    d = np.sqrt(np.diag(H))
    cov = np.linalg.inv(H / d[:, None] / d[None, :]) / d[:, None] / d[None, :]
    se = np.sqrt(np.diag(cov))
    ll = _poisson_loglik(y, mu)
    return PoissonFit(
        beta=beta, se=se, cov=cov, covariates=covariates, mu_hat=mu,
        deviance=dev, loglik=ll, aic=-2.0 * ll + 2.0 * X.shape[1],
        iterations=iterations, converged=converged, cell_keys=table.cell_keys,
    )


def deviance_residuals(fit: PoissonFit, table: ObservationTable) -> np.ndarray:
    y = table.deaths
    mu = fit.mu_hat
    inner = 2.0 * (special.xlogy(y, y / mu) - (y - mu))
    return np.sign(y - mu) * np.sqrt(np.maximum(inner, 0.0))


def fitted_log_rate_poisson(fit: PoissonFit, table: ObservationTable) -> np.ndarray:
    """Fitted log rate, log(mu / population) = X beta."""
    return np.log(fit.mu_hat) - table.log_pop
