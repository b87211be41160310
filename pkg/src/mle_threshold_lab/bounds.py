"""Closed-form and small-matrix MSE bounds: CRLB, ECRLB, maximum MSE, BLB."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConditioningError
from .signal_model import AcrModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DomainSpec:
    """A priori parameter domain [theta1, theta2] with the true value theta0."""

    theta1: float
    theta2: float
    theta0: float

    def __post_init__(self):
        if not self.theta1 < self.theta2:
            raise ValueError("domain must have positive width")
        if not (self.theta1 <= self.theta0 <= self.theta2):
            raise ValueError("true value must lie inside the a priori domain")

    @property
    def width(self) -> float:
        return self.theta2 - self.theta1

    @property
    def mu_u(self) -> float:
        return 0.5 * (self.theta1 + self.theta2)

    @property
    def var_u(self) -> float:
        return self.width ** 2 / 12.0

    @property
    def window(self) -> tuple[float, float]:
        """Lag window theta - theta0 spanned by the domain."""
        return (self.theta1 - self.theta0, self.theta2 - self.theta0)


def crlb(rho: float, beta_s2: float) -> float:
    """Cramer-Rao lower bound 1/(rho * beta_s2)."""
    if not (rho > 0 and beta_s2 > 0):
        raise ValueError("rho and beta_s2 must be positive")
    return 1.0 / (rho * beta_s2)


def ecrlb(rho: float, beta_e2: float) -> float:
    """Envelope CRLB 1/(rho * beta_e2); the MSE floor inside the ambiguity region."""
    if not (rho > 0 and beta_e2 > 0):
        raise ValueError("rho and beta_e2 must be positive")
    return 1.0 / (rho * beta_e2)


def max_mse(domain: DomainSpec) -> float:
    """MSE of an estimator uniformly distributed over the a priori domain."""
    return domain.var_u + (domain.theta0 - domain.mu_u) ** 2


def blb(model: AcrModel, domain: DomainSpec, testpoints, rho: float) -> float:
    """Barankin lower bound from a testpoint matrix.

    ``testpoints`` must lie inside the domain and include theta0.  The center
    row/column of the matrix is the Fisher-score entry, so a single testpoint
    {theta0} reduces the bound to the CRLB.
    """
    tp = np.sort(np.asarray(testpoints, dtype=float))
    if np.any(tp < domain.theta1) or np.any(tp > domain.theta2):
        raise ValueError("testpoints must lie inside the a priori domain")
    center_candidates = np.nonzero(np.isclose(tp, domain.theta0, rtol=0.0,
                                              atol=1e-15 + 1e-9 * domain.width))[0]
    if len(center_candidates) == 0:
        raise ValueError("testpoints must include theta0")
    center = int(center_candidates[0])

    offsets = tp - domain.theta0
    n = len(tp)
    d = np.empty((n, n))
    # off-center block: rho [r(ti - tj) - r(ti - t0) - r(tj - t0) + 1]
    r_cross = model.r(offsets[:, None] - offsets[None, :])
    r_to_center = model.r(offsets)
    d[:] = rho * (r_cross - r_to_center[:, None] - r_to_center[None, :] + 1.0)
    # Fisher row/column: derivative of the ACR toward each testpoint
    d[center, :] = rho * model.rdot(-offsets)
    d[:, center] = d[center, :]
    d[center, center] = rho * model.beta_s2

    v = offsets.copy()
    v[center] = 1.0
    solution = _solve_symmetric(d, v, n)
    return float(v @ solution)


def _solve_symmetric(d: np.ndarray, v: np.ndarray, n: int) -> np.ndarray:
    try:
        cho = scipy.linalg.cho_factor(d)
        return scipy.linalg.cho_solve(cho, v)
    except scipy.linalg.LinAlgError:
        jitter = 1e-12 * np.trace(d) / n
        log.warning("BLB matrix not positive definite; applying diagonal jitter %.3e", jitter)
        try:
            cho = scipy.linalg.cho_factor(d + jitter * np.eye(n))
            return scipy.linalg.cho_solve(cho, v)
        except scipy.linalg.LinAlgError as exc:
            cond = float(np.linalg.cond(d))
            raise ConditioningError(
                f"BLB testpoint matrix is singular (condition number {cond:.3e})",
                condition_number=cond,
            ) from exc
