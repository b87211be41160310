"""Quasi-Monte Carlo multivariate normal probabilities.

Computes P{ b1 < B (X - mu) < b2 } for X ~ N(mu, cov) with the classic
construction behind Genz's QSCMVNV routine: scale and reorder the variables
by smallest conditional probability during a Cholesky factorization, map the
problem to the unit cube by separation of variables, and integrate with a
Richtmyer (sqrt-prime) lattice rule under independent random shifts.  The
returned error is three standard errors of the shift replicates.

Results are deterministic for a fixed problem and seed; replicates are
accumulated in a fixed order regardless of execution schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import NumericError

# relative eigenvalue floor applied to indefinite constraint covariances
EIG_CLIP = 1e-12
# pivot tolerance of the reordered Cholesky, relative to the largest variance
CHOL_TOL = 1e-12


@dataclass(frozen=True)
class MvnProblem:
    """Integration region b1 < B (X - mu) < b2 for centered X ~ N(0, cov).

    cov : (n, n) symmetric positive-semidefinite covariance of X
    b_matrix : (m, n) constraint matrix B
    lower, upper : (m,) bounds, entries may be +-inf
    n_points : lattice sample budget (split across the random shifts)
    seed : RNG seed for the shift replicates
    n_shifts : number of independently shifted lattice replicates
    """

    cov: np.ndarray
    b_matrix: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_points: int = 3000
    seed: int = 0
    n_shifts: int = 12

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        b = np.atleast_2d(np.asarray(self.b_matrix, dtype=float))
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if cov.shape[0] != cov.shape[1]:
            raise ValueError("cov must be square")
        if b.shape[1] != cov.shape[0]:
            raise ValueError("b_matrix columns must match cov dimension")
        if lo.shape != (b.shape[0],) or hi.shape != (b.shape[0],):
            raise ValueError("bounds must match the constraint count")
        if np.any(lo > hi):
            raise ValueError("lower bounds must not exceed upper bounds")
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "b_matrix", b)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)


def mvn_prob(problem: MvnProblem) -> tuple[float, float]:
    """Probability of the constraint region and a 3-sigma error estimate."""
    b = problem.b_matrix
    sigma = b @ problem.cov @ b.T
    sigma = 0.5 * (sigma + sigma.T)
    sigma = _clip_psd(sigma)
    lo = problem.lower.copy()
    hi = problem.upper.copy()

    m = sigma.shape[0]
    if m == 0:
        return 1.0, 0.0
    if not np.any(np.diag(sigma) > 0):
        # fully deterministic constraints
        inside = np.all((lo <= 0.0) & (0.0 <= hi))
        return float(inside), 0.0

    chol, lo_s, hi_s = _reordered_cholesky(sigma, lo, hi)
    c0 = _phi_ratio(lo_s[0], chol[0, 0])
    d0 = _phi_ratio(hi_s[0], chol[0, 0])
    if m == 1:
        return float(np.clip(d0 - c0, 0.0, 1.0)), 1e-15

    rng = np.random.default_rng(problem.seed)
    n_shifts = max(problem.n_shifts, 2)
    n_per = max(int(math.ceil(problem.n_points / n_shifts)), 8)
    q = _richtmyer_generators(m - 1)
    shifts = rng.random((n_shifts, m - 1))
    k = np.arange(1, n_per + 1)

    c = np.full((n_shifts, n_per), c0)
    dc = np.full((n_shifts, n_per), d0 - c0)
    pv = dc.copy()
    ys = np.empty((m - 1, n_shifts, n_per))
    for i in range(1, m):
        z = q[i - 1] * k[None, :] + shifts[:, i - 1][:, None]
        z -= np.floor(z)
        x = np.abs(2.0 * z - 1.0)
        arg = np.clip(c + x * dc, 1e-16, 1.0 - 1e-16)
        ys[i - 1] = ndtri(arg)
        s = np.einsum("d,dsp->sp", chol[i, :i], ys[:i])
        clo = _phi_ratio(lo_s[i] - s, chol[i, i])
        chi = _phi_ratio(hi_s[i] - s, chol[i, i])
        c = clo
        dc = chi - clo
        pv = pv * dc
    batch = pv.mean(axis=1)
    p = float(np.clip(batch.mean(), 0.0, 1.0))
    err = 3.0 * float(batch.std(ddof=1)) / math.sqrt(n_shifts)
    return p, max(err, 1e-15)


def _phi_ratio(x, scale):
    """ndtr(x / scale) with the deterministic limit at scale == 0."""
    x = np.asarray(x, dtype=float)
    if scale > 0:
        return ndtr(x / scale)
    return np.where(x >= 0.0, 1.0, 0.0)


def _clip_psd(sigma: np.ndarray) -> np.ndarray:
    """Floor the eigenvalues of an indefinite matrix at EIG_CLIP * max."""
    try:
        lam = np.linalg.eigvalsh(sigma)
    except np.linalg.LinAlgError as exc:
        raise NumericError("constraint covariance eigendecomposition failed") from exc
    lam_max = float(lam[-1])
    if lam_max <= 0:
        return np.zeros_like(sigma)
    if float(lam[0]) >= 0.0:
        return sigma
    try:
        lam, vec = np.linalg.eigh(sigma)
    except np.linalg.LinAlgError as exc:
        raise NumericError("constraint covariance eigendecomposition failed") from exc
    lam = np.clip(lam, EIG_CLIP * lam_max, None)
    return (vec * lam) @ vec.T


def _reordered_cholesky(sigma, lo, hi):
    """Scaled Cholesky factor with variables reordered for the SOV transform.

    At each elimination step the remaining variable with the smallest
    conditional probability interval goes first (Genz's ordering); columns
    whose conditional variance falls below tolerance are zeroed, which
    handles singular covariances exactly.
    """
    n = sigma.shape[0]
    sig = np.array(sigma, dtype=float)
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    # scale by standard deviations
    sd = np.sqrt(np.clip(np.diag(sig), 0.0, None))
    sd[sd == 0.0] = 1.0
    sig /= sd[:, None]
    sig /= sd[None, :]
    lo = lo / sd
    hi = hi / sd

    chol = np.zeros((n, n))
    y = np.zeros(n)
    tol = CHOL_TOL * max(float(np.max(np.diag(sig))), 1.0)
    for k in range(n):
        var = np.diag(sig)[k:] - np.einsum("ij,ij->i", chol[k:, :k], chol[k:, :k])
        usable = var > tol
        if not np.any(usable):
            # remaining variables are deterministic given the factored ones;
            # leave their columns zero and center the conditioning value
            y[k:] = 0.5 * (np.clip(lo[k:], -10, 10) + np.clip(hi[k:], -10, 10))
            break
        ci_all = np.sqrt(np.where(usable, var, 1.0))
        s_all = chol[k:, :k] @ y[:k]
        lo_all = (lo[k:] - s_all) / ci_all
        hi_all = (hi[k:] - s_all) / ci_all
        de_all = np.where(usable, ndtr(hi_all) - ndtr(lo_all), np.inf)
        pick = int(np.argmin(de_all))
        best = k + pick
        best_de = float(de_all[pick])
        ci, lo_k, hi_k = float(ci_all[pick]), float(lo_all[pick]), float(hi_all[pick])
        if best != k:
            _swap(sig, lo, hi, chol, k, best)
        chol[k, k] = ci
        chol[k + 1:, k] = (sig[k + 1:, k] - chol[k + 1:, :k] @ chol[k, :k]) / ci
        # conditional mean of the truncated first coordinate, used by the
        # ordering heuristic at later steps
        if best_de > 1e-300:
            num = math.exp(-0.5 * min(lo_k, 38.0) ** 2) - math.exp(-0.5 * min(hi_k, 38.0) ** 2)
            y[k] = num / (math.sqrt(2.0 * math.pi) * best_de)
        else:
            y[k] = 0.5 * (np.clip(lo_k, -10, 10) + np.clip(hi_k, -10, 10))
    return chol, lo, hi


def _swap(sig, lo, hi, chol, a, b):
    sig[[a, b], :] = sig[[b, a], :]
    sig[:, [a, b]] = sig[:, [b, a]]
    chol[[a, b], :] = chol[[b, a], :]
    lo[[a, b]] = lo[[b, a]]
    hi[[a, b]] = hi[[b, a]]


def _richtmyer_generators(dim: int) -> np.ndarray:
    """Fractional parts of the square roots of the first `dim` primes."""
    primes = []
    cand = 2
    while len(primes) < dim:
        if all(cand % p for p in primes):
            primes.append(cand)
        cand += 1
    return np.sqrt(np.asarray(primes, dtype=float)) % 1.0
