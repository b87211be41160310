"""Method of interval estimation: partitions, interval probabilities, moments.

The a priori domain is split into intervals D_n = [d_n, d_{n+1}) with one
testpoint each; n = 0 is the interval holding the global ACR maximum and its
testpoint is pinned to the true parameter value.  Interval probabilities come
in three schemes:

    p1 : exact-region QMC integration of P{X_n > X_n' for all n'}
    p2 : pairwise Q-function upper bound
    p3 : p2 normalized to sum to one

and interval moments in five schemes ("u", "1c", "2c", "1o", "2o"; the "c"
schemes apply to monotone intervals of non-oscillating partitions, the "o"
schemes to local-maximum intervals of oscillating ones).  The center interval
always uses (theta0, min{crlb, uniform variance}).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .bounds import DomainSpec, crlb
from .errors import DegeneratePairError, PartitionError
from .mvnprob import MvnProblem, mvn_prob
from .signal_model import AcrModel, local_maxima

log = logging.getLogger(__name__)

MOMENT_SCHEMES = ("u", "1c", "2c", "1o", "2o")


def qfunc(x):
    """Gaussian tail probability Q(x) = P{Z > x}."""
    return ndtr(-np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Partition:
    """Interval decomposition of the a priori domain."""

    mode: str
    boundaries: np.ndarray
    testpoints: np.ndarray
    center: int
    theta0: float

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        t = np.asarray(self.testpoints, dtype=float)
        if self.mode not in ("oscillating", "non_oscillating"):
            raise PartitionError(f"unknown partition mode {self.mode!r}")
        if len(b) != len(t) + 1:
            raise PartitionError("boundary/testpoint count mismatch")
        if np.any(np.diff(b) <= 0):
            raise PartitionError("boundaries must be strictly increasing")
        if not (0 <= self.center < len(t)):
            raise PartitionError("center index out of range")
        if t[self.center] != self.theta0:
            raise PartitionError("center testpoint must equal theta0")
        inside = (t >= b[:-1]) & (t < b[1:])
        # allow the last testpoint to sit on the closing boundary
        inside[-1] = inside[-1] or t[-1] == b[-1]
        if not np.all(inside):
            raise PartitionError("each testpoint must lie in its interval")
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "testpoints", t)

    @property
    def n_intervals(self) -> int:
        return len(self.testpoints)

    @property
    def n_values(self) -> np.ndarray:
        """Interval indices n with n = 0 at the center interval."""
        return np.arange(self.n_intervals) - self.center

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.boundaries)


def make_partition(model: AcrModel, domain: DomainSpec, mode: str,
                   n_intervals: int | None = None) -> Partition:
    """Build the interval partition for a domain.

    oscillating : boundaries at the ACR local minima between consecutive
        local maxima, testpoints at the maxima (refined by parabolic
        interpolation); outermost boundaries clamped to the domain.
    non_oscillating : equal-width intervals with center testpoints; an even
        requested count is bumped to odd.  The interval holding theta0 gets
        its testpoint forced to theta0.
    """
    if mode == "oscillating":
        return _oscillating_partition(model, domain)
    if mode == "non_oscillating":
        if n_intervals is None:
            raise ValueError("non_oscillating mode requires n_intervals")
        return _equal_partition(domain, int(n_intervals))
    raise PartitionError(f"unknown partition mode {mode!r}")


def _oscillating_partition(model: AcrModel, domain: DomainSpec) -> Partition:
    lo, hi = domain.window
    maxima, _ = local_maxima(model, (lo, hi))
    if len(maxima) < 2:
        raise PartitionError(
            "oscillating mode needs at least one local maximum besides the global one"
        )
    maxima = np.sort(maxima)
    i0 = int(np.argmin(np.abs(maxima)))
    maxima[i0] = 0.0

    # one boundary per adjacent maxima pair, at the minimum of r between them
    cuts = []
    for a, b in zip(maxima[:-1], maxima[1:]):
        grid = np.linspace(a, b, 257)[1:-1]
        vals = model.r(grid)
        j = int(np.argmin(vals))
        h = grid[1] - grid[0]
        y0, y1, y2 = model.r(np.array([grid[j] - h, grid[j], grid[j] + h]))
        denom = y0 - 2.0 * y1 + y2
        shift = 0.0 if denom == 0 else np.clip(0.5 * (y0 - y2) / denom, -1.0, 1.0)
        cuts.append(grid[j] + shift * h)
    boundaries = np.concatenate([[lo], cuts, [hi]]) + domain.theta0
    testpoints = maxima + domain.theta0
    testpoints[i0] = domain.theta0
    return Partition(mode="oscillating", boundaries=boundaries,
                     testpoints=testpoints, center=i0, theta0=domain.theta0)


def _equal_partition(domain: DomainSpec, n_intervals: int) -> Partition:
    if n_intervals < 2:
        raise PartitionError("need at least two intervals")
    if n_intervals % 2 == 0:
        log.warning("even interval count %d bumped to %d so theta0 is a testpoint",
                    n_intervals, n_intervals + 1)
        n_intervals += 1
    boundaries = np.linspace(domain.theta1, domain.theta2, n_intervals + 1)
    testpoints = 0.5 * (boundaries[:-1] + boundaries[1:])
    center = int(np.clip(np.searchsorted(boundaries, domain.theta0, side="right") - 1,
                         0, n_intervals - 1))
    testpoints[center] = domain.theta0
    return Partition(mode="non_oscillating", boundaries=boundaries,
                     testpoints=testpoints, center=center, theta0=domain.theta0)


def pairwise_exceed_prob(model: AcrModel, rho: float, theta, theta_p,
                         theta0: float) -> float:
    """P{X(theta) > X(theta')} for the correlated CCR process."""
    r_pair = model.r(np.asarray(theta) - np.asarray(theta_p))
    denom = 1.0 - r_pair
    if np.any(np.abs(denom) < 1e-12):
        raise DegeneratePairError("testpoints are perfectly correlated")
    diff = model.r(np.asarray(theta_p) - theta0) - model.r(np.asarray(theta) - theta0)
    return qfunc(math.sqrt(rho / 2.0) * diff / np.sqrt(denom))


def interval_probs_p1(partition: Partition, model: AcrModel, rho: float,
                      n_points: int = 3000, seed: int = 0,
                      n_shifts: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Exact-region interval probabilities by QMC integration.

    Each P1_n is the probability that the CCR sample at testpoint n exceeds
    the samples at every other testpoint; probabilities and their error
    estimates are returned for all intervals.
    """
    n = partition.n_intervals
    if n < 2:
        raise PartitionError("interval probabilities need at least two intervals")
    tau = partition.testpoints - partition.theta0
    rv = model.r(tau)
    cov = model.r(tau[:, None] - tau[None, :])
    cov = 0.5 * (cov + cov.T)
    sqrho = math.sqrt(rho)

    probs = np.empty(n)
    errs = np.empty(n)
    for i in range(n):
        others = np.delete(np.arange(n), i)
        b = np.zeros((n - 1, n))
        b[np.arange(n - 1), others] = 1.0
        b[:, i] = -1.0
        problem = MvnProblem(
            cov=cov, b_matrix=b,
            lower=np.full(n - 1, -np.inf),
            upper=sqrho * (rv[i] - rv[others]),
            n_points=n_points,
            seed=int(np.random.SeedSequence([seed, i]).generate_state(1)[0]),
            n_shifts=n_shifts,
        )
        probs[i], errs[i] = mvn_prob(problem)
    return probs, errs


def interval_probs_p2(partition: Partition, model: AcrModel, rho: float) -> np.ndarray:
    """Pairwise Q-function upper bound on the interval probabilities."""
    n = partition.n_intervals
    if n < 2:
        raise PartitionError("interval probabilities need at least two intervals")
    c = partition.center
    neighbor = c + 1 if c + 1 < n else c - 1
    tp = partition.testpoints
    out = np.empty(n)
    for i in range(n):
        if i == c:
            out[i] = pairwise_exceed_prob(model, rho, tp[c], tp[neighbor],
                                          partition.theta0)
        else:
            out[i] = pairwise_exceed_prob(model, rho, tp[i], tp[c],
                                          partition.theta0)
    return out


def interval_probs_p3(partition: Partition, model: AcrModel, rho: float) -> np.ndarray:
    """Normalized pairwise probabilities (sum exactly one)."""
    p2 = interval_probs_p2(partition, model, rho)
    return p2 / p2.sum()


@dataclass(frozen=True)
class IntervalMoments:
    scheme: str
    mu: np.ndarray
    var: np.ndarray


def interval_moments(partition: Partition, model: AcrModel, rho: float,
                     scheme: str) -> IntervalMoments:
    """Interval mean/variance approximations for every interval.

    The center interval always gets (theta0, min{crlb, uniform variance}),
    independent of the scheme.
    """
    if scheme not in MOMENT_SCHEMES:
        raise ValueError(f"unknown moment scheme {scheme!r}")
    if scheme in ("1c", "2c") and partition.mode != "non_oscillating":
        raise ValueError(f"scheme {scheme!r} requires a non_oscillating partition")
    if scheme in ("1o", "2o") and partition.mode != "oscillating":
        raise ValueError(f"scheme {scheme!r} requires an oscillating partition")

    d = partition.boundaries
    widths = partition.widths
    mu_u = 0.5 * (d[:-1] + d[1:])
    var_u = widths ** 2 / 12.0
    tau = partition.testpoints - partition.theta0
    c = crlb(rho, model.beta_s2)

    if scheme == "u":
        mu = mu_u.copy()
        var = var_u.copy()
    elif scheme in ("1c", "2c"):
        rdot_n = model.rdot(tau)
        beta_s = math.sqrt(model.beta_s2)
        if scheme == "1c":
            p_low = qfunc(math.sqrt(rho) * rdot_n / beta_s)
            mu = d[:-1] * p_low + d[1:] * (1.0 - p_low)
            var = np.minimum(var_u, p_low * (1.0 - p_low) * widths ** 2)
        else:
            mu = np.where(rdot_n < 0, d[:-1], np.where(rdot_n > 0, d[1:], mu_u))
            var = np.zeros_like(mu_u)
    else:  # "1o", "2o"
        rddot_n = model.rddot(tau)
        if np.any(rddot_n >= 0):
            raise PartitionError("declared peak testpoint has non-negative curvature")
        mu = partition.testpoints.astype(float).copy()
        if scheme == "1o":
            var_peak = c * (model.rddot(0.0) / rddot_n) ** 2
            var = np.minimum(var_peak, var_u)
        else:
            var = np.zeros_like(mu_u)

    k = partition.center
    mu[k] = partition.theta0
    var[k] = min(c, var_u[k])
    return IntervalMoments(scheme=scheme, mu=mu, var=var)


@dataclass(frozen=True)
class MseApprox:
    """Assembled MIE approximation: MSE, mean, and the interval pieces."""

    mse: float
    mean: float
    probs: np.ndarray
    moments: IntervalMoments
    partition: Partition

    def density(self, grid) -> np.ndarray:
        """Piecewise-uniform rendering of the mixture PDF on a grid."""
        grid = np.asarray(grid, dtype=float)
        idx = np.clip(np.searchsorted(self.partition.boundaries, grid, side="right") - 1,
                      0, self.partition.n_intervals - 1)
        inside = (grid >= self.partition.boundaries[0]) & (grid <= self.partition.boundaries[-1])
        dens = self.probs[idx] / self.partition.widths[idx]
        return np.where(inside, dens, 0.0)


def msea(partition: Partition, probs: np.ndarray, moments: IntervalMoments) -> MseApprox:
    """Total MSE/mean from interval probabilities and moments."""
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (partition.n_intervals,):
        raise ValueError("probability vector does not match the partition")
    theta0 = partition.theta0
    mse = float(np.sum(probs * ((theta0 - moments.mu) ** 2 + moments.var)))
    mean = float(np.sum(probs * moments.mu))
    return MseApprox(mse=mse, mean=mean, probs=probs, moments=moments,
                     partition=partition)


@dataclass(frozen=True)
class IntervalStats:
    """Bundle of per-interval probabilities and moments for one SNR point."""

    partition: Partition
    rho: float
    probs: dict
    prob_errs: dict
    moments: dict

    def msea(self, prob_scheme: str, moment_scheme: str) -> MseApprox:
        return msea(self.partition, self.probs[prob_scheme],
                    self.moments[moment_scheme])


def interval_stats(partition: Partition, model: AcrModel, rho: float,
                   prob_schemes=("1", "2", "3"), moment_schemes=None,
                   n_points: int = 3000, seed: int = 0) -> IntervalStats:
    """Compute the requested probability and moment schemes at one SNR."""
    if moment_schemes is None:
        moment_schemes = ("u", "1c", "2c") if partition.mode == "non_oscillating" \
            else ("u", "1o", "2o")
    probs = {}
    errs = {}
    if "1" in prob_schemes:
        probs["1"], errs["1"] = interval_probs_p1(partition, model, rho,
                                                  n_points=n_points, seed=seed)
    if "2" in prob_schemes:
        probs["2"] = interval_probs_p2(partition, model, rho)
    if "3" in prob_schemes:
        probs["3"] = interval_probs_p3(partition, model, rho)
    moments = {s: interval_moments(partition, model, rho, s) for s in moment_schemes}
    return IntervalStats(partition=partition, rho=rho, probs=probs,
                         prob_errs=errs, moments=moments)
