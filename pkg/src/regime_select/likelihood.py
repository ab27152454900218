"""Exact likelihood machinery for the switching AR model.

The likelihood of ``y_1..y_n`` given ``y_0`` marginalizes the hidden path:

    p(y | y0) = sum over paths x of p(y | y0, x) * p(x),

where the conditional factor is a product of per-regime Gaussian linear
models and the path factor is the chain law started from its stationary
distribution.  ``loglik_forward`` evaluates the sum by dynamic programming in
log space; ``loglik_bruteforce`` enumerates every path and is the oracle the
forward pass is tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import _kernels
from ._validation import as_path, check_states_in_range
from .model import ModelSpec, Trajectory, stationary_distribution

__all__ = [
    "SegmentStats",
    "RegimeFit",
    "segment_stats",
    "conditional_loglik",
    "path_prior_loglik",
    "loglik_forward",
    "loglik_bruteforce",
    "ols_fit",
    "lipschitz_probe",
    "enumerate_paths",
    "BRUTE_FORCE_MAX_PATHS",
]

BRUTE_FORCE_MAX_PATHS = 1_000_000

_COND_LIMIT = 1e12
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(eq=False)
class SegmentStats:
    """Per-state visit sets, transition counts, and regression blocks.

    For state ``i``, ``design[i]`` stacks rows ``[1, y_{k-1}]`` over the
    visit times ``k`` (the second column is the lagged series) and
    ``response[i]`` holds the visited values ``y_k``.  Transitions are
    counted over consecutive pairs ``(x_k, x_{k+1})``, so the transition
    counts sum to ``n - 1``.
    """

    m: int
    n: int
    counts: NDArray[np.int64]
    trans_counts: NDArray[np.int64]
    indices: tuple[NDArray[np.int64], ...]
    design: tuple[NDArray[np.float64], ...]
    response: tuple[NDArray[np.float64], ...]


@dataclass(frozen=True)
class RegimeFit:
    """Least-squares fit of one regime: coefficients, variance, residual SS."""

    theta: NDArray[np.float64]
    sigma2: float
    rss: float


def segment_stats(traj: Trajectory, m: int) -> SegmentStats:
    """Split a labeled trajectory into per-state regression blocks."""
    if traj.x is None:
        raise ValueError("trajectory has no hidden path")
    x = traj.x
    check_states_in_range(x, m)
    lag = traj.lagged
    indices = []
    design = []
    response = []
    counts = np.zeros(m, dtype=np.int64)
    for i in range(m):
        idx = np.nonzero(x == i)[0]
        counts[i] = idx.size
        indices.append(idx)
        design.append(np.column_stack((np.ones(idx.size), lag[idx])))
        response.append(traj.y[idx])
    trans = np.zeros((m, m), dtype=np.int64)
    np.add.at(trans, (x[:-1], x[1:]), 1)
    return SegmentStats(
        m=m,
        n=traj.n,
        counts=counts,
        trans_counts=trans,
        indices=tuple(indices),
        design=tuple(design),
        response=tuple(response),
    )


def _check_theta_sigma(theta, sigma2, m: int):
    theta = np.asarray(theta, dtype=np.float64)
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    if theta.shape != (m, 2):
        raise ValueError(f"theta must have shape ({m}, 2), got {theta.shape}")
    if sigma2.shape != (m,):
        raise ValueError(f"sigma2 must have shape ({m},), got {sigma2.shape}")
    if np.any(sigma2 <= 0):
        raise ValueError("all noise variances must be positive")
    return theta, sigma2


def conditional_loglik(theta, sigma2, traj: Trajectory) -> float:
    """Log density of the series given the hidden path.

    ``theta`` is an (m, 2) table of (intercept, slope) rows and ``sigma2``
    the per-state variance vector.  Equals the sum over states of the
    Gaussian least-squares log density of each regression block.
    """
    if traj.x is None:
        raise ValueError("trajectory has no hidden path")
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 2 or theta.shape[1] != 2:
        raise ValueError(f"theta must be an (m, 2) table, got shape {theta.shape}")
    theta, sigma2 = _check_theta_sigma(theta, sigma2, theta.shape[0])
    check_states_in_range(traj.x, theta.shape[0])
    x = traj.x
    resid = traj.y - (theta[x, 0] + theta[x, 1] * traj.lagged)
    s2 = sigma2[x]
    return float(np.sum(-0.5 * (np.log(2.0 * np.pi * s2) + resid * resid / s2)))


def path_prior_loglik(transition, x) -> float:
    """Log probability of a hidden path, with x_1 drawn from the stationary law.

    Returns ``-inf`` when the path uses a zero-probability transition.
    """
    A = np.asarray(transition, dtype=np.float64)
    x = as_path(x)
    if x.size == 0:
        raise ValueError("path must be non-empty")
    check_states_in_range(x, A.shape[0])
    lam = stationary_distribution(A)
    total = math.log(lam[x[0]])
    if x.size > 1:
        probs = A[x[:-1], x[1:]]
        if np.any(probs <= 0):
            return -math.inf
        total += float(np.sum(np.log(probs)))
    return total


def _emission_logdens(spec: ModelSpec, traj: Trajectory) -> NDArray[np.float64]:
    """(n, m) table of per-step Gaussian log densities for each regime."""
    resid = traj.y[:, None] - (spec.intercepts[None, :] + spec.slopes[None, :] * traj.lagged[:, None])
    s2 = spec.variances[None, :]
    return -0.5 * (np.log(2.0 * np.pi * s2) + resid * resid / s2)


def _log_matrix(A: NDArray[np.float64]) -> NDArray[np.float64]:
    out = np.full_like(A, -np.inf)
    mask = A > 0
    out[mask] = np.log(A[mask])
    return out


def loglik_forward(spec: ModelSpec, traj: Trajectory) -> float:
    """Log-likelihood of the observations under ``spec``.

    Dynamic-programming evaluation of the path sum, with a log-sum-exp at
    every step; finite whenever any path has positive density.
    """
    logdens = _emission_logdens(spec, traj)
    loglam = _log_matrix(spec.stationary[None, :])[0]
    return float(_kernels.forward_logspace(logdens, _log_matrix(spec.transition), loglam))


def enumerate_paths(m: int, n: int) -> NDArray[np.int64]:
    """All ``m**n`` hidden paths as an (m**n, n) array, lexicographic order."""
    total = m**n
    if total > BRUTE_FORCE_MAX_PATHS:
        raise ValueError(f"m**n = {total} exceeds the enumeration guard {BRUTE_FORCE_MAX_PATHS}")
    idx = np.arange(total, dtype=np.int64)
    paths = np.empty((total, n), dtype=np.int64)
    for k in range(n):
        paths[:, k] = (idx // m ** (n - 1 - k)) % m
    return paths


def loglik_bruteforce(spec: ModelSpec, traj: Trajectory) -> float:
    """Exact log of the path sum over all ``m**n`` paths (oracle).

    Vectorized over paths and combined with a single log-sum-exp.
    """
    m, n = spec.m, traj.n
    paths = enumerate_paths(m, n)
    lag = traj.lagged
    resid = traj.y[None, :] - (spec.intercepts[paths] + spec.slopes[paths] * lag[None, :])
    s2 = spec.variances[paths]
    cond = np.sum(-0.5 * (np.log(2.0 * np.pi * s2) + resid * resid / s2), axis=1)

    loglam = _log_matrix(spec.stationary[None, :])[0]
    logA = _log_matrix(spec.transition)
    prior = loglam[paths[:, 0]]
    if n > 1:
        prior = prior + np.sum(logA[paths[:, :-1], paths[:, 1:]], axis=1)

    total = cond + prior
    mx = np.max(total)
    if not np.isfinite(mx):
        return -math.inf
    return float(mx + np.log(np.sum(np.exp(total - mx))))


def ols_fit(stats: SegmentStats, variance_floor: float = 0.0) -> list[RegimeFit]:
    """Per-regime least squares on the segmented blocks.

    Solves the normal equations through a QR factorization (``lstsq``), with
    the variance estimate RSS / n_i, floored at ``variance_floor`` (pass the
    configured lower variance bound to keep exact fits off the boundary of
    the admissible region).
    """
    fits: list[RegimeFit] = []
    for i in range(stats.m):
        n_i = int(stats.counts[i])
        if n_i < 2:
            raise ValueError(f"state {i} has {n_i} visits; at least 2 are needed")
        W = stats.design[i]
        Y = stats.response[i]
        gram = W.T @ W
        if np.linalg.cond(gram) > _COND_LIMIT:
            raise ValueError(f"state {i} has a rank-deficient design (all lagged values equal)")
        theta, *_ = np.linalg.lstsq(W, Y, rcond=None)
        resid = Y - W @ theta
        rss = float(resid @ resid)
        fits.append(RegimeFit(theta=theta, sigma2=max(rss / n_i, variance_floor), rss=rss))
    return fits


def lipschitz_probe(spec: ModelSpec, spec2: ModelSpec, traj: Trajectory) -> float:
    """Normalized log-likelihood increment between two nearby models.

    Returns ``|L(spec) - L(spec2)| / (n * dist)`` where ``dist`` is the
    max-norm over all parameter entries (intercepts, slopes, variances, and
    transition probabilities).  Bounded ratios across growing ``n`` are the
    empirical signature of an equicontinuous normalized log-likelihood.
    """
    if spec.m != spec2.m:
        raise ValueError("both models must have the same number of states")
    diffs = [
        np.abs(spec.intercepts - spec2.intercepts),
        np.abs(spec.slopes - spec2.slopes),
        np.abs(spec.variances - spec2.variances),
        np.abs(spec.transition - spec2.transition).ravel(),
    ]
    dist = float(max(np.max(d) for d in diffs))
    if dist == 0.0:
        raise ValueError("the two models coincide; the probe needs a positive distance")
    return abs(loglik_forward(spec, traj) - loglik_forward(spec2, traj)) / (traj.n * dist)
