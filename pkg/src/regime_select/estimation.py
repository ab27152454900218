"""EM fitting of the switching AR model with exact smoothing.

The E-step runs the scaled forward-backward recursions; the M-step solves
per-state weighted least squares for the coefficients, weighted residual
variances, and expected transition frequencies, with floors and a box
projection that keep the iterate inside the admissible region.  Because the
likelihood starts the hidden chain from the stationary law of the current
transition matrix, the closed-form transition update is not exactly
coordinate ascent; :func:`em_fit` therefore verifies every accepted step
against the exact forward log-likelihood and damps the transition update
when needed, which makes the recorded trace non-decreasing by construction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import _kernels
from ._validation import derive_seed
from .errors import FitError, NumericalError
from .likelihood import _emission_logdens, _log_matrix, loglik_forward
from .model import ModelSpec, ParameterBounds, RegimeParams, Trajectory

__all__ = ["EmConfig", "EStepResult", "FitResult", "e_step", "m_step", "em_fit", "multistart_fit"]

logger = logging.getLogger(__name__)

_ASCENT_SLACK = 1e-12


@dataclass(frozen=True)
class EmConfig:
    """Knobs for the EM loop.

    ``tolerance`` is on the relative log-likelihood change, ``variance_floor``
    mirrors the lower variance bound, and ``transition_floor`` keeps every
    transition probability positive so the chain stays irreducible.
    """

    tolerance: float = 1e-7
    max_iterations: int = 500
    restarts: int = 10
    variance_floor: float = 1e-4
    transition_floor: float = 1e-6
    bounds: ParameterBounds = field(default_factory=ParameterBounds)

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1 or self.restarts < 1:
            raise ValueError("max_iterations and restarts must be at least 1")
        if self.variance_floor <= 0 or self.transition_floor <= 0:
            raise ValueError("floors must be positive")


@dataclass(eq=False)
class EStepResult:
    """Smoothed posteriors: per-time state probabilities, per-time pair
    probabilities, and the exact total log-likelihood."""

    gamma: NDArray[np.float64]
    xi: NDArray[np.float64]
    loglik: float


@dataclass(eq=False)
class FitResult:
    """Outcome of one EM run (or the best of several restarts)."""

    spec: ModelSpec
    loglik: float
    n_iter: int
    converged: bool
    trace: NDArray[np.float64]
    restart_index: int | None = None


def e_step(spec: ModelSpec, traj: Trajectory) -> EStepResult:
    """Exact smoothing for the hidden chain under ``spec``.

    ``gamma[k, i]`` is P(x_k = i | y), ``xi[k, i, j]`` is
    P(x_k = i, x_{k+1} = j | y); the reported log-likelihood is computed by
    the same log-space forward pass as :func:`loglik_forward`.
    """
    logdens = _emission_logdens(spec, traj)
    gamma, xi, ok = _kernels.forward_backward_scaled(
        logdens, spec.transition, spec.stationary
    )
    if not ok:
        raise NumericalError("a forward step has all-zero scaled weights (degenerate observation)")
    loglik = float(
        _kernels.forward_logspace(
            logdens, _log_matrix(spec.transition), _log_matrix(spec.stationary[None, :])[0]
        )
    )
    return EStepResult(gamma=gamma, xi=xi, loglik=loglik)


def m_step(posteriors: EStepResult, traj: Trajectory, config: EmConfig) -> ModelSpec:
    """Closed-form maximization given the smoothed posteriors.

    Coefficients come from per-state weighted least squares, variances from
    the weighted residual sums (floored), transition rows from expected
    transition frequencies (floored and renormalized), and everything is
    projected onto the configured box.  A state whose posterior weight falls
    below two effective observations raises :class:`FitError` (a restart
    signal rather than a crash).
    """
    gamma = posteriors.gamma
    n, m = gamma.shape
    bounds = config.bounds
    W = np.column_stack((np.ones(n), traj.lagged))
    regimes = []
    for i in range(m):
        w = gamma[:, i]
        weight = float(w.sum())
        if weight < 2.0:
            raise FitError(f"regime {i} starved: effective sample size {weight:.3f} < 2")
        gram = (W * w[:, None]).T @ W
        rhs = (W * w[:, None]).T @ traj.y
        try:
            theta = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError as exc:
            raise FitError(f"regime {i} has a singular weighted design") from exc
        resid = traj.y - W @ theta
        sigma2 = float((w * resid * resid).sum() / weight)
        b = float(np.clip(theta[0], -bounds.b_max, bounds.b_max))
        alpha = float(np.clip(theta[1], -bounds.alpha_max, bounds.alpha_max))
        sigma2 = float(np.clip(max(sigma2, config.variance_floor), bounds.c, bounds.d))
        regimes.append(RegimeParams(b=b, alpha=alpha, sigma2=sigma2))

    if n > 1:
        expected = posteriors.xi.sum(axis=0)
        row_weights = gamma[:-1].sum(axis=0)
        A = np.where(
            row_weights[:, None] > 0, expected / np.maximum(row_weights[:, None], 1e-300), 1.0 / m
        )
    else:
        A = np.full((m, m), 1.0 / m)
    A = np.maximum(A, config.transition_floor)
    A /= A.sum(axis=1, keepdims=True)
    return ModelSpec(regimes, A)


def _quantile_init(traj: Trajectory, m: int, config: EmConfig, seed_sequence) -> ModelSpec:
    """Deterministic scale-aware initialization.

    Sorts the observations into m equal-size value bins, runs per-bin least
    squares, takes the hard-assignment transition frequencies, then jitters
    everything with seeded noise so restarts explore distinct basins.
    """
    rng = np.random.Generator(np.random.PCG64(seed_sequence))
    y, lag = traj.y, traj.lagged
    n = traj.n
    order = np.argsort(y, kind="stable")
    assignment = np.empty(n, dtype=np.int64)
    assignment[order] = (np.arange(n) * m) // n
    bounds = config.bounds

    sd_y = float(np.std(y))
    regimes = []
    for i in range(m):
        idx = np.nonzero(assignment == i)[0]
        Wi = np.column_stack((np.ones(idx.size), lag[idx]))
        Yi = y[idx]
        gram = Wi.T @ Wi
        if idx.size >= 2 and np.linalg.cond(gram) < 1e10:
            theta = np.linalg.solve(gram, Wi.T @ Yi)
            resid = Yi - Wi @ theta
            sigma2 = float(resid @ resid / idx.size)
        else:
            theta = np.array([float(np.mean(Yi)) if idx.size else 0.0, 0.0])
            sigma2 = float(np.var(Yi)) if idx.size else 1.0
        u = rng.uniform(-1.0, 1.0, size=3)
        scale = 0.1 * (abs(sd_y) + 1.0)
        b = theta[0] * (1.0 + 0.1 * u[0]) + scale * u[0]
        alpha = theta[1] * (1.0 + 0.1 * u[1]) + 0.1 * u[1]
        sigma2 = max(sigma2, config.variance_floor) * math.exp(0.1 * u[2])
        regimes.append(
            RegimeParams(
                b=float(np.clip(b, -bounds.b_max, bounds.b_max)),
                alpha=float(np.clip(alpha, -bounds.alpha_max, bounds.alpha_max)),
                sigma2=float(np.clip(sigma2, bounds.c, bounds.d)),
            )
        )

    A = np.zeros((m, m))
    if n > 1:
        np.add.at(A, (assignment[:-1], assignment[1:]), 1.0)
    A = A * (1.0 + 0.1 * rng.uniform(-1.0, 1.0, size=(m, m)))
    A = np.maximum(A, config.transition_floor)
    A /= A.sum(axis=1, keepdims=True)
    return ModelSpec(regimes, A)


def em_fit(
    traj: Trajectory,
    m: int,
    config: EmConfig = EmConfig(),
    seed: int = 0,
    init: ModelSpec | None = None,
) -> FitResult:
    """Run EM from a seeded quantile initialization until convergence.

    Iterates E and M steps, checking every candidate against the exact
    forward log-likelihood.  When the joint update would lower it (possible
    because the stationary initial law ties the first observation to the
    transition matrix), the transition update is damped toward the previous
    matrix, falling back to a coefficients-only update, so the trace is
    non-decreasing by construction.  Stops when the relative change drops
    below ``config.tolerance``.  ``init`` overrides the seeded
    initialization with an explicit starting model.
    """
    if traj.n < 4 * m:
        raise FitError(f"need n >= 4 m = {4 * m} observations to fit {m} states, got {traj.n}")
    spec = init if init is not None else _quantile_init(traj, m, config, derive_seed(seed))
    if spec.m != m:
        raise ValueError(f"init has {spec.m} states, expected {m}")
    loglik = loglik_forward(spec, traj)
    trace = [loglik]
    converged = False
    for _ in range(config.max_iterations):
        posteriors = e_step(spec, traj)
        candidate = m_step(posteriors, traj, config)
        cand_loglik = loglik_forward(candidate, traj)
        if cand_loglik < loglik - _ASCENT_SLACK:
            accepted = None
            for t in (0.5, 0.25, 0.125, 0.0625, 0.0):
                damped = candidate.with_transition(
                    (1.0 - t) * spec.transition + t * candidate.transition
                )
                damped_loglik = loglik_forward(damped, traj)
                if damped_loglik >= loglik - _ASCENT_SLACK:
                    accepted = (damped, damped_loglik)
                    break
            if accepted is None:
                converged = True
                break
            candidate, cand_loglik = accepted
        delta = cand_loglik - loglik
        spec, loglik = candidate, cand_loglik
        trace.append(loglik)
        if abs(delta) <= config.tolerance * (abs(loglik) + 1e-12):
            converged = True
            break
    return FitResult(
        spec=spec,
        loglik=loglik,
        n_iter=len(trace) - 1,
        converged=converged,
        trace=np.asarray(trace),
    )


def multistart_fit(
    traj: Trajectory, m: int, config: EmConfig = EmConfig(), seed: int = 0
) -> FitResult:
    """Best-of-``config.restarts`` EM runs with derived per-restart seeds.

    Restart r uses the sub-seed mix(seed, r); the winner is the run with the
    highest final log-likelihood, ties broken toward the lower restart
    index.  Raises :class:`FitError` when every restart fails.
    """
    best: FitResult | None = None
    failures: list[str] = []
    for r in range(config.restarts):
        try:
            result = em_fit(traj, m, config, seed=_mixed(seed, r))
        except (FitError, NumericalError) as exc:
            failures.append(f"restart {r}: {exc}")
            continue
        if best is None or result.loglik > best.loglik:
            result.restart_index = r
            best = result
    if best is None:
        raise FitError(
            f"all {config.restarts} restarts failed for m={m}: " + "; ".join(failures)
        )
    if failures:
        logger.info("multistart m=%d: %d of %d restarts failed", m, len(failures), config.restarts)
    return best


def _mixed(seed: int, r: int) -> int:
    """Stable integer sub-seed for restart r (SeedSequence entropy mix)."""
    return int(derive_seed(seed, r).generate_state(1, np.uint64)[0])
