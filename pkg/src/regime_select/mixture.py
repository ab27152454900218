"""Prior-mixture statistic and the likelihood-vs-mixture envelope.

The mixture statistic averages the path likelihood over conjugate priors:
symmetric Dirichlet(1/2, ..., 1/2) rows for the transition matrix, Gaussian
coefficients theta_i ~ N(0, sigma_i^2 tau^2 I) and, in the closed forms, the
non-informative (improper) limit of an inverse-gamma prior on each variance.
Given a path, the coefficient/variance integral has the closed form

    prod_i  sqrt(det M_i) * 2^(n_i/2) * Gamma(n_i/2)
            / ((2 pi)^(n_i/2) * tau^2 * (Y_i' P_i Y_i)^(n_i/2)),

with M_i = (W_i'W_i + I/tau^2)^{-1} and P_i = I - W_i M_i W_i'.  The path
factor integrates the transition rows against the Dirichlet prior and the
initial state against the uniform law:

    q(x) = (1/m) * prod_i [ Gamma(m/2) / Gamma(k_i + m/2)
                            * prod_j Gamma(n_ij + 1/2) / Gamma(1/2) ],

where n_ij counts transitions and k_i = sum_j n_ij.  The log-ratio between
the path likelihood at fixed parameters and the full mixture obeys, for
n >= 4,

    log p / q  <=  m(m+1)/2 log n + c_m(n) + d(n) + e_m(n)
                   + (n m / 2) log max_i (Y_i' P_i Y_i / Y_i' B_i Y_i),

with B_i = I - W_i (W_i'W_i)^{-1} W_i' and the explicit terms implemented in
:func:`bound_terms`.  :func:`verify_bound` checks the inequality on an
instance by computing both sides exactly (the mixture by brute force).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import integrate
from scipy.special import gammaln

from .errors import NumericalError, OracleFailureError
from .likelihood import (
    BRUTE_FORCE_MAX_PATHS,
    enumerate_paths,
    loglik_forward,
    segment_stats,
)
from .model import ModelSpec, Trajectory
from ._validation import as_path, check_states_in_range

__all__ = [
    "PriorConfig",
    "ProjectionSet",
    "BoundTerms",
    "BoundCheck",
    "kt_path_mixture_log",
    "conditional_mixture_log",
    "mixture_numeric_oracle",
    "mixture_bruteforce_log",
    "build_projection_set",
    "c_term",
    "d_term",
    "e_term",
    "bound_terms",
    "verify_bound",
    "empirical_transition_matrix",
    "kt_bound_check",
]

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)
_MIN_SEGMENT_FOR_RATIO = 3
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class PriorConfig:
    """Prior hyperparameters for the mixture statistic.

    ``tau2`` scales the coefficient prior.  ``u0`` and ``v0`` are the
    inverse-gamma parameters used only by the numeric oracle; the closed
    forms take their limit at zero.  The Dirichlet weight on transition rows
    is fixed at 1/2.
    """

    tau2: float = 1.0
    u0: float = 0.0
    v0: float = 0.0
    dirichlet_alpha: float = 0.5

    def __post_init__(self):
        if not self.tau2 > 0:
            raise ValueError("tau2 must be positive")
        if self.u0 < 0 or self.v0 < 0:
            raise ValueError("u0 and v0 must be non-negative")
        if self.dirichlet_alpha != 0.5:
            raise ValueError("the transition prior weight is fixed at 1/2")


@dataclass(eq=False)
class ProjectionSet:
    """Ridge and least-squares projection matrices for each state's design."""

    ridge_inverse: tuple[NDArray[np.float64], ...]
    ridge_projection: tuple[NDArray[np.float64], ...]
    ls_projection: tuple[NDArray[np.float64], ...]


@dataclass(frozen=True)
class BoundTerms:
    """Right-hand side of the envelope, split into its displayed components."""

    leading: float
    c_term: float
    d_term: float
    e_term: float
    ratio_term: float

    @property
    def total(self) -> float:
        return self.leading + self.c_term + self.d_term + self.e_term + self.ratio_term


@dataclass(frozen=True)
class BoundCheck:
    """Result of checking the envelope on one instance."""

    loglik: float
    mixture_log: float
    lhs: float
    terms: BoundTerms
    ratio_max: float
    n_paths: int
    n_paths_excluded: int

    @property
    def slack(self) -> float:
        return self.terms.total - self.lhs


def _transition_counts(x: NDArray[np.int64], m: int) -> NDArray[np.int64]:
    counts = np.zeros((m, m), dtype=np.int64)
    if x.size > 1:
        np.add.at(counts, (x[:-1], x[1:]), 1)
    return counts


def kt_path_mixture_log(x, m: int) -> float:
    """Log of the Dirichlet-averaged path probability (uniform initial state).

    Sums per-row terms ``log G(m/2) - log G(k_i + m/2)
    + sum_j [log G(n_ij + 1/2) - log G(1/2)]`` and adds ``log(1/m)`` for the
    initial state.  Path probabilities of a fixed length sum to one.
    """
    x = as_path(x)
    if x.size == 0:
        raise ValueError("path must be non-empty")
    check_states_in_range(x, m)
    counts = _transition_counts(x, m)
    row_totals = counts.sum(axis=1)
    total = -math.log(m)
    total += float(m * gammaln(m / 2.0) - np.sum(gammaln(row_totals + m / 2.0)))
    total += float(np.sum(gammaln(counts + 0.5)) - m * m * gammaln(0.5))
    return total


def _segment_quadratics(W: NDArray[np.float64], Y: NDArray[np.float64], tau2: float):
    """(log det M, Y'PY) for one segment without forming the projection."""
    gram = W.T @ W
    ridge = gram + np.eye(2) / tau2
    det_ridge = ridge[0, 0] * ridge[1, 1] - ridge[0, 1] * ridge[1, 0]
    wty = W.T @ Y
    coef = np.linalg.solve(ridge, wty)
    ypy = float(Y @ Y - wty @ coef)
    return -math.log(det_ridge), ypy


def conditional_mixture_log(traj: Trajectory, prior: PriorConfig = PriorConfig()) -> float:
    """Closed-form log of the coefficient/variance mixture given the path.

    Uses the non-informative limit of the variance prior.  Raises
    :class:`NumericalError` when a quadratic form Y'PY is numerically
    non-positive (the mixture diverges there).
    """
    if traj.x is None:
        raise ValueError("trajectory has no hidden path")
    m = int(traj.x.max()) + 1
    stats = segment_stats(traj, m)
    total = 0.0
    for i in range(m):
        n_i = int(stats.counts[i])
        if n_i == 0:
            continue
        logdet_m, ypy = _segment_quadratics(stats.design[i], stats.response[i], prior.tau2)
        if ypy <= 0:
            raise NumericalError(f"Y'PY <= 0 for state {i}; the mixture integral degenerates")
        total += (
            0.5 * logdet_m
            - 0.5 * n_i * _LOG_2PI
            - math.log(prior.tau2)
            - 0.5 * n_i * math.log(ypy)
            + 0.5 * n_i * math.log(2.0)
            + float(gammaln(n_i / 2.0))
        )
    return total


def _oracle_segment_integral(
    W: NDArray[np.float64],
    Y: NDArray[np.float64],
    prior: PriorConfig,
    epsrel: float,
    theta_box: float,
    n_center: int = 160,
    n_tail: int = 64,
    n_var: int = 160,
) -> float:
    """3-d quadrature of one segment's integrand over (intercept, slope, variance).

    Deterministic split Gauss-Legendre rules in every direction: a fine
    window around the integrand's ridge, log-spaced tails out to at least
    ``theta_box`` (far enough that the truncated mass is negligible), and a
    per-piece window for the log-variance.  The whole computation runs twice,
    with all node counts doubled, as a step-halving convergence check.  The
    variance prior enters as the bare kernel
    ``(s2)^-(v0/2+1) * exp(-u0 / (2 s2))`` so that the value converges to the
    closed form as u0, v0 -> 0.
    """
    n_i = Y.size
    tau2 = prior.tau2
    u0, v0 = prior.u0, prior.v0
    lag = W[:, 1]

    # data moments; quad(b, a) = |Y - b - a lag|^2 + (b^2 + a^2)/tau2 + u0
    syy = float(Y @ Y) + u0
    sy = float(Y.sum())
    sy_lag = float(Y @ lag)
    s_lag = float(lag.sum())
    sum_lag2 = float(lag @ lag) + 1.0 / tau2
    n_plus = n_i + 1.0 / tau2

    # all terms carrying log(s2) collapse to a single -s_coeff * s after the
    # substitution s2 = exp(s) (Jacobian included)
    s_coeff = 0.5 * (n_i + v0) + 1.0
    kshift = n_i + v0 + 2.0
    const = -0.5 * n_i * _LOG_2PI - _LOG_2PI - math.log(tau2)

    def slope_center(b: float) -> float:
        return (sy_lag - b * s_lag) / sum_lag2

    def quad_min_at(b: float) -> float:
        c0 = syy - 2.0 * b * sy + n_plus * b * b
        return c0 - sum_lag2 * slope_center(b) ** 2

    k_b = n_plus - s_lag * s_lag / sum_lag2
    b_star = (sy - sy_lag * s_lag / sum_lag2) / k_b
    q_star = max(quad_min_at(b_star), 1e-300)
    w_b = math.sqrt(q_star / k_b)

    # fixed log-scale at the global ridge so values stay O(1)
    log_scale = const - s_coeff * math.log(q_star / kshift) - 0.5 * kshift

    window = 15.0

    def direction_pieces(center: float, width: float, rule_center, rule_tail):
        """Node/weight pieces for one coordinate: ridge window + log tails."""
        reach = max(theta_box, 3e6 * width)
        half = window * width
        nodes_c = center + half * rule_center[0]
        weights_c = half * rule_center[1]
        pieces = [(nodes_c, weights_c)]
        t_max = math.log(reach / half)
        if t_max > 0:
            t = 0.5 * t_max * (rule_tail[0] + 1.0)
            w_t = 0.5 * t_max * rule_tail[1]
            for sign in (1.0, -1.0):
                nodes = center + sign * half * np.exp(t)
                weights = w_t * half * np.exp(t)
                pieces.append((nodes, weights))
        return pieces

    def plane_for_b(b: float, rule_center, rule_tail, shift_s, weight_s) -> float:
        """Scaled integral over (slope, log variance) at a fixed intercept."""
        qm = max(quad_min_at(b), 1e-300)
        wa = math.sqrt(qm / sum_lag2)
        ac = slope_center(b)
        total = 0.0
        lin = sy_lag - b * s_lag
        c0 = syy - 2.0 * b * sy + n_plus * b * b
        for nodes_a, weights_a in direction_pieces(ac, wa, rule_center, rule_tail):
            quad = c0 - 2.0 * lin * nodes_a + sum_lag2 * nodes_a**2
            q_lo = float(quad.min())
            q_hi = float(quad.max())
            s_lo = math.log(q_lo / kshift) - 30.0
            s_hi = math.log(q_hi / kshift) + 25.0
            s = 0.5 * (s_hi - s_lo) * shift_s + 0.5 * (s_hi + s_lo)
            w_s = 0.5 * (s_hi - s_lo) * weight_s
            expo = (
                const
                - s_coeff * s[None, :]
                - quad[:, None] * (0.5 * np.exp(-s[None, :]))
                - log_scale
            )
            np.clip(expo, -745.0, 60.0, out=expo)
            total += float(weights_a @ np.exp(expo) @ w_s)
        return total

    def run(k: int) -> float:
        rule_center = np.polynomial.legendre.leggauss(k * n_center)
        rule_tail = np.polynomial.legendre.leggauss(k * n_tail)
        shift_s, weight_s = np.polynomial.legendre.leggauss(k * n_var)
        total = 0.0
        for nodes_b, weights_b in direction_pieces(b_star, w_b, rule_center, rule_tail):
            for b, w in zip(nodes_b, weights_b):
                total += w * plane_for_b(float(b), rule_center, rule_tail, shift_s, weight_s)
        return total

    coarse = run(1)
    for k in (2, 4):
        fine = run(k)
        if not (fine > 0.0) or not math.isfinite(fine):
            raise OracleFailureError("quadrature returned a non-positive value")
        if abs(fine - coarse) <= 50.0 * epsrel * abs(fine):
            return math.log(fine) + log_scale
        coarse = fine
    raise OracleFailureError(
        f"grid doubling still moved the value by {abs(fine - coarse) / abs(fine):.3e} relative"
    )


def mixture_numeric_oracle(
    traj: Trajectory,
    prior: PriorConfig,
    epsrel: float = 1e-7,
    theta_box: float = 2000.0,
) -> float:
    """Adaptive-quadrature value of the coefficient/variance mixture.

    Independent check of :func:`conditional_mixture_log`: integrates the
    Gaussian likelihood times the coefficient prior times the bare
    inverse-gamma kernel numerically, state by state.  Requires positive
    ``u0`` and ``v0`` (the proper-prior regularization) and is guarded to
    small instances.  Raises :class:`OracleFailureError` instead of returning
    an unconverged value.
    """
    if traj.x is None:
        raise ValueError("trajectory has no hidden path")
    m = int(traj.x.max()) + 1
    if traj.n > 6 or m > 2:
        raise ValueError("oracle guard: quadrature is limited to n <= 6 and m <= 2")
    if not (prior.u0 > 0 and prior.v0 > 0):
        raise ValueError("the numeric oracle needs u0 > 0 and v0 > 0")
    stats = segment_stats(traj, m)
    total = 0.0
    for i in range(m):
        if stats.counts[i] == 0:
            continue
        total += _oracle_segment_integral(
            stats.design[i], stats.response[i], prior, epsrel, theta_box
        )
    return total


def mixture_bruteforce_log(traj: Trajectory, m: int, prior: PriorConfig = PriorConfig()) -> float:
    """Log of the full mixture statistic by explicit path enumeration.

    Log-sum-exp over all paths of conditional mixture plus path mixture.
    """
    n = traj.n
    paths = enumerate_paths(m, n)
    values = np.empty(paths.shape[0])
    for p, path in enumerate(paths):
        labeled = Trajectory(traj.y0, traj.y, path.copy())
        values[p] = conditional_mixture_log(labeled, prior) + kt_path_mixture_log(path, m)
    mx = float(np.max(values))
    if not math.isfinite(mx):
        return -math.inf
    return mx + math.log(float(np.sum(np.exp(values - mx))))


def build_projection_set(stats, tau2: float) -> ProjectionSet:
    """Explicit M, P, B matrices for every state with a non-empty design."""
    ridge_inv = []
    ridge_proj = []
    ls_proj = []
    for i in range(stats.m):
        W = stats.design[i]
        n_i = W.shape[0]
        gram = W.T @ W
        M = np.linalg.inv(gram + np.eye(2) / tau2)
        ridge_inv.append(M)
        ridge_proj.append(np.eye(n_i) - W @ M @ W.T)
        if n_i >= 2 and np.linalg.cond(gram) < _COND_LIMIT:
            ls_proj.append(np.eye(n_i) - W @ np.linalg.solve(gram, W.T))
        else:
            ls_proj.append(np.full((n_i, n_i), np.nan))
    return ProjectionSet(tuple(ridge_inv), tuple(ridge_proj), tuple(ls_proj))


def c_term(n: int, m: int) -> float:
    """Transition-mixture constant: max(0, log m - m (log G(m/2) - log G(1/2)
    - m(m-1)/(4n) + 1/(12n)))."""
    inner = float(gammaln(m / 2.0) - gammaln(0.5)) - m * (m - 1) / (4.0 * n) + 1.0 / (12.0 * n)
    return max(0.0, math.log(m) - m * inner)


def d_term(n: int) -> float:
    """Stirling envelope for the per-segment constants: n/2 + log(n/2)/2."""
    return n / 2.0 + 0.5 * math.log(n / 2.0)


def e_term(n: int, m: int, tau2: float, lambda_sigma) -> float:
    """Prior-volume term: max(0, (m/2) log(1/n^2 + tau^4/m * sum (lam_i sd_i)^2)
    - (m/2) log(2 pi))."""
    ls = np.asarray(lambda_sigma, dtype=np.float64)
    if ls.shape != (m,):
        raise ValueError(f"lambda_sigma must have shape ({m},)")
    inner = 1.0 / (n * n) + (tau2 * tau2 / m) * float(np.sum(ls * ls))
    return max(0.0, 0.5 * m * math.log(inner) - 0.5 * m * _LOG_2PI)


def bound_terms(
    n: int,
    m: int,
    prior: PriorConfig,
    lambda_sigma,
    ratio_max: float,
) -> BoundTerms:
    """Assemble the envelope's right-hand side for given n, m, and ratio.

    ``lambda_sigma`` holds the per-state products of stationary weight and
    noise standard deviation.  Valid for ``n >= 4``; the ratio must be at
    least one (the ridge quadratic dominates the least-squares one).
    """
    if n < 4:
        raise ValueError("the envelope is stated for n >= 4")
    if not ratio_max >= 1.0:
        raise ValueError("ratio_max must be >= 1")
    return BoundTerms(
        leading=m * (m + 1) / 2.0 * math.log(n),
        c_term=c_term(n, m),
        d_term=d_term(n),
        e_term=e_term(n, m, prior.tau2, lambda_sigma),
        ratio_term=0.5 * n * m * math.log(ratio_max),
    )


def _path_ratio(traj: Trajectory, path: NDArray[np.int64], m: int, tau2: float) -> float | None:
    """Max over states of Y'PY / Y'BY for one path, or None when degenerate.

    States visited fewer than three times leave the least-squares projection
    rank degenerate, so such paths are excluded from the ratio scan.
    """
    lag = traj.lagged
    best = 1.0
    for i in range(m):
        idx = np.nonzero(path == i)[0]
        n_i = idx.size
        if n_i == 0:
            continue
        if n_i < _MIN_SEGMENT_FOR_RATIO:
            return None
        W = np.column_stack((np.ones(n_i), lag[idx]))
        Y = traj.y[idx]
        gram = W.T @ W
        if np.linalg.cond(gram) > _COND_LIMIT:
            return None
        wty = W.T @ Y
        yby = float(Y @ Y - wty @ np.linalg.solve(gram, wty))
        if yby <= 0:
            return None
        ridge = gram + np.eye(2) / tau2
        ypy = float(Y @ Y - wty @ np.linalg.solve(ridge, wty))
        best = max(best, ypy / yby)
    return best


def verify_bound(spec: ModelSpec, traj: Trajectory, prior: PriorConfig = PriorConfig()) -> BoundCheck:
    """Check the likelihood-vs-mixture envelope on one instance.

    The left side is the exact forward log-likelihood minus the brute-force
    log mixture.  The ratio term takes the maximum over all paths whose
    segments support a full-rank least-squares projection; degenerate paths
    are excluded with a logged warning.  The lambda-sigma inputs come from
    the model's stationary distribution and true variances.
    """
    m, n = spec.m, traj.n
    if n < 4:
        raise ValueError("the envelope is stated for n >= 4")
    lhs_loglik = loglik_forward(spec, traj)
    mixture_log = mixture_bruteforce_log(traj, m, prior)
    paths = enumerate_paths(m, n)
    ratio_max = 1.0
    excluded = 0
    found = False
    for path in paths:
        r = _path_ratio(traj, path, m, prior.tau2)
        if r is None:
            excluded += 1
            continue
        found = True
        ratio_max = max(ratio_max, r)
    if not found:
        raise NumericalError("every path has a degenerate least-squares quadratic form")
    if excluded:
        logger.warning(
            "ratio scan excluded %d of %d paths with degenerate segments", excluded, len(paths)
        )
    lambda_sigma = spec.stationary * np.sqrt(spec.variances)
    terms = bound_terms(n, m, prior, lambda_sigma, ratio_max)
    return BoundCheck(
        loglik=lhs_loglik,
        mixture_log=mixture_log,
        lhs=lhs_loglik - mixture_log,
        terms=terms,
        ratio_max=ratio_max,
        n_paths=len(paths),
        n_paths_excluded=excluded,
    )


def empirical_transition_matrix(x, m: int) -> NDArray[np.float64]:
    """Transition frequencies of a path (rows with no exits are uniform)."""
    x = as_path(x)
    check_states_in_range(x, m)
    counts = _transition_counts(x, m).astype(np.float64)
    totals = counts.sum(axis=1, keepdims=True)
    out = np.full((m, m), 1.0 / m)
    mask = totals[:, 0] > 0
    out[mask] = counts[mask] / totals[mask]
    return out


def kt_bound_check(x, m: int, transition_mle: NDArray[np.float64] | None = None) -> float:
    """Slack of the transition-mixture inequality for one path.

    With A the empirical transition-frequency matrix (the maximizer of the
    transition product), checks

        log p_A(x) - log q(x) <= (m(m-1)/2) log n + c_m(n)

    and returns the slack.  ``p_A`` is the pure transition product; the
    uniform initial-state factor inside q makes the comparison conservative
    up to convention, absorbed by the caller's tolerance.
    """
    x = as_path(x)
    if x.size == 0:
        raise ValueError("path must be non-empty")
    check_states_in_range(x, m)
    n = x.size
    A = empirical_transition_matrix(x, m) if transition_mle is None else np.asarray(transition_mle)
    counts = _transition_counts(x, m)
    mask = counts > 0
    if np.any(A[mask] <= 0):
        raise ValueError("transition_mle assigns probability zero to an observed transition")
    log_p = float(np.sum(counts[mask] * np.log(A[mask])))
    lhs = log_p - kt_path_mixture_log(x, m)
    rhs = m * (m - 1) / 2.0 * math.log(n) + c_term(n, m)
    return rhs - lhs
