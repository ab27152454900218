"""Gaussian AR(1) with a hidden Markov regime: model family and simulation.

The observed series follows

    y_k = slope[x_k] * y_{k-1} + intercept[x_k] + sd[x_k] * e_k,

where ``x`` is a homogeneous Markov chain on ``{0, ..., m-1}`` with row
stochastic transition matrix ``A`` and ``e_k`` are i.i.d. standard normal,
independent of the chain and of ``y_0``.  A specification is admissible when

* every row of ``A`` sums to one and the chain is irreducible and aperiodic,
* each noise variance lies in a configurable interval ``[c, d]`` with c > 0,
* each coefficient pair lies in a configurable compact box,
* the chain-averaged log absolute slope is negative (stability).

The stability condition is evaluated with ``log |slope|`` so that signed
coefficients are admissible; a zero slope counts as maximally contracting.
The hidden chain is started from its stationary distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import _kernels
from ._validation import as_path, as_series, generator
from .errors import ModelValidationError, NoStationaryDistributionError

__all__ = [
    "RegimeParams",
    "ParameterBounds",
    "ModelSpec",
    "Trajectory",
    "Violation",
    "validate_model",
    "stationary_distribution",
    "stability_index",
    "simulate",
    "is_irreducible",
    "chain_period",
    "permute_spec",
]

_ROW_SUM_TOL = 1e-12
_FIXED_POINT_TOL = 1e-10


@dataclass(frozen=True)
class RegimeParams:
    """Per-regime coefficients: intercept, AR slope, and noise variance."""

    b: float
    alpha: float
    sigma2: float

    def __post_init__(self):
        for name in ("b", "alpha", "sigma2"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ModelValidationError(f"regime parameter {name} must be finite")


@dataclass(frozen=True)
class ParameterBounds:
    """Admissible region for regime parameters.

    ``c`` and ``d`` bound the noise variances, ``b_max`` and ``alpha_max``
    bound the absolute intercept and slope.
    """

    c: float = 1e-4
    d: float = 1e4
    b_max: float = 100.0
    alpha_max: float = 10.0

    def __post_init__(self):
        if not (0.0 < self.c <= self.d):
            raise ValueError("variance bounds must satisfy 0 < c <= d")
        if self.b_max <= 0 or self.alpha_max <= 0:
            raise ValueError("parameter box half-widths must be positive")


@dataclass(frozen=True)
class Violation:
    """A named validation failure with a human-readable message."""

    name: str
    message: str


@dataclass(eq=False)
class ModelSpec:
    """Full parameter set: regimes plus transition matrix.

    Construction checks structure only (matching dimensions, finite entries);
    semantic admissibility is the job of :func:`validate_model`.
    """

    regimes: tuple[RegimeParams, ...]
    transition: NDArray[np.float64]

    def __init__(self, regimes: Sequence[RegimeParams], transition) -> None:
        self.regimes = tuple(regimes)
        if not self.regimes:
            raise ModelValidationError("a model needs at least one regime")
        A = np.asarray(transition, dtype=np.float64)
        m = len(self.regimes)
        if A.shape != (m, m):
            raise ModelValidationError(
                f"transition matrix shape {A.shape} does not match {m} regimes"
            )
        if not np.all(np.isfinite(A)):
            raise ModelValidationError("transition matrix has non-finite entries")
        self.transition = A

    @property
    def m(self) -> int:
        return len(self.regimes)

    @cached_property
    def intercepts(self) -> NDArray[np.float64]:
        return np.array([r.b for r in self.regimes])

    @cached_property
    def slopes(self) -> NDArray[np.float64]:
        return np.array([r.alpha for r in self.regimes])

    @cached_property
    def variances(self) -> NDArray[np.float64]:
        return np.array([r.sigma2 for r in self.regimes])

    @cached_property
    def stationary(self) -> NDArray[np.float64]:
        """Stationary distribution of the hidden chain (cached)."""
        return stationary_distribution(self.transition)

    def with_transition(self, transition) -> "ModelSpec":
        return ModelSpec(self.regimes, transition)


@dataclass(eq=False)
class Trajectory:
    """Observed series ``y_1..y_n`` with its conditioning value ``y0``.

    ``x`` optionally stores the hidden path as 0-based state indices.
    """

    y0: float
    y: NDArray[np.float64]
    x: NDArray[np.int64] | None = None

    def __post_init__(self):
        if not math.isfinite(self.y0):
            raise ValueError("y0 must be finite")
        self.y = as_series(self.y, "y")
        if self.y.size < 1:
            raise ValueError("a trajectory needs at least one observation")
        if self.x is not None:
            self.x = as_path(self.x, "x")
            if self.x.shape != self.y.shape:
                raise ValueError("hidden path length must match the series length")

    @property
    def n(self) -> int:
        return int(self.y.size)

    @cached_property
    def lagged(self) -> NDArray[np.float64]:
        """Regressor vector (y0, y_1, ..., y_{n-1})."""
        return np.concatenate(([self.y0], self.y[:-1]))


def is_irreducible(transition: NDArray[np.float64]) -> bool:
    """True when the directed graph of positive entries is strongly connected."""
    A = np.asarray(transition, dtype=np.float64)
    graph = csr_matrix((A > 0).astype(np.int8))
    n_components, _ = connected_components(graph, directed=True, connection="strong")
    return n_components == 1


def chain_period(transition: NDArray[np.float64]) -> int:
    """Period of an irreducible chain (gcd of cycle lengths through state 0).

    Uses BFS levels from state 0: the period is the gcd over all edges
    (u, v) of ``level[u] + 1 - level[v]``.
    """
    A = np.asarray(transition, dtype=np.float64)
    m = A.shape[0]
    level = np.full(m, -1, dtype=np.int64)
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.nonzero(A[u] > 0)[0]:
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(int(v))
        frontier = nxt
    g = 0
    for u in range(m):
        for v in np.nonzero(A[u] > 0)[0]:
            g = math.gcd(g, int(level[u] + 1 - level[v]))
    return g if g > 0 else 1


def stationary_distribution(transition) -> NDArray[np.float64]:
    """Solve ``lam @ A = lam`` with ``sum(lam) = 1`` by a direct linear solve.

    Raises :class:`NoStationaryDistributionError` when the chain is reducible
    or periodic, or when the fixed-point residual exceeds 1e-10.
    """
    A = np.asarray(transition, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ModelValidationError("transition matrix must be square")
    if not np.all(np.isfinite(A)) or np.any(A < 0):
        raise ModelValidationError("transition matrix entries must be finite and non-negative")
    if np.max(np.abs(A.sum(axis=1) - 1.0)) > _ROW_SUM_TOL:
        raise ModelValidationError("transition matrix rows must sum to one")
    m = A.shape[0]
    if not is_irreducible(A):
        raise NoStationaryDistributionError("transition matrix is reducible")
    if chain_period(A) != 1:
        raise NoStationaryDistributionError(
            f"transition matrix is periodic (period {chain_period(A)})"
        )
    K = A.T - np.eye(m)
    K[-1, :] = 1.0
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    lam = np.linalg.solve(K, rhs)
    if np.any(lam <= 0) or np.max(np.abs(lam @ A - lam)) > _FIXED_POINT_TOL:
        raise NoStationaryDistributionError("stationary solve failed the fixed-point check")
    return lam


def stability_index(spec: ModelSpec) -> float:
    """Chain-averaged log absolute slope, negative iff the model is stable.

    A zero slope in a visited regime returns ``-inf`` (that regime forgets
    the past entirely, which is maximally contracting).
    """
    lam = spec.stationary
    slopes = spec.slopes
    if np.any((slopes == 0.0) & (lam > 0)):
        return -math.inf
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(slopes))
    return float(np.dot(lam, logs))


def validate_model(spec: ModelSpec, bounds: ParameterBounds | None = None) -> list[Violation]:
    """Check a specification against the admissibility conditions.

    Returns an empty list iff row stochasticity, irreducibility and
    aperiodicity, variance bounds, the parameter box, and the stability index
    all hold.  Structural problems (dimension mismatches) raise at
    :class:`ModelSpec` construction instead.
    """
    bounds = bounds or ParameterBounds()
    A = spec.transition
    report: list[Violation] = []

    row_ok = True
    if np.any(A < 0):
        report.append(Violation("row_stochastic", "transition matrix has negative entries"))
        row_ok = False
    bad = np.abs(A.sum(axis=1) - 1.0) > _ROW_SUM_TOL
    if np.any(bad):
        rows = ", ".join(str(i) for i in np.nonzero(bad)[0])
        report.append(Violation("row_stochastic", f"rows {rows} do not sum to one"))
        row_ok = False

    chain_ok = False
    if row_ok:
        if not is_irreducible(A):
            report.append(Violation("irreducibility", "chain is reducible"))
        elif chain_period(A) != 1:
            report.append(
                Violation("aperiodicity", f"chain is periodic (period {chain_period(A)})")
            )
        else:
            chain_ok = True

    for i, r in enumerate(spec.regimes):
        if not (bounds.c <= r.sigma2 <= bounds.d):
            report.append(
                Violation(
                    "variance_bounds",
                    f"sigma2[{i}]={r.sigma2!r} outside [{bounds.c}, {bounds.d}]",
                )
            )
        if abs(r.b) > bounds.b_max or abs(r.alpha) > bounds.alpha_max:
            report.append(
                Violation("parameter_box", f"regime {i} coefficients outside the box")
            )

    if chain_ok:
        index = stability_index(spec)
        if not index < 0:
            report.append(
                Violation("stability", f"average log absolute slope is {index:.6g}, not < 0")
            )
    return report


def simulate(spec: ModelSpec, n: int, y0: float = 0.0, seed: int = 0) -> Trajectory:
    """Draw a trajectory of length ``n`` together with its hidden path.

    The initial state is drawn from the stationary distribution and the same
    ``(spec, n, y0, seed)`` always yields bit-identical output.  The state
    uniforms and the Gaussian innovations are drawn as two consecutive blocks
    from one PCG64 stream.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    report = validate_model(spec)
    if report:
        raise ModelValidationError(
            "cannot simulate from an invalid model: "
            + "; ".join(f"{v.name}: {v.message}" for v in report),
            violations=report,
        )
    rng = generator(seed)
    uniforms = rng.random(n)
    noise = rng.standard_normal(n)
    states = _kernels.simulate_states(spec.transition, spec.stationary, uniforms)
    y = _kernels.simulate_series(
        states, spec.intercepts, spec.slopes, np.sqrt(spec.variances), noise, float(y0)
    )
    return Trajectory(y0=float(y0), y=y, x=states)


def permute_spec(spec: ModelSpec, perm: Sequence[int]) -> ModelSpec:
    """Relabel the states by ``perm`` (new state p[i] behaves like old state i)."""
    perm = np.asarray(perm, dtype=np.int64)
    m = spec.m
    if sorted(perm.tolist()) != list(range(m)):
        raise ValueError("perm must be a permutation of 0..m-1")
    inv = np.empty(m, dtype=np.int64)
    inv[perm] = np.arange(m)
    regimes = tuple(spec.regimes[inv[j]] for j in range(m))
    A = spec.transition[np.ix_(inv, inv)]
    return ModelSpec(regimes, A)
