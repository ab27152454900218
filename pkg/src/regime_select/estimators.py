"""Scikit-learn style estimators wrapping the functional core.

Both estimators accept a one-dimensional series whose first element is the
conditioning value ``y[0]`` and whose remaining elements are modeled.  They
follow the usual conventions (``get_params``/``set_params``, trailing
underscore attributes after ``fit``) so they compose with model-selection
utilities from the wider ecosystem.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_series
from .estimation import EmConfig, e_step, multistart_fit
from .model import ModelSpec, ParameterBounds, Trajectory, simulate
from .selection import PenaltyConfig, select_order

__all__ = ["MarkovSwitchingAR", "StateCountSelector"]


def _series_to_trajectory(y) -> Trajectory:
    arr = as_series(y)
    if arr.size < 2:
        raise ValueError("the series needs at least two values (y0 plus one observation)")
    return Trajectory(y0=float(arr[0]), y=arr[1:])


class MarkovSwitchingAR(BaseEstimator):
    """Gaussian AR(1) with a hidden Markov regime, fitted by EM.

    Parameters
    ----------
    n_states : int
        Number of hidden states.
    tol, max_iter, n_restarts : float, int, int
        EM stopping tolerance (relative log-likelihood change), iteration
        cap, and number of seeded restarts.
    variance_floor, variance_max : float
        Admissible noise-variance interval.
    transition_floor : float
        Lower bound applied to transition probabilities.
    intercept_max, slope_max : float
        Half-widths of the coefficient box.
    random_state : int
        Base seed; fitting is deterministic given the series and parameters.

    Attributes
    ----------
    model_ : ModelSpec
        Fitted parameter set.
    intercepts_, slopes_, variances_ : ndarray of shape (n_states,)
    transition_ : ndarray of shape (n_states, n_states)
    stationary_ : ndarray of shape (n_states,)
    loglik_ : float
        Log-likelihood at the fitted parameters.
    n_iter_ : int
    converged_ : bool
    trace_ : ndarray
        Log-likelihood after each accepted EM step (non-decreasing).
    """

    def __init__(
        self,
        n_states: int = 2,
        *,
        tol: float = 1e-7,
        max_iter: int = 500,
        n_restarts: int = 10,
        variance_floor: float = 1e-4,
        variance_max: float = 1e4,
        transition_floor: float = 1e-6,
        intercept_max: float = 100.0,
        slope_max: float = 10.0,
        random_state: int = 0,
    ):
        self.n_states = n_states
        self.tol = tol
        self.max_iter = max_iter
        self.n_restarts = n_restarts
        self.variance_floor = variance_floor
        self.variance_max = variance_max
        self.transition_floor = transition_floor
        self.intercept_max = intercept_max
        self.slope_max = slope_max
        self.random_state = random_state

    def _em_config(self) -> EmConfig:
        bounds = ParameterBounds(
            c=self.variance_floor,
            d=self.variance_max,
            b_max=self.intercept_max,
            alpha_max=self.slope_max,
        )
        return EmConfig(
            tolerance=self.tol,
            max_iterations=self.max_iter,
            restarts=self.n_restarts,
            variance_floor=self.variance_floor,
            transition_floor=self.transition_floor,
            bounds=bounds,
        )

    def fit(self, y, X=None):
        """Fit by multistart EM.  ``y[0]`` conditions, ``y[1:]`` is modeled."""
        traj = _series_to_trajectory(y)
        result = multistart_fit(traj, self.n_states, self._em_config(), seed=self.random_state)
        self.model_ = result.spec
        self.intercepts_ = result.spec.intercepts
        self.slopes_ = result.spec.slopes
        self.variances_ = result.spec.variances
        self.transition_ = result.spec.transition
        self.stationary_ = result.spec.stationary
        self.loglik_ = result.loglik
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        self.trace_ = result.trace
        return self

    def predict_proba(self, y) -> np.ndarray:
        """Smoothed state probabilities for each modeled time step."""
        check_is_fitted(self, "model_")
        traj = _series_to_trajectory(y)
        return e_step(self.model_, traj).gamma

    def predict(self, y) -> np.ndarray:
        """Most probable state (argmax of the smoothed posterior) per step."""
        return np.argmax(self.predict_proba(y), axis=1)

    def score(self, y, X=None) -> float:
        """Average log-likelihood per modeled observation."""
        check_is_fitted(self, "model_")
        traj = _series_to_trajectory(y)
        from .likelihood import loglik_forward

        return loglik_forward(self.model_, traj) / traj.n

    def sample(self, n_samples: int, y0: float = 0.0, random_state: int = 0):
        """Simulate from the fitted model; returns (series, states).

        The series has length ``n_samples + 1`` with ``y0`` first, matching
        the layout that :meth:`fit` accepts.
        """
        check_is_fitted(self, "model_")
        traj = simulate(self.model_, n_samples, y0=y0, seed=random_state)
        return np.concatenate(([traj.y0], traj.y)), traj.x


class StateCountSelector(BaseEstimator):
    """Penalized maximum-likelihood choice of the number of hidden states.

    Parameters mirror :class:`MarkovSwitchingAR` for the per-order EM fits,
    plus the penalty knobs ``rho`` (> 2), ``phi`` ("sqrt", "log", or
    "constant"), ``tau2``, and the lambda-sigma policy.

    Attributes
    ----------
    n_states_ : int
        Selected order.
    result_ : SelectionResult
        Full criterion table with per-order fits.
    model_ : ModelSpec
        Fitted model at the selected order.
    """

    def __init__(
        self,
        m_max: int | str = "auto",
        *,
        rho: float = 3.0,
        phi: str = "log",
        phi_constant: float = 1.0,
        tau2: float = 1.0,
        lambda_sigma_policy: str = "uniform-upper",
        sigma2_upper: float = 1e4,
        tol: float = 1e-7,
        max_iter: int = 500,
        n_restarts: int = 10,
        variance_floor: float = 1e-4,
        variance_max: float = 1e4,
        transition_floor: float = 1e-6,
        intercept_max: float = 100.0,
        slope_max: float = 10.0,
        random_state: int = 0,
    ):
        self.m_max = m_max
        self.rho = rho
        self.phi = phi
        self.phi_constant = phi_constant
        self.tau2 = tau2
        self.lambda_sigma_policy = lambda_sigma_policy
        self.sigma2_upper = sigma2_upper
        self.tol = tol
        self.max_iter = max_iter
        self.n_restarts = n_restarts
        self.variance_floor = variance_floor
        self.variance_max = variance_max
        self.transition_floor = transition_floor
        self.intercept_max = intercept_max
        self.slope_max = slope_max
        self.random_state = random_state

    def fit(self, y, X=None):
        traj = _series_to_trajectory(y)
        em_config = MarkovSwitchingAR(
            tol=self.tol,
            max_iter=self.max_iter,
            n_restarts=self.n_restarts,
            variance_floor=self.variance_floor,
            variance_max=self.variance_max,
            transition_floor=self.transition_floor,
            intercept_max=self.intercept_max,
            slope_max=self.slope_max,
        )._em_config()
        pen_config = PenaltyConfig(
            rho=self.rho,
            phi_shape=self.phi,
            phi_constant=self.phi_constant,
            tau2=self.tau2,
            lambda_sigma_policy=self.lambda_sigma_policy,
            sigma2_upper=self.sigma2_upper,
        )
        result = select_order(
            traj, m_max=self.m_max, em_config=em_config, pen_config=pen_config,
            seed=self.random_state,
        )
        self.result_ = result
        self.n_states_ = result.m_hat
        self.model_ = result.row(result.m_hat).fit.spec
        self.criterion_table_ = [
            {"m": r.m, "loglik": r.loglik, "penalty": r.penalty, "criterion": r.criterion}
            for r in result.rows
        ]
        return self

    def predict(self, y=None) -> int:
        """The selected number of states."""
        check_is_fitted(self, "n_states_")
        return self.n_states_
