"""Compiled inner loops (simulation, log-space forward, scaled smoothing).

All kernels are pure functions of their inputs; randomness is drawn outside
and passed in as arrays so that results are reproducible bit for bit.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def simulate_states(transition, stationary, uniforms):
    n = uniforms.shape[0]
    m = transition.shape[0]
    states = np.empty(n, dtype=np.int64)
    # initial state from the stationary law
    u = uniforms[0]
    acc = 0.0
    s = m - 1
    for i in range(m):
        acc += stationary[i]
        if u < acc:
            s = i
            break
    states[0] = s
    for k in range(1, n):
        u = uniforms[k]
        acc = 0.0
        nxt = m - 1
        for j in range(m):
            acc += transition[s, j]
            if u < acc:
                nxt = j
                break
        s = nxt
        states[k] = s
    return states


@njit(cache=True, nogil=True)
def simulate_series(states, intercept, slope, sigma, noise, y0):
    n = states.shape[0]
    y = np.empty(n, dtype=np.float64)
    prev = y0
    for k in range(n):
        i = states[k]
        prev = slope[i] * prev + intercept[i] + sigma[i] * noise[k]
        y[k] = prev
    return y


@njit(cache=True, nogil=True)
def forward_logspace(logdens, log_transition, log_initial):
    """Log-likelihood of the observations, marginalized over hidden paths.

    Every step is a log-sum-exp, so the result is finite whenever at least
    one path has positive density.
    """
    n, m = logdens.shape
    prev = np.empty(m, dtype=np.float64)
    cur = np.empty(m, dtype=np.float64)
    for i in range(m):
        prev[i] = log_initial[i] + logdens[0, i]
    for k in range(1, n):
        for j in range(m):
            mx = -np.inf
            for i in range(m):
                v = prev[i] + log_transition[i, j]
                if v > mx:
                    mx = v
            if mx == -np.inf:
                cur[j] = -np.inf
            else:
                s = 0.0
                for i in range(m):
                    v = prev[i] + log_transition[i, j]
                    if v > -np.inf:
                        s += np.exp(v - mx)
                cur[j] = mx + np.log(s) + logdens[k, j]
        tmp = prev
        prev = cur
        cur = tmp
    mx = -np.inf
    for i in range(m):
        if prev[i] > mx:
            mx = prev[i]
    if mx == -np.inf:
        return -np.inf
    s = 0.0
    for i in range(m):
        if prev[i] > -np.inf:
            s += np.exp(prev[i] - mx)
    return mx + np.log(s)


@njit(cache=True, nogil=True)
def forward_backward_scaled(logdens, transition, initial):
    """Smoothed state and pair posteriors via the scaled two-pass recursion.

    Emissions are shifted by their per-step maximum before exponentiation and
    the filtered vector is renormalized at every step, which prevents
    underflow for long series.  Returns (gamma, xi, ok); ok is False when a
    step has all-zero scaled weights.
    """
    n, m = logdens.shape
    dens = np.empty((n, m), dtype=np.float64)
    for k in range(n):
        mx = -np.inf
        for i in range(m):
            if logdens[k, i] > mx:
                mx = logdens[k, i]
        for i in range(m):
            dens[k, i] = np.exp(logdens[k, i] - mx)

    alpha = np.empty((n, m), dtype=np.float64)
    c = np.empty(n, dtype=np.float64)
    tot = 0.0
    for i in range(m):
        alpha[0, i] = initial[i] * dens[0, i]
        tot += alpha[0, i]
    c[0] = tot
    gamma = np.zeros((n, m), dtype=np.float64)
    xi = np.zeros((max(n - 1, 0), m, m), dtype=np.float64)
    if tot <= 0.0 or not np.isfinite(tot):
        return gamma, xi, False
    for i in range(m):
        alpha[0, i] /= tot
    for k in range(1, n):
        tot = 0.0
        for j in range(m):
            acc = 0.0
            for i in range(m):
                acc += alpha[k - 1, i] * transition[i, j]
            val = acc * dens[k, j]
            alpha[k, j] = val
            tot += val
        c[k] = tot
        if tot <= 0.0 or not np.isfinite(tot):
            return gamma, xi, False
        for j in range(m):
            alpha[k, j] /= tot

    beta = np.empty((n, m), dtype=np.float64)
    for i in range(m):
        beta[n - 1, i] = 1.0
    for k in range(n - 2, -1, -1):
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += transition[i, j] * dens[k + 1, j] * beta[k + 1, j]
            beta[k, i] = acc / c[k + 1]

    for k in range(n):
        tot = 0.0
        for i in range(m):
            val = alpha[k, i] * beta[k, i]
            gamma[k, i] = val
            tot += val
        for i in range(m):
            gamma[k, i] /= tot

    for k in range(n - 1):
        tot = 0.0
        for i in range(m):
            for j in range(m):
                val = alpha[k, i] * transition[i, j] * dens[k + 1, j] * beta[k + 1, j] / c[k + 1]
                xi[k, i, j] = val
                tot += val
        for i in range(m):
            for j in range(m):
                xi[k, i, j] /= tot

    return gamma, xi, True
