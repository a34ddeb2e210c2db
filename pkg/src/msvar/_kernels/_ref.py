"""Pure-NumPy reference kernels for the sequential regime recursions.

These mirror the compiled Cython kernels in ``_core.pyx`` one to one and are
used when the extension is unavailable (or disabled via MSVAR_DISABLE_EXT=1).
The loops run per time step and are the hot path of every estimator, which is
why a compiled twin exists; semantics here are the contract.
"""

from __future__ import annotations

import numpy as np

UNDERFLOW_FLOOR = 1e-300


def filter_forward(log_dens, trans, init):
    """Hamilton forward filter in scaled linear space.

    Parameters
    ----------
    log_dens : (T, M) array of per-regime conditional log densities
    trans : (M, M) row-stochastic transition matrix, rows = from-state
    init : (M,) initial regime distribution used at the first step

    Returns
    -------
    predicted : (T, M) one-step-ahead probabilities, row t is xi_{t|t-1}
    filtered : (T, M) xi_{t|t}
    loglik : float, accumulated log normalizers
    fail_t : int, -1 on success, else first step whose total mass underflowed
    """
    T, M = log_dens.shape
    predicted = np.empty((T, M))
    filtered = np.empty((T, M))
    predicted[0] = init
    loglik = 0.0
    for t in range(T):
        m_t = np.max(log_dens[t])
        eta = np.exp(log_dens[t] - m_t)
        c = float(np.dot(predicted[t], eta))
        if not c > UNDERFLOW_FLOOR:
            return predicted, filtered, loglik, t
        filtered[t] = predicted[t] * eta / c
        loglik += np.log(c) + m_t
        if t + 1 < T:
            predicted[t + 1] = trans.T @ filtered[t]
    return predicted, filtered, float(loglik), -1


def smooth_backward(predicted, filtered, trans):
    """Backward smoother on forward-filter output.

    Recursion: smoothed[t, i] = filtered[t, i] * sum_j trans[i, j] *
    smoothed[t+1, j] / predicted[t+1, j], anchored at smoothed[T-1] =
    filtered[T-1]. Also returns the pairwise joints Pr(s_t=i, s_{t+1}=j | Y).

    Returns (smoothed, pairwise, n_floored) where n_floored counts predicted
    entries clamped to the underflow floor.
    """
    T, M = filtered.shape
    smoothed = np.empty((T, M))
    pairwise = np.empty((max(T - 1, 0), M, M))
    smoothed[T - 1] = filtered[T - 1]
    n_floored = 0
    for t in range(T - 2, -1, -1):
        pred_next = predicted[t + 1]
        n_floored += int(np.sum(pred_next < UNDERFLOW_FLOOR))
        ratio = smoothed[t + 1] / np.maximum(pred_next, UNDERFLOW_FLOOR)
        joint = filtered[t][:, None] * trans * ratio[None, :]
        pairwise[t] = joint
        smoothed[t] = joint.sum(axis=1)
    return smoothed, pairwise, n_floored


def sample_path(filtered, trans, uniforms):
    """Backward draw of a state path given filtered probabilities.

    Draws s_{T-1} from filtered[T-1], then s_t proportional to
    filtered[t, i] * trans[i, s_{t+1}] going backwards; uniforms supplies one
    U(0,1) variate per step so the draw is reproducible across kernels.
    """
    T, M = filtered.shape
    states = np.empty(T, dtype=np.int64)
    states[T - 1] = _draw(filtered[T - 1], uniforms[T - 1])
    for t in range(T - 2, -1, -1):
        w = filtered[t] * trans[:, states[t + 1]]
        states[t] = _draw(w, uniforms[t])
    return states


def _draw(weights, u):
    total = float(np.sum(weights))
    if total <= 0.0:
        return 0
    target = u * total
    acc = 0.0
    for i in range(len(weights) - 1):
        acc += weights[i]
        if target < acc:
            return i
    return len(weights) - 1
