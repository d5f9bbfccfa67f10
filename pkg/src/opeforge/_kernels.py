"""Hot numeric loops, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports cleanly and the environment
variable ``OPEFORGE_DISABLE_NUMBA`` is unset (or ``0``). Both paths agree to
floating-point reassociation error; within one process the chosen backend is
fixed, so results stay bit-reproducible run to run.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

HAVE_NUMBA = numba is not None
NUMBA_ENABLED = HAVE_NUMBA and os.environ.get("OPEFORGE_DISABLE_NUMBA", "0") in ("", "0")


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


# -- numpy reference implementations ---------------------------------------


def categorical_draw_np(cdf, rows, u):
    """Inverse-CDF draw: for each i, the first column k with cdf[rows[i], k] > u[i]."""
    out = np.empty(len(u), dtype=np.int64)
    for r in np.unique(rows):
        mask = rows == r
        out[mask] = np.searchsorted(cdf[r], u[mask], side="right")
    return out


def cell_stats_np(contexts, actions, rewards, n_contexts, n_actions):
    flat = contexts * n_actions + actions
    size = n_contexts * n_actions
    counts = np.bincount(flat, minlength=size).astype(np.float64)
    sums = np.bincount(flat, weights=rewards, minlength=size)
    return counts.reshape(n_contexts, n_actions), sums.reshape(n_contexts, n_actions)


def ope_sums_np(contexts, actions, rewards, propensities, target, qhat, cap):
    """Return (sum w, sum w*r, sum_x E_pi[qhat], sum w*(r - qhat(x,a)))."""
    w = target[contexts, actions] / propensities
    w = np.minimum(w, cap)
    dm = np.sum(target[contexts] * qhat[contexts], axis=1)
    resid = rewards - qhat[contexts, actions]
    return float(np.sum(w)), float(np.sum(w * rewards)), float(np.sum(dm)), float(np.sum(w * resid))


def gradient_fit_np(weight, target_sum, init, step, iterations, r_max):
    """Projected gradient descent on sum_i w_i (theta - r_i)^2, cellwise."""
    theta = init.copy()
    for _ in range(iterations):
        grad = 2.0 * (weight * theta - target_sum)
        theta = np.clip(theta - step * grad, 0.0, r_max)
    return theta


# -- numba implementations --------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def categorical_draw_nb(cdf, rows, u):
        n = u.shape[0]
        k = cdf.shape[1]
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            row = rows[i]
            j = 0
            while j < k and cdf[row, j] <= u[i]:
                j += 1
            out[i] = j
        return out

    @numba.njit(cache=True)
    def cell_stats_nb(contexts, actions, rewards, n_contexts, n_actions):
        counts = np.zeros((n_contexts, n_actions))
        sums = np.zeros((n_contexts, n_actions))
        for i in range(contexts.shape[0]):
            counts[contexts[i], actions[i]] += 1.0
            sums[contexts[i], actions[i]] += rewards[i]
        return counts, sums

    @numba.njit(cache=True)
    def _ope_sums_nb(contexts, actions, rewards, propensities, target, qhat, cap):
        n_actions = target.shape[1]
        sw = 0.0
        swr = 0.0
        sdm = 0.0
        sres = 0.0
        for i in range(contexts.shape[0]):
            x = contexts[i]
            a = actions[i]
            w = target[x, a] / propensities[i]
            if w > cap:
                w = cap
            dm = 0.0
            for b in range(n_actions):
                dm += target[x, b] * qhat[x, b]
            sw += w
            swr += w * rewards[i]
            sdm += dm
            sres += w * (rewards[i] - qhat[x, a])
        return sw, swr, sdm, sres

    def ope_sums_nb(contexts, actions, rewards, propensities, target, qhat, cap):
        return _ope_sums_nb(contexts, actions, rewards, propensities, target, qhat, float(cap))

    @numba.njit(cache=True)
    def gradient_fit_nb(weight, target_sum, init, step, iterations, r_max):
        theta = init.copy()
        rows, cols = theta.shape
        for _ in range(iterations):
            for x in range(rows):
                for a in range(cols):
                    g = 2.0 * (weight[x, a] * theta[x, a] - target_sum[x, a])
                    t = theta[x, a] - step * g
                    if t < 0.0:
                        t = 0.0
                    elif t > r_max:
                        t = r_max
                    theta[x, a] = t
        return theta

else:  # pragma: no cover
    categorical_draw_nb = categorical_draw_np
    cell_stats_nb = cell_stats_np
    ope_sums_nb = ope_sums_np
    gradient_fit_nb = gradient_fit_np


if NUMBA_ENABLED:
    categorical_draw = categorical_draw_nb
    cell_stats = cell_stats_nb
    ope_sums = ope_sums_nb
    gradient_fit = gradient_fit_nb
else:
    categorical_draw = categorical_draw_np
    cell_stats = cell_stats_np
    ope_sums = ope_sums_np
    gradient_fit = gradient_fit_np
