"""Compiled adaptive Dormand-Prince 8(5,3) integrator.

The Butcher tableau and error-estimator weights are scipy's; the stepping
loop is compiled with numba so that limit-cycle runs of ~1e6 oscillation
periods stay affordable. Output times are hit exactly (the step is clipped),
so sampled states carry no interpolation error.
"""
from __future__ import annotations

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dop

N_STAGES = _dop.N_STAGES
TABLEAU_A = np.ascontiguousarray(_dop.A[:N_STAGES, :N_STAGES])
TABLEAU_B = np.ascontiguousarray(_dop.B)
TABLEAU_C = np.ascontiguousarray(_dop.C[:N_STAGES])
ERR_E3 = np.ascontiguousarray(_dop.E3)
ERR_E5 = np.ascontiguousarray(_dop.E5)

OK = 0
NONFINITE = 1
STEP_UNDERFLOW = 2
MAX_STEPS = 3

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


@njit(cache=True)
def _error_norm(K, h, scale):
    n = scale.size
    e5 = 0.0
    e3 = 0.0
    for i in range(n):
        s5 = 0.0
        s3 = 0.0
        for j in range(K.shape[0]):
            s5 += K[j, i] * ERR_E5[j]
            s3 += K[j, i] * ERR_E3[j]
        s5 /= scale[i]
        s3 /= scale[i]
        e5 += s5 * s5
        e3 += s3 * s3
    if e5 == 0.0 and e3 == 0.0:
        return 0.0
    return abs(h) * e5 / np.sqrt((e5 + 0.01 * e3) * n)


@njit
def dop853(rhs, params, y0, t0, t_out, rtol, atol, h0, max_steps):
    """Integrate ``y' = rhs(t, y, params, dydt)`` and sample at ``t_out``.

    Returns ``(samples, status, n_steps, h_last, y_final)``. ``t_out`` must be
    increasing and >= t0.
    """
    n = y0.size
    n_out = t_out.size
    samples = np.empty((n_out, n))
    K = np.zeros((N_STAGES + 1, n))
    y = y0.copy()
    y_new = np.empty(n)
    ytmp = np.empty(n)
    f = np.empty(n)
    scale = np.empty(n)
    rhs(t0, y, params, f)
    t = t0
    i_out = 0
    while i_out < n_out and t_out[i_out] <= t:
        samples[i_out, :] = y
        i_out += 1
    h = h0
    steps = 0
    status = OK
    while i_out < n_out:
        if steps >= max_steps:
            status = MAX_STEPS
            break
        target = t_out[i_out]
        remaining = target - t
        clipped = h >= remaining
        h_try = remaining if clipped else h
        rejected = False
        while True:
            if h_try < 1e-14 * max(abs(t), abs(h0)):
                status = STEP_UNDERFLOW
                break
            for i in range(n):
                K[0, i] = f[i]
            for s in range(1, N_STAGES):
                for i in range(n):
                    acc = 0.0
                    for j in range(s):
                        acc += TABLEAU_A[s, j] * K[j, i]
                    ytmp[i] = y[i] + h_try * acc
                rhs(t + TABLEAU_C[s] * h_try, ytmp, params, K[s])
            for i in range(n):
                acc = 0.0
                for j in range(N_STAGES):
                    acc += TABLEAU_B[j] * K[j, i]
                y_new[i] = y[i] + h_try * acc
            t_new = target if (clipped and h_try == remaining) else t + h_try
            rhs(t_new, y_new, params, K[N_STAGES])
            finite = True
            for i in range(n):
                if not np.isfinite(y_new[i]) or not np.isfinite(K[N_STAGES, i]):
                    finite = False
            if not finite:
                status = NONFINITE
                break
            for i in range(n):
                scale[i] = atol + max(abs(y[i]), abs(y_new[i])) * rtol
            err = _error_norm(K, h_try, scale)
            steps += 1
            if err < 1.0:
                if err == 0.0:
                    factor = _MAX_FACTOR
                else:
                    factor = min(_MAX_FACTOR, _SAFETY * err ** (-1.0 / 8.0))
                if rejected:
                    factor = min(1.0, factor)
                h_next = h_try * factor
                if clipped and h_try == remaining:
                    # a clipped step says nothing about the natural step size
                    # unless it was itself too long
                    if factor < 1.0:
                        h = min(h, h_next)
                else:
                    h = h_next
                t = t_new
                for i in range(n):
                    y[i] = y_new[i]
                    f[i] = K[N_STAGES, i]
                break
            h_try *= max(_MIN_FACTOR, _SAFETY * err ** (-1.0 / 8.0))
            clipped = False
            rejected = True
        if status != OK:
            break
        while i_out < n_out and t_out[i_out] <= t:
            samples[i_out, :] = y
            i_out += 1
    return samples[:i_out], status, steps, h, y
