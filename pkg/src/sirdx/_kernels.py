"""Compiled inner loops for the SIRD-X integrators.

States are 5-tuples (S, I, R, D, X) and parameters 5-tuples
(alpha, beta, mu, kappa, kappa0); keeping them as scalars lets numba hold
the whole step in registers.
"""
import numba
import numpy as np
from numba import njit, prange

# skip TBB: the system copy is too old and numba warns on every import
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

EULER = 0
RK4 = 1

STATUS_OK = 0
STATUS_NONFINITE = 1


@njit(cache=True, inline="always")
def rhs(y, p):
    s, i = y[0], y[1]
    alpha, beta, mu, kappa, kappa0 = p
    infection = alpha * s * i
    return (
        -infection - kappa0 * s,
        infection - (beta + mu) * i - kappa0 * i - kappa * i,
        beta * i,
        mu * i,
        kappa0 * s + (kappa + kappa0) * i,
    )


@njit(cache=True)
def clamp_negative(old, new):
    """Zero negative compartments and take the deficit from this step's gainers.

    The deficit is shared in proportion to each compartment's gain over the
    step, so the total population is unchanged.  Works in place on ``new``;
    returns True if anything was clamped.
    """
    deficit = 0.0
    for j in range(5):
        if new[j] < 0.0:
            deficit -= new[j]
            new[j] = 0.0
    if deficit == 0.0:
        return False
    gain = 0.0
    for j in range(5):
        g = new[j] - old[j]
        if g > 0.0:
            gain += g
    if gain > 0.0:
        share = deficit / gain
        for j in range(5):
            g = new[j] - old[j]
            if g > 0.0:
                new[j] -= share * g
    return True


@njit(cache=True, inline="always")
def _finish(y, out):
    if out[0] >= 0.0 and out[1] >= 0.0 and out[2] >= 0.0 and out[3] >= 0.0 and out[4] >= 0.0:
        return out, False
    a = np.array(y)
    b = np.array(out)
    clamp_negative(a, b)
    return (b[0], b[1], b[2], b[3], b[4]), True


@njit(cache=True)
def euler_step(y, p, dt):
    """Return (new_state, clamped)."""
    f = rhs(y, p)
    out = (y[0] + dt * f[0], y[1] + dt * f[1], y[2] + dt * f[2], y[3] + dt * f[3], y[4] + dt * f[4])
    return _finish(y, out)


@njit(cache=True, inline="always")
def _axpy(y, h, k):
    return (y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2], y[3] + h * k[3], y[4] + h * k[4])


@njit(cache=True)
def rk4_step(y, p, dt):
    k1 = rhs(y, p)
    k2 = rhs(_axpy(y, 0.5 * dt, k1), p)
    k3 = rhs(_axpy(y, 0.5 * dt, k2), p)
    k4 = rhs(_axpy(y, dt, k3), p)
    h = dt / 6.0
    out = (
        y[0] + h * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        y[2] + h * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        y[3] + h * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
        y[4] + h * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4]),
    )
    return _finish(y, out)


@njit(cache=True, inline="always")
def _advance(y, p, dt, method):
    if method == EULER:
        return euler_step(y, p, dt)
    return rk4_step(y, p, dt)


@njit(cache=True, inline="always")
def _finite(y):
    return np.isfinite(y[0] + y[1] + y[2] + y[3] + y[4])


@njit(cache=True)
def _as_tuple(a):
    return (a[0], a[1], a[2], a[3], a[4])


@njit(cache=True)
def integrate_full(p_arr, y0_arr, dt, n_steps, stop, method):
    """Return (states, n_taken, n_clamped, status); states has n_taken + 1 rows."""
    p = _as_tuple(p_arr)
    y = _as_tuple(y0_arr)
    states = np.empty((n_steps + 1, 5))
    for j in range(5):
        states[0, j] = y[j]
    n = 0
    clamped = 0
    status = STATUS_OK
    while n < n_steps and y[1] >= stop:
        y, c = _advance(y, p, dt, method)
        if c:
            clamped += 1
        n += 1
        for j in range(5):
            states[n, j] = y[j]
        if not _finite(y):
            status = STATUS_NONFINITE
            break
    return states[: n + 1], n, clamped, status


@njit(cache=True)
def integrate_outcome(p_arr, y0_arr, dt, n_steps, stop, method):
    """Return (d_final, i_max, status) without storing the trajectory."""
    p = _as_tuple(p_arr)
    y = _as_tuple(y0_arr)
    i_max = y[1]
    n = 0
    while n < n_steps and y[1] >= stop:
        y, _ = _advance(y, p, dt, method)
        n += 1
        if not _finite(y):
            return np.nan, np.nan, STATUS_NONFINITE
        if y[1] > i_max:
            i_max = y[1]
    return y[3], i_max, STATUS_OK


@njit(parallel=True, cache=True)
def batch_outcomes(P, y0, dt, n_steps, stop, method):
    n_rows = P.shape[0]
    out = np.empty((n_rows, 2))
    status = np.zeros(n_rows, dtype=np.int64)
    for r in prange(n_rows):
        d, imax, st = integrate_outcome(P[r], y0, dt, n_steps, stop, method)
        out[r, 0] = d
        out[r, 1] = imax
        status[r] = st
    return out, status
