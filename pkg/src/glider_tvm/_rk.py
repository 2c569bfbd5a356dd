"""Vectorised Dormand-Prince 5(4) integration of many independent trajectories.

scipy's ``solve_ivp`` controls a single step size for the whole state
vector, which couples independent trajectories when they are stacked into
one system. Here every trajectory carries its own time and step size, so a
result never depends on which other trajectories share the batch.

Trajectories can be grouped: members of a group (e.g. the perturbed copies
used for a finite-difference flow-map gradient) share one step sequence, so
the discrete flow map is a smooth function of the initial conditions.
"""

import numpy as np

# Dormand-Prince tableau (same coefficients as scipy.integrate.RK45).
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ORDER_EXP = -1.0 / 5.0

RUNNING, DONE, STOPPED, FAILED = 0, 1, 2, 3


class BatchResult:
    """Outcome of :func:`solve_batch`.

    Attributes
    ----------
    y : ndarray, shape (n, group, dim)
        State at the end of integration for every trajectory.
    t : ndarray, shape (n,)
        Time reached by each group.
    status : ndarray of int, shape (n,)
        ``DONE`` (reached ``t1``), ``STOPPED`` (stop predicate fired) or
        ``FAILED`` (step size underflow or step budget exhausted).
    steps : ndarray of int, shape (n,)
        Accepted steps per group.
    """

    def __init__(self, y, t, status, steps):
        self.y, self.t, self.status, self.steps = y, t, status, steps


def _initial_step(fun, t0, y0, f0, direction, rtol, atol, span):
    # Hairer-Norsett-Wanner starting step, one value per group.
    n = y0.shape[0]
    scale = atol + np.abs(y0) * rtol
    d0 = np.sqrt(np.mean((y0 / scale) ** 2, axis=(1, 2)))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2, axis=(1, 2)))
    h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
    h0 = np.minimum(h0, span)
    y1 = y0 + (direction * h0)[:, None, None] * f0
    f1 = fun(t0 + direction * h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2, axis=(1, 2))) / h0
    dmax = np.maximum(d1, d2)
    h1 = np.where(dmax <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / np.maximum(dmax, 1e-300)) ** 0.2)
    h = np.minimum(100 * h0, h1)
    return np.minimum(h, span) * np.ones(n)


def solve_batch(fun, y0, t0, t1, *, rtol=1e-8, atol=1e-10, stop=None, max_steps=100_000, h_min=1e-14):
    """Integrate ``dy/dt = fun(t, y)`` for a batch of trajectory groups.

    Parameters
    ----------
    fun : callable
        ``fun(t, y)`` with ``t`` of shape (m,) and ``y`` of shape (m, group,
        dim) returning an array shaped like ``y``.
    y0 : array_like, shape (n, dim) or (n, group, dim)
    t0, t1 : float
        Integration window; ``t1 < t0`` integrates backward.
    stop : callable, optional
        ``stop(t, y) -> bool array (m,)`` evaluated after each accepted step;
        a True entry freezes that group with status ``STOPPED``.
    """
    y0 = np.asarray(y0, dtype=float)
    squeeze = y0.ndim == 2
    y = (y0[:, None, :] if squeeze else y0).copy()
    n = y.shape[0]
    t = np.full(n, float(t0))
    status = np.full(n, RUNNING, dtype=np.int8)
    steps = np.zeros(n, dtype=np.int64)
    span = abs(t1 - t0)
    if n == 0 or span == 0.0:
        status[:] = DONE
        return BatchResult(y[:, 0] if squeeze else y, t, status, steps)

    direction = 1.0 if t1 > t0 else -1.0
    f = fun(t, y)
    h = _initial_step(fun, t, y, f, direction, rtol, atol, span)
    active = np.arange(n)
    stages = [None] * 7

    while active.size:
        ta, ya, fa, ha = t[active], y[active], f[active], h[active]
        remaining = np.abs(t1 - ta)
        ha = np.minimum(ha, remaining)
        hs = (direction * ha)[:, None, None]

        stages[0] = fa
        for i in range(1, 6):
            dy = sum(a * stages[j] for j, a in enumerate(_A[i]) if a != 0.0)
            stages[i] = fun(ta + direction * ha * _C[i], ya + hs * dy)
        y_new = ya + hs * sum(b * stages[j] for j, b in enumerate(_B) if b != 0.0)
        t_new = np.where(ha >= remaining, t1, ta + direction * ha)
        f_new = fun(t_new, y_new)
        stages[6] = f_new
        err = hs * sum(e * stages[j] for j, e in enumerate(_E) if e != 0.0)

        scale = atol + np.maximum(np.abs(ya), np.abs(y_new)) * rtol
        err_norm = np.sqrt(np.mean((err / scale) ** 2, axis=2)).max(axis=1)
        finite = np.isfinite(err_norm) & np.all(np.isfinite(y_new), axis=(1, 2))
        err_norm = np.where(finite, err_norm, np.inf)
        accept = err_norm < 1.0

        with np.errstate(divide="ignore"):
            factor = np.where(
                err_norm == 0.0, MAX_FACTOR, np.clip(SAFETY * err_norm**ORDER_EXP, MIN_FACTOR, MAX_FACTOR)
            )
        h_next = ha * np.where(accept, factor, np.minimum(factor, 1.0))

        acc = active[accept]
        t[acc] = t_new[accept]
        y[acc] = y_new[accept]
        f[acc] = f_new[accept]
        steps[acc] += 1
        h[active] = h_next

        done = accept & (ha >= remaining)
        status[active[done]] = DONE
        if stop is not None:
            check = accept & ~done
            if check.any():
                idx = active[check]
                fired = np.asarray(stop(t[idx], y[idx]), dtype=bool)
                status[idx[fired]] = STOPPED
        failed = (~accept & (h_next < h_min * np.maximum(1.0, np.abs(ta)))) | (steps[active] >= max_steps)
        failed &= status[active] == RUNNING
        status[active[failed]] = FAILED
        active = active[status[active] == RUNNING]

    return BatchResult(y[:, 0] if squeeze else y, t, status, steps)
