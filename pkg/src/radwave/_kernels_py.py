"""Pure NumPy leapfrog kernel; same contract as the compiled ``_kernels``."""

import numpy as np


def leapfrog(chi0, chi1, rate0, weight, coef, lam2, dt2, pm1, steps,
             store_every, r_every, inv_2dt, limit):
    """Advance ``chi_tt - chi_rr = -coef * |chi|^pm1 * chi * weight``.

    ``chi0`` and ``chi1`` are the first two time levels; ``rate0`` is the
    exact time derivative at level 0.  ``coef`` is ``None`` or an array with
    one row per level ``0..steps``.  Levels ``0..steps`` with index divisible
    by ``store_every`` are returned along with centered time derivatives
    (one extra step is taken for the last one).

    Returns ``(values, rates, status, bad_level, bad_index)``; ``status`` is
    nonzero when ``|chi|`` exceeded ``limit`` or became non-finite.
    """
    n = chi0.shape[0]
    n_store = steps // store_every + 1
    values = np.empty((n_store, (n - 1) // r_every + 1))
    rates = np.empty_like(values)
    values[0] = chi0[::r_every]
    rates[0] = rate0[::r_every]
    prev = chi0.copy()
    cur = chi1.copy()
    nxt = np.zeros(n)
    w = weight[1:-1]
    for level in range(1, steps + 1):
        c = cur[1:-1]
        nl = np.abs(c) ** pm1 * c * w
        if coef is not None:
            nl = nl * coef[level, 1:-1]
        lap = (cur[2:] - 2.0 * c) + cur[:-2]
        nxt[1:-1] = ((2.0 * c - prev[1:-1]) + lam2 * lap) - dt2 * nl
        ok = np.abs(nxt) <= limit
        if not ok.all():
            bad = int(np.argmin(ok))
            return values, rates, 1, level + 1, bad
        if level % store_every == 0:
            k = level // store_every
            values[k] = cur[::r_every]
            rates[k] = ((nxt - prev) * inv_2dt)[::r_every]
        prev, cur, nxt = cur, nxt, prev
    return values, rates, 0, -1, -1
