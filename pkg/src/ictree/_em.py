"""Compiled self-consistency kernel.

Every observation covers a contiguous block ``[a_i, b_i]`` of the sorted
Turnbull intervals, so one EM sweep is two prefix sums and costs O(n + m).
"""

import numpy as np
from numba import njit

# masses below this are treated as structurally zero
MASS_FLOOR = 1e-300
# gradient slack tolerated at a converged point
KKT_TOL = 1e-6


@njit(cache=True)
def _loglik(a, b, w, masses):
    m = masses.shape[0]
    cum = np.zeros(m + 1)
    for j in range(m):
        cum[j + 1] = cum[j] + masses[j]
    ll = 0.0
    for i in range(a.shape[0]):
        if w[i] == 0.0:
            continue
        d = cum[b[i] + 1] - cum[a[i]]
        if d <= 0.0:
            return -np.inf
        ll += w[i] * np.log(d)
    return ll


@njit(cache=True)
def _sweep(a, b, w, total_w, src, dst, cum, acc, grad):
    """One self-consistency update ``src -> dst``; returns the max mass change.

    ``grad[j]`` receives ``d_j = sum_i w_i [j in i] / P_i / W``, the
    normalized likelihood gradient (equal to 1 on the support at the MLE).
    """
    m = src.shape[0]
    cum[0] = 0.0
    for j in range(m):
        cum[j + 1] = cum[j] + src[j]
    for j in range(m + 1):
        acc[j] = 0.0
    for i in range(a.shape[0]):
        d = cum[b[i] + 1] - cum[a[i]]
        if d > 0.0 and w[i] > 0.0:
            r = w[i] / d
            acc[a[i]] += r
            acc[b[i] + 1] -= r
    run = 0.0
    s = 0.0
    for j in range(m):
        run += acc[j]
        grad[j] = run / total_w
        v = src[j] * grad[j]
        if v < MASS_FLOOR:
            v = 0.0
        dst[j] = v
        s += v
    delta = 0.0
    for j in range(m):
        v = dst[j] / s
        diff = abs(v - src[j])
        if diff > delta:
            delta = diff
        dst[j] = v
    return delta


@njit(cache=True)
def _revive(a, b, w, x, grad, trial):
    """Move mass towards intervals whose gradient exceeds 1 (KKT violations).

    EM cannot leave a zero (or vanishing) mass once there, so a stalled
    iterate may look converged while it is not optimal.  Returns True when a
    strictly better point was found (written into ``x``).
    """
    m = x.shape[0]
    best = 0.0
    for j in range(m):
        if grad[j] > best:
            best = grad[j]
    if best <= 1.0 + KKT_TOL:
        return False
    nviol = 0
    for j in range(m):
        if grad[j] > 1.0 + KKT_TOL:
            nviol += 1
    base = _loglik(a, b, w, x)
    eps = 0.1
    while eps > 1e-12:
        for j in range(m):
            target = 1.0 / nviol if grad[j] > 1.0 + KKT_TOL else 0.0
            trial[j] = (1.0 - eps) * x[j] + eps * target
        if _loglik(a, b, w, trial) > base:
            for j in range(m):
                x[j] = trial[j]
            return True
        eps *= 0.1
    return False


@njit(cache=True)
def em_iterate(a, b, w, masses, tol, max_iter, check_monotone):
    """Self-consistency iteration with squared extrapolation, in place.

    Each cycle takes two EM sweeps, extrapolates along them (SQUAREM, with
    the steplength rule ``-|r|/|v|`` capped at -1), projects onto the
    simplex and stabilizes with a third sweep; the extrapolated point is kept
    only if it does not lower the log-likelihood, so the accepted iterates
    are monotone.  Convergence is declared on a plain EM sweep whose largest
    mass change is below ``tol``, and only at a point satisfying the KKT
    conditions.  ``iterations`` counts sweeps.

    Returns ``(iterations, converged, first_violation)``; ``first_violation``
    is the sweep at which the log-likelihood decreased (or -1) and is only
    tracked when ``check_monotone`` is set.
    """
    m = masses.shape[0]
    total_w = 0.0
    for i in range(a.shape[0]):
        total_w += w[i]
    cum = np.zeros(m + 1)
    acc = np.zeros(m + 1)
    grad = np.empty(m)
    x1 = np.empty(m)
    x2 = np.empty(m)
    xp = np.empty(m)
    x3 = np.empty(m)
    violation = -1
    prev_ll = _loglik(a, b, w, masses) if check_monotone else -np.inf

    it = 0
    converged = False
    while it < max_iter:
        d1 = _sweep(a, b, w, total_w, masses, x1, cum, acc, grad)
        it += 1
        if d1 < tol:
            if _revive(a, b, w, masses, grad, xp):
                continue
            masses[:] = x1
            converged = True
            break
        if it >= max_iter:
            masses[:] = x1
            break
        d2 = _sweep(a, b, w, total_w, x1, x2, cum, acc, grad)
        it += 1
        if d2 < tol or it >= max_iter:
            masses[:] = x1
            continue
        rr = 0.0
        vv = 0.0
        for j in range(m):
            r = x1[j] - masses[j]
            v = x2[j] - 2.0 * x1[j] + masses[j]
            rr += r * r
            vv += v * v
        alpha = -1.0
        if vv > 0.0:
            alpha = -np.sqrt(rr / vv)
            if alpha > -1.0:
                alpha = -1.0
        s = 0.0
        for j in range(m):
            r = x1[j] - masses[j]
            v = x2[j] - 2.0 * x1[j] + masses[j]
            y = masses[j] - 2.0 * alpha * r + alpha * alpha * v
            if y < 0.0:
                y = 0.0
            xp[j] = y
            s += y
        for j in range(m):
            xp[j] /= s
        _sweep(a, b, w, total_w, xp, x3, cum, acc, grad)
        it += 1
        ll2 = _loglik(a, b, w, x2)
        ll3 = _loglik(a, b, w, x3)
        if ll3 >= ll2:
            masses[:] = x3
        else:
            masses[:] = x2
        if check_monotone:
            ll = ll3 if ll3 >= ll2 else ll2
            if violation < 0 and ll < prev_ll - 1e-10 * max(1.0, abs(prev_ll)):
                violation = it
            prev_ll = ll
    return it, converged, violation


def loglik(a, b, w, masses):
    return float(_loglik(np.ascontiguousarray(a, dtype=np.int64),
                         np.ascontiguousarray(b, dtype=np.int64),
                         np.ascontiguousarray(w, dtype=np.float64),
                         np.ascontiguousarray(masses, dtype=np.float64)))
