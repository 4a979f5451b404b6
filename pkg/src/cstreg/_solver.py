"""Compiled kernels for weighted linear quantile fits.

All parallel loops write disjoint output slots and every reduction runs in
fixed index order, so results are bit-identical for any thread count.
"""

import numpy as np
from numba import njit, prange

EPANECHNIKOV = 0
TRIANGULAR = 1
BIWEIGHT = 2

# Huber-type smoothing of the check loss: the IRLS cap decreases
# geometrically from DELTA_START to DELTA_STOP before the vertex polish.
DELTA_START = 1e-1
DELTA_STOP = 1e-6
DELTA_RATIO = 0.1
INNER_ITERS = 2


@njit(cache=True)
def kernel_value(kid, u):
    au = abs(u)
    if au >= 1.0:
        return 0.0
    if kid == EPANECHNIKOV:
        return 0.75 * (1.0 - u * u)
    if kid == TRIANGULAR:
        return 1.0 - au
    t = 1.0 - u * u
    return 0.9375 * t * t


@njit(cache=True)
def qr_objective(d, y, w, tau, a, b):
    s = 0.0
    for i in range(d.size):
        u = y[i] - a - b * d[i]
        if u >= 0.0:
            s += w[i] * tau * u
        else:
            s += w[i] * (tau - 1.0) * u
    return s


@njit(cache=True)
def _pivot(d, y, w, tau, k, b_cur):
    """Exact line search along the edge where residual k stays zero.

    With a = y_k - b * d_k the objective becomes a weighted pinball loss
    in b with knots at lines through k and each other point; points on
    the negative-slope side flip their level to 1 - tau.  Returns the
    minimizing b, the partner point index that becomes active, and a
    validity flag (0 when every other point is parallel to the edge).
    """
    n = d.size
    t = np.empty(n)
    v = np.empty(n)
    idx = np.empty(n, dtype=np.int64)
    cnt = 0
    target = 0.0
    dk = d[k]
    yk = y[k]
    for i in range(n):
        if i == k or w[i] <= 0.0:
            continue
        e = d[i] - dk
        if e == 0.0:
            continue
        ae = abs(e)
        t[cnt] = (y[i] - yk) / e
        v[cnt] = w[i] * ae
        target += v[cnt] * (tau if e > 0.0 else 1.0 - tau)
        idx[cnt] = i
        cnt += 1
    if cnt == 0:
        return b_cur, -1, 0
    order = np.argsort(t[:cnt], kind="mergesort")
    total = 0.0
    for j in range(cnt):
        total += v[j]
    cum = 0.0
    for j in range(cnt):
        s = order[j]
        cum += v[s]
        if cum >= target - 1e-12 * total:
            return t[s], idx[s], 1
    s = order[cnt - 1]
    return t[s], idx[s], 1


@njit(cache=True)
def solve_slope(d, y, w, tau):
    """Minimize sum_i w_i * rho_tau(y_i - a - b*d_i) over (a, b).

    IRLS on the smoothed check loss, warm-started from weighted least
    squares, followed by an exact polish over lines through pairs of
    near-active points. The caller guarantees at least two strictly
    positive weights at distinct d.

    The smoothed loss splits into the linear drift (tau - 1/2) u plus a
    symmetric Huber term, so each reweighted solve is a true
    majorize-minimize step; the asymmetric factor must not enter the
    quadratic weights or monotonicity is lost.
    """
    n = d.size
    dscale = 0.0
    wsum = 0.0
    wdsum = 0.0
    s0 = 0.0
    s1 = 0.0
    s2 = 0.0
    t0 = 0.0
    t1 = 0.0
    for i in range(n):
        wi = w[i]
        di = d[i]
        if abs(di) > dscale:
            dscale = abs(di)
        wsum += wi
        wdsum += wi * di
        s0 += wi
        s1 += wi * di
        s2 += wi * di * di
        t0 += wi * y[i]
        t1 += wi * di * y[i]
    det = s0 * s2 - s1 * s1
    if det > 0.0 and s0 > 0.0:
        a = (s2 * t0 - s1 * t1) / det
        b = (s0 * t1 - s1 * t0) / det
    else:
        a = t0 / s0 if s0 > 0.0 else 0.0
        b = 0.0
    if dscale <= 0.0:
        dscale = 1.0

    drift = tau - 0.5
    delta = DELTA_START
    while delta >= DELTA_STOP * 0.999:
        for _ in range(INNER_ITERS):
            s0 = 0.0
            s1 = 0.0
            s2 = 0.0
            t0 = 0.0
            t1 = 0.0
            for i in range(n):
                di = d[i]
                u = y[i] - a - b * di
                au = abs(u)
                if au < delta:
                    au = delta
                om = w[i] / au
                s0 += om
                s1 += om * di
                s2 += om * di * di
                t0 += om * y[i]
                t1 += om * di * y[i]
            # stationarity of the surrogate: S theta = T + 2*drift*(W, Wd)
            t0 += 2.0 * drift * wsum
            t1 += 2.0 * drift * wdsum
            det = s0 * s2 - s1 * s1
            if det <= 0.0 or not np.isfinite(det):
                break
            a_new = (s2 * t0 - s1 * t1) / det
            b_new = (s0 * t1 - s1 * t0) / det
            step = abs(a_new - a) + dscale * abs(b_new - b)
            a = a_new
            b = b_new
            if step < 0.01 * delta:
                break
        delta *= DELTA_RATIO

    # Vertex polish: simplex-style exchange starting from the nearest
    # active point.  Each pivot is an exact line search along the edge
    # where one residual stays zero; at a vertex where neither edge
    # descends the solution is optimal.
    best_obj = qr_objective(d, y, w, tau, a, b)
    best_a = a
    best_b = b
    k = -1
    rmin = np.inf
    for i in range(n):
        if w[i] <= 0.0:
            continue
        u = abs(y[i] - a - b * d[i])
        if u < rmin:
            rmin = u
            k = i
    if k >= 0:
        cur_b = b
        no_improve = 0
        for _ in range(60):
            new_b, m, valid = _pivot(d, y, w, tau, k, cur_b)
            if valid == 0 or m < 0:
                break
            new_a = y[k] - new_b * d[k]
            obj = qr_objective(d, y, w, tau, new_a, new_b)
            if obj < best_obj - 1e-14 * (1.0 + abs(best_obj)):
                best_obj = obj
                best_a = new_a
                best_b = new_b
                no_improve = 0
            else:
                no_improve += 1
                if no_improve >= 2:
                    break
            cur_b = new_b
            k = m
    return best_a, best_b


@njit(cache=True)
def weighted_quantile(y, w, tau):
    """Lowest order statistic whose cumulative weight reaches tau * total.

    Exact minimizer of sum_i w_i * rho_tau(y_i - a); ties in y broken by
    original index via a stable sort.
    """
    n = y.size
    order = np.argsort(y, kind="mergesort")
    total = 0.0
    for i in range(n):
        total += w[i]
    target = tau * total
    cum = 0.0
    for j in range(n):
        i = order[j]
        cum += w[i]
        if cum >= target - 1e-12 * total:
            return y[i]
    return y[order[n - 1]]


@njit(cache=True)
def _window_bounds(xs, x0, h):
    lo = np.searchsorted(xs, x0 - h, side="right")
    hi = np.searchsorted(xs, x0 + h, side="left")
    return lo, hi


@njit(cache=True)
def _solve_window(xs, ys, lo, hi, x0, h, tau, kid):
    """Fit one local window; returns (alpha, beta, n_eff).

    n_eff < 2 or all window covariates equal flags a degenerate window
    with nan estimates.
    """
    m = hi - lo
    if m < 2 or xs[hi - 1] <= xs[lo]:
        return np.nan, np.nan, m
    d = np.empty(m)
    yy = np.empty(m)
    w = np.empty(m)
    for j in range(m):
        dj = xs[lo + j] - x0
        d[j] = dj
        yy[j] = ys[lo + j]
        w[j] = kernel_value(kid, dj / h)
    a, b = solve_slope(d, yy, w, tau)
    return a, b, m


@njit(cache=True, parallel=True)
def batch_curves(xs, ys, grid, hs, tau, kid, alphas, betas, neffs):
    """Local linear quantile fits at every (bandwidth, grid point) pair.

    xs must be ascending with ys aligned; outputs have shape
    (len(hs), len(grid)).
    """
    ng = grid.size
    nh = hs.size
    for cell in prange(nh * ng):
        ih = cell // ng
        ig = cell % ng
        lo, hi = _window_bounds(xs, grid[ig], hs[ih])
        a, b, m = _solve_window(xs, ys, lo, hi, grid[ig], hs[ih], tau, kid)
        alphas[ih, ig] = a
        betas[ih, ig] = b
        neffs[ih, ig] = m


@njit(cache=True, parallel=True)
def batch_points_tau(xs, ys, px, ptau, h, kid, alphas, neffs):
    """Local linear fits at points px with a per-point quantile level."""
    for i in prange(px.size):
        lo, hi = _window_bounds(xs, px[i], h)
        a, _, m = _solve_window(xs, ys, lo, hi, px[i], h, ptau[i], kid)
        alphas[i] = a
        neffs[i] = m


@njit(cache=True, parallel=True)
def loocv_losses(xs, ys, hs, tau, kid, losses, ok):
    """Per-(bandwidth, point) check loss of the leave-one-out local fit.

    losses and ok have shape (len(hs), n); ok is 0 where the reduced
    window is degenerate.
    """
    n = xs.size
    nh = hs.size
    for cell in prange(nh * n):
        ih = cell // n
        i = cell % n
        h = hs[ih]
        x0 = xs[i]
        lo, hi = _window_bounds(xs, x0, h)
        m = hi - lo - 1
        if m < 2:
            losses[ih, i] = 0.0
            ok[ih, i] = 0
            continue
        d = np.empty(m)
        yy = np.empty(m)
        w = np.empty(m)
        pos = 0
        xmin = np.inf
        xmax = -np.inf
        for j in range(lo, hi):
            if j == i:
                continue
            xj = xs[j]
            d[pos] = xj - x0
            yy[pos] = ys[j]
            w[pos] = kernel_value(kid, (xj - x0) / h)
            if xj < xmin:
                xmin = xj
            if xj > xmax:
                xmax = xj
            pos += 1
        if xmax <= xmin:
            losses[ih, i] = 0.0
            ok[ih, i] = 0
            continue
        a, _ = solve_slope(d, yy, w, tau)
        u = ys[i] - a
        losses[ih, i] = tau * u if u >= 0.0 else (tau - 1.0) * u
        ok[ih, i] = 1
