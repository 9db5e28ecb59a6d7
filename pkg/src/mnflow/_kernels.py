"""Compiled per-pixel kernels behind pelrec.estimate_flow.

These mirror imagecore._sample/_gradient and mnsolver.solve_update
operation by operation; tests check them against the numpy versions.
"""

import math

import numpy as np
from numba import njit

GAMMA_FIXED = 0
GAMMA_KURTOSIS = 1

PRED_CAUSAL_AVERAGE = 0
PRED_PREVIOUS = 1
PRED_ZERO = 2

_GAMMA_LO = math.nextafter(0.0, 1.0)
_GAMMA_HI = math.nextafter(1.0, 0.0)


@njit(cache=True)
def sample(data, x, y):
    h, w = data.shape
    if x < 0.0:
        x = 0.0
    elif x > w - 1.0:
        x = w - 1.0
    if y < 0.0:
        y = 0.0
    elif y > h - 1.0:
        y = h - 1.0
    x0 = min(int(math.floor(x)), max(w - 2, 0))
    y0 = min(int(math.floor(y)), max(h - 2, 0))
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = data[y0, x0] + fx * (data[y0, x1] - data[y0, x0])
    bot = data[y1, x0] + fx * (data[y1, x1] - data[y1, x0])
    return top + fy * (bot - top)


@njit(cache=True)
def gamma_of_kurtosis(chi, c, A):
    t = c * chi
    if t >= 0.0:
        e = math.exp(-t) if t < 745.0 else 0.0
        g = e / (A + e)
    else:
        g = 1.0 / (A * math.exp(t) + 1.0)
    return min(max(g, _GAMMA_LO), _GAMMA_HI)


@njit(cache=True)
def pooled_kurtosis(pool, res, normalized):
    """Excess kurtosis of ``pool`` (flattened) together with ``res``; 0 if degenerate."""
    flat = pool.ravel()
    m = flat.size + res.size
    s = 0.0
    peak = 0.0
    for v in flat:
        s += v
        peak = max(peak, abs(v))
    for v in res:
        s += v
        peak = max(peak, abs(v))
    mean = s / m
    dpeak = 0.0
    s2 = 0.0
    for v in flat:
        d = v - mean
        s2 += d * d
        dpeak = max(dpeak, abs(d))
    for v in res:
        d = v - mean
        s2 += d * d
        dpeak = max(dpeak, abs(d))
    if dpeak == 0.0 or math.sqrt(s2 / m) <= 1e-12 * peak:
        return 0.0
    s2 = 0.0
    s4 = 0.0
    for v in flat:
        d = (v - mean) / dpeak
        d2 = d * d
        s2 += d2
        s4 += d2 * d2
    for v in res:
        d = (v - mean) / dpeak
        d2 = d * d
        s2 += d2
        s4 += d2 * d2
    scale = m if normalized else 1.0
    return scale * s4 / (s2 * s2) - 3.0


@njit(cache=True)
def _cost(res, gamma):
    s2 = 0.0
    s4 = 0.0
    for v in res:
        v2 = v * v
        s2 += v2
        s4 += v2 * v2
    return (1.0 - gamma) * s2 + gamma * s4


@njit(cache=True)
def descend(z, gx, gy, pool, gamma_kind, gamma_fixed, c, A, beta0, eps,
            max_iters, tol, max_halvings):
    """Returns (ux, uy, iters, gamma_sum, converged, final_cost, initial_cost)."""
    n = z.size
    gg = 0.0
    for i in range(n):
        gg += gx[i] * gx[i] + gy[i] * gy[i]
    beta = beta0 / (eps + gg)
    res = z.copy()
    new_res = np.empty(n)
    ux = 0.0
    uy = 0.0
    gamma = 0.0
    gamma_sum = 0.0
    converged = False
    iters = 0
    for it in range(1, max_iters + 1):
        iters = it
        if gamma_kind == GAMMA_FIXED:
            gamma = gamma_fixed
        else:
            gamma = gamma_of_kurtosis(pooled_kurtosis(pool, res, True), c, A)
        gamma_sum += gamma
        cost = _cost(res, gamma)
        sx = 0.0
        sy = 0.0
        for i in range(n):
            r = res[i]
            wgt = (1.0 - gamma) * r + 2.0 * gamma * r * r * r
            sx += gx[i] * wgt
            sy += gy[i] * wgt
        sx *= beta
        sy *= beta
        if not (math.isfinite(sx) and math.isfinite(sy)):
            return math.nan, math.nan, iters, gamma_sum, False, math.nan, math.nan
        accepted = False
        for _ in range(max_halvings + 1):
            for i in range(n):
                new_res[i] = res[i] - gx[i] * sx - gy[i] * sy
            if _cost(new_res, gamma) <= cost:
                accepted = True
                break
            sx *= 0.5
            sy *= 0.5
        if not accepted:
            converged = True
            break
        ux += sx
        uy += sy
        res[:] = new_res
        if math.hypot(sx, sy) < tol:
            converged = True
            break
    final_cost = _cost(res, gamma)
    initial_cost = _cost(z, gamma)
    if final_cost > initial_cost:
        ux = 0.0
        uy = 0.0
        final_cost = initial_cost
    return ux, uy, iters, gamma_sum, converged, final_cost, initial_cost


@njit(cache=True)
def predict(vec, x, y, rule):
    h, w = vec.shape[0], vec.shape[1]
    if rule == PRED_ZERO:
        return 0.0, 0.0
    if rule == PRED_PREVIOUS:
        if x == 0:
            return 0.0, 0.0
        return vec[y, x - 1, 0], vec[y, x - 1, 1]
    sx = 0.0
    sy = 0.0
    n = 0
    # west, north-west, north, north-east
    for k in range(4):
        if k == 0:
            nx, ny = x - 1, y
        elif k == 1:
            nx, ny = x - 1, y - 1
        elif k == 2:
            nx, ny = x, y - 1
        else:
            nx, ny = x + 1, y - 1
        if 0 <= nx < w and 0 <= ny < h:
            sx += vec[ny, nx, 0]
            sy += vec[ny, nx, 1]
            n += 1
    if n == 0:
        return 0.0, 0.0
    return sx / n, sy / n


@njit(cache=True)
def assemble(cur, prev, x, y, offsets, dpx, dpy, z, gx, gy):
    h, w = cur.shape
    for j in range(offsets.shape[0]):
        xj = min(max(x + offsets[j, 0], 0), w - 1)
        yj = min(max(y + offsets[j, 1], 0), h - 1)
        px = xj - dpx
        py = yj - dpy
        z[j] = cur[yj, xj] - sample(prev, px, py)
        gx[j] = -((sample(prev, px + 0.5, py) - sample(prev, px - 0.5, py)) / 1.0)
        gy[j] = -((sample(prev, px, py + 0.5) - sample(prev, px, py - 0.5)) / 1.0)


@njit(cache=True)
def window_dfd(cur, prev, x, y, offsets, dx, dy, out):
    """Nonlinear DFD over the neighborhood of (x, y) at displacement (dx, dy)."""
    h, w = cur.shape
    for j in range(offsets.shape[0]):
        xj = min(max(x + offsets[j, 0], 0), w - 1)
        yj = min(max(y + offsets[j, 1], 0), h - 1)
        out[j] = cur[yj, xj] - sample(prev, xj - dx, yj - dy)


@njit(cache=True)
def intensity_gamma(cur, x, y, m, c, A):
    flat = cur.ravel()
    idx = y * cur.shape[1] + x
    lo = max(0, idx - m + 1)
    win = flat[lo:idx + 1]
    if win.size < 2:
        return gamma_of_kurtosis(0.0, c, A)
    empty = np.empty((0, 1))
    return gamma_of_kurtosis(pooled_kurtosis(empty, win, False), c, A)


@njit(cache=True)
def pixel(cur, prev, vec, pool, x, y, offsets, d_max, u_max, pred_rule, mode_kind, gamma_fixed,
          c, A, beta0, eps, max_iters, tol, max_halvings):
    """One working point; returns (dx, dy, iters, gamma_mean, final_cost).

    ``u_max > 0`` rescales an update longer than ``u_max`` pixels back to
    that length before it is added to the prediction.
    """
    n = offsets.shape[0]
    z = np.empty(n)
    gx = np.empty(n)
    gy = np.empty(n)
    dpx, dpy = predict(vec, x, y, pred_rule)
    assemble(cur, prev, x, y, offsets, dpx, dpy, z, gx, gy)
    ux, uy, iters, gsum, conv, fcost, icost = descend(
        z, gx, gy, pool, mode_kind, gamma_fixed, c, A, beta0, eps, max_iters, tol, max_halvings)
    if not (math.isfinite(ux) and math.isfinite(uy)):
        return math.nan, math.nan, iters, gsum / iters, fcost
    if u_max > 0.0:
        un = math.hypot(ux, uy)
        if un > u_max:
            ux *= u_max / un
            uy *= u_max / un
    dx = min(max(dpx + ux, -d_max), d_max)
    dy = min(max(dpy + uy, -d_max), d_max)
    return dx, dy, iters, gsum / iters, fcost


@njit(cache=True)
def scan(cur, prev, offsets, d_max, u_max, pred_rule, gamma_mode, gamma_fixed, c, A,
         kurt_window, beta0, eps, max_iters, tol, max_halvings):
    """Raster scan. gamma_mode: 0 fixed, 1 pooled residual kurtosis, 2 intensity kurtosis."""
    h, w = cur.shape
    n = offsets.shape[0]
    vec = np.zeros((h, w, 2))
    iters = np.zeros((h, w), dtype=np.int64)
    gmean = np.zeros((h, w))
    hist = np.zeros((h * w, n))
    for y in range(h):
        for x in range(w):
            p = y * w + x
            kind = GAMMA_FIXED
            gfix = gamma_fixed
            if gamma_mode == 1:
                kind = GAMMA_KURTOSIS
            elif gamma_mode == 2:
                gfix = intensity_gamma(cur, x, y, kurt_window, c, A)
            lo = max(0, p - kurt_window + 1)
            pool = hist[lo:p]
            dx, dy, it, gm, fc = pixel(cur, prev, vec, pool, x, y, offsets, d_max, u_max, pred_rule,
                                       kind, gfix, c, A, beta0, eps, max_iters, tol, max_halvings)
            if not (math.isfinite(dx) and math.isfinite(dy)):
                raise ArithmeticError("non-finite update step")
            vec[y, x, 0] = dx
            vec[y, x, 1] = dy
            iters[y, x] = it
            gmean[y, x] = gm
            window_dfd(cur, prev, x, y, offsets, dx, dy, hist[p])
    return vec, iters, gmean
