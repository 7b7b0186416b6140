"""Exhaustive rational-grid oracles for two-letter alphabets.

Grid points are i/k, so results are reproducible bit for bit.  The outer
Q_Y grid is visited in order of D(Q_Y || P_Y) which makes the min-layers
prunable: once that divergence alone exceeds the incumbent, nothing later can
win.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from ._kernels import inner_e, mutual_info


@njit(cache=True)
def _kl2(a, p0):
    """d(Bern-like (a, 1-a) || (p0, 1-p0))."""
    v = 0.0
    if a > 0.0:
        if p0 <= 0.0:
            return math.inf
        v += a * math.log(a / p0)
    if a < 1.0:
        if p0 >= 1.0:
            return math.inf
        v += (1.0 - a) * math.log((1.0 - a) / (1.0 - p0))
    return v


@njit(cache=True)
def _channel(a, b, k, ny, out):
    out[0, 0] = a / k
    out[0, 1] = 1.0 - a / k
    if ny == 2:
        out[1, 0] = b / k
        out[1, 1] = 1.0 - b / k


@njit(cache=True)
def _middle_grid(qy, P, R, delta, k, bound, tol, max_iter, btol):
    """max over the Q_{U|Y} grid (|U| = 2, labels modulo swap) of the inner value.
    Returns (value, a, b); stops once value >= bound."""
    ny = P.shape[0]
    ch = np.zeros((ny, 2))
    w = np.zeros((ny, 2))
    best, ba, bb = -math.inf, 0, 0
    nb = k + 1 if ny == 2 else 1
    for a in range(k // 2 + 1):
        for b in range(nb):
            if 2 * a == k and 2 * b > k:
                continue
            _channel(a, b, k, ny, ch)
            if mutual_info(qy, ch) > R + 1e-15:
                continue
            for y in range(ny):
                w[y, 0] = qy[y] * ch[y, 0]
                w[y, 1] = qy[y] * ch[y, 1]
            v = inner_e(w, P, delta, tol, max_iter, btol, 0.0)[0]
            if v > best:
                best, ba, bb = v, a, b
                if best >= bound:
                    return best, ba, bb
    return best, ba, bb


@njit(cache=True)
def oracle_e(P, py, R, delta, k, tol, max_iter, btol):
    """Grid value of the error exponent with |U| = 2.

    Returns (value, i, a, b, granularity) with Q_Y = (i/k, 1 - i/k) and
    Q_{U|Y} rows (a/k, 1 - a/k), (b/k, 1 - b/k).
    """
    ny = P.shape[0]
    ni = k + 1 if ny == 2 else 1
    d0 = np.empty(ni)
    for i in range(ni):
        d0[i] = _kl2(i / k, py[0]) if ny == 2 else 0.0
    order = np.argsort(d0)
    qy = np.empty(ny)
    best, bi, ba, bb = math.inf, -1, 0, 0
    vals = np.full(ni, math.inf)
    for j in range(ni):
        i = order[j]
        if d0[i] >= best:
            break
        qy[0] = i / k if ny == 2 else 1.0
        if ny == 2:
            qy[1] = 1.0 - i / k
        v, a, b = _middle_grid(qy, P, R, delta, k, best - d0[i], tol, max_iter, btol)
        vals[i] = d0[i] + v
        if d0[i] + v < best:
            best, bi, ba, bb = d0[i] + v, i, a, b
    gran = 0.0
    if bi >= 0 and math.isfinite(best):
        # outer neighbours, evaluated without pruning
        for di in (-1, 1):
            i = bi + di
            if 0 <= i < ni and ny == 2:
                qy[0] = i / k
                qy[1] = 1.0 - i / k
                v, a, b = _middle_grid(qy, P, R, delta, k, math.inf, tol, max_iter, btol)
                if math.isfinite(v):
                    gran = max(gran, abs(d0[i] + v - best))
        # middle neighbours at the optimal Q_Y
        qy[0] = bi / k if ny == 2 else 1.0
        if ny == 2:
            qy[1] = 1.0 - bi / k
        ch = np.zeros((ny, 2))
        w = np.zeros((ny, 2))
        for da in (-1, 0, 1):
            for db in (-1, 0, 1):
                a, b = ba + da, bb + db
                if a < 0 or a > k or b < 0 or b > k or (da == 0 and db == 0):
                    continue
                _channel(a, b, k, ny, ch)
                if mutual_info(qy, ch) > R + 1e-15:
                    continue
                for y in range(ny):
                    w[y, 0] = qy[y] * ch[y, 0]
                    w[y, 1] = qy[y] * ch[y, 1]
                v = inner_e(w, P, delta, tol, max_iter, btol, 0.0)[0]
                if math.isfinite(v):
                    gran = max(gran, abs(d0[bi] + v - best))
    return best, bi, ba, bb, gran


# -- strong converse exponent, binary X ----------------------------------------

@njit(cache=True)
def _hb(r):
    v = 0.0
    if 0.0 < r < 1.0:
        v = -r * math.log(r) - (1.0 - r) * math.log(1.0 - r)
    return v


@njit(cache=True)
def _hb_inv(b):
    """a in [0, 1/2] with h(a) = b (b clipped to [0, log 2])."""
    if b <= 0.0:
        return 0.0
    if b >= math.log(2.0):
        return 0.5
    lo, hi = 0.0, 0.5
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _hb(mid) < b:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True)
def _rate_fn(pi, P, r):
    """min over Q_{X|Y} of sum_y pi_y D(Q_y || P_y) subject to
    sum_y pi_y Q_y(1) = r, for binary X (a Legendre transform in one
    variable).  Returns +inf outside the attainable range."""
    ny = P.shape[0]
    lo = 0.0
    hi = 0.0
    m = 0.0
    for y in range(ny):
        if pi[y] <= 0.0:
            continue
        if P[y, 0] <= 0.0:
            lo += pi[y]
        if P[y, 1] > 0.0:
            hi += pi[y]
        m += pi[y] * P[y, 1]
    eps = 1e-13
    if r < lo - eps or r > hi + eps:
        return math.inf
    if abs(r - m) <= 1e-15:
        return 0.0
    if r <= lo + eps or r >= hi - eps:
        # all mass pushed to one letter wherever allowed
        v = 0.0
        k = 0 if r <= lo + eps else 1
        for y in range(ny):
            if pi[y] > 0.0 and P[y, k] > 0.0:
                v -= pi[y] * math.log(P[y, k])
        return v
    # solve sum_y pi_y sigma_y(theta) = r, sigma_y = P1 e^t / (P0 + P1 e^t)
    tlo, thi = -800.0, 800.0
    t = 0.0
    dx_old = thi - tlo
    for _ in range(400):
        s = 0.0
        ds = 0.0
        for y in range(ny):
            if pi[y] <= 0.0:
                continue
            p0, p1 = P[y, 0], P[y, 1]
            if p1 <= 0.0:
                continue
            if p0 <= 0.0:
                s += pi[y]
                continue
            z = math.log(p1 / p0) + t
            sg = 1.0 / (1.0 + math.exp(-z)) if z > -700 else 0.0
            s += pi[y] * sg
            ds += pi[y] * sg * (1.0 - sg)
        f = s - r
        if f > 0.0:
            thi = t
        else:
            tlo = t
        if abs(f) < 1e-15:
            break
        nt = t - f / ds if ds > 0.0 else 0.5 * (tlo + thi)
        # plain Newton can cycle inside the bracket; bisect unless the step
        # stays inside and at least halves the previous one
        if not (tlo < nt < thi) or abs(nt - t) > 0.5 * dx_old:
            nt = 0.5 * (tlo + thi)
        dx_old = abs(nt - t)
        if abs(nt - t) < 1e-14 * (1.0 + abs(t)):
            t = nt
            break
        t = nt
    lam = 0.0
    for y in range(ny):
        if pi[y] <= 0.0:
            continue
        p0, p1 = P[y, 0], P[y, 1]
        if p1 <= 0.0:
            continue
        if p0 <= 0.0:
            lam += pi[y] * (math.log(p1) + t)
        else:
            z = math.log(p1 / p0) + t
            # log(p0 + p1 e^t) computed stably
            if z > 0:
                lam += pi[y] * (math.log(p1) + t + math.log1p(math.exp(-z)))
            else:
                lam += pi[y] * (math.log(p0) + math.log1p(math.exp(z)))
    return max(t * r - lam, 0.0)


@njit(cache=True)
def _range(pi, P):
    ny = P.shape[0]
    lo = 0.0
    hi = 0.0
    m = 0.0
    for y in range(ny):
        if pi[y] <= 0.0:
            continue
        if P[y, 0] <= 0.0:
            lo += pi[y]
        if P[y, 1] > 0.0:
            hi += pi[y]
        m += pi[y] * P[y, 1]
    return lo, hi, m


@njit(cache=True)
def _proj_min(pi, P, b):
    """min of the rate function over {r : h(r) <= b}; +inf if empty."""
    lo, hi, m = _range(pi, P)
    if b < 0.0:
        return math.inf
    if _hb(m) <= b:
        return 0.0
    a = _hb_inv(b)
    best = math.inf
    for r in (a, 1.0 - a):
        if lo - 1e-13 <= r <= hi + 1e-13:
            best = min(best, _rate_fn(pi, P, min(max(r, lo), hi)))
    return best


@njit(cache=True)
def _inner_f_pair(qu0, pi0, qu1, pi1, P, delta, r0):
    v0 = _rate_fn(pi0, P, r0)
    if not math.isfinite(v0):
        return math.inf
    b = (delta - qu0 * _hb(r0)) / qu1
    return qu0 * v0 + qu1 * _proj_min(pi1, P, b)


@njit(cache=True)
def inner_f(w, P, delta, M):
    """min over Q_{X|YU} (binary X, |U| = 2) of the weighted divergence
    subject to H(X|U) <= delta.  The second letter's optimum is exact given
    the first letter's marginal r0, which is scanned on M points and refined
    by golden-section search."""
    ny = P.shape[0]
    qu0 = 0.0
    qu1 = 0.0
    pi0 = np.zeros(ny)
    pi1 = np.zeros(ny)
    for y in range(ny):
        qu0 += w[y, 0]
        qu1 += w[y, 1]
    for y in range(ny):
        pi0[y] = w[y, 0] / qu0 if qu0 > 0.0 else 0.0
        pi1[y] = w[y, 1] / qu1 if qu1 > 0.0 else 0.0
    lo0, hi0, m0 = _range(pi0, P)
    lo1, hi1, m1 = _range(pi1, P)
    h0 = qu0 * _hb(m0) + qu1 * _hb(m1)
    if h0 <= delta:
        return 0.0
    if qu1 <= 0.0:
        return qu0 * _proj_min(pi0, P, delta / qu0)
    if qu0 <= 0.0:
        return qu1 * _proj_min(pi1, P, delta / qu1)
    if hi0 - lo0 <= 1e-15:
        return _inner_f_pair(qu0, pi0, qu1, pi1, P, delta, m0)
    best = math.inf
    bi = -1
    vals = np.empty(M + 1)
    for i in range(M + 1):
        r = lo0 + (hi0 - lo0) * i / M
        vals[i] = _inner_f_pair(qu0, pi0, qu1, pi1, P, delta, r)
        if vals[i] < best:
            best, bi = vals[i], i
    # the unconstrained point of the first letter and its entropy mirror
    for r in (m0, 1.0 - m0):
        if lo0 <= r <= hi0:
            best = min(best, _inner_f_pair(qu0, pi0, qu1, pi1, P, delta, r))
    if bi < 0:
        return best
    # golden-section refinement on the cells next to every local minimum
    g = 0.5 * (math.sqrt(5.0) - 1.0)
    for i in range(M + 1):
        left = vals[i - 1] if i > 0 else math.inf
        right = vals[i + 1] if i < M else math.inf
        if not (vals[i] <= left and vals[i] <= right) or not math.isfinite(vals[i]):
            continue
        a = lo0 + (hi0 - lo0) * max(i - 1, 0) / M
        b = lo0 + (hi0 - lo0) * min(i + 1, M) / M
        c = b - g * (b - a)
        d = a + g * (b - a)
        fc = _inner_f_pair(qu0, pi0, qu1, pi1, P, delta, c)
        fd = _inner_f_pair(qu0, pi0, qu1, pi1, P, delta, d)
        for _ in range(40):
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - g * (b - a)
                fc = _inner_f_pair(qu0, pi0, qu1, pi1, P, delta, c)
            else:
                a, c, fc = c, d, fd
                d = a + g * (b - a)
                fd = _inner_f_pair(qu0, pi0, qu1, pi1, P, delta, d)
        best = min(best, fc, fd)
    return best


@njit(cache=True)
def _f_point(qy, P, R, delta, a, b, k, M, ch, w):
    ny = P.shape[0]
    _channel(a, b, k, ny, ch)
    for y in range(ny):
        w[y, 0] = qy[y] * ch[y, 0]
        w[y, 1] = qy[y] * ch[y, 1]
    return max(mutual_info(qy, ch) - R, 0.0), w


@njit(cache=True)
def _scan_f(P, py, R, delta, k, M, step, best):
    """Pruned scan of the grid points that are multiples of step."""
    ny = P.shape[0]
    ni = k + 1 if ny == 2 else 1
    nb = k + 1 if ny == 2 else 1
    d0 = np.empty(ni)
    for i in range(ni):
        d0[i] = _kl2(i / k, py[0]) if ny == 2 else 0.0
    order = np.argsort(d0)
    qy = np.empty(ny)
    ch = np.zeros((ny, 2))
    w = np.zeros((ny, 2))
    bi, ba, bb = -1, 0, 0
    for j in range(ni):
        i = order[j]
        if d0[i] >= best:
            break
        if i % step:
            continue
        qy[0] = i / k if ny == 2 else 1.0
        if ny == 2:
            qy[1] = 1.0 - i / k
        for a in range(0, k // 2 + 1, step):
            for b in range(0, nb, step):
                if 2 * a == k and 2 * b > k:
                    continue
                pen, w = _f_point(qy, P, R, delta, a, b, k, M, ch, w)
                base = d0[i] + pen
                if base >= best:
                    continue
                v = base + inner_f(w, P, delta, M)
                if v < best:
                    best, bi, ba, bb = v, i, a, b
    return best, bi, ba, bb


@njit(cache=True)
def oracle_f(P, py, R, delta, k, M):
    """Grid value of the strong converse exponent for binary X, |U| = 2.

    A pass over a coarse sub-grid supplies the first pruning bound.
    Returns (value, i, a, b, granularity) in the same layout as oracle_e.
    """
    ny = P.shape[0]
    ni = k + 1 if ny == 2 else 1
    nb = k + 1 if ny == 2 else 1
    qy = np.empty(ny)
    ch = np.zeros((ny, 2))
    w = np.zeros((ny, 2))
    best, bi, ba, bb = math.inf, -1, 0, 0
    for step in (5, 4, 2):
        if k % step == 0 and k // step >= 4:
            best, bi, ba, bb = _scan_f(P, py, R, delta, k, M, step, best)
            break
    # the coarse optimum is a fine-grid point; rescanning with a strict
    # bound only keeps strictly better points
    b2, i2, a2, c2 = _scan_f(P, py, R, delta, k, M, 1, best)
    if i2 >= 0:
        best, bi, ba, bb = b2, i2, a2, c2
    d0 = np.empty(ni)
    for i in range(ni):
        d0[i] = _kl2(i / k, py[0]) if ny == 2 else 0.0
    gran = 0.0
    if bi >= 0 and math.isfinite(best):
        for di in (-1, 0, 1):
            i = bi + di
            if i < 0 or i >= ni:
                continue
            qy[0] = i / k if ny == 2 else 1.0
            if ny == 2:
                qy[1] = 1.0 - i / k
            for da in (-1, 0, 1):
                for db in (-1, 0, 1):
                    a, b = ba + da, bb + db
                    if a < 0 or a > k or b < 0 or b >= nb or (di == 0 and da == 0 and db == 0):
                        continue
                    pen, w = _f_point(qy, P, R, delta, a, b, k, M, ch, w)
                    v = d0[i] + pen + inner_f(w, P, delta, M)
                    if math.isfinite(v):
                        gran = max(gran, abs(v - best))
    return best, bi, ba, bb, gran
