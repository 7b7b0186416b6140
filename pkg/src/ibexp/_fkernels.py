"""Compiled block-coordinate descent for the strong converse exponent.

The joint Q_XYU is held as factors q_y[y], c_u[y, u] = Q(u|y) and
c_x[y, u, x] = Q(x|y,u).  With these,

    D(Q_XYU || P_XY Q_{U|Y}) = D(q_y || P_Y) + sum q_y c_u D(c_x || P_{X|Y}),

and the penalized objective is that divergence plus |I(Y;U) - R|^+ plus
lam |H(X|U) - delta|^+.  Each block takes an exponentiated-gradient
(mirror) step using the joint partial derivatives

    dD/dq = log Q(x|y,u) + log q_y - log P_XY,
    dI/dq = log Q(u|y) - log Q_U,
    dH(X|U)/dq = -log Q(x|u),

with a backtracking step size per block.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def parts(qy, cu, cx, P, py):
    """Return (divergence, I(Y;U), H(X|U)) for the factored joint."""
    ny, nu = cu.shape
    nx = P.shape[1]
    div = 0.0
    for y in range(ny):
        if qy[y] > 0.0:
            if py[y] <= 0.0:
                return math.inf, 0.0, 0.0
            div += qy[y] * math.log(qy[y] / py[y])
    qu = np.zeros(nu)
    a = np.zeros((nu, nx))
    for y in range(ny):
        for u in range(nu):
            wt = qy[y] * cu[y, u]
            if wt <= 0.0:
                continue
            qu[u] += wt
            d = 0.0
            for x in range(nx):
                c = cx[y, u, x]
                if c > 0.0:
                    if P[y, x] <= 0.0:
                        return math.inf, 0.0, 0.0
                    d += c * math.log(c / P[y, x])
                    a[u, x] += wt * c
            div += wt * d
    mi = 0.0
    for y in range(ny):
        for u in range(nu):
            c = cu[y, u]
            if qy[y] > 0.0 and c > 0.0:
                mi += qy[y] * c * math.log(c / qu[u])
    h = 0.0
    for u in range(nu):
        if qu[u] <= 0.0:
            continue
        for x in range(nx):
            if a[u, x] > 0.0:
                h -= a[u, x] * math.log(a[u, x] / qu[u])
    return max(div, 0.0), max(mi, 0.0), max(h, 0.0)


@njit(cache=True)
def objective(qy, cu, cx, P, py, R, delta, lam):
    div, mi, h = parts(qy, cu, cx, P, py)
    return div + max(mi - R, 0.0) + lam * max(h - delta, 0.0)


@njit(cache=True)
def _joint_grad(qy, cu, cx, P, py, R, delta, lam, g):
    """g[y, u, x] = partial derivative of the penalized objective in Q(x,y,u)."""
    ny, nu = cu.shape
    nx = P.shape[1]
    div, mi, h = parts(qy, cu, cx, P, py)
    qu = np.zeros(nu)
    a = np.zeros((nu, nx))
    for y in range(ny):
        for u in range(nu):
            wt = qy[y] * cu[y, u]
            qu[u] += wt
            for x in range(nx):
                a[u, x] += wt * cx[y, u, x]
    use_i = mi > R
    use_h = h > delta and lam > 0.0
    for y in range(ny):
        for u in range(nu):
            for x in range(nx):
                c = cx[y, u, x]
                # qy * cu can underflow to 0 even when both factors are positive
                if c <= 0.0 or qy[y] * cu[y, u] <= 0.0 or a[u, x] <= 0.0:
                    g[y, u, x] = 0.0
                    continue
                v = math.log(c) + math.log(qy[y]) - math.log(P[y, x] * py[y])
                if use_i:
                    v += math.log(cu[y, u] / qu[u])
                if use_h:
                    v -= lam * math.log(a[u, x] / qu[u])
                g[y, u, x] = v


@njit(cache=True)
def _step(qy, cu, cx, g, block, eta, nqy, ncu, ncx):
    """Mirror step of size eta on one block; other blocks are copied."""
    ny, nu = cu.shape
    nx = cx.shape[2]
    nqy[:] = qy
    ncu[:] = cu
    ncx[:] = cx
    if block == 0:
        for y in range(ny):
            for u in range(nu):
                m = -1e300
                for x in range(nx):
                    if cx[y, u, x] > 0.0:
                        m = max(m, -eta * g[y, u, x])
                tot = 0.0
                for x in range(nx):
                    if cx[y, u, x] > 0.0:
                        ncx[y, u, x] = cx[y, u, x] * math.exp(-eta * g[y, u, x] - m)
                        tot += ncx[y, u, x]
                for x in range(nx):
                    ncx[y, u, x] /= tot
    elif block == 1:
        for y in range(ny):
            m = -1e300
            s = np.zeros(nu)
            for u in range(nu):
                for x in range(nx):
                    s[u] += cx[y, u, x] * g[y, u, x]
                if cu[y, u] > 0.0:
                    m = max(m, -eta * s[u])
            tot = 0.0
            for u in range(nu):
                if cu[y, u] > 0.0:
                    ncu[y, u] = cu[y, u] * math.exp(-eta * s[u] - m)
                    tot += ncu[y, u]
            for u in range(nu):
                ncu[y, u] /= tot
    else:
        s = np.zeros(ny)
        m = -1e300
        for y in range(ny):
            for u in range(nu):
                for x in range(nx):
                    s[y] += cu[y, u] * cx[y, u, x] * g[y, u, x]
            if qy[y] > 0.0:
                m = max(m, -eta * s[y])
        tot = 0.0
        for y in range(ny):
            if qy[y] > 0.0:
                nqy[y] = qy[y] * math.exp(-eta * s[y] - m)
                tot += nqy[y]
        for y in range(ny):
            nqy[y] /= tot


@njit(cache=True)
def bcd(qy, cu, cx, P, py, R, delta, lams, rounds, tol, nblocks=3):
    """Run the penalty schedule in place; returns the final penalized value.

    With nblocks = 1 only Q_{X|YU} moves (Q_Y and Q_{U|Y} stay fixed)."""
    ny, nu = cu.shape
    nx = P.shape[1]
    g = np.zeros((ny, nu, nx))
    nqy = qy.copy()
    ncu = cu.copy()
    ncx = cx.copy()
    cur = math.inf
    for li in range(lams.shape[0]):
        lam = lams[li]
        etas = np.array([1.0, 1.0, 1.0]) / (1.0 + lam)
        cur = objective(qy, cu, cx, P, py, R, delta, lam)
        for _ in range(rounds):
            start = cur
            for block in range(nblocks):
                _joint_grad(qy, cu, cx, P, py, R, delta, lam, g)
                eta = etas[block]
                while eta > 1e-12:
                    _step(qy, cu, cx, g, block, eta, nqy, ncu, ncx)
                    new = objective(nqy, ncu, ncx, P, py, R, delta, lam)
                    if new < cur:
                        qy[:] = nqy
                        cu[:] = ncu
                        cx[:] = ncx
                        cur = new
                        eta = min(2.0 * eta, 1.0)
                        break
                    eta *= 0.5
                etas[block] = max(eta, 1e-10)
            if start - cur <= tol * (1.0 + abs(cur)):
                break
    return cur


@njit(cache=True)
def _sharpen(base, lr, t, cx):
    ny, nu, nx = base.shape
    for y in range(ny):
        for u in range(nu):
            m = -1e300
            for x in range(nx):
                if base[y, u, x] > 0.0:
                    m = max(m, math.log(base[y, u, x]) + t * lr[u, x])
            tot = 0.0
            for x in range(nx):
                if base[y, u, x] > 0.0:
                    cx[y, u, x] = math.exp(math.log(base[y, u, x]) + t * lr[u, x] - m)
                    tot += cx[y, u, x]
                else:
                    cx[y, u, x] = 0.0
            for x in range(nx):
                cx[y, u, x] /= tot


@njit(cache=True)
def restore(qy, cu, cx, P, py, delta):
    """Sharpen Q_{X|YU} toward each Q_{X|U=u} (cx <- cx Q(x|u)^t, smallest t)
    until H(X|U) <= delta.  Returns False if no t up to 1e6 works."""
    ny, nu = cu.shape
    nx = P.shape[1]
    _, _, h = parts(qy, cu, cx, P, py)
    if h <= delta:
        return True
    qu = np.zeros(nu)
    lr = np.zeros((nu, nx))
    for y in range(ny):
        for u in range(nu):
            wt = qy[y] * cu[y, u]
            qu[u] += wt
            for x in range(nx):
                lr[u, x] += wt * cx[y, u, x]
    for u in range(nu):
        for x in range(nx):
            lr[u, x] = math.log(lr[u, x] / qu[u]) if lr[u, x] > 0.0 else 0.0
    base = cx.copy()

    lo, hi = 0.0, 1e-3
    while True:
        _sharpen(base, lr, hi, cx)
        _, _, h = parts(qy, cu, cx, P, py)
        if h <= delta:
            break
        lo = hi
        hi *= 2.0
        if hi > 1e6:
            return False
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        _sharpen(base, lr, mid, cx)
        _, _, h = parts(qy, cu, cx, P, py)
        if h <= delta:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * max(hi, 1.0):
            break
    _sharpen(base, lr, hi, cx)
    return True
