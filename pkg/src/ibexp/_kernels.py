"""Compiled inner loops.

The inner layer of the error exponent is a convex program in Q_{X|YU}.  For a
fixed multiplier rho it separates over u, and the minimizer has the form

    Q(x|y,u) = P(x|y) exp(theta_u(x)) / Z_y(theta_u),   theta_u = -rho log r_u,

where r_u = Q_{X|U=u}.  Each theta_u is found by Newton's method on that
fixed-point equation (a damped fixed-point step is the fallback direction),
with an Armijo search on the per-u Lagrangian, which is convex in r_u.  An
outer bisection on rho matches the entropy constraint.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

RHO_MAX = 1e8


@njit(cache=True)
def _xlogx(v):
    return v * math.log(v) if v > 0.0 else 0.0


@njit(cache=True)
def _state(theta, pi, P, S, Qy, r):
    """Fill Qy[y, x] and r[x] for the tilt theta; return sum_y pi_y log Z_y."""
    ny, nx = P.shape
    for x in range(nx):
        r[x] = 0.0
    logz = 0.0
    for y in range(ny):
        if pi[y] <= 0.0:
            continue
        tmax = -1e300
        for x in range(nx):
            if P[y, x] > 0.0 and theta[x] > tmax:
                tmax = theta[x]
        z = 0.0
        for x in range(nx):
            if P[y, x] > 0.0:
                v = P[y, x] * math.exp(theta[x] - tmax)
                Qy[y, x] = v
                z += v
            else:
                Qy[y, x] = 0.0
        for x in range(nx):
            Qy[y, x] /= z
            r[x] += pi[y] * Qy[y, x]
        logz += pi[y] * (math.log(z) + tmax)
    return logz


@njit(cache=True)
def _lagr(theta, pi, P, S, rho, Qy, r):
    """Per-u Lagrangian (divided by q_u): F(r) - rho H(r)."""
    logz = _state(theta, pi, P, S, Qy, r)
    nx = P.shape[1]
    val = -logz
    for x in range(nx):
        if S[x]:
            val += theta[x] * r[x] + rho * _xlogx(r[x])
    return val


@njit(cache=True)
def _gauss_solve(A, b, out, m):
    """Solve A[:m,:m] out = b (partial pivoting); A and b are overwritten.
    Returns False for a numerically singular matrix."""
    for k in range(m):
        p = k
        big = abs(A[k, k])
        for i in range(k + 1, m):
            if abs(A[i, k]) > big:
                big = abs(A[i, k])
                p = i
        if big < 1e-300:
            return False
        if p != k:
            for j in range(m):
                A[k, j], A[p, j] = A[p, j], A[k, j]
            b[k], b[p] = b[p], b[k]
        for i in range(k + 1, m):
            f = A[i, k] / A[k, k]
            if f != 0.0:
                for j in range(k, m):
                    A[i, j] -= f * A[k, j]
                b[i] -= f * b[k]
    for i in range(m - 1, -1, -1):
        s = b[i]
        for j in range(i + 1, m):
            s -= A[i, j] * out[j]
        out[i] = s / A[i, i]
    return True


@njit(cache=True)
def _solve_u(pi, P, S, rho, theta, Qy, r, tol, max_iter, idx, e, J, C, d, rhs, trial, Qt, rt):
    """Newton solve of theta = -rho log r(theta) on the support S.  Returns iterations
    used, or -1 on non-convergence.  The trailing arguments are scratch space."""
    ny, nx = P.shape
    m = 0
    for x in range(nx):
        if S[x]:
            idx[m] = x
            m += 1
    _state(theta, pi, P, S, Qy, r)
    if m <= 1:
        return 0
    for it in range(max_iter):
        # residual
        emean = 0.0
        scale = 1.0
        for i in range(m):
            x = idx[i]
            e[i] = theta[x] + rho * math.log(r[x])
            emean += e[i]
            if abs(theta[x]) > scale:
                scale = abs(theta[x])
        emean /= m
        res = 0.0
        for i in range(m):
            v = abs(e[i] - emean)
            if v > res:
                res = v
        if res <= tol * scale:
            return it
        # C = sum_y pi_y (diag Q_y - Q_y Q_y^T) restricted to S
        for i in range(m):
            for j in range(m):
                C[i, j] = 0.0
        for y in range(ny):
            if pi[y] <= 0.0:
                continue
            for i in range(m):
                qi = Qy[y, idx[i]]
                if qi == 0.0:
                    continue
                C[i, i] += pi[y] * qi
                for j in range(m):
                    C[i, j] -= pi[y] * qi * Qy[y, idx[j]]
        for i in range(m):
            ri = r[idx[i]]
            for j in range(m):
                J[i, j] = rho * C[i, j] / ri
            J[i, i] += 1.0
            rhs[i] = -e[i]
        ok = _gauss_solve(J, rhs, d, m)
        slope = 0.0
        finite = ok
        for i in range(m):
            if not math.isfinite(d[i]):
                finite = False
            cd = 0.0
            for j in range(m):
                cd += C[i, j] * d[j]
            slope += e[i] * cd
        if not (slope < 0.0) or not finite:
            # damped fixed-point direction: theta <- theta - t e
            for i in range(m):
                d[i] = -e[i]
            slope = 0.0
            for i in range(m):
                cd = 0.0
                for j in range(m):
                    cd += C[i, j] * d[j]
                slope += e[i] * cd
        g0 = _lagr(theta, pi, P, S, rho, Qy, r)
        t = 1.0
        accepted = False
        for _ in range(60):
            for x in range(nx):
                trial[x] = theta[x]
            for i in range(m):
                trial[idx[i]] = theta[idx[i]] + t * d[i]
            g1 = _lagr(trial, pi, P, S, rho, Qt, rt)
            if g1 <= g0 + 1e-4 * t * slope + 1e-15 * (1.0 + abs(g0)):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            _state(theta, pi, P, S, Qy, r)
            return -1
        for x in range(nx):
            theta[x] = trial[x]
        _state(theta, pi, P, S, Qy, r)
    return -1


@njit(cache=True)
def _solve_rho(w, P, rho, theta, Q, R, supp, tol, max_iter):
    """Solve every u at multiplier rho; returns (H(X|U), worst status)."""
    ny, nu = w.shape
    nx = P.shape[1]
    pi = np.zeros(ny)
    Qy = np.zeros((ny, nx))
    r = np.zeros(nx)
    idx = np.empty(nx, dtype=np.int64)
    e = np.empty(nx)
    J = np.empty((nx, nx))
    C = np.empty((nx, nx))
    d = np.empty(nx)
    rhs = np.empty(nx)
    trial = np.empty(nx)
    Qt = np.empty((ny, nx))
    rt = np.empty(nx)
    h = 0.0
    status = 0
    for u in range(nu):
        qu = 0.0
        for y in range(ny):
            qu += w[y, u]
        if qu <= 0.0:
            continue
        for y in range(ny):
            pi[y] = w[y, u] / qu
        th = theta[u]
        if rho == 0.0:
            for x in range(nx):
                th[x] = 0.0
        it = _solve_u(pi, P, supp[u], rho, th, Qy, r, tol, max_iter,
                      idx, e, J, C, d, rhs, trial, Qt, rt)
        if it < 0:
            status = 2
        for y in range(ny):
            for x in range(nx):
                Q[y, u, x] = Qy[y, x] if pi[y] > 0.0 else P[y, x]
        hu = 0.0
        for x in range(nx):
            R[u, x] = r[x]
            hu -= _xlogx(r[x])
        h += qu * hu
    return h, status


@njit(cache=True)
def _inner_value(w, P, Q):
    ny, nu = w.shape
    nx = P.shape[1]
    val = 0.0
    for y in range(ny):
        for u in range(nu):
            if w[y, u] <= 0.0:
                continue
            d = 0.0
            for x in range(nx):
                q = Q[y, u, x]
                if q > 0.0:
                    if P[y, x] <= 0.0:
                        return math.inf
                    d += q * math.log(q / P[y, x])
            val += w[y, u] * d
    return val


@njit(cache=True)
def _cond_entropy(w, Q):
    ny, nu = w.shape
    nx = Q.shape[2]
    h = 0.0
    for u in range(nu):
        qu = 0.0
        for y in range(ny):
            qu += w[y, u]
        if qu <= 0.0:
            continue
        for x in range(nx):
            rx = 0.0
            for y in range(ny):
                rx += w[y, u] * Q[y, u, x]
            rx /= qu
            h -= qu * _xlogx(rx)
    return h


@njit(cache=True)
def _uniform_projection(w, P, supp, Q, tol, max_iter):
    """Closest Q_{X|YU} (weighted KL to P) with every Q_{X|U=u} uniform on its
    support: the only feasible point when the entropy constraint sits at its
    cap.  Iterative scaling of the tilt; returns the final marginal error."""
    ny, nu = w.shape
    nx = P.shape[1]
    pi = np.zeros(ny)
    Qy = np.zeros((ny, nx))
    r = np.zeros(nx)
    worst = 0.0
    for u in range(nu):
        qu = 0.0
        for y in range(ny):
            qu += w[y, u]
        if qu <= 0.0:
            continue
        for y in range(ny):
            pi[y] = w[y, u] / qu
        m = 0
        for x in range(nx):
            if supp[u, x]:
                m += 1
        theta = np.zeros(nx)
        err = 1.0
        for _ in range(max_iter):
            _state(theta, pi, P, supp[u], Qy, r)
            err = 0.0
            for x in range(nx):
                if supp[u, x]:
                    err = max(err, abs(r[x] * m - 1.0))
                    theta[x] -= math.log(r[x] * m)
            if err < tol:
                break
        _state(theta, pi, P, supp[u], Qy, r)
        worst = max(worst, err)
        for y in range(ny):
            for x in range(nx):
                Q[y, u, x] = Qy[y, x] if pi[y] > 0.0 else P[y, x]
    return worst


@njit(cache=True)
def inner_e(w, P, delta, tol, max_iter, bisect_tol, rho0=0.0):
    """min over Q_{X|YU} of sum_{y,u} w[y,u] D(Q(.|y,u) || P(.|y)) s.t. H(X|U) >= delta.

    Returns (value, rho, H, status, Q[y,u,x]); status 0 ok, 1 infeasible,
    2 inner non-convergence somewhere, 3 constraint met only at RHO_MAX.
    ``rho0`` > 0 seeds the multiplier bracket (warm start).
    """
    ny, nu = w.shape
    nx = P.shape[1]
    Q = np.zeros((ny, nu, nx))
    R = np.zeros((nu, nx))
    theta = np.zeros((nu, nx))
    supp = np.zeros((nu, nx), dtype=np.bool_)
    for u in range(nu):
        for y in range(ny):
            if w[y, u] > 0.0:
                for x in range(nx):
                    if P[y, x] > 0.0:
                        supp[u, x] = True
    h0, st = _solve_rho(w, P, 0.0, theta, Q, R, supp, tol, max_iter)
    if h0 >= delta:
        return 0.0, 0.0, h0, 0, Q
    hcap = 0.0
    for u in range(nu):
        qu = 0.0
        m = 0
        for y in range(ny):
            qu += w[y, u]
        for x in range(nx):
            if supp[u, x]:
                m += 1
        if qu > 0.0:
            hcap += qu * math.log(m)
    if delta > hcap + 1e-12:
        return math.inf, math.inf, h0, 1, Q
    if delta >= hcap - 1e-12:
        err = _uniform_projection(w, P, supp, Q, 1e-13, 100000)
        if err > 1e-9:
            return math.inf, math.inf, _cond_entropy(w, Q), 1, Q
        return _inner_value(w, P, Q), math.inf, _cond_entropy(w, Q), 0, Q
    # bracket [lo, hi] with h(lo) < delta <= h(hi); h(0) = h0
    status = 0
    lo, h_lo = 0.0, h0
    best_Q = Q.copy()
    theta_hi = theta.copy()
    h_hi = -1.0
    if rho0 > 0.0:
        # expand geometrically around the warm guess
        rho0 = min(rho0, RHO_MAX)
        h, st = _solve_rho(w, P, rho0, theta, Q, R, supp, tol, max_iter)
        status = max(status, st)
        factor = 1.02
        if h >= delta:
            hi, h_hi = rho0, h
            best_Q[:] = Q
            theta_hi[:] = theta
            while True:
                cand = hi / factor
                for u in range(nu):
                    for x in range(nx):
                        theta[u, x] = theta_hi[u, x] / factor
                h, st = _solve_rho(w, P, cand, theta, Q, R, supp, tol, max_iter)
                status = max(status, st)
                if h >= delta:
                    hi, h_hi = cand, h
                    best_Q[:] = Q
                    theta_hi[:] = theta
                    factor *= factor
                    if hi < 1e-12:
                        break
                else:
                    lo, h_lo = cand, h
                    break
        else:
            lo, h_lo = rho0, h
            cur = rho0
            while True:
                cand = min(cur * factor, RHO_MAX)
                for u in range(nu):
                    for x in range(nx):
                        theta[u, x] *= cand / cur
                h, st = _solve_rho(w, P, cand, theta, Q, R, supp, tol, max_iter)
                status = max(status, st)
                cur = cand
                if h >= delta:
                    hi, h_hi = cand, h
                    best_Q[:] = Q
                    theta_hi[:] = theta
                    break
                lo, h_lo = cand, h
                if cand >= RHO_MAX:
                    if h >= delta - 1e-9:
                        return _inner_value(w, P, Q), cand, h, 3, Q
                    return math.inf, cand, h, 1, Q
                factor *= factor
    else:
        hi = 1.0
        while True:
            h, st = _solve_rho(w, P, hi, theta, Q, R, supp, tol, max_iter)
            status = max(status, st)
            if h >= delta:
                h_hi = h
                best_Q[:] = Q
                theta_hi[:] = theta
                break
            lo, h_lo = hi, h
            if hi >= RHO_MAX:
                if h >= delta - 1e-9:
                    return _inner_value(w, P, Q), hi, h, 3, Q
                return math.inf, hi, h, 1, Q
            prev = hi
            hi = min(hi * 4.0, RHO_MAX)
            for u in range(nu):
                for x in range(nx):
                    theta[u, x] *= hi / prev
    # Illinois-type regula falsi in s = log rho (plain bisection from 0)
    flo, fhi = h_lo - delta, h_hi - delta
    last = 0
    for _ in range(200):
        if h_hi - delta <= bisect_tol or hi - lo <= 1e-15 * hi:
            break
        if lo > 0.0:
            slo, shi = math.log(lo), math.log(hi)
            # aim slightly inside the feasible side so the bracket closes there
            s = shi - (fhi - 0.5 * bisect_tol) * (shi - slo) / (fhi - flo)
            if not (slo < s < shi):
                s = 0.5 * (slo + shi)
            mid = math.exp(s)
        else:
            mid = 0.5 * hi
        for u in range(nu):
            for x in range(nx):
                theta[u, x] = theta_hi[u, x] * mid / hi
        h, st = _solve_rho(w, P, mid, theta, Q, R, supp, tol, max_iter)
        if st > status:
            status = st
        if h >= delta:
            hi, h_hi, fhi = mid, h, h - delta
            best_Q[:] = Q
            theta_hi[:] = theta
            if last == 1:
                flo *= 0.5
            last = 1
        else:
            lo, h_lo, flo = mid, h, h - delta
            if last == -1:
                fhi *= 0.5
            last = -1
    return _inner_value(w, P, best_Q), hi, h_hi, status, best_Q


@njit(cache=True)
def inner_e_batch(W, P, delta, tol, max_iter, bisect_tol):
    """Values of inner_e over a stack W[b, y, u]."""
    B = W.shape[0]
    out = np.empty(B)
    for b in range(B):
        v, _, _, _, _ = inner_e(W[b], P, delta, tol, max_iter, bisect_tol)
        out[b] = v
    return out


# -- middle layer of the error exponent ----------------------------------------

@njit(cache=True)
def mutual_info(qy, ch):
    """I(Y;U) for the input law qy and channel ch[y, u]."""
    ny, nu = ch.shape
    val = 0.0
    for u in range(nu):
        qu = 0.0
        for y in range(ny):
            qu += qy[y] * ch[y, u]
        if qu <= 0.0:
            continue
        for y in range(ny):
            c = ch[y, u]
            if qy[y] > 0.0 and c > 0.0:
                val += qy[y] * c * math.log(c / qu)
    return max(val, 0.0)


@njit(cache=True)
def retract(qy, ch, R, out):
    """Largest t in [0, 1] with I((1-t) Q_U + t ch) <= R; the mix goes to out."""
    ny, nu = ch.shape
    qu = np.zeros(nu)
    for u in range(nu):
        for y in range(ny):
            qu[u] += qy[y] * ch[y, u]
    out[:] = ch
    if mutual_info(qy, ch) <= R:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(60):
        t = 0.5 * (lo + hi)
        for y in range(ny):
            for u in range(nu):
                out[y, u] = (1.0 - t) * qu[u] + t * ch[y, u]
        if mutual_info(qy, out) <= R:
            lo = t
        else:
            hi = t
    for y in range(ny):
        for u in range(nu):
            out[y, u] = (1.0 - lo) * qu[u] + lo * ch[y, u]
    return lo


@njit(cache=True)
def _ascent_direction(qy, ch, P, rho, Q, R, g):
    """Mirror-ascent direction for the inner value in Q_{U|Y}, made tangent to
    the level set of I(Y;U) when that constraint is active."""
    ny, nu = ch.shape
    nx = P.shape[1]
    qu = np.zeros(nu)
    r = np.zeros((nu, nx))
    for u in range(nu):
        for y in range(ny):
            a = qy[y] * ch[y, u]
            qu[u] += a
            for x in range(nx):
                r[u, x] += a * Q[y, u, x]
        for x in range(nx):
            if qu[u] > 0.0:
                r[u, x] /= qu[u]
    for y in range(ny):
        for u in range(nu):
            d = 0.0
            c = 0.0
            for x in range(nx):
                q = Q[y, u, x]
                if q > 0.0:
                    d += q * math.log(q / P[y, x])
                    if r[u, x] > 0.0:
                        c += q * math.log(r[u, x])
            g[y, u] = d + rho * c
        m = 0.0
        for u in range(nu):
            m += ch[y, u] * g[y, u]
        for u in range(nu):
            g[y, u] -= m
    if mutual_info(qy, ch) >= R - 1e-9:
        gi = np.zeros((ny, nu))
        for y in range(ny):
            m = 0.0
            for u in range(nu):
                if ch[y, u] > 0.0 and qu[u] > 0.0:
                    gi[y, u] = math.log(ch[y, u] / qu[u])
                m += ch[y, u] * gi[y, u]
            for u in range(nu):
                gi[y, u] -= m
        num = 0.0
        den = 0.0
        for y in range(ny):
            for u in range(nu):
                wgt = qy[y] * ch[y, u]
                num += wgt * g[y, u] * gi[y, u]
                den += wgt * gi[y, u] * gi[y, u]
        if den > 0.0 and num > 0.0:
            lam = num / den
            for y in range(ny):
                for u in range(nu):
                    g[y, u] -= lam * gi[y, u]


@njit(cache=True)
def middle_e(qy, P, R, delta, starts, n_ascent, steps, bound, tol, max_iter, btol):
    """max over Q_{U|Y} with I <= R of the inner value, for a fixed Q_Y.

    Every start is retracted into the feasible set and evaluated; the best
    ``n_ascent`` of them are improved by mirror ascent with step control.
    Stops early once a value reaches ``bound``.  Returns (value, channel,
    rho, H, status, Q, evaluations).
    """
    S, ny, nu = starts.shape
    nx = P.shape[1]
    chans = np.empty((S, ny, nu))
    vals = np.empty(S)
    rhos = np.empty(S)
    w = np.empty((ny, nu))
    best_val = -math.inf
    best_ch = np.zeros((ny, nu))
    best_rho, best_h, best_st = 0.0, 0.0, 0
    best_Q = np.zeros((ny, nu, nx))
    evals = 0
    for s in range(S):
        retract(qy, starts[s], R, chans[s])
        for y in range(ny):
            for u in range(nu):
                w[y, u] = qy[y] * chans[s, y, u]
        v, rho, h, st, Q = inner_e(w, P, delta, tol, max_iter, btol, 0.0)
        evals += 1
        vals[s] = v
        rhos[s] = rho
        if v > best_val:
            best_val, best_rho, best_h, best_st = v, rho, h, st
            best_ch[:] = chans[s]
            best_Q[:] = Q
        if v >= bound:
            return best_val, best_ch, best_rho, best_h, best_st, best_Q, evals
    order = np.argsort(-vals)
    g = np.empty((ny, nu))
    cand = np.empty((ny, nu))
    ret = np.empty((ny, nu))
    for k in range(min(n_ascent, S)):
        s = order[k]
        if not math.isfinite(vals[s]):
            continue
        ch = chans[s].copy()
        for y in range(ny):
            for u in range(nu):
                w[y, u] = qy[y] * ch[y, u]
        val, rho, h, st, Q = inner_e(w, P, delta, tol, max_iter, btol, rhos[s])
        evals += 1
        eta = 0.5
        for _ in range(steps):
            if not (rho > 0.0) or not math.isfinite(rho):
                break
            _ascent_direction(qy, ch, P, rho, Q, R, g)
            improved = False
            while eta > 1e-9:
                for y in range(ny):
                    tot = 0.0
                    for u in range(nu):
                        e = eta * g[y, u]
                        e = min(max(e, -50.0), 50.0)
                        cand[y, u] = ch[y, u] * math.exp(e)
                        tot += cand[y, u]
                    for u in range(nu):
                        cand[y, u] /= tot
                retract(qy, cand, R, ret)
                for y in range(ny):
                    for u in range(nu):
                        w[y, u] = qy[y] * ret[y, u]
                v2, rho2, h2, st2, Q2 = inner_e(w, P, delta, tol, max_iter, btol, rho)
                evals += 1
                if v2 > val + 1e-13:
                    ch[:] = ret
                    val, rho, h, st, Q = v2, rho2, h2, st2, Q2
                    eta = min(eta * 1.5, 20.0)
                    improved = True
                    break
                eta *= 0.5
            if not improved or val >= bound:
                break
        if val > best_val:
            best_val, best_rho, best_h, best_st = val, rho, h, st
            best_ch[:] = ch
            best_Q[:] = Q
        if best_val >= bound:
            break
    return best_val, best_ch, best_rho, best_h, best_st, best_Q, evals
