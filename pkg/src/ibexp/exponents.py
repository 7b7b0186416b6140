"""Exponent and rate-distortion solvers for remote log-loss source coding.

Notation: the source is a pair (X, Y) with joint law P_XY; the encoder sees Y,
the soft reconstruction targets X, and U is the auxiliary description.

* ``rate_distortion``: R(D) = min I(Y;U) s.t. H(X|U) <= D, X - Y - U.
* ``wak_helper_rate``: R_h(B) = min H(X|U) s.t. I(Y;U) <= B.
* ``error_exponent``: min over Q_Y, max over Q_{U|Y} with I <= R, min over
  Q_{X|YU} with H(X|U) >= D of D(Q_XYU || P_XY Q_{U|Y}).
* ``strong_converse_exponent``: min over Q_XYU with H(X|U) <= D of
  D(Q_XYU || P_XY Q_{U|Y}) + |I(Y;U) - R|^+.

Both R(D) and R_h(B) are read off the lower boundary of the set of pairs
(I(Y;U), H(X|U)).  Writing Q_{Y|U=u} = pi_u, each atom contributes
(-H(pi_u), H(pi_u P_{X|Y})) and the atoms must average to P_Y, so both
problems are linear programs over the mixing weights of a grid of atoms
(followed by a continuous polish of the few atoms the LP keeps).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, linprog, minimize, minimize_scalar
from scipy.special import entr, rel_entr

from . import _fkernels, _kernels, _oracles
from .prob import JointXY, JointXYU, Pmf, SizeCapError, _arr, entropy, kl


# -- data types ---------------------------------------------------------------

@dataclass(frozen=True)
class SourceModel:
    p_xy: JointXY

    @classmethod
    def from_array(cls, probs) -> "SourceModel":
        return cls(JointXY(probs))

    @classmethod
    def lossless(cls, p_x) -> "SourceModel":
        """Model with P{X = Y} = 1."""
        return cls(JointXY(np.diag(_arr(p_x))))

    @property
    def probs(self) -> np.ndarray:
        return self.p_xy.probs

    @property
    def nx(self) -> int:
        return self.probs.shape[0]

    @property
    def ny(self) -> int:
        return self.probs.shape[1]

    @property
    def p_y(self) -> np.ndarray:
        return self.probs.sum(axis=0)

    @property
    def p_x(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    @property
    def p_x_given_y(self) -> np.ndarray:
        """Array [y, x]."""
        return self.p_xy.p_x_given_y.rows

    @property
    def delta_min(self) -> float:
        """H(X|Y), the smallest achievable distortion."""
        return entropy(self.probs.ravel()) - entropy(self.p_y)


@dataclass(frozen=True)
class ProblemSpec:
    R: float
    delta: float
    u_size: int | None = None

    def __post_init__(self):
        if not (self.R >= 0 and self.delta >= 0):
            raise ValueError("R and delta must be nonnegative")
        if self.u_size is not None and self.u_size < 1:
            raise ValueError("u_size must be positive")


@dataclass(frozen=True)
class SolverConfig:
    outer_grid_resolution: int = 20
    restarts: int = 64
    rng_seed: int = 0
    fixed_point_tol: float = 1e-12
    fixed_point_max_iters: int = 100
    rho_bisection_tol: float = 1e-12
    damping: float = 1.0
    penalty_schedule: tuple[float, ...] = (1.0, 10.0, 100.0, 1000.0, 1e4)
    ascent_starts: int = 6
    ascent_steps: int = 60
    refine_tol: float = 1e-7
    bcd_rounds: int = 400
    envelope_atoms: int = 4000

    def __post_init__(self):
        if self.outer_grid_resolution < 2:
            raise ValueError("outer_grid_resolution must be >= 2")
        if min(self.fixed_point_tol, self.rho_bisection_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        ps = list(self.penalty_schedule)
        if not ps or any(b <= a for a, b in zip(ps, ps[1:])):
            raise ValueError("penalty schedule must be increasing")


@dataclass
class ExponentResult:
    value: float
    witness: JointXYU | None
    q_y: np.ndarray | None = None
    q_u_given_y: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class InnerResult:
    value: float
    q_x_given_yu: np.ndarray     # [y, u, x]
    rho: float
    cond_entropy: float
    status: int


# -- small helpers ------------------------------------------------------------

def _h(p, axis=-1):
    return entr(p).sum(axis=axis)


def _mi(q_y, q_u_given_y):
    """I(Y;U) for one channel or a stack [..., y, u]."""
    w = q_y[..., :, None] * q_u_given_y
    qu = w.sum(axis=-2)
    return np.maximum(_h(qu) - np.einsum("...y,...y->...", q_y * np.ones(w.shape[:-1]),
                                          _h(q_u_given_y)), 0.0)


def _cond_h_x_u(q_y, q_u_given_y, p_x_given_y):
    """H(X|U) under Q_Y Q_{U|Y} P_{X|Y}, stack-friendly."""
    w = q_y[..., :, None] * q_u_given_y                   # [..., y, u]
    xu = np.einsum("...yu,yx->...xu", w, p_x_given_y)
    return np.maximum(_h(xu.reshape(*xu.shape[:-2], -1)) - _h(xu.sum(axis=-2)), 0.0)


def simplex_grid(k: int, res: int) -> np.ndarray:
    """All points i/res of the (k-1)-simplex, lexicographic, as rows."""
    pts = []

    def rec(prefix, left, slots):
        if slots == 1:
            pts.append(prefix + [left])
            return
        for v in range(left, -1, -1):
            rec(prefix + [v], left - v, slots - 1)

    rec([], res, k)
    return np.asarray(pts, dtype=float) / res


def _set_partitions(n: int, max_blocks: int):
    """Restricted-growth strings of length n with at most max_blocks blocks."""
    def rec(prefix, m):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for b in range(min(m + 1, max_blocks)):
            yield from rec(prefix + [b], max(m, b + 1))

    yield from rec([], 0)


def _default_u(model: SourceModel, kind: str) -> int:
    if kind == "E":
        return 2 * model.nx * model.ny + 2
    if kind == "F":
        return model.nx * model.ny + 2
    return model.ny + 1


# -- rate-distortion and helper rate ------------------------------------------

def _envelope_atoms(model: SourceModel, n_atoms: int) -> np.ndarray:
    ny = model.ny
    res = 1
    while math.comb(res + 1 + ny - 1, ny - 1) <= n_atoms:
        res += 1
    atoms = simplex_grid(ny, res) if ny > 1 else np.ones((1, 1))
    return np.vstack([atoms, model.p_y[None, :]])


def _envelope_lp(model: SourceModel, kind: str, level: float, n_atoms: int):
    """Solve the atom LP; return (objective, weights, atoms) or None if infeasible."""
    atoms = _envelope_atoms(model, n_atoms)
    hy = _h(atoms)
    hx = _h(atoms @ model.p_x_given_y)
    A_eq = atoms.T
    b_eq = model.p_y
    if kind == "RD":
        res = linprog(-hy, A_ub=hx[None, :], b_ub=[level], A_eq=A_eq, b_eq=b_eq,
                      bounds=(0, None), method="highs")
    else:
        res = linprog(hx, A_ub=-hy[None, :], b_ub=[level - entropy(model.p_y)],
                      A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        return None
    keep = res.x > 1e-12
    return res.x[keep], atoms[keep]


def _channel_from_atoms(model: SourceModel, weights, atoms) -> np.ndarray:
    """Q_{U|Y}(u|y) = w_u pi_u(y) / P_Y(y)."""
    py = model.p_y
    joint = weights[:, None] * atoms                      # [u, y]
    ch = np.divide(joint.T, py[:, None], out=np.zeros((model.ny, len(weights))),
                   where=py[:, None] > 0)
    ch = np.where(py[:, None] > 0, ch, 1.0 / len(weights))
    return ch / ch.sum(axis=1, keepdims=True)


def _polish_channel(model: SourceModel, ch: np.ndarray, kind: str, level: float):
    """Local SLSQP over Q_{U|Y} rows (softmax-free: bounds plus row equalities)."""
    ny, nu = ch.shape
    py, pxy = model.p_y, model.p_x_given_y

    def unpack(z):
        return z.reshape(ny, nu)

    if kind == "RD":
        def obj(z):
            return float(_mi(py, unpack(z)))

        def con(z):
            return level - float(_cond_h_x_u(py, unpack(z), pxy))
    else:
        def obj(z):
            return float(_cond_h_x_u(py, unpack(z), pxy))

        def con(z):
            return level - float(_mi(py, unpack(z)))

    cons = [{"type": "ineq", "fun": con}]
    for y in range(ny):
        cons.append({"type": "eq", "fun": lambda z, y=y: unpack(z)[y].sum() - 1.0})
    res = minimize(obj, ch.ravel(), method="SLSQP", bounds=[(0.0, 1.0)] * (ny * nu),
                   constraints=cons, options={"ftol": 1e-15, "maxiter": 500})
    z = np.clip(res.x, 0.0, None).reshape(ny, nu)
    z /= z.sum(axis=1, keepdims=True)
    return z


def _rd_like(model: SourceModel, kind: str, level: float, cfg: SolverConfig, u_size):
    base = _envelope_lp(model, kind, level, cfg.envelope_atoms)
    if base is None:
        return None
    weights, atoms = base
    ch = _channel_from_atoms(model, weights, atoms)
    py, pxy = model.p_y, model.p_x_given_y

    def score(c):
        i, h = float(_mi(py, c)), float(_cond_h_x_u(py, c, pxy))
        if kind == "RD":
            return (i, h <= level + 1e-12)
        return (h, i <= level + 1e-12)

    best = ch
    pol = _polish_channel(model, ch, kind, level)
    v0, ok0 = score(ch)
    v1, ok1 = score(pol)
    if ok1 and (v1 < v0 or not ok0):
        best = pol
    nu = best.shape[1]
    u_size = u_size or nu
    if u_size < nu:
        raise ValueError(f"the optimal description needs {nu} symbols; u_size={u_size} is too small")
    if u_size > nu:
        best = np.hstack([best, np.zeros((model.ny, u_size - nu))])
    return best


def _rd_result(model, ch, value, kind, level, extra):
    w = JointXYU(np.einsum("xy,yu->xyu", model.probs, ch))
    diag = {"kind": kind, "level": level, "cond_entropy_x_given_u":
            float(_cond_h_x_u(model.p_y, ch, model.p_x_given_y)),
            "mutual_info_yu": float(_mi(model.p_y, ch)), "infeasible": False}
    diag.update(extra)
    return ExponentResult(value=value, witness=w, q_y=model.p_y.copy(), q_u_given_y=ch,
                          diagnostics=diag)


def rate_distortion(model: SourceModel, delta: float, cfg: SolverConfig | None = None,
                    u_size: int | None = None) -> ExponentResult:
    """R(delta) with its optimal test channel as witness."""
    cfg = cfg or SolverConfig()
    hx = entropy(model.p_x)
    dmin = model.delta_min
    if delta < dmin - 1e-12:
        return ExponentResult(math.inf, None, diagnostics={"infeasible": True, "delta_min": dmin})
    if delta >= hx:
        ch = np.zeros((model.ny, u_size or _default_u(model, "RD")))
        ch[:, 0] = 1.0
        return _rd_result(model, ch, 0.0, "RD", delta, {"delta_min": dmin})
    ch = _rd_like(model, "RD", max(delta, dmin), cfg, u_size or _default_u(model, "RD"))
    if ch is None:
        # only reachable at delta == delta_min within round-off: U = Y
        ch = np.eye(model.ny)
    value = float(_mi(model.p_y, ch))
    return _rd_result(model, ch, value, "RD", delta, {"delta_min": dmin})


def wak_helper_rate(model: SourceModel, B: float, cfg: SolverConfig | None = None,
                    u_size: int | None = None) -> ExponentResult:
    """R_h(B) = min H(X|U) over helpers with I(Y;U) <= B."""
    cfg = cfg or SolverConfig()
    if B < 0:
        raise ValueError("B must be nonnegative")
    hy = entropy(model.p_y)
    if B >= hy:
        ch = np.eye(model.ny)
        if u_size and u_size > model.ny:
            ch = np.hstack([ch, np.zeros((model.ny, u_size - model.ny))])
        return _rd_result(model, ch, model.delta_min, "helper", B, {})
    ch = _rd_like(model, "helper", B, cfg, u_size or _default_u(model, "RD"))
    value = float(_cond_h_x_u(model.p_y, ch, model.p_x_given_y))
    return _rd_result(model, ch, value, "helper", B, {})


def positivity_threshold(model: SourceModel, delta: float, cfg: SolverConfig | None = None) -> float:
    """Rate at which the error exponent turns positive (and the strong
    converse exponent vanishes): R(delta)."""
    return rate_distortion(model, delta, cfg).value


# -- innermost layer of the error exponent ------------------------------------

def inner_min_E(q_y, q_u_given_y, delta: float, model: SourceModel,
                cfg: SolverConfig | None = None) -> InnerResult:
    """min over Q_{X|YU} with H(X|U) >= delta of D(Q_XYU || P_XY Q_{U|Y})."""
    cfg = cfg or SolverConfig()
    qy = np.asarray(_arr(q_y), dtype=float)
    ch = np.asarray(_arr(q_u_given_y), dtype=float)
    w = qy[:, None] * ch
    val, rho, h, status, Q = _kernels.inner_e(
        np.ascontiguousarray(w), np.ascontiguousarray(model.p_x_given_y), float(delta),
        cfg.fixed_point_tol, cfg.fixed_point_max_iters, cfg.rho_bisection_tol)
    d0 = kl(qy, model.p_y)
    return InnerResult(value=float(d0 + val), q_x_given_yu=Q, rho=float(rho),
                       cond_entropy=float(h), status=int(status))


def inner_min_F(q_y, q_u_given_y, delta: float, model: SourceModel,
                cfg: SolverConfig | None = None) -> InnerResult:
    """min over Q_{X|YU} with H(X|U) <= delta of D(Q_XYU || P_XY Q_{U|Y}).

    Nonconvex: penalized descent in Q_{X|YU} alone from a few starts, each
    finished by the sharpening step; the smallest feasible value wins.
    """
    cfg = cfg or SolverConfig()
    qy = np.ascontiguousarray(_arr(q_y), dtype=float)
    ch = np.ascontiguousarray(_arr(q_u_given_y), dtype=float)
    P = np.ascontiguousarray(model.p_x_given_y)
    py = np.ascontiguousarray(model.p_y)
    ny, nu = ch.shape
    rng = np.random.default_rng(cfg.rng_seed)
    lams = np.asarray(cfg.penalty_schedule, dtype=float)
    base = np.broadcast_to(P[:, None, :], (ny, nu, model.nx)).copy()
    starts = [(base.copy(), False), (base.copy(), True)]
    for _ in range(3):
        cx = rng.dirichlet(np.ones(model.nx), size=(ny, nu)) * (P[:, None, :] > 0)
        cx = 0.5 * cx / cx.sum(axis=2, keepdims=True) + 0.5 * base
        starts.append((cx, True))
    best = (math.inf, None)
    for cx, descend in starts:
        cx = np.ascontiguousarray(cx)
        if descend:
            _fkernels.bcd(qy.copy(), ch.copy(), cx, P, py, 1e300, float(delta), lams,
                          cfg.bcd_rounds, 1e-13, 1)
        if not _fkernels.restore(qy, ch, cx, P, py, float(delta)):
            continue
        div, _, h = _fkernels.parts(qy, ch, cx, P, py)
        if div < best[0]:
            best = (float(div), cx.copy(), float(h))
    if best[1] is None:
        return InnerResult(math.inf, base, 0.0, math.nan, 1)
    return InnerResult(best[0], best[1], 0.0, best[2], 0)


def _project_simplex(v: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Euclidean projection of each row of v onto {p >= floor, sum p = 1}."""
    k = v.shape[-1]
    shifted = v - floor
    mass = 1.0 - floor * k
    u = -np.sort(-shifted, axis=-1)
    css = np.cumsum(u, axis=-1) - mass
    ind = np.arange(1, k + 1)
    cond = u - css / ind > 0
    rho = cond.shape[-1] - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1)
    return np.maximum(shifted - theta, 0.0) + floor


def inner_min_E_projected_gradient(q_y, q_u_given_y, delta: float, model: SourceModel,
                                   iters: int = 4000, rho_max: float = 1e4) -> float:
    """Reference solver for the same program: dual bisection on rho with a
    projected-gradient minimization of the Lagrangian in Q_{X|YU}.

    Slow and only meant for cross-checking small instances with full-support
    P_{X|Y}.
    """
    qy = np.asarray(_arr(q_y), dtype=float)
    ch = np.asarray(_arr(q_u_given_y), dtype=float)
    w = qy[:, None] * ch
    P = model.p_x_given_y
    ny, nu = w.shape
    nx = P.shape[1]
    d0 = kl(qy, model.p_y)
    active = w > 0

    def parts(Q):
        a = np.einsum("yu,yux->ux", w, Q)
        qu = a.sum(axis=1)
        r = np.divide(a, qu[:, None], out=np.full_like(a, 1.0 / nx), where=qu[:, None] > 0)
        div = float(np.sum(w[:, :, None] * rel_entr(Q, P[:, None, :])))
        return div, float(_h(a.ravel()) - _h(qu)), r

    Q = np.broadcast_to(P[:, None, :], (ny, nu, nx)).copy()
    div, h, _ = parts(Q)
    if h >= delta:
        return d0

    def solve(rho, Q):
        def L(Q):
            d, hh, _ = parts(Q)
            return d - rho * hh
        step = 0.5
        cur = L(Q)
        for _ in range(iters):
            _, _, r = parts(Q)
            g = np.log(np.maximum(Q, 1e-300) / P[:, None, :]) + rho * np.log(np.maximum(r, 1e-300))[None]
            g = np.where(active[:, :, None], g, 0.0)
            while True:
                cand = _project_simplex(Q - step * g, floor=1e-14)
                new = L(cand)
                gap = np.sum(w[:, :, None] * g * (cand - Q))
                if new <= cur + 0.5 * gap or step < 1e-14:
                    break
                step *= 0.5
            if abs(cur - new) < 1e-15:
                Q, cur = cand, new
                break
            Q, cur = cand, new
            step = min(step * 2.0, 1.0)
        return Q

    lo, hi = 0.0, 1.0
    while True:
        Q = solve(hi, Q)
        _, h, _ = parts(Q)
        if h >= delta or hi >= rho_max:
            break
        lo, hi = hi, hi * 4
    Qhi = Q
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        Qm = solve(mid, Qhi.copy())
        _, h, _ = parts(Qm)
        if h >= delta:
            hi, Qhi = mid, Qm
        else:
            lo = mid
        if hi - lo < 1e-12 * max(hi, 1.0):
            break
    div, _, _ = parts(Qhi)
    return d0 + div


# -- error exponent -----------------------------------------------------------

class _Middle:
    """max over Q_{U|Y} with I(Q_Y, Q_{U|Y}) <= R of the inner layer, for fixed Q_Y."""

    def __init__(self, model: SourceModel, R: float, delta: float, u_size: int, cfg: SolverConfig):
        self.model, self.R, self.delta, self.nu, self.cfg = model, R, delta, u_size, cfg
        self.P = np.ascontiguousarray(model.p_x_given_y)
        rng = np.random.default_rng(cfg.rng_seed)
        ny = model.ny
        starts = []
        for labels in _set_partitions(ny, u_size):
            ch = np.zeros((ny, u_size))
            ch[np.arange(ny), labels] = 1.0
            starts.append(ch)
        for i in range(cfg.restarts):
            alpha = (0.3, 1.0, 3.0)[i % 3]
            starts.append(rng.dirichlet(alpha * np.ones(u_size), size=ny))
        self.starts = np.asarray(starts)
        self.evals = 0

    def solve(self, qy, bound=math.inf):
        """Return (inner value without D(Q_Y||P_Y), Q_{U|Y}, (value, rho, H, status, Q))."""
        cfg = self.cfg
        val, ch, rho, h, st, Q, ev = _kernels.middle_e(
            np.ascontiguousarray(qy, dtype=float), self.P, float(self.R), float(self.delta),
            self.starts, cfg.ascent_starts, cfg.ascent_steps, float(bound),
            cfg.fixed_point_tol, cfg.fixed_point_max_iters, cfg.rho_bisection_tol)
        self.evals += ev
        return val, ch, (val, rho, h, st, Q)


def error_exponent(model: SourceModel, spec: ProblemSpec, cfg: SolverConfig | None = None) -> ExponentResult:
    """Error exponent by nested search (outer grid + pattern refinement over Q_Y,
    multistart ascent over Q_{U|Y}, convex inner solve)."""
    cfg = cfg or SolverConfig()
    u_size = spec.u_size or _default_u(model, "E")
    mid = _Middle(model, spec.R, spec.delta, u_size, cfg)
    py = model.p_y
    ny = model.ny
    grid = simplex_grid(ny, cfg.outer_grid_resolution) if ny > 1 else np.ones((1, 1))
    grid = np.vstack([py[None, :], grid])
    d0s = np.array([kl(q, py) for q in grid])
    order = np.argsort(d0s, kind="stable")
    best = {"value": math.inf, "qy": None, "ch": None, "info": None}
    cache = {}
    pruned = 0

    def evaluate(qy):
        key = tuple(np.round(qy, 15))
        if key in cache:
            return cache[key]
        d0 = kl(qy, py)
        if d0 >= best["value"]:
            cache[key] = math.inf
            return math.inf
        f, ch, info = mid.solve(qy, bound=best["value"] - d0)
        total = d0 + f
        cache[key] = total
        if total < best["value"]:
            best.update(value=total, qy=qy.copy(), ch=ch, info=info)
        return total

    for i in order:
        if d0s[i] >= best["value"]:
            pruned += len(order) - list(order).index(i)
            break
        evaluate(grid[i])

    # pattern search on the simplex around the incumbent
    step = 1.0 / cfg.outer_grid_resolution
    dirs = [np.eye(ny)[a] - np.eye(ny)[b] for a in range(ny) for b in range(ny) if a != b]
    while best["qy"] is not None and step > cfg.refine_tol and ny > 1:
        moved = False
        for d in dirs:
            cand = best["qy"] + step * d
            if np.any(cand < -1e-15):
                continue
            cand = np.clip(cand, 0.0, None)
            cand /= cand.sum()
            before = best["value"]
            evaluate(cand)
            if best["value"] < before:
                moved = True
                break
        if not moved:
            step *= 0.5

    value = best["value"]
    diag = {"u_size": u_size, "outer_points": len(cache), "inner_solves": mid.evals,
            "restarts": cfg.restarts, "pruned_outer": pruned}
    if best["qy"] is None:
        # every outer point gave +inf
        return ExponentResult(math.inf, None, diagnostics={**diag, "infeasible_inner": True})
    qy, ch, info = best["qy"], best["ch"], best["info"]
    inner_val, rho, h, status, Q = info
    diag.update(rho=float(rho), inner_status=int(status), cond_entropy=float(h),
                mutual_info=float(_mi(qy, ch[None])[0]))
    if not math.isfinite(value):
        diag["infeasible_inner"] = True
        return ExponentResult(math.inf, None, q_y=qy, q_u_given_y=ch, diagnostics=diag)
    witness = JointXYU.from_factors(qy, ch, Q)
    return ExponentResult(max(value, 0.0), witness, q_y=qy, q_u_given_y=ch, diagnostics=diag)


# -- strong converse exponent -------------------------------------------------

def _f_value(model: SourceModel, qy, cu, cx, R: float):
    div, mi, h = _fkernels.parts(qy, cu, cx, model.p_x_given_y, model.p_y)
    return div + max(mi - R, 0.0), div, mi, h


def _f_starts(model: SourceModel, u_size: int, cfg: SolverConfig, rd_channel):
    """Initial factors (q_y, Q_{U|Y}, Q_{X|YU}) for the descent, all with full
    support on the allowed cells so that multiplicative steps can move them."""
    rng = np.random.default_rng([cfg.rng_seed, 2])
    ny, nx = model.ny, model.nx
    P = model.p_x_given_y
    allowed = (P > 0).astype(float)
    starts = []
    if rd_channel is not None:
        ch = np.zeros((ny, u_size))
        k = min(rd_channel.shape[1], u_size)
        ch[:, :k] = rd_channel[:, :k]
        ch = 0.999 * ch / ch.sum(axis=1, keepdims=True) + 0.001 / u_size
        cx = np.broadcast_to(P[:, None, :], (ny, u_size, nx)).copy()
        starts.append((model.p_y.copy(), ch, cx))
    for i in range(cfg.restarts):
        qy = rng.dirichlet(np.ones(ny)) if i % 2 else model.p_y.copy()
        qy = 0.9 * qy + 0.1 * model.p_y
        # use only a few of the u columns in some starts: optima often need
        # far fewer symbols than the cardinality bound allows
        used = u_size if i % 4 == 3 else min(u_size, 2 + (i // 4) % max(ny, 1))
        ch = np.zeros((ny, u_size))
        cols = rng.choice(u_size, size=used, replace=False)
        ch[:, cols] = rng.dirichlet((0.3, 1.0)[i % 2] * np.ones(used), size=ny)
        ch = 0.999 * ch + 0.001 / u_size
        if i % 3 == 0:
            # sharpened toward a random letter per u: low H(X|U) from the start
            target = rng.integers(nx, size=u_size)
            boost = np.zeros((u_size, nx))
            boost[np.arange(u_size), target] = rng.uniform(1.0, 6.0, size=u_size)
            cx = P[:, None, :] * np.exp(boost)[None]
        else:
            cx = rng.dirichlet(np.ones(nx), size=(ny, u_size)) * allowed[:, None, :]
            cx = 0.5 * cx / cx.sum(axis=2, keepdims=True) + 0.5 * P[:, None, :]
        cx = cx / cx.sum(axis=2, keepdims=True)
        starts.append((qy, ch, cx))
    return starts


def strong_converse_exponent(model: SourceModel, spec: ProblemSpec,
                             cfg: SolverConfig | None = None) -> ExponentResult:
    """Strong converse exponent by multistart block-coordinate descent with an
    increasing penalty on H(X|U) - delta, then a sharpening step that makes
    the witness exactly feasible."""
    cfg = cfg or SolverConfig()
    u_size = spec.u_size or _default_u(model, "F")
    R, delta = spec.R, spec.delta
    P = np.ascontiguousarray(model.p_x_given_y)
    py = np.ascontiguousarray(model.p_y)
    diag = {"u_size": u_size, "restarts": cfg.restarts, "infeasible": False}

    if delta < model.delta_min - 1e-12:
        # H_Q(X|U) <= delta is still feasible for Q != P; nothing special here,
        # but the rate-distortion shortcut does not apply
        rd = None
    else:
        rd = rate_distortion(model, delta, cfg)
    if rd is not None and math.isfinite(rd.value) and R >= rd.value - 1e-12:
        ch = rd.q_u_given_y
        if ch.shape[1] < u_size:
            ch = np.hstack([ch, np.zeros((model.ny, u_size - ch.shape[1]))])
        cx = np.broadcast_to(P[:, None, :], (model.ny, ch.shape[1], model.nx)).copy()
        val, div, mi, h = _f_value(model, py, ch, cx, R)
        diag.update(divergence=div, mutual_info=mi, cond_entropy=h, route="rate-distortion")
        witness = JointXYU.from_factors(py, ch, cx)
        return ExponentResult(max(val, 0.0), witness, q_y=py.copy(), q_u_given_y=ch, diagnostics=diag)

    lams = np.asarray(cfg.penalty_schedule, dtype=float)
    best = (math.inf, None)
    runs = 0
    for qy, ch, cx in _f_starts(model, u_size, cfg, None if rd is None else rd.q_u_given_y):
        qy, ch, cx = (np.ascontiguousarray(a, dtype=float) for a in (qy, ch, cx))
        _fkernels.bcd(qy, ch, cx, P, py, float(R), float(delta), lams, cfg.bcd_rounds, 1e-13)
        runs += 1
        if not _fkernels.restore(qy, ch, cx, P, py, float(delta)):
            continue
        val = _f_value(model, qy, ch, cx, R)[0]
        if val < best[0]:
            best = (val, (qy.copy(), ch.copy(), cx.copy()))
    diag["runs"] = runs
    if best[1] is None:
        diag["infeasible"] = True
        return ExponentResult(math.inf, None, diagnostics=diag)
    qy, ch, cx = best[1]
    val, div, mi, h = _f_value(model, qy, ch, cx, R)
    diag.update(divergence=div, mutual_info=mi, cond_entropy=h, route="descent")
    witness = JointXYU.from_factors(qy, ch, cx)
    return ExponentResult(max(val, 0.0), witness, q_y=qy, q_u_given_y=ch, diagnostics=diag)


# -- grid oracles -------------------------------------------------------------

@dataclass
class OracleResult:
    value: float
    granularity: float          # largest change of the objective to a grid neighbour
    q_y: np.ndarray | None
    q_u_given_y: np.ndarray | None
    grid_k: int


def _grid_channels(ny: int, nu: int, k: int) -> np.ndarray:
    """All channels Y -> U with entries in {0, 1/k, ..., 1}: shape [N, ny, nu]."""
    rows = simplex_grid(nu, k)
    idx = np.stack(np.meshgrid(*([np.arange(len(rows))] * ny), indexing="ij"), -1).reshape(-1, ny)
    return rows[idx]


def _rd_oracle(model: SourceModel, delta: float, k: int, nu: int) -> OracleResult:
    py, P = model.p_y, model.p_x_given_y
    chs = _grid_channels(model.ny, nu, k)
    i_val = _mi(py, chs)
    h_val = _cond_h_x_u(py, chs, P)
    ok = h_val <= delta + 1e-12
    if not ok.any():
        return OracleResult(math.inf, 0.0, py.copy(), None, k)
    vals = np.where(ok, i_val, np.inf)
    j = int(np.argmin(vals))
    # granularity: spread of the feasible values among channels one grid step away
    dist = np.abs(chs - chs[j]).max(axis=(1, 2)) * k
    near = (dist <= 1 + 1e-9) & ok
    gran = float(np.max(np.abs(vals[near] - vals[j]))) if near.any() else 0.0
    return OracleResult(float(vals[j]), gran, py.copy(), chs[j], k)


def brute_force_exponent_oracle(model: SourceModel, spec: ProblemSpec, kind: str,
                                grid_k: int = 100, cfg: SolverConfig | None = None) -> OracleResult:
    """Exhaustive rational-grid evaluation (denominator grid_k) of E, F or R(delta).

    E: grid over Q_Y and Q_{U|Y} with |U| = 2, convex inner layer solved exactly.
    F: grid over Q_Y and Q_{U|Y} with |U| = 2; for binary X the inner minimum over
       Q_{X|YU} reduces to one-dimensional rate functions, scanned and refined.
    RD: grid over Q_{U|Y} with |U| = spec.u_size or 2 (3 allowed for grid_k <= 40).
    Independent of the production solvers apart from the trusted convex inner layer.
    """
    cfg = cfg or SolverConfig()
    kind = kind.upper()
    if kind not in ("E", "F", "RD"):
        raise ValueError(f"unknown oracle kind {kind!r}")
    if model.nx > 2 or model.ny > 2:
        raise SizeCapError("grid oracles need |X|, |Y| <= 2")
    if not 1 <= grid_k <= 200:
        raise SizeCapError("grid_k must lie in [1, 200]")
    if kind == "RD":
        nu = spec.u_size or 2
        if nu > 3 or (nu == 3 and grid_k > 40):
            raise SizeCapError("RD oracle supports |U| <= 2, or |U| = 3 with grid_k <= 40")
        if spec.delta >= entropy(model.p_x):
            return OracleResult(0.0, 0.0, model.p_y.copy(), None, grid_k)
        return _rd_oracle(model, spec.delta, grid_k, nu)
    if spec.u_size not in (None, 2):
        raise SizeCapError("E and F oracles use |U| = 2")
    P = np.ascontiguousarray(model.p_x_given_y)
    py = np.ascontiguousarray(model.p_y)
    if kind == "E":
        v, i, a, b, gran = _oracles.oracle_e(P, py, float(spec.R), float(spec.delta), grid_k,
                                             cfg.fixed_point_tol, cfg.fixed_point_max_iters,
                                             cfg.rho_bisection_tol)
    else:
        if model.nx != 2:
            raise SizeCapError("F oracle needs binary X")
        v, i, a, b, gran = _oracles.oracle_f(P, py, float(spec.R), float(spec.delta), grid_k, 64)
    if i < 0:
        return OracleResult(math.inf, 0.0, None, None, grid_k)
    qy = np.array([i / grid_k, 1 - i / grid_k]) if model.ny == 2 else np.ones(1)
    ch = np.array([[a / grid_k, 1 - a / grid_k], [b / grid_k, 1 - b / grid_k]])[:model.ny]
    return OracleResult(max(float(v), 0.0), float(gran), qy, ch, grid_k)


# -- lossless closed forms ----------------------------------------------------

def _binary_entropy(q):
    return float(entr(q) + entr(1 - q))


def _tilt(p, beta):
    lp = np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), -np.inf)
    z = beta * lp
    z = z - z[p > 0].max()
    q = np.where(p > 0, np.exp(z), 0.0)
    return q / q.sum()


def error_exponent_lossless(p_x, R: float, delta: float) -> float:
    """min D(Q || P) over Q with H(Q) >= R + delta (the X = Y case)."""
    p = np.asarray(_arr(p_x), dtype=float)
    t = R + delta
    supp = p > 0
    cap = math.log(int(supp.sum()))
    if t <= entropy(p):
        return 0.0
    if t > cap + 1e-15:
        return math.inf
    if t >= cap - 1e-15:
        return kl(supp / supp.sum(), p)
    if p.size == 2:
        lo, hi = sorted((float(p[0]), 0.5))
        q = brentq(lambda v: _binary_entropy(v) - t, lo, hi, xtol=1e-15)
        return kl([q, 1 - q], p)
    beta = brentq(lambda b: entropy(_tilt(p, b)) - t, 0.0, 1.0, xtol=1e-15)
    return kl(_tilt(p, beta), p)


def _sc_objective(q, p, t):
    return kl(q, p) + max(entropy(q) - t, 0.0)


def sc_exponent_lossless(p_x, R: float, delta: float, resolution: int = 10_000) -> float:
    """min over Q of D(Q || P) + |H(Q) - R - delta|^+ (the X = Y case).

    Binary alphabets: scan of Q = Bern(q) at the given resolution refined
    by a bounded scalar search.  Larger alphabets: the same scan along the
    sharpening family Q ∝ P^beta (beta >= 1) restricted to every support
    subset, which contains the stationary points of the problem.
    """
    p = np.asarray(_arr(p_x), dtype=float)
    t = R + delta
    if entropy(p) <= t:
        return 0.0
    if p.size == 2:
        qs = np.linspace(0.0, 1.0, resolution + 1)
        q2 = np.stack([qs, 1 - qs], axis=1)
        vals = np.sum(rel_entr(q2, p[None]), axis=1) + np.maximum(_h(q2) - t, 0.0)
        i = int(np.argmin(vals))
        a, b = qs[max(i - 1, 0)], qs[min(i + 1, resolution)]
        res = minimize_scalar(lambda v: _sc_objective(np.array([v, 1 - v]), p, t),
                              bounds=(a, b), method="bounded", options={"xatol": 1e-13})
        return float(min(vals[i], res.fun))
    best = math.inf
    idx = np.flatnonzero(p > 0)
    for k in range(1, len(idx) + 1):
        for sub in itertools.combinations(idx, k):
            ps = np.zeros_like(p)
            ps[list(sub)] = p[list(sub)]
            # s = 1/beta in (0, 1]; s -> 0 is the point mass on the mode
            ss = np.linspace(0.0, 1.0, resolution + 1)[1:]
            vals = [_sc_objective(_tilt(ps, 1.0 / s), p, t) for s in ss]
            i = int(np.argmin(vals))
            a, b = ss[max(i - 1, 0)], ss[min(i + 1, len(ss) - 1)]
            res = minimize_scalar(lambda s: _sc_objective(_tilt(ps, 1.0 / s), p, t),
                                  bounds=(a, b), method="bounded", options={"xatol": 1e-13})
            mode = np.zeros_like(p)
            mode[sub[int(np.argmax(p[list(sub)]))]] = 1.0
            best = min(best, vals[i], res.fun, _sc_objective(mode, p, t))
    return float(best)
