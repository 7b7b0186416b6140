"""Finite-alphabet probability primitives.

All information quantities are in nats.  Conventions used everywhere:

* ``0 log 0 = 0`` and ``0 log(0/0) = 0``;
* ``q > 0`` where ``p = 0`` makes a divergence ``+inf`` (a value, not an error);
* conditional terms off the support of the conditioning marginal contribute 0.

Containers renormalize inputs whose total mass is off by at most ``1e-9`` and
reject anything worse.  Every public function accepts either a container or a
plain array, so the solvers can work on raw ``ndarray`` values in hot loops.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.special import entr, rel_entr

MASS_SLACK = 1e-9
SUM_TOL = 1e-12


class DistributionError(ValueError):
    """Raised for malformed probability inputs."""


class SizeCapError(ValueError):
    """An enumeration or grid would exceed its documented size limit."""


def _checked(arr: Any, ndim: int, axis=None) -> np.ndarray:
    a = np.array(arr, dtype=float)
    if a.ndim != ndim:
        raise DistributionError(f"expected a {ndim}-d array, got shape {a.shape}")
    if a.size == 0:
        raise DistributionError("empty alphabet")
    if not np.all(np.isfinite(a)):
        raise DistributionError("non-finite probability")
    if np.any(a < 0):
        if a.min() < -MASS_SLACK:
            raise DistributionError(f"negative probability {a.min():.3g}")
        a = np.clip(a, 0.0, None)
    total = a.sum(axis=axis, keepdims=axis is not None)
    if np.any(np.abs(total - 1.0) > MASS_SLACK):
        worst = float(np.max(np.abs(total - 1.0)))
        raise DistributionError(f"mass deviates from 1 by {worst:.3g}")
    a = a / total
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Pmf:
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _checked(self.probs, 1))

    @property
    def size(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class CondPmf:
    """Stochastic matrix; ``rows[c]`` is the law of the output given ``c``."""

    rows: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rows", _checked(self.rows, 2, axis=1))

    def row(self, c: int) -> Pmf:
        return Pmf(self.rows[c])


@dataclass(frozen=True)
class JointXY:
    """Joint pmf over X×Y stored as ``probs[x, y]``."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _checked(self.probs, 2))

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    @property
    def p_x(self) -> Pmf:
        return Pmf(self.probs.sum(axis=1))

    @property
    def p_y(self) -> Pmf:
        return Pmf(self.probs.sum(axis=0))

    @property
    def p_x_given_y(self) -> CondPmf:
        return CondPmf(conditional(self.probs.T))

    @property
    def p_y_given_x(self) -> CondPmf:
        return CondPmf(conditional(self.probs))


@dataclass(frozen=True)
class JointXYU:
    """Joint pmf over X×Y×U stored as ``probs[x, y, u]``."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _checked(self.probs, 3))

    @classmethod
    def from_factors(cls, q_y, q_u_given_y, q_x_given_yu) -> "JointXYU":
        """Compose ``Q_Y Q_{U|Y} Q_{X|YU}``; ``q_x_given_yu`` has shape (ny, nu, nx)."""
        qy = _arr(q_y)
        qu = _arr(q_u_given_y)
        qx = np.asarray(_arr(q_x_given_yu), dtype=float)
        ny, nu = qu.shape
        qx = qx.reshape(ny, nu, -1)
        joint = np.einsum("y,yu,yux->xyu", qy, qu, qx)
        return cls(joint)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.probs.shape

    @property
    def q_y(self) -> Pmf:
        return Pmf(self.probs.sum(axis=(0, 2)))

    @property
    def q_xy(self) -> JointXY:
        return JointXY(self.probs.sum(axis=2))

    @property
    def q_u_given_y(self) -> CondPmf:
        return CondPmf(conditional(self.probs.sum(axis=0)))

    @property
    def q_x_given_yu(self) -> CondPmf:
        """Rows indexed by the flattened pair ``y * nu + u``."""
        nx, ny, nu = self.shape
        flat = np.moveaxis(self.probs, 0, -1).reshape(ny * nu, nx)
        return CondPmf(conditional(flat))


def _arr(obj) -> np.ndarray:
    for name in ("probs", "rows"):
        if hasattr(obj, name):
            return getattr(obj, name)
    return np.asarray(obj, dtype=float)


def conditional(joint) -> np.ndarray:
    """Row-normalize a nonnegative matrix; all-zero rows become uniform."""
    j = np.asarray(joint, dtype=float)
    s = j.sum(axis=-1, keepdims=True)
    out = np.where(s > 0, j / np.where(s > 0, s, 1.0), 1.0 / j.shape[-1])
    return out


# -- scalar quantities -------------------------------------------------------

def entropy(p) -> float:
    return float(entr(_arr(p)).sum())


def kl(q, p) -> float:
    """D(q || p); ``+inf`` when q puts mass where p has none."""
    q, p = _arr(q), _arr(p)
    if q.shape != p.shape:
        raise DistributionError("kl: alphabets differ")
    return float(rel_entr(q, p).sum())


def _h(joint: np.ndarray, axes) -> float:
    """Entropy of the marginal on ``axes`` of a joint array."""
    drop = tuple(i for i in range(joint.ndim) if i not in axes)
    return float(entr(joint.sum(axis=drop)).sum())


def mutual_info_yu(q) -> float:
    j = _arr(q)
    return max(_h(j, (1,)) + _h(j, (2,)) - _h(j, (1, 2)), 0.0)


def cond_mutual_info_xu_given_y(q) -> float:
    j = _arr(q)
    return max(_h(j, (0, 1)) + _h(j, (1, 2)) - _h(j, (0, 1, 2)) - _h(j, (1,)), 0.0)


def cond_entropy_x_given_u(q) -> float:
    j = _arr(q)
    return max(_h(j, (0, 2)) - _h(j, (2,)), 0.0)


def cond_entropy_y_given_u(q) -> float:
    j = _arr(q)
    return max(_h(j, (1, 2)) - _h(j, (2,)), 0.0)


def joint_divergence(q, p_xy) -> float:
    """D(Q_XYU || P_XY Q_{U|Y}) with ``Q_{U|Y}`` read off ``q`` itself."""
    j, p = _arr(q), _arr(p_xy)
    q_yu = j.sum(axis=0)
    q_y = q_yu.sum(axis=1)
    ref = p[:, :, None] * np.divide(q_yu, q_y[:, None], out=np.zeros_like(q_yu),
                                    where=q_y[:, None] > 0)[None, :, :]
    return float(rel_entr(j, ref).sum())


def joint_divergence_decomposed(q, p_xy) -> float:
    """Same quantity via D(Q_XY || P_XY) + I_Q(X;U|Y)."""
    j = _arr(q)
    return kl(j.sum(axis=2), p_xy) + cond_mutual_info_xu_given_y(j)


def expected_log_rank(p) -> float:
    """E[log G(X)] for the rank function G (largest probability has rank 1).

    Ties are ranked in index order.
    """
    a = _arr(p)
    order = np.argsort(-a, kind="stable")
    ranks = np.arange(1, a.size + 1)
    return float(np.sum(a[order] * np.log(ranks)))


def reverse_wyner_bounds(p) -> tuple[float, float]:
    """Interval that must contain ``expected_log_rank(p)``."""
    h = entropy(p)
    return h - np.log1p(np.log(_arr(p).size)), h


def reverse_markov_bound(values, probs, a: float) -> tuple[float, float]:
    """Return (P{X > a}, (E[X] - a)/(d - a)) for X on ``values`` with d = max value.

    The first entry dominates the second whenever a < E[X] (and d > a).
    """
    v = np.asarray(values, dtype=float)
    w = _arr(probs)
    d = float(v.max())
    mean = float(np.dot(v, w))
    tail = float(w[v > a].sum())
    return tail, (mean - a) / (d - a)


# -- JSON -------------------------------------------------------------------

def to_json_obj(dist) -> dict:
    a = _arr(dist)
    return {"alphabet_sizes": list(a.shape), "probs": a.ravel().tolist()}


def from_json_obj(obj: dict):
    """Parse ``{"alphabet_sizes": [...], "probs": [...]}`` into a container."""
    try:
        sizes = [int(s) for s in obj["alphabet_sizes"]]
        probs = np.asarray(obj["probs"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise DistributionError(f"malformed distribution JSON: {exc}") from exc
    if any(s < 1 for s in sizes) or probs.size != int(np.prod(sizes)):
        raise DistributionError("alphabet_sizes do not match the probs length")
    arr = probs.reshape(sizes)
    kind = {1: Pmf, 2: JointXY, 3: JointXYU}.get(len(sizes))
    if kind is None:
        raise DistributionError("expected 1 to 3 alphabet sizes")
    return kind(arr)


def loads(text: str):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DistributionError(f"invalid JSON: {exc}") from exc
    return from_json_obj(obj)
