"""Finite-blocklength list-coding schemes under logarithmic loss.

A scheme maps y^n to a message; the decoder answers with a list of x^n
sequences and the uniform soft estimate on it.  The loss of x^n is then
(1/n) log |list| when x^n is on the list and +inf otherwise, so an excess
event at level delta is "x^n missing, or the list longer than e^{n delta}".

Two constructions are provided.

* explicit (small n): per y-type, a conditional type Q_{U|Y} is chosen, the
  class is covered greedily by u-sequences, and every codeword carries the
  list of x^n whose empirical H(x|u) is below the threshold delta - eps.
* type-level (moderate n, error variant only): the same choice of Q_{U|Y},
  but the covering codebook is not materialized.  Its size is certified by
  the Lovasz-Stein bound on greedy covers, and since x^n is drawn i.i.d.
  given y^n, the excess probability only depends on the joint type of
  (y^n, u^n).  A canonical u^n (labels assigned in index order inside each
  y-symbol block) stands in for the codeword in simulation.

Message 0 is the overflow symbol; it always produces an excess event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import xlogy

from . import typeclasses as tc
from .exponents import (SolverConfig, SourceModel, _set_partitions, inner_min_E,
                        inner_min_F)
from .prob import SizeCapError, joint_divergence, mutual_info_yu

EXPLICIT_PAIR_CAP = 10**7
TYPE_WORK_CAP = 2 * 10**6
H_TOL = 1e-10


class ConstructionError(ValueError):
    """The requested scheme cannot be built (list too long, size caps)."""


# -- data types ---------------------------------------------------------------

@dataclass(frozen=True)
class TypePlan:
    """Per y-type choice of the conditional type of U given Y."""
    y_counts: tuple[int, ...]
    channel: tuple[tuple[int, ...], ...]        # joint counts [y, u]
    mutual_info: float
    cond_entropy_y_given_u: float
    log_cover_bound: float                      # log of the certified cover size
    codewords: int                              # messages used by this type
    objective: float
    error_prob: float                           # P(excess | y^n in this type)


@dataclass(frozen=True)
class CodingScheme:
    n: int
    nx: int
    ny: int
    nu: int
    rate_R: float
    delta: float
    epsilon: float
    variant: str                                # "error" | "strong_converse"
    kind: str                                   # "explicit" | "type"
    threshold: float                            # list rule on empirical H(x|u)
    budget: int                                 # messages per y-type
    plans: tuple[TypePlan, ...]
    encoder: np.ndarray | None = None           # explicit: message per y index
    lists: tuple[np.ndarray, ...] | None = None  # explicit: x indices per message
    codewords: tuple[tuple[int, ...] | None, ...] | None = None

    @property
    def strict(self) -> bool:
        return self.variant == "error"

    @property
    def num_messages(self) -> int:
        return sum(p.codewords for p in self.plans)

    @cached_property
    def _plan_map(self) -> dict:
        return {p.y_counts: p for p in self.plans}

    def plan_for(self, y_counts) -> TypePlan | None:
        return self._plan_map.get(tuple(int(c) for c in y_counts))

    def to_json_obj(self) -> dict:
        obj = {
            "n": self.n, "nx": self.nx, "ny": self.ny, "nu": self.nu,
            "R": self.rate_R, "Delta": self.delta, "epsilon": self.epsilon,
            "variant": self.variant, "kind": self.kind, "threshold": self.threshold,
            "budget": self.budget,
            "plans": [{"y_counts": list(p.y_counts), "channel": [list(r) for r in p.channel],
                       "codewords": p.codewords, "error_prob": p.error_prob}
                      for p in self.plans],
        }
        if self.kind == "explicit":
            obj["encoder"] = self.encoder.tolist()
            obj["lists"] = [lst.tolist() for lst in self.lists]
            obj["codewords"] = [None if c is None else list(c) for c in self.codewords]
        return obj


@dataclass
class SimReport:
    p_e: float
    stderr: float = 0.0
    samples: int | None = None
    method: str = "exact"
    per_type: dict = field(default_factory=dict)

    @property
    def p_c(self) -> float:
        return 1.0 - self.p_e


# -- small helpers ------------------------------------------------------------

def _floor_exp(v: float) -> int:
    """floor(e^v), robust to round-off when e^v is an integer."""
    if v < 0:
        return 0
    f = math.floor(math.exp(v))
    while math.log(f + 1) <= v + 1e-12:
        f += 1
    while f > 1 and math.log(f) > v + 1e-12:
        f -= 1
    return f


def list_cap(n: int, delta: float) -> int:
    """Largest list whose uniform estimate has loss at most delta: floor(e^{n delta})."""
    return _floor_exp(n * delta)


def message_budget(n: int, R: float) -> int:
    """Messages available per y-type: floor(e^{nR}), at least one."""
    return max(_floor_exp(n * R), 1)


def log_loss(x_seq, lst) -> float:
    """Loss of x_seq under the uniform estimate on ``lst`` (nats per symbol)."""
    x = tuple(int(v) for v in x_seq)
    members = {tuple(int(v) for v in s) for s in lst}
    if x not in members:
        return math.inf
    return math.log(len(members)) / len(x) if x else 0.0


def _cond_entropy_counts(counts: np.ndarray) -> np.ndarray:
    """Empirical H(col | row) per symbol for count tables [..., row, col]."""
    c = np.asarray(counts, dtype=float)
    n = c.sum(axis=(-2, -1))
    rows = c.sum(axis=-1)
    val = xlogy(rows, rows).sum(axis=-1) - xlogy(c, c).sum(axis=(-2, -1))
    return np.divide(val, n, out=np.zeros_like(val), where=n > 0)


def _in_list(h, threshold: float, strict: bool):
    if strict:
        return h < threshold - H_TOL
    return h <= threshold + H_TOL


@lru_cache(maxsize=None)
def list_thresholds(n: int, nx: int, u_counts: tuple[int, ...], delta: float):
    """Largest thresholds keeping the list of a u-sequence of type ``u_counts``
    within floor(e^{n delta}) sequences.

    Returns (strict, nonstrict): the largest t with |{x: H(x|u) < t}| <= cap,
    and the largest t with |{x: H(x|u) <= t}| <= cap (-inf if none).
    """
    cap = list_cap(n, delta)
    entries = {}
    for ct in tc.enumerate_cond_types(tc.TypeVector(u_counts), nx):
        h = float(_cond_entropy_counts(ct.array()))
        entries.setdefault(round(h / H_TOL), [h, 0])[1] += tc.cond_type_class_size(ct)
    levels = sorted(entries.values())
    total = 0
    strict, nonstrict = math.inf, -math.inf
    for h, size in levels:
        if total + size > cap:
            strict = h
            break
        total += size
        nonstrict = h
    return strict, nonstrict


def default_epsilon(n: int, nx: int, nu: int, delta: float, variant: str = "error") -> float:
    """Smallest slack for which every u-type's list fits, whatever codewords are used."""
    worst = math.inf
    for t in tc.enumerate_types(n, nu):
        s, ns = list_thresholds(n, nx, t.counts, float(delta))
        worst = min(worst, s if variant == "error" else ns)
    return max(0.0, delta - worst)


def _log_stein_bound(y_counts, joint: np.ndarray) -> float:
    """log of (|T(Q_U)| / |T(Q_{U|Y}|y)|) (1 + ln |T(Q_{Y|U}|u)|), the greedy cover bound."""
    u_counts = joint.sum(axis=0)
    used = u_counts > 0
    if used.sum() <= 1:
        return 0.0                              # constant u: one codeword
    log_nu = tc.log_multinomial(u_counts)
    log_deg = sum(tc.log_multinomial(row) for row in joint)
    log_set = sum(tc.log_multinomial(col) for col in joint.T)
    return min(log_nu, log_nu - log_deg + math.log1p(log_set))


def _canonical_columns(joint: np.ndarray) -> bool:
    cols = [tuple(c) for c in joint.T]
    return cols == sorted(cols, reverse=True)


# -- exact conditional error of a type plan -----------------------------------

def _column_law(cells, P: np.ndarray):
    """Law of the x-count vector over the positions sharing one u symbol.

    ``cells[a]`` of those positions carry y = a, where x ~ P[a].  Returns a
    dict from count tuples to probabilities."""
    nx = P.shape[1]
    law = {(0,) * nx: 1.0}
    for a, m in enumerate(cells):
        if m == 0:
            continue
        step = {}
        for comp in tc._compositions(int(m), nx):
            c = np.asarray(comp, dtype=float)
            if np.any((c > 0) & (P[a] <= 0)):
                continue
            step[comp] = math.exp(tc.log_multinomial(comp) + float(xlogy(c, P[a]).sum()))
        nxt = {}
        for k1, p1 in law.items():
            for k2, p2 in step.items():
                key = tuple(i + j for i, j in zip(k1, k2))
                nxt[key] = nxt.get(key, 0.0) + p1 * p2
        law = nxt
    return law


def type_error_prob(P: np.ndarray, joint: np.ndarray, threshold: float, strict: bool) -> float:
    """P(excess | y^n, u^n) when the joint type of (y^n, u^n) is ``joint`` [y, u]
    and x^n ~ prod P[y_i]: the probability that the empirical H(x|u) misses the rule."""
    n = int(joint.sum())
    if n == 0:
        return 0.0 if _in_list(0.0, threshold, strict) else 1.0
    # per u symbol: distribution of its contribution n_b H(x | u = b)
    parts = []
    for b in range(joint.shape[1]):
        nb = int(joint[:, b].sum())
        if nb == 0:
            continue
        law = _column_law(joint[:, b], P)
        acc = {}
        for counts, p in law.items():
            c = np.asarray(counts, dtype=float)
            v = float(xlogy(nb, nb) - xlogy(c, c).sum())
            k = round(v / H_TOL)
            acc[k] = (v, acc.get(k, (v, 0.0))[1] + p)
        parts.append(list(acc.values()))
    total = {0: (0.0, 1.0)}
    for part in parts:
        nxt = {}
        for v1, p1 in total.values():
            for v2, p2 in part:
                v = v1 + v2
                k = round(v / H_TOL)
                nxt[k] = (v, nxt.get(k, (v, 0.0))[1] + p1 * p2)
        total = nxt
    err = 0.0
    for v, p in total.values():
        if not _in_list(v / n, threshold, strict):
            err += p
    return min(err, 1.0)


# -- choosing the conditional type per y-type ----------------------------------

def _choose_channel(model: SourceModel, y_counts, nu: int, R: float, delta: float,
                    threshold: float, variant: str, budget: int, certify: bool,
                    cfg: SolverConfig) -> TypePlan:
    """TypePlan for one y-type (codewords at the certified bound).

    Candidates are the conditional types (u labels up to relabeling) whose
    lists fit; the error variant also needs I <= R and, when ``certify``,
    a certified cover within the budget."""
    n = sum(y_counts)
    ny = len(y_counts)
    P = model.p_x_given_y
    strict = variant == "error"
    q_y = np.asarray(y_counts, dtype=float) / n
    log_budget = math.log(budget)
    best = None
    for ct in tc.enumerate_cond_types(tc.TypeVector(y_counts), nu):
        joint = ct.array()
        if not _canonical_columns(joint):
            continue
        # lists must respect floor(e^{n delta}) for the induced u-type
        fit = list_thresholds(n, model.nx, tuple(int(v) for v in joint.sum(axis=0)),
                              float(delta))[0]
        if (threshold > fit + H_TOL) if strict else (threshold >= fit - H_TOL):
            continue
        jf = joint / n
        mi = float(mutual_info_yu(jf[None]))
        log_k = _log_stein_bound(y_counts, joint)
        if variant == "error":
            if mi > R + 1e-12:
                continue
            if certify and log_k > log_budget + 1e-12:
                continue
        ch = ct.cond_freqs()
        if variant == "error":
            obj = inner_min_E(q_y, ch, threshold, model, cfg).value
            key_obj = -obj
        else:
            obj = max(mi - R, 0.0) + inner_min_F(q_y, ch, threshold, model, cfg).value
            key_obj = obj
        key = (round(key_obj, 12) if math.isfinite(key_obj) else key_obj,)
        if best is not None and key > best[0]:
            continue
        err = type_error_prob(P, joint, threshold, strict)
        key = key + (round(err, 15), joint.tolist())
        if best is None or key < best[0]:
            h_y_u = float(_cond_entropy_counts(joint.T))
            best = (key, TypePlan(
                y_counts=tuple(y_counts), channel=tuple(tuple(int(v) for v in r) for r in joint),
                mutual_info=mi, cond_entropy_y_given_u=h_y_u, log_cover_bound=log_k,
                codewords=min(_ceil_exp(log_k), budget), objective=float(obj), error_prob=err))
    if best is None:
        raise ConstructionError(f"no admissible conditional type for y-type {tuple(y_counts)}; "
                                "increase epsilon")
    return best[1]


def _ceil_exp(v: float) -> int:
    if v > 700:
        return 2**62
    return max(1, math.ceil(math.exp(v) - 1e-9))


# -- construction -------------------------------------------------------------

def build_achievability_scheme(model: SourceModel, n: int, R: float, delta: float,
                               epsilon: float | None = None, variant: str = "error",
                               u_size: int | None = None, method: str = "auto",
                               cfg: SolverConfig | None = None) -> CodingScheme:
    """Build the list-coding scheme at blocklength n.

    ``epsilon`` defaults to the smallest slack that keeps every possible list
    within floor(e^{n delta}).  ``method`` is "explicit", "type" or "auto"
    (explicit whenever the pair space is small enough).
    """
    cfg = cfg or SolverConfig()
    if variant not in ("error", "strong_converse"):
        raise ValueError(f"unknown variant {variant!r}")
    if n < 1:
        raise ValueError("n must be positive")
    nx, ny = model.nx, model.ny
    nu = u_size or ny
    small = nx**n * ny**n <= 10**6 and ny**n <= 4096
    if method == "auto":
        method = "explicit" if small else "type"
    if method not in ("explicit", "type"):
        raise ValueError(f"unknown method {method!r}")
    if method == "type" and variant != "error":
        raise ConstructionError("type-level schemes support the error variant only")
    if method == "explicit" and nx**n * ny**n > EXPLICIT_PAIR_CAP:
        raise SizeCapError(f"|X|^n |Y|^n = {nx**n * ny**n} exceeds {EXPLICIT_PAIR_CAP}")
    work = (tc.num_types(n, ny) * tc.num_types(n, nu) ** ny
            + tc.num_types(n, nu) * tc.num_types(n, nx) ** nu)
    if work > TYPE_WORK_CAP:
        raise SizeCapError(f"{work} conditional types to examine exceeds {TYPE_WORK_CAP}")
    if epsilon is None:
        epsilon = default_epsilon(n, nx, nu, delta, variant)
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    threshold = delta - epsilon
    budget = message_budget(n, R)
    base = dict(n=n, nx=nx, ny=ny, nu=nu, rate_R=float(R), delta=float(delta),
                epsilon=float(epsilon), variant=variant, threshold=float(threshold),
                budget=budget)

    if method == "type":
        plans = []
        for t in tc.enumerate_types(n, ny):
            plan = _choose_channel(model, t.counts, nu, R, delta, threshold, variant, budget,
                                   True, cfg)
            plans.append(plan)
        for plan in plans:
            u_counts = tuple(int(v) for v in np.asarray(plan.channel).sum(axis=0))
            s, _ = list_thresholds(n, nx, u_counts, float(delta))
            if threshold > s + H_TOL:
                raise ConstructionError(
                    f"list for u-type {u_counts} would exceed floor(e^(n delta)) = "
                    f"{list_cap(n, delta)} (y-type {plan.y_counts}); increase epsilon")
        scheme = CodingScheme(kind="type", plans=tuple(plans), **base)
        _check_message_count(scheme)
        return scheme
    return _build_explicit(model, base, cfg)


def _check_message_count(scheme: CodingScheme):
    limit = math.ceil(math.exp(scheme.n * scheme.rate_R)) * (scheme.n + 1) ** scheme.ny
    if scheme.num_messages > limit:
        raise ConstructionError("message count exceeds the type-indexed budget")


def _build_explicit(model: SourceModel, base: dict, cfg: SolverConfig) -> CodingScheme:
    n, nx, ny, nu = base["n"], base["nx"], base["ny"], base["nu"]
    variant, threshold, budget = base["variant"], base["threshold"], base["budget"]
    strict = variant == "error"
    cap = list_cap(n, base["delta"])
    xs = tc.all_sequences(nx, n)
    encoder = np.zeros(ny**n, dtype=np.int64)
    lists: list[np.ndarray] = [np.zeros(0, dtype=np.int64)]
    words: list = [None]
    plans = []
    for t in tc.enumerate_types(n, ny):
        plan = _choose_channel(model, t.counts, nu, base["rate_R"], base["delta"], threshold,
                               variant, budget, False, cfg)
        joint = np.asarray(plan.channel)
        cover = tc.greedy_type_cover(t, tc.CondTypeMatrix(plan.channel))
        kept = cover.codewords[:budget]
        first = len(lists)
        y_index = np.array([tc.seq_index(y, ny) for y in cover.y_sequences], dtype=np.int64)
        if strict:
            # lexicographically smallest kept codeword covering y
            y_given_u = tc.CondTypeMatrix(tuple(tuple(int(v) for v in joint[:, u])
                                                for u in range(nu)))
            pos = {y: i for i, y in enumerate(cover.y_sequences)}
            for j in sorted(range(len(kept)), key=lambda j: kept[j], reverse=True):
                for y in tc.sequences_of_cond_type(kept[j], y_given_u):
                    encoder[y_index[pos[y]]] = first + j
        else:
            for j, mask in enumerate(cover.covered_sets[:budget]):
                for i in range(len(cover.y_sequences)):
                    if mask >> i & 1:
                        encoder[y_index[i]] = first + j
        for j, u in enumerate(kept):
            u_arr = np.asarray(u)
            counts = np.zeros((len(xs), nu, nx), dtype=np.int64)
            for i in range(n):
                counts[np.arange(len(xs)), u_arr[i], xs[:, i]] += 1
            members = np.flatnonzero(_in_list(_cond_entropy_counts(counts), threshold, strict))
            if len(members) > cap:
                u_counts = tuple(int(v) for v in np.bincount(u_arr, minlength=nu))
                raise ConstructionError(
                    f"list for codeword of u-type {u_counts} has {len(members)} > "
                    f"floor(e^(n delta)) = {cap} sequences (y-type {t.counts}); increase epsilon")
            lists.append(members)
            words.append(tuple(int(v) for v in u))
        frac = float(np.mean(encoder[y_index] > 0))
        if frac < min(1.0, budget / len(cover.codewords)) - 1e-12 or \
                len(cover.codewords) > cover.size_bound:
            raise RuntimeError("greedy cover violates its coverage guarantee")
        plans.append(TypePlan(
            y_counts=t.counts, channel=plan.channel, mutual_info=plan.mutual_info,
            cond_entropy_y_given_u=plan.cond_entropy_y_given_u,
            log_cover_bound=math.log(tc.cover_size_bound(n, ny, nu, cover.mutual_info)),
            codewords=len(kept), objective=plan.objective,
            error_prob=frac * plan.error_prob + (1.0 - frac)))
    encoder.setflags(write=False)
    for lst in lists:
        lst.setflags(write=False)
    scheme = CodingScheme(kind="explicit", plans=tuple(plans), encoder=encoder,
                          lists=tuple(lists), codewords=tuple(words), **base)
    _check_message_count(scheme)
    return scheme


# -- evaluation ---------------------------------------------------------------

def _log_pair_matrix(model: SourceModel, n: int) -> np.ndarray:
    """log P^n(x^n, y^n) as a matrix [x index, y index]."""
    nx, ny = model.nx, model.ny
    with np.errstate(divide="ignore"):
        lp = np.log(model.probs)
    xs, ys = tc.all_sequences(nx, n), tc.all_sequences(ny, n)
    out = np.zeros((len(xs), len(ys)))
    for i in range(n):
        out += lp[xs[:, i][:, None], ys[:, i][None, :]]
    return out


def _type_probs(model: SourceModel, n: int):
    """(y counts, P(T(Q_Y))) for every y-type."""
    py = model.p_y
    for t in tc.enumerate_types(n, model.ny):
        c = np.asarray(t.counts, dtype=float)
        if np.any((c > 0) & (py <= 0)):
            yield t.counts, 0.0
            continue
        yield t.counts, math.exp(tc.log_multinomial(c) + float(xlogy(c, py).sum()))


def exact_excess_prob(scheme: CodingScheme, model: SourceModel) -> SimReport:
    """P{loss > delta} for the given scheme, summed exactly."""
    n = scheme.n
    if (model.nx, model.ny) != (scheme.nx, scheme.ny):
        raise ValueError("model and scheme alphabets differ")
    if scheme.kind == "type":
        per_type, total = {}, 0.0
        P = model.p_x_given_y
        for counts, pt in _type_probs(model, n):
            plan = scheme.plan_for(counts)
            if pt == 0.0:
                continue
            err = 1.0 if plan is None else type_error_prob(
                P, np.asarray(plan.channel), scheme.threshold, scheme.strict)
            per_type[counts] = pt * err
            total += pt * err
        return SimReport(min(total, 1.0), method="exact-types", per_type=per_type)
    if scheme.nx**n * scheme.ny**n > EXPLICIT_PAIR_CAP:
        raise SizeCapError("pair space too large for exact evaluation")
    lp = _log_pair_matrix(model, n)
    mass = np.exp(lp)
    member = np.zeros(mass.shape, dtype=bool)
    cap = list_cap(n, scheme.delta)
    for m in range(1, len(scheme.lists)):
        lst = scheme.lists[m]
        if len(lst) == 0 or len(lst) > cap:
            continue
        cols = np.flatnonzero(scheme.encoder == m)
        member[np.ix_(lst, cols)] = True
    err_y = np.where(member, 0.0, mass).sum(axis=0)
    ys = tc.all_sequences(scheme.ny, n)
    counts = np.stack([(ys == a).sum(axis=1) for a in range(scheme.ny)], axis=1)
    per_type = {}
    for row, e in zip(map(tuple, counts.tolist()), err_y):
        per_type[row] = per_type.get(row, 0.0) + float(e)
    return SimReport(min(float(err_y.sum()), 1.0), method="exact", per_type=per_type)


def _philox(seed: int, stream: int, chunk: int) -> np.random.Generator:
    """Counter-based stream: key from the seed, counter block from (stream, chunk)."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    counter = np.array([0, 0, chunk, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def _sample_pairs(model: SourceModel, n: int, m: int, rng: np.random.Generator):
    cdf = np.cumsum(model.probs.ravel())
    cdf /= cdf[-1]
    flat = np.minimum(np.searchsorted(cdf, rng.random((m, n)), side="right"), cdf.size - 1)
    return flat // model.ny, flat % model.ny            # x, y


def _canonical_labels(scheme: CodingScheme):
    """Map y-type index -> table [a, rank] of u labels for the canonical codeword."""
    n, ny = scheme.n, scheme.ny
    radix = (n + 1) ** np.arange(ny)[::-1]
    size = (n + 1) ** ny
    labels = np.full((size, ny, n), -1, dtype=np.int64)
    valid = np.zeros(size, dtype=bool)
    for p in scheme.plans:
        idx = int(np.dot(p.y_counts, radix))
        valid[idx] = True
        for a, row in enumerate(p.channel):
            seq = np.repeat(np.arange(len(row)), row)
            labels[idx, a, :len(seq)] = seq
    return radix, labels, valid


def mc_excess_prob(scheme: CodingScheme, model: SourceModel, samples: int, seed: int = 0,
                   stream: int = 0, chunk: int = 1 << 16) -> SimReport:
    """Monte Carlo estimate of P{loss > delta} with its binomial standard error.

    Chunk c of the samples is drawn from the Philox stream keyed by
    (seed, stream) at counter block c, so results do not depend on how the
    chunks are scheduled."""
    if samples < 1:
        raise ValueError("samples must be positive")
    n, nx, ny, nu = scheme.n, scheme.nx, scheme.ny, scheme.nu
    cap = list_cap(n, scheme.delta)
    if scheme.kind == "explicit":
        table = np.zeros((len(scheme.lists), nx**n), dtype=bool)
        for m in range(1, len(scheme.lists)):
            if 0 < len(scheme.lists[m]) <= cap:
                table[m, scheme.lists[m]] = True
        xw, yw = nx ** np.arange(n)[::-1], ny ** np.arange(n)[::-1]
    else:
        radix, labels, valid = _canonical_labels(scheme)
    errors = 0
    done, c = 0, 0
    while done < samples:
        m = min(chunk, samples - done)
        x, y = _sample_pairs(model, n, m, _philox(seed, stream, c))
        if scheme.kind == "explicit":
            msg = scheme.encoder[y @ yw]
            ok = table[msg, x @ xw]
        else:
            counts = np.stack([(y == a).sum(axis=1) for a in range(ny)], axis=1)
            tid = counts @ radix
            rank = np.zeros_like(y)
            for a in range(ny):
                mask = y == a
                rank += np.where(mask, np.cumsum(mask, axis=1) - 1, 0)
            u = labels[tid[:, None], y, rank]
            cell = (np.arange(m)[:, None] * nu + u) * nx + x
            joint = np.bincount(cell.ravel(), minlength=m * nu * nx).reshape(m, nu, nx)
            h = _cond_entropy_counts(joint)
            ok = valid[tid] & _in_list(h, scheme.threshold, scheme.strict)
        errors += int(m - ok.sum())
        done += m
        c += 1
    p = errors / samples
    return SimReport(p, math.sqrt(p * (1 - p) / samples), samples, "monte-carlo")


def _pair_mass(model: SourceModel, n: int) -> np.ndarray:
    if model.nx**n > 10**6 or model.nx**n * model.ny**n > EXPLICIT_PAIR_CAP:
        raise SizeCapError("sequence space too large for the optimal decoder")
    return np.exp(_log_pair_matrix(model, n))


def optimal_lists(encoder, model: SourceModel, n: int, list_size: int,
                  mass: np.ndarray | None = None) -> dict:
    """Per message, the ``list_size`` x-indices of largest posterior mass
    (ties to the smaller index).  Returns {message: (indices, covered mass)}."""
    enc = np.asarray(encoder)
    mass = _pair_mass(model, n) if mass is None else mass
    out = {}
    for m in np.unique(enc):
        post = mass[:, enc == m].sum(axis=1)
        order = np.lexsort((np.arange(len(post)), -post))[:list_size]
        out[int(m)] = (np.sort(order), float(post[order].sum()))
    return out


def optimal_decoder_excess_prob(encoder, model: SourceModel, n: int, delta: float,
                                mass: np.ndarray | None = None) -> SimReport:
    """Smallest P{loss > delta} over decoders for a fixed encoder table."""
    enc = np.asarray(encoder)
    if enc.shape != (model.ny**n,):
        raise ValueError("encoder must list a message for every y^n")
    lists = optimal_lists(enc, model, n, list_cap(n, delta), mass)
    covered = sum(v[1] for v in lists.values())
    return SimReport(max(0.0, 1.0 - covered), method="optimal-decoder")


def brute_force_optimal_pe(model: SourceModel, n: int, R: float, delta: float,
                           messages: int | None = None) -> float:
    """min over encoders (set partitions of Y^n into at most floor(e^{nR})
    cells) of the optimal-decoder excess probability."""
    m_cap = messages if messages is not None else max(_floor_exp(n * R), 1)
    if model.ny**n > 8 or m_cap > 4:
        raise SizeCapError("brute force needs |Y|^n <= 8 and at most 4 messages")
    mass = _pair_mass(model, n)
    best = math.inf
    for part in _set_partitions(model.ny**n, m_cap):
        best = min(best, optimal_decoder_excess_prob(np.asarray(part), model, n, delta, mass).p_e)
    return best


# -- exponent slope -----------------------------------------------------------

@dataclass
class SlopeResult:
    slope: float
    stderr: float
    band: tuple[float, float]               # slope +- 1.96 stderr
    rows: list                              # (n, p_e, stderr, -log(p_e)/n, exact p_e)
    dropped: list                           # n with no observed errors


def empirical_exponent_slope(model: SourceModel, R: float, delta: float, epsilon,
                             n_list, samples: int, seed: int = 0, u_size: int | None = None,
                             exact: bool = True, cfg: SolverConfig | None = None) -> SlopeResult:
    """Least-squares slope of -log p_e(n) against n for the error-variant scheme,
    with p_e estimated by Monte Carlo; the band propagates the binomial error
    (var log p ~ (stderr / p)^2)."""
    ns, ys, vs, rows, dropped = [], [], [], [], []
    for n in n_list:
        scheme = build_achievability_scheme(model, n, R, delta, epsilon, "error", u_size,
                                            "type", cfg)
        rep = mc_excess_prob(scheme, model, samples, seed, stream=n)
        ex = exact_excess_prob(scheme, model).p_e if exact else math.nan
        if rep.p_e == 0.0:
            dropped.append(n)
            rows.append((n, 0.0, 0.0, math.inf, ex))
            continue
        ns.append(n)
        ys.append(-math.log(rep.p_e))
        vs.append((rep.stderr / rep.p_e) ** 2 if rep.p_e < 1 else (1.0 / samples))
        rows.append((n, rep.p_e, rep.stderr, -math.log(rep.p_e) / n, ex))
    if len(ns) < 2:
        return SlopeResult(math.nan, math.nan, (math.nan, math.nan), rows, dropped)
    x = np.asarray(ns, dtype=float)
    w = (x - x.mean()) / np.sum((x - x.mean()) ** 2)
    slope = float(w @ np.asarray(ys))
    se = float(math.sqrt(np.sum(w**2 * np.asarray(vs))))
    return SlopeResult(slope, se, (slope - 1.96 * se, slope + 1.96 * se), rows, dropped)


# -- single-letter identity ---------------------------------------------------

@dataclass
class IdentityReport:
    lhs: float
    rhs: float
    diff: float
    divergence: float                        # D(Q_{X_J Y_J U_J J} || P Q_{U_J J|Y_J})
    mutual_info: float                       # I(Y_J; U_J, J)
    message_entropy: float                   # H(M) / n
    rate: float
    bound_plain: bool                        # lhs >= divergence
    bound_rate: bool                         # lhs >= divergence + |I - rate|^+


def verify_single_letter_identity(q_joint_n, encoder, model: SourceModel, n: int | None = None,
                                  rate: float | None = None, tol: float = 1e-10) -> IdentityReport:
    """Evaluate both sides of the time-sharing identity for an arbitrary Q on
    X^n x Y^n (array [x index, y index]) and encoder table on Y^n.

    The auxiliary at time i is U_i = (M, X^{i-1}, Y^{i-1}), enumerated over
    the histories that occur; (U_J, J) is treated as one auxiliary symbol.
    ``rate`` defaults to log(#messages)/n, which dominates H(M)/n.
    """
    q = np.asarray(q_joint_n, dtype=float)
    nx, ny = model.nx, model.ny
    if n is None:
        n = round(math.log(q.shape[0]) / math.log(nx)) if nx > 1 else \
            round(math.log(q.shape[1]) / math.log(ny))
    if q.shape != (nx**n, ny**n):
        raise ValueError("q_joint_n must have shape (|X|^n, |Y|^n)")
    if q.size > 10**6:
        raise SizeCapError("pair space too large for the identity check")
    if abs(q.sum() - 1) > 1e-9 or np.any(q < 0):
        raise ValueError("q_joint_n must be a pmf")
    enc = np.asarray(encoder)
    labels, msg = np.unique(enc, return_inverse=True)
    n_msg = len(labels)
    lp = _log_pair_matrix(model, n)
    if np.any((q > 0) & ~np.isfinite(lp)):
        lhs = math.inf
    else:
        lhs = float(np.sum(xlogy(q, q)) - np.sum(q * np.where(q > 0, lp, 0.0))) / n
    qm = np.bincount(msg, weights=q.sum(axis=0), minlength=n_msg)
    h_m = float(-np.sum(xlogy(qm, qm))) / n

    xs, ys = tc.all_sequences(nx, n), tc.all_sequences(ny, n)
    xi, yi = np.nonzero(q > 0)
    w = q[xi, yi]
    keys, xcol, ycol, mass = [], [], [], []
    for i in range(n):
        px = xi // nx ** (n - i)                     # index of x^{i-1}
        pyy = yi // ny ** (n - i)
        key = ((i * n_msg + msg[yi]) * nx**i + px) * ny**i + pyy
        keys.append(key)
        xcol.append(xs[xi, i])
        ycol.append(ys[yi, i])
        mass.append(w / n)
    keys = np.concatenate(keys)
    _, v = np.unique(keys, return_inverse=True)
    joint = np.zeros((nx, ny, v.max() + 1))
    np.add.at(joint, (np.concatenate(xcol), np.concatenate(ycol), v), np.concatenate(mass))
    div = joint_divergence(joint, model.probs)
    mi = mutual_info_yu(joint)
    rhs = div + mi - h_m
    rate = math.log(n_msg) / n if rate is None else rate
    return IdentityReport(
        lhs=lhs, rhs=rhs, diff=abs(lhs - rhs), divergence=div, mutual_info=mi,
        message_entropy=h_m, rate=rate,
        bound_plain=lhs >= div - tol, bound_rate=lhs >= div + max(mi - rate, 0.0) - tol)
