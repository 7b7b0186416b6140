"""Method of types at finite blocklength.

Types are stored as tuples of Python ints, so class sizes are exact at any n.
Sequences over an alphabet of size k are tuples of symbols ``0..k-1``; when a
sequence needs an integer index it is read as a base-k numeral with the first
symbol most significant, which makes index order equal to lexicographic order.

Lexicographic order for *types* follows the convention ``(n,0,..) first``,
i.e. the first count runs from n down to 0.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.special import logsumexp, rel_entr

from .prob import SizeCapError, _arr


@dataclass(frozen=True)
class TypeVector:
    counts: tuple[int, ...]

    def __post_init__(self):
        c = tuple(int(v) for v in self.counts)
        if any(v < 0 for v in c):
            raise ValueError("negative count in type")
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def k(self) -> int:
        return len(self.counts)

    def freqs(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / max(self.n, 1)


@dataclass(frozen=True)
class CondTypeMatrix:
    """Counts ``counts[a][b]`` of output symbol b at positions where the base is a."""

    counts: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        c = tuple(tuple(int(v) for v in row) for row in self.counts)
        if len({len(r) for r in c}) > 1:
            raise ValueError("ragged conditional type")
        if any(v < 0 for r in c for v in r):
            raise ValueError("negative count in conditional type")
        object.__setattr__(self, "counts", c)

    @property
    def base(self) -> TypeVector:
        return TypeVector(tuple(sum(r) for r in self.counts))

    @property
    def out(self) -> TypeVector:
        return TypeVector(tuple(sum(col) for col in zip(*self.counts)))

    def array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)

    def cond_freqs(self) -> np.ndarray:
        a = self.array().astype(float)
        s = a.sum(axis=1, keepdims=True)
        return np.divide(a, s, out=np.full_like(a, 1.0 / a.shape[1]), where=s > 0)


@dataclass(frozen=True)
class JointType3:
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 3 or np.any(c < 0):
            raise ValueError("JointType3 needs a nonnegative 3-d count array")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return int(self.counts.sum())


# -- construction ------------------------------------------------------------

def type_of(seq: Sequence[int], k: int | None = None) -> TypeVector:
    s = list(seq)
    k = k if k is not None else (max(s) + 1 if s else 1)
    counts = [0] * k
    for v in s:
        if not 0 <= v < k:
            raise ValueError(f"symbol {v} outside alphabet of size {k}")
        counts[v] += 1
    return TypeVector(tuple(counts))


def cond_type_of(seq_a: Sequence[int], seq_b: Sequence[int],
                 ka: int | None = None, kb: int | None = None) -> CondTypeMatrix:
    a, b = list(seq_a), list(seq_b)
    if len(a) != len(b):
        raise ValueError("sequences differ in length")
    ka = ka if ka is not None else (max(a) + 1 if a else 1)
    kb = kb if kb is not None else (max(b) + 1 if b else 1)
    counts = [[0] * kb for _ in range(ka)]
    for s, t in zip(a, b):
        if not (0 <= s < ka and 0 <= t < kb):
            raise ValueError("symbol outside alphabet")
        counts[s][t] += 1
    return CondTypeMatrix(tuple(tuple(r) for r in counts))


# -- counting ----------------------------------------------------------------

def multinomial(counts: Sequence[int]) -> int:
    total, out = 0, 1
    for c in counts:
        total += c
        out *= math.comb(total, c)
    return out


def log_multinomial(counts) -> float:
    c = np.asarray(counts, dtype=float)
    return float(math.lgamma(c.sum() + 1) - sum(math.lgamma(v + 1) for v in c.ravel()))


def type_class_size(t: TypeVector) -> int:
    return multinomial(t.counts)


def cond_type_class_size(c: CondTypeMatrix) -> int:
    out = 1
    for row in c.counts:
        out *= multinomial(row)
    return out


def _compositions(n: int, k: int) -> Iterator[tuple[int, ...]]:
    if k == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _compositions(n - first, k - 1):
            yield (first,) + rest


def enumerate_types(n: int, k: int) -> Iterator[TypeVector]:
    if n < 0 or k < 1:
        raise ValueError("need n >= 0 and k >= 1")
    for c in _compositions(n, k):
        yield TypeVector(c)


def enumerate_cond_types(base: TypeVector, out_k: int) -> Iterator[CondTypeMatrix]:
    rows = [list(_compositions(b, out_k)) for b in base.counts]
    for combo in itertools.product(*rows):
        yield CondTypeMatrix(combo)


def num_types(n: int, k: int) -> int:
    return math.comb(n + k - 1, k - 1)


def seq_log_prob(t, model) -> float:
    """log-probability of one sequence of (conditional) type ``t``.

    ``t`` may be a TypeVector with a Pmf model or a CondTypeMatrix with a
    CondPmf model whose rows are indexed by the base symbol.
    """
    if isinstance(t, CondTypeMatrix):
        counts = t.array().astype(float)
    else:
        counts = np.asarray(t.counts, dtype=float)
    p = _arr(model)
    if p.shape != counts.shape:
        raise ValueError("type and model alphabets differ")
    if np.any((counts > 0) & (p <= 0)):
        return -math.inf
    mask = counts > 0
    return float(np.sum(counts[mask] * np.log(p[mask])))


# -- sequences of a type ------------------------------------------------------

def sequences_of_type(t: TypeVector) -> Iterator[tuple[int, ...]]:
    """All arrangements of the multiset in lexicographic order."""
    counts = list(t.counts)
    n = sum(counts)
    seq = [0] * n

    def rec(pos):
        if pos == n:
            yield tuple(seq)
            return
        for s in range(len(counts)):
            if counts[s]:
                counts[s] -= 1
                seq[pos] = s
                yield from rec(pos + 1)
                counts[s] += 1

    yield from rec(0)


def sequences_of_cond_type(base_seq: Sequence[int], c: CondTypeMatrix) -> Iterator[tuple[int, ...]]:
    """All b-sequences whose conditional type given ``base_seq`` equals ``c``."""
    base_seq = list(base_seq)
    n = len(base_seq)
    positions = [[i for i, a in enumerate(base_seq) if a == sym] for sym in range(len(c.counts))]
    parts = [list(sequences_of_type(TypeVector(row))) for row in c.counts]
    for combo in itertools.product(*parts):
        out = [0] * n
        for pos_list, seg in zip(positions, combo):
            for p, v in zip(pos_list, seg):
                out[p] = v
        yield tuple(out)


def seq_index(seq: Sequence[int], k: int) -> int:
    idx = 0
    for s in seq:
        idx = idx * k + s
    return idx


def index_seq(idx: int, k: int, n: int) -> tuple[int, ...]:
    out = [0] * n
    for i in range(n - 1, -1, -1):
        idx, out[i] = divmod(idx, k)
    return tuple(out)


def all_sequences(k: int, n: int) -> np.ndarray:
    """Array of shape (k**n, n); row i is the sequence with index i."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices((k,) * n).reshape(n, -1).T
    return grids.astype(np.int64)


# -- intersections of conditional type classes -------------------------------

def _consistent_tables(pair: np.ndarray, out_given_a: np.ndarray | None,
                       out_given_u: np.ndarray) -> Iterator[np.ndarray]:
    """Integer N[a, b, u] with N.sum(b) = pair[a, u], N.sum(a) = out_given_u[u, b]
    and, when given, N.sum(u) = out_given_a[a, b]."""
    na, nu = pair.shape
    nb = out_given_u.shape[1]
    cells = [(a, u) for a in range(na) for u in range(nu)]
    table = np.zeros((na, nb, nu), dtype=np.int64)
    rem_u = out_given_u.astype(np.int64).copy()
    rem_a = None if out_given_a is None else out_given_a.astype(np.int64).copy()

    def rec(ci):
        if ci == len(cells):
            if np.all(rem_u == 0) and (rem_a is None or np.all(rem_a == 0)):
                yield table.copy()
            return
        a, u = cells[ci]
        for comp in _compositions(int(pair[a, u]), nb):
            ok = all(comp[b] <= rem_u[u, b] for b in range(nb))
            if ok and rem_a is not None:
                ok = all(comp[b] <= rem_a[a, b] for b in range(nb))
            if not ok:
                continue
            for b in range(nb):
                table[a, b, u] = comp[b]
                rem_u[u, b] -= comp[b]
                if rem_a is not None:
                    rem_a[a, b] -= comp[b]
            yield from rec(ci + 1)
            for b in range(nb):
                rem_u[u, b] += comp[b]
                if rem_a is not None:
                    rem_a[a, b] += comp[b]
                table[a, b, u] = 0

    yield from rec(0)


def _cell_log_count(table: np.ndarray) -> float:
    """log of prod over (a,u) cells of multinomial(table[a, :, u])."""
    total = 0.0
    na, _, nu = table.shape
    for a in range(na):
        for u in range(nu):
            total += log_multinomial(table[a, :, u])
    return total


def _cell_exact_count(table: np.ndarray) -> int:
    out = 1
    na, _, nu = table.shape
    for a in range(na):
        for u in range(nu):
            out *= multinomial([int(v) for v in table[a, :, u]])
    return out


def intersection_class_log_size(pair_counts, out_given_a: CondTypeMatrix,
                                out_given_u: CondTypeMatrix):
    """log |T(Q_{B|A}|a) ∩ T(Q_{B|U}|u)| for fixed sequences a, u.

    ``pair_counts[a_sym][u_sym]`` is the joint type of the fixed pair (a, u).
    Returns ``(log_size, witness)`` where the witness is the consistent
    JointType3 (indexed [a, b, u]) contributing the largest term, or
    ``(-inf, None)`` when the intersection is empty.
    """
    pair = np.asarray(pair_counts, dtype=np.int64)
    qa, qu = out_given_a.array(), out_given_u.array()
    if (tuple(pair.sum(axis=1)) != tuple(qa.sum(axis=1))
            or tuple(pair.sum(axis=0)) != tuple(qu.sum(axis=1))
            or qa.shape[1] != qu.shape[1]):
        return -math.inf, None
    total = 0
    best, best_count = None, -1
    for table in _consistent_tables(pair, qa, qu):
        cnt = _cell_exact_count(table)
        total += cnt
        if cnt > best_count:
            best, best_count = table, cnt
    if total == 0:
        return -math.inf, None
    return math.log(total), JointType3(best)


def _single_letter_exponent(pair: np.ndarray, target_bu: np.ndarray, channel: np.ndarray,
                            tol: float = 1e-13, max_iter: int = 20000) -> float:
    """min over Q_{B|AU} of sum_{a,u} pair(a,u) D(Q(.|a,u) || W(.|a)) subject to
    sum_a pair(a,u) Q(b|a,u) = target(b,u); pair and target are frequencies.

    Iterative proportional fitting on the table T[a, b, u] started from
    pair(a,u) W(b|a): it converges to the I-projection onto both margins.
    """
    t = pair[:, None, :] * channel[:, :, None]
    ref = t.copy()
    for _ in range(max_iter):
        bu = t.sum(axis=0)
        t = t * np.divide(target_bu, bu, out=np.zeros_like(bu), where=bu > 0)[None]
        au = t.sum(axis=1)
        t = t * np.divide(pair, au, out=np.zeros_like(au), where=au > 0)[:, None, :]
        err = np.abs(t.sum(axis=0) - target_bu).max()
        if err < tol:
            break
    if np.abs(t.sum(axis=0) - target_bu).max() > 1e-7 or np.abs(t.sum(axis=1) - pair).max() > 1e-7:
        return math.inf
    return float(rel_entr(t, ref).sum())


def cond_class_log_prob(class_type: CondTypeMatrix, pair_counts, channel):
    """Exact log W^n[T(Q_{B|U}|u) | a] for a memoryless channel W = P_{B|A}.

    ``pair_counts[a_sym][u_sym]`` is the joint type of the fixed input sequence a
    and reference sequence u; ``class_type`` is the conditional type of b given
    u (rows indexed by u symbols).  Returns ``(log_prob, single_letter_min)``
    where the second entry is the continuous minimum of
    ``D(Q_{B|AU} || W | pair type)`` over joint laws with the same two margins,
    the exponent the exact value approaches.
    """
    pair = np.asarray(pair_counts, dtype=np.int64)
    q = class_type.array()
    w = _arr(channel)
    n = int(pair.sum())
    if tuple(pair.sum(axis=0)) != tuple(q.sum(axis=1)):
        return -math.inf, math.inf
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    terms = []
    for table in _consistent_tables(pair, None, q):
        used = table.sum(axis=2)
        if np.any((used > 0) & (w <= 0)):
            continue
        lp = float(np.sum(used[used > 0] * logw[used > 0]))
        terms.append(_cell_log_count(table) + lp)
    exact = float(logsumexp(terms)) if terms else -math.inf
    target = q.T.astype(float) / n
    single = _single_letter_exponent(pair.astype(float) / n, target, w)
    return exact, single


def lemma4_slack(na: int, nb: int, nu: int, n: int) -> float:
    return (na * nb * nu + 2) * math.log(n + 1) / n


# -- type covering -----------------------------------------------------------

@dataclass(frozen=True)
class TypeCover:
    codewords: tuple[tuple[int, ...], ...]
    mutual_info: float
    size_bound: float
    covered_sets: tuple[int, ...]          # bitmask over T(Q_Y) newly covered by each pick
    y_sequences: tuple[tuple[int, ...], ...]


def cover_size_bound(n: int, ny: int, nu: int, mutual_info: float) -> float:
    c = ny * nu + ny + nu
    return (n + 1) ** c * math.exp(n * mutual_info)


def _type_mutual_info(joint_counts: np.ndarray) -> float:
    j = joint_counts.astype(float) / joint_counts.sum()
    py, pu = j.sum(axis=1), j.sum(axis=0)
    return float(rel_entr(j, np.outer(py, pu)).sum())


def greedy_type_cover(q_y: TypeVector, q_u_given_y: CondTypeMatrix,
                      max_sequences: int = 10**6) -> TypeCover:
    """Greedy maximum-coverage cover of T(Q_Y) by u-sequences from T(Q_U).

    A y-sequence is covered by u when their joint type is Q_Y x Q_{U|Y}.  At
    each step the candidate covering the most uncovered y-sequences is
    chosen, ties going to the lexicographically smallest u.
    """
    if q_u_given_y.base != q_y:
        raise ValueError("conditional type does not sit on q_y")
    if type_class_size(q_y) > max_sequences:
        raise SizeCapError("type class too large for explicit covering")
    joint = q_u_given_y.array()                     # [y, u]
    ny, nu = joint.shape
    ys = list(sequences_of_type(q_y))
    index = {s: i for i, s in enumerate(ys)}
    # conditional type of y given u is the transpose of the joint counts
    y_given_u = CondTypeMatrix(tuple(tuple(int(v) for v in joint[:, u]) for u in range(nu)))
    cands = list(sequences_of_type(y_given_u.base))
    masks = []
    for u in cands:
        m = 0
        for y in sequences_of_cond_type(u, y_given_u):
            m |= 1 << index[y]
        masks.append(m)
    uncovered = (1 << len(ys)) - 1
    heap = [(-m.bit_count(), i) for i, m in enumerate(masks)]
    heapq.heapify(heap)
    picks, newly = [], []
    while uncovered:
        neg, i = heapq.heappop(heap)
        gain = (masks[i] & uncovered).bit_count()
        if gain == 0:
            continue
        if not heap or (-gain, i) <= heap[0]:
            picks.append(i)
            newly.append(masks[i] & uncovered)
            uncovered &= ~masks[i]
        else:
            heapq.heappush(heap, (-gain, i))
    mi = _type_mutual_info(joint)
    return TypeCover(
        codewords=tuple(cands[i] for i in picks),
        mutual_info=mi,
        size_bound=cover_size_bound(q_y.n, ny, nu, mi),
        covered_sets=tuple(newly),
        y_sequences=tuple(ys),
    )
