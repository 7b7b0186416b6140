import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ibexp import typeclasses as tc
from ibexp.prob import SizeCapError
from ibexp.typeclasses import CondTypeMatrix, TypeVector


def test_type_of_examples():
    assert tc.type_of((0, 1, 0, 1), 2).counts == (2, 2)
    c = tc.cond_type_of((0, 0, 1, 1), (0, 1, 1, 1), 2, 2)
    assert c.counts == ((1, 1), (0, 2))
    with pytest.raises(ValueError):
        tc.cond_type_of((0, 1), (0,))
    with pytest.raises(ValueError):
        tc.type_of((0, 3), 2)


@given(st.lists(st.integers(0, 3), min_size=1, max_size=12), st.randoms())
def test_type_permutation_invariant(seq, rnd):
    perm = list(seq)
    rnd.shuffle(perm)
    assert tc.type_of(seq, 4) == tc.type_of(perm, 4)


def test_class_size_examples():
    assert tc.type_class_size(TypeVector((2, 2))) == 6
    assert tc.type_class_size(TypeVector((6, 0))) == 1
    assert tc.type_class_size(TypeVector((4, 4, 4))) == math.factorial(12) // math.factorial(4) ** 3
    assert tc.type_class_size(TypeVector((4, 4, 4))) == 34650
    c = CondTypeMatrix(((1, 1), (0, 2)))
    assert tc.cond_type_class_size(c) == 2


def test_class_size_exact_at_large_n():
    big = tc.type_class_size(TypeVector((20, 20)))
    assert big == math.comb(40, 20)


def test_enumeration_examples():
    assert [t.counts for t in tc.enumerate_types(2, 2)] == [(2, 0), (1, 1), (0, 2)]
    assert len(list(tc.enumerate_types(3, 3))) == math.comb(5, 2) == 10
    assert len(list(tc.enumerate_cond_types(TypeVector((2, 2)), 2))) == 9


@given(st.integers(1, 9), st.integers(1, 4))
def test_enumeration_exhaustive_sorted(n, k):
    ts = [t.counts for t in tc.enumerate_types(n, k)]
    assert len(ts) == len(set(ts)) == math.comb(n + k - 1, k - 1) == tc.num_types(n, k)
    assert all(sum(t) == n for t in ts)
    assert ts == sorted(ts, reverse=True)


def test_seq_log_prob_examples():
    assert tc.seq_log_prob(TypeVector((2, 2)), [0.5, 0.5]) == pytest.approx(4 * math.log(0.5))
    assert tc.seq_log_prob(TypeVector((1, 0)), [0.0, 1.0]) == -math.inf
    v = 3 * math.log(0.75) + math.log(0.25)
    assert tc.seq_log_prob(TypeVector((3, 1)), [0.75, 0.25]) == pytest.approx(v, abs=1e-14)
    assert v == pytest.approx(-2.249341, abs=1e-6)
    w = np.array([[0.9, 0.1], [0.2, 0.8]])
    c = CondTypeMatrix(((2, 1), (0, 3)))
    assert tc.seq_log_prob(c, w) == pytest.approx(2 * math.log(0.9) + math.log(0.1) + 3 * math.log(0.8))


@pytest.mark.parametrize("probs", [(Fraction(1, 3), Fraction(2, 3)),
                                   (Fraction(1, 7), Fraction(2, 7), Fraction(4, 7))])
def test_type_probabilities_sum_to_one_exactly(probs):
    for n in range(1, 21):
        total = Fraction(0)
        for t in tc.enumerate_types(n, len(probs)):
            term = Fraction(tc.type_class_size(t))
            for p, c in zip(probs, t.counts):
                term *= p**c
            total += term
        assert total == 1


def test_counting_bounds():
    for k in (2, 3):
        for n in range(1, 41):
            for t in tc.enumerate_types(n, k):
                h = n * sum(-c / n * math.log(c / n) for c in t.counts if c)
                log_size = math.log(tc.type_class_size(t))
                assert log_size <= h + 1e-9
                assert log_size >= h - k * math.log(n + 1) - 1e-9


def test_sequences_of_type_and_index():
    seqs = list(tc.sequences_of_type(TypeVector((2, 1))))
    assert seqs == [(0, 0, 1), (0, 1, 0), (1, 0, 0)]
    for idx in range(27):
        s = tc.index_seq(idx, 3, 3)
        assert tc.seq_index(s, 3) == idx
    allseq = tc.all_sequences(3, 3)
    assert [tc.seq_index(r, 3) for r in allseq.tolist()] == list(range(27))


# -- intersections -------------------------------------------------------------

def _brute_intersection(a, u, c_a, c_u, kb=2):
    """Count b with the given conditional types w.r.t. a and u, and the largest
    empirical H(B|A,U) among them."""
    n = len(a)
    count, best_h = 0, -math.inf
    for b in itertools.product(range(kb), repeat=n):
        if tc.cond_type_of(a, b, 2, kb) != c_a or tc.cond_type_of(u, b, 2, kb) != c_u:
            continue
        count += 1
        t = np.zeros((2, kb, 2))
        for s, v, w in zip(a, b, u):
            t[s, v, w] += 1
        au = t.sum(axis=1, keepdims=True)
        h = -np.sum(np.where(t > 0, t * np.log(np.where(t > 0, t, 1) / np.where(au > 0, au, 1)), 0)) / n
        best_h = max(best_h, h)
    return count, best_h


def test_intersection_identical_classes():
    a = (0, 0, 1, 1, 1, 0)
    copy = tc.cond_type_of(a, a, 2, 2)
    pair = tc.cond_type_of(a, a, 2, 2).counts
    log_size, witness = tc.intersection_class_log_size(pair, copy, copy)
    assert log_size == pytest.approx(math.log(tc.cond_type_class_size(copy)), abs=1e-12)
    assert witness.n == len(a)


def test_intersection_incompatible_is_empty():
    pair = ((2, 1), (0, 1))
    q_a = CondTypeMatrix(((1, 1), (1, 0)))           # rows sum to (2, 1), not (3, 1)
    q_u = CondTypeMatrix(((1, 1), (1, 1)))
    assert tc.intersection_class_log_size(pair, q_a, q_u) == (-math.inf, None)


@pytest.mark.parametrize("seed", range(6))
def test_intersection_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = 8
    a, u, b0 = (tuple(rng.integers(0, 2, n).tolist()) for _ in range(3))
    c_a, c_u = tc.cond_type_of(a, b0, 2, 2), tc.cond_type_of(u, b0, 2, 2)
    pair = tc.cond_type_of(a, u, 2, 2).counts
    log_size, witness = tc.intersection_class_log_size(pair, c_a, c_u)
    count, best_h = _brute_intersection(a, u, c_a, c_u)
    assert log_size == pytest.approx(math.log(count), abs=1e-12)
    # max-entropy characterization with polynomial slack
    slack = 8 * math.log(n + 1) / n
    assert abs(log_size / n - best_h) <= slack
    assert witness.counts.sum() == n


def test_intersection_max_entropy_slack_sweep():
    rng = np.random.default_rng(99)
    for n in range(4, 17, 3):
        for _ in range(3):
            a, u, b0 = (tuple(rng.integers(0, 2, n).tolist()) for _ in range(3))
            c_a, c_u = tc.cond_type_of(a, b0, 2, 2), tc.cond_type_of(u, b0, 2, 2)
            pair = tc.cond_type_of(a, u, 2, 2).counts
            log_size, w = tc.intersection_class_log_size(pair, c_a, c_u)
            t = w.counts.astype(float)
            au = t.sum(axis=1, keepdims=True)
            h = -np.sum(np.where(t > 0, t * np.log(np.where(t > 0, t, 1) / np.where(au > 0, au, 1)), 0)) / n
            assert abs(log_size / n - h) <= 8 * math.log(n + 1) / n


def test_cond_class_prob_deterministic_channel():
    a = (0, 1, 1, 0, 1)
    u = a
    pair = tc.cond_type_of(a, u, 2, 2).counts
    cls = tc.cond_type_of(u, a, 2, 2)
    exact, single = tc.cond_class_log_prob(cls, pair, np.eye(2))
    assert exact == pytest.approx(0.0, abs=1e-12)
    assert single == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_cond_class_prob_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = 10
    w = rng.dirichlet(np.ones(2), size=2)
    a, u, b0 = (tuple(rng.integers(0, 2, n).tolist()) for _ in range(3))
    cls = tc.cond_type_of(u, b0, 2, 2)
    total = 0.0
    for b in itertools.product(range(2), repeat=n):
        if tc.cond_type_of(u, b, 2, 2) == cls:
            total += math.prod(w[s, v] for s, v in zip(a, b))
    exact, single = tc.cond_class_log_prob(cls, tc.cond_type_of(a, u, 2, 2).counts, w)
    assert exact == pytest.approx(math.log(total), abs=1e-10)
    assert abs(-exact / n - single) <= tc.lemma4_slack(2, 2, 2, n)


# -- covering ------------------------------------------------------------------

def _covers(y, u, joint):
    return tc.cond_type_of(y, u, joint.shape[0], joint.shape[1]).counts == tuple(
        tuple(int(v) for v in r) for r in joint)


def test_cover_constant_column():
    cover = tc.greedy_type_cover(TypeVector((3, 3)), CondTypeMatrix(((3, 0), (3, 0))))
    assert cover.codewords == ((0,) * 6,)
    assert cover.mutual_info == pytest.approx(0.0, abs=1e-15)


def test_cover_copy_is_whole_class():
    t = TypeVector((2, 3))
    cover = tc.greedy_type_cover(t, CondTypeMatrix(((2, 0), (0, 3))))
    assert sorted(cover.codewords) == sorted(tc.sequences_of_type(t))


def test_cover_n8_bsc_like():
    t = TypeVector((4, 4))
    joint = np.array([[3, 1], [1, 3]])
    cover = tc.greedy_type_cover(t, CondTypeMatrix(((3, 1), (1, 3))))
    ys = list(tc.sequences_of_type(t))
    assert len(ys) == 70
    for y in ys:
        assert any(_covers(y, u, joint) for u in cover.codewords)
    assert len(cover.codewords) <= cover.size_bound
    assert all(tc.type_of(u, 2).counts == (4, 4) for u in cover.codewords)
    # greedy picks are disjoint and exhaust the class
    union = 0
    for m in cover.covered_sets:
        assert union & m == 0
        union |= m
    assert union == (1 << 70) - 1


@given(st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_cover_is_complete(n, seed):
    rng = np.random.default_rng(seed)
    y = tuple(rng.integers(0, 2, n).tolist())
    u = tuple(rng.integers(0, 3, n).tolist())
    joint = tc.cond_type_of(y, u, 2, 3)
    cover = tc.greedy_type_cover(tc.type_of(y, 2), joint)
    arr = joint.array()
    for ys in tc.sequences_of_type(tc.type_of(y, 2)):
        assert any(_covers(ys, c, arr) for c in cover.codewords)
    assert len(cover.codewords) <= cover.size_bound


def test_cover_size_cap():
    with pytest.raises(SizeCapError):
        tc.greedy_type_cover(TypeVector((5, 5)), CondTypeMatrix(((5, 0), (0, 5))), max_sequences=100)
