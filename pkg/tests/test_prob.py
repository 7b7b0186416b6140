import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ibexp import prob
from ibexp.prob import (CondPmf, DistributionError, JointXY, JointXYU, Pmf,
                        cond_entropy_x_given_u, cond_mutual_info_xu_given_y, entropy,
                        expected_log_rank, joint_divergence, joint_divergence_decomposed, kl,
                        mutual_info_yu)

from conftest import random_joint

weights = arrays(float, st.integers(2, 64), elements=st.floats(0.0, 1.0)).filter(
    lambda a: a.sum() > 1e-3)


def _pmf(w):
    return np.asarray(w) / np.sum(w)


def test_entropy_examples():
    assert entropy([0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)
    assert entropy([1.0, 0.0, 0.0]) == 0.0
    h = -0.1 * math.log(0.1) - 0.9 * math.log(0.9)
    assert entropy(Pmf([0.1, 0.9])) == pytest.approx(h, abs=1e-15)
    assert h == pytest.approx(0.325083, abs=1e-6)


def test_kl_examples():
    p = Pmf([0.3, 0.7])
    assert kl(p, p) == 0.0
    direct = 0.5 * math.log(2) + 0.5 * math.log(2 / 3)
    assert kl([0.5, 0.5], [0.25, 0.75]) == pytest.approx(direct, abs=1e-15)
    assert direct == pytest.approx(0.143841, abs=1e-6)
    assert kl([1.0, 0.0], [0.0, 1.0]) == math.inf


def test_kl_alphabet_mismatch():
    with pytest.raises(DistributionError):
        kl([0.5, 0.5], [0.2, 0.3, 0.5])


def test_construction_renormalizes_small_deviation():
    p = Pmf([0.5, 0.5 + 5e-10])
    assert abs(p.probs.sum() - 1) <= 1e-12
    with pytest.raises(DistributionError):
        Pmf([0.5, 0.6])
    with pytest.raises(DistributionError):
        Pmf([1.1, -0.1])
    with pytest.raises(DistributionError):
        JointXY([0.5, 0.5])


def test_containers_are_immutable():
    p = Pmf([0.2, 0.8])
    with pytest.raises(ValueError):
        p.probs[0] = 0.5


def test_cond_pmf_rows():
    c = CondPmf([[0.2, 0.8], [1.0, 0.0]])
    assert np.allclose(c.row(1).probs, [1.0, 0.0])
    with pytest.raises(DistributionError):
        CondPmf([[0.2, 0.7], [1.0, 0.0]])


def test_joint_accessors():
    j = JointXY([[0.1, 0.2], [0.3, 0.4]])
    assert np.allclose(j.p_x.probs, [0.3, 0.7])
    assert np.allclose(j.p_y.probs, [0.4, 0.6])
    assert np.allclose(j.p_x_given_y.rows, [[0.25, 0.75], [1 / 3, 2 / 3]])


def test_joint_xyu_factorization_roundtrip(rng):
    for _ in range(20):
        q = JointXYU(random_joint(rng, (2, 3, 2)))
        nx, ny, nu = q.shape
        rebuilt = JointXYU.from_factors(q.q_y, q.q_u_given_y,
                                        q.q_x_given_yu.rows.reshape(ny, nu, nx))
        assert np.max(np.abs(rebuilt.probs - q.probs)) <= 1e-12


def test_joint_divergence_zero_for_markov_lift(rng):
    p = random_joint(rng, (2, 2))
    ch = rng.dirichlet(np.ones(3), size=2)
    q = p[:, :, None] * ch[None, :, :]
    assert joint_divergence(q, p) == pytest.approx(0.0, abs=1e-14)


def test_joint_divergence_same_pair_equals_markov_violation(rng):
    p = random_joint(rng, (2, 2))
    # Q_XY = P_XY but X depends on U given Y
    cx = rng.dirichlet(np.ones(2), size=(2, 2))          # [y, u, x]
    cu = rng.dirichlet(np.ones(2), size=2)                # [y, u]
    py = p.sum(axis=0)
    # rescale each (x, y) slice so the pair marginal becomes P_XY
    q = np.einsum("y,yu,yux->xyu", py, cu, cx)
    q_xy = q.sum(axis=2)
    q = q * (p / q_xy)[:, :, None]
    q /= q.sum()
    assert np.allclose(q.sum(axis=2), p, atol=1e-12)
    assert joint_divergence(q, p) == pytest.approx(cond_mutual_info_xu_given_y(q), abs=1e-10)
    assert cond_mutual_info_xu_given_y(q) > 0


def test_joint_divergence_with_markov_conditional_is_marginal_kl(rng):
    p = random_joint(rng, (2, 3))
    qy = rng.dirichlet(np.ones(3))
    cu = rng.dirichlet(np.ones(2), size=3)
    q = JointXYU.from_factors(qy, cu, np.broadcast_to(JointXY(p).p_x_given_y.rows[:, None, :],
                                                      (3, 2, 2)))
    assert joint_divergence(q, p) == pytest.approx(kl(qy, p.sum(axis=0)), abs=1e-12)


def test_info_measure_examples(rng):
    qy, qu = rng.dirichlet(np.ones(2)), rng.dirichlet(np.ones(3))
    cx = rng.dirichlet(np.ones(2), size=(2, 3))
    q = JointXYU.from_factors(qy, np.tile(qu, (2, 1)), cx)
    assert mutual_info_yu(q) == pytest.approx(0.0, abs=1e-14)
    copy = np.zeros((2, 2, 2))
    copy[0, 0, 0], copy[1, 1, 1] = 0.3, 0.7
    assert cond_entropy_x_given_u(copy) == pytest.approx(0.0, abs=1e-15)


def _h(j, axes):
    drop = tuple(i for i in range(j.ndim) if i not in axes)
    m = j.sum(axis=drop).ravel()
    m = m[m > 0]
    return float(-(m * np.log(m)).sum())


@given(st.integers(0, 2**32 - 1))
def test_chain_rule_and_decomposition(seed):
    rng = np.random.default_rng(seed)
    q = random_joint(rng, (2, 2, 2), alpha=0.7)
    p = random_joint(rng, (2, 2), alpha=0.7)
    i_x_yu = _h(q, (0,)) + _h(q, (1, 2)) - _h(q, (0, 1, 2))
    i_x_y = _h(q, (0,)) + _h(q, (1,)) - _h(q, (0, 1))
    assert i_x_yu == pytest.approx(i_x_y + cond_mutual_info_xu_given_y(q), abs=1e-10)
    assert joint_divergence(q, p) == pytest.approx(joint_divergence_decomposed(q, p), abs=1e-10)
    assert mutual_info_yu(q) <= _h(q, (1,)) + 1e-12


@given(weights, weights)
def test_kl_nonnegative(a, b):
    n = min(len(a), len(b))
    p, q = _pmf(a[:n] + 1e-3), _pmf(b[:n] + 1e-3)
    assert kl(q, p) >= -1e-12
    assert kl(p, p) == pytest.approx(0.0, abs=1e-10)
    if np.max(np.abs(p - q)) > 1e-3:
        assert kl(q, p) > 0


def test_expected_log_rank_examples():
    assert expected_log_rank([0.0, 1.0, 0.0]) == 0.0
    direct = 0.25 * sum(math.log(k) for k in range(1, 5))
    assert expected_log_rank(np.full(4, 0.25)) == pytest.approx(direct, abs=1e-15)
    assert direct == pytest.approx(0.794513, abs=1e-6)
    # ties ranked in index order; strictly ordered entries ranked by probability
    assert expected_log_rank([0.1, 0.6, 0.3]) == pytest.approx(0.3 * math.log(2) + 0.1 * math.log(3))


@given(weights)
def test_reverse_wyner_sandwich(w):
    p = _pmf(w)
    lo, hi = prob.reverse_wyner_bounds(p)
    v = expected_log_rank(p)
    assert lo - 1e-12 <= v <= hi + 1e-12


@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_reverse_markov(seed, k):
    rng = np.random.default_rng(seed)
    values = np.sort(rng.uniform(0, 10, size=k))
    probs = rng.dirichlet(np.ones(k))
    mean = float(values @ probs)
    a = rng.uniform(0, mean)
    tail, bound = prob.reverse_markov_bound(values, probs, a)
    assert tail >= bound - 1e-12


def test_json_roundtrip():
    j = JointXYU(np.arange(1, 9, dtype=float).reshape(2, 2, 2) / 36)
    obj = prob.to_json_obj(j)
    assert obj["alphabet_sizes"] == [2, 2, 2]
    back = prob.from_json_obj(obj)
    assert isinstance(back, JointXYU) and np.array_equal(back.probs, j.probs)
    assert isinstance(prob.loads('{"alphabet_sizes": [2], "probs": [0.5, 0.5]}'), Pmf)
    with pytest.raises(DistributionError):
        prob.loads('{"alphabet_sizes": [2, 2], "probs": [1.0]}')
    with pytest.raises(DistributionError):
        prob.loads("not json")
