import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ibexp import coding as cd
from ibexp import typeclasses as tc
from ibexp.coding import CodingScheme, ConstructionError
from ibexp.exponents import SourceModel
from ibexp.prob import SizeCapError

LN2 = math.log(2)


def _pair_mass(model, n):
    xs, ys = tc.all_sequences(model.nx, n), tc.all_sequences(model.ny, n)
    mass = np.ones((len(xs), len(ys)))
    for i in range(n):
        mass *= model.probs[xs[:, i][:, None], ys[:, i][None, :]]
    return mass


def _error_of(encoder, lists, mass):
    """P{x not on the list of its message}; message 0 never succeeds."""
    err = 0.0
    for y, m in enumerate(encoder):
        keep = np.zeros(mass.shape[0], dtype=bool)
        if m > 0:
            keep[list(lists[m])] = True
        err += mass[~keep, y].sum()
    return err


def _emp_cond_entropy(x, u, nx, nu):
    n = len(x)
    t = np.zeros((nu, nx))
    for a, b in zip(u, x):
        t[a, b] += 1
    rows = t.sum(axis=1)
    h = sum(r * math.log(r) for r in rows if r) - sum(v * math.log(v) for v in t.ravel() if v)
    return h / n


# -- log loss and budgets ------------------------------------------------------

def test_log_loss_examples():
    assert cd.log_loss((0, 1, 1), [(0, 1, 1)]) == 0.0
    n, delta = 4, 0.5 * LN2
    lst = [tc.index_seq(i, 2, n) for i in range(4)]           # e^{n delta} = 4 sequences
    assert cd.log_loss(lst[2], lst) == pytest.approx(delta, abs=1e-15)
    assert cd.log_loss((1, 1, 1, 1), lst) == math.inf


def test_list_cap_and_budget():
    assert cd.list_cap(3, LN2) == 8
    assert cd.list_cap(5, 0.0) == 1
    assert cd.list_cap(10, 0.3) == math.floor(math.exp(3.0))
    assert cd.message_budget(4, 0.0) == 1
    assert cd.message_budget(2, LN2) == 4


@given(st.integers(1, 30), st.floats(0.0, 1.5))
def test_list_cap_is_floor(n, delta):
    cap = cd.list_cap(n, delta)
    assert math.log(cap) <= n * delta + 1e-9
    assert math.log(cap + 1) > n * delta - 1e-9


def test_list_thresholds_fit_cap():
    n, nx = 6, 2
    for t in tc.enumerate_types(n, 2):
        strict, nonstrict = cd.list_thresholds(n, nx, t.counts, 0.3)
        u = [a for a, c in enumerate(t.counts) for _ in range(c)]
        hs = [_emp_cond_entropy(tc.index_seq(i, 2, n), u, 2, 2) for i in range(2**n)]
        cap = cd.list_cap(n, 0.3)
        assert sum(h < strict - 1e-10 for h in hs) <= cap
        assert sum(h <= nonstrict + 1e-10 for h in hs) <= cap
        if math.isfinite(strict):
            assert sum(h <= strict + 1e-10 for h in hs) > cap


# -- scheme construction -------------------------------------------------------

@pytest.fixture(scope="module")
def bsc():
    return SourceModel.from_array([[0.45, 0.05], [0.05, 0.45]])


@pytest.fixture(scope="module")
def n6_scheme(bsc):
    return cd.build_achievability_scheme(bsc, 6, 0.4, 0.3, 0.05)


def test_n6_scheme_invariants(bsc, n6_scheme):
    s = n6_scheme
    n = s.n
    cap = cd.list_cap(n, s.delta)
    assert s.kind == "explicit" and s.threshold == pytest.approx(0.25)
    assert all(len(lst) <= cap for lst in s.lists)
    assert s.num_messages <= math.ceil(math.exp(n * s.rate_R)) * (n + 1) ** s.ny
    assert len(s.lists) == s.num_messages + 1
    for m in range(1, len(s.lists)):
        u = s.codewords[m]
        members = {i for i in range(2**n)
                   if _emp_cond_entropy(tc.index_seq(i, 2, n), u, 2, s.nu) < s.threshold - 1e-10}
        assert members == set(s.lists[m].tolist())
        for i in s.lists[m]:
            assert cd.log_loss(tc.index_seq(int(i), 2, n),
                               [tc.index_seq(int(j), 2, n) for j in s.lists[m]]) <= s.delta
    for y_idx, m in enumerate(s.encoder):
        y = tc.index_seq(y_idx, 2, n)
        plan = s.plan_for(tc.type_of(y, 2).counts)
        if m == 0:
            continue
        joint = tc.cond_type_of(y, s.codewords[m], 2, s.nu).counts
        assert joint == plan.channel
        assert plan.mutual_info <= s.rate_R + 1e-12


def test_n6_scheme_error_matches_direct_count(bsc, n6_scheme):
    mass = _pair_mass(bsc, 6)
    direct = _error_of(n6_scheme.encoder, n6_scheme.lists, mass)
    assert cd.exact_excess_prob(n6_scheme, bsc).p_e == pytest.approx(direct, abs=1e-12)


def test_strong_converse_variant_mass_bound(bsc):
    s = cd.build_achievability_scheme(bsc, 6, 0.2, 0.3, 0.05, variant="strong_converse")
    n = s.n
    for plan in s.plans:
        t = tc.TypeVector(plan.y_counts)
        ys = [y for y in range(2**n) if tc.type_of(tc.index_seq(y, 2, n), 2) == t]
        frac = np.mean([s.encoder[y] > 0 for y in ys])
        slack = (n + 1) ** (s.ny * s.nu + s.ny + s.nu)
        assert frac >= math.exp(-n * max(plan.mutual_info - s.rate_R, 0.0)) / slack
        assert plan.codewords <= s.budget


def test_scheme_json(n6_scheme):
    obj = n6_scheme.to_json_obj()
    assert obj["n"] == 6 and obj["kind"] == "explicit"
    assert len(obj["encoder"]) == 64 and len(obj["lists"]) == len(n6_scheme.lists)


def test_full_coverage_has_no_error(bsc):
    s = cd.build_achievability_scheme(bsc, 4, 0.2, LN2 + 0.1, 0.05)
    assert cd.exact_excess_prob(s, bsc).p_e == 0.0
    rep = cd.mc_excess_prob(s, bsc, 5000, seed=3)
    assert rep.p_e == 0.0 and rep.stderr == 0.0


def test_certain_failure(bsc):
    s = cd.build_achievability_scheme(bsc, 3, 0.4, 0.0, 0.0)
    assert cd.exact_excess_prob(s, bsc).p_e == pytest.approx(1.0)
    assert cd.mc_excess_prob(s, bsc, 5000, seed=3).p_e == 1.0


def test_construction_error_when_lists_cannot_fit(bsc):
    with pytest.raises(ConstructionError):
        cd.build_achievability_scheme(bsc, 6, 0.4, 0.05, 0.0)


def test_size_caps(bsc):
    with pytest.raises(SizeCapError):
        cd.build_achievability_scheme(bsc, 5000, 0.4, 0.3)
    with pytest.raises(SizeCapError):
        cd.build_achievability_scheme(bsc, 14, 0.4, 0.3, 0.05, method="explicit")
    with pytest.raises(ValueError):
        cd.build_achievability_scheme(bsc, 6, 0.4, 0.3, variant="other")


def test_default_epsilon_is_minimal(bsc):
    n, delta = 6, 0.3
    eps = cd.default_epsilon(n, 2, 2, delta)
    s = cd.build_achievability_scheme(bsc, n, 0.4, delta)
    assert s.epsilon == eps
    worst = min(cd.list_thresholds(n, 2, t.counts, delta)[0] for t in tc.enumerate_types(n, 2))
    assert delta - eps == pytest.approx(worst)


def test_hand_built_scheme_n1():
    model = SourceModel.from_array(np.full((2, 2), 0.25))
    s = CodingScheme(n=1, nx=2, ny=2, nu=1, rate_R=0.0, delta=0.0, epsilon=0.0,
                     variant="error", kind="explicit", threshold=0.0, budget=1, plans=(),
                     encoder=np.array([1, 1]),
                     lists=(np.zeros(0, dtype=np.int64), np.array([0])),
                     codewords=(None, (0,)))
    assert cd.exact_excess_prob(s, model).p_e == pytest.approx(0.5)


def test_type_level_scheme_agrees_with_explicit(bsc):
    kw = dict(model=bsc, n=6, R=0.4, delta=0.3, epsilon=0.05)
    t = cd.build_achievability_scheme(method="type", **kw)
    e = cd.build_achievability_scheme(method="explicit", **kw)
    assert [p.channel for p in t.plans] == [p.channel for p in e.plans]
    p_t = cd.exact_excess_prob(t, bsc).p_e
    # with every needed codeword kept, the explicit error is the type-sum error
    if all(p.codewords == len(tc.greedy_type_cover(tc.TypeVector(p.y_counts),
                                                     tc.CondTypeMatrix(p.channel)).codewords)
           for p in e.plans):
        assert p_t == pytest.approx(cd.exact_excess_prob(e, bsc).p_e, abs=1e-12)
    assert 0.0 <= p_t <= 1.0


def test_type_error_prob_monotone_in_threshold(bsc):
    joint = np.array([[3, 1], [1, 3]])
    vals = [cd.type_error_prob(bsc.p_x_given_y, joint, t, True) for t in np.linspace(0, 0.7, 15)]
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))
    assert vals[-1] == 0.0


def test_lossless_full_rate_tail():
    """R >= H(Y) on a lossless model: the scheme errs exactly on the tail
    {H(type of x) >= R + delta - epsilon}, which is empty for binary sources."""
    m = SourceModel.lossless([0.2, 0.8])
    for n in (8, 10, 12):
        s = cd.build_achievability_scheme(m, n, LN2, 0.2)
        level = LN2 + 0.2 - s.epsilon
        tail = sum(math.exp(tc.log_multinomial(t.counts) + tc.seq_log_prob(t, m.p_x))
                   for t in tc.enumerate_types(n, 2)
                   if -sum(c / n * math.log(c / n) for c in t.counts if c) >= level)
        assert cd.exact_excess_prob(s, m).p_e == pytest.approx(tail, abs=1e-12)


@pytest.mark.parametrize("R", [0.2, 0.35, 0.5])
def test_lossless_counting_lower_bound(R):
    """No scheme can be right on more than budget * cap sequences of a type."""
    m = SourceModel.lossless([0.2, 0.8])
    n, delta = 8, 0.2
    s = cd.build_achievability_scheme(m, n, R, delta, method="type")
    lower = 0.0
    for t in tc.enumerate_types(n, 2):
        size = tc.type_class_size(t)
        pt = size * math.exp(tc.seq_log_prob(t, m.p_x))
        lower += pt * max(0.0, 1.0 - s.budget * cd.list_cap(n, delta) / size)
    assert cd.exact_excess_prob(s, m).p_e >= lower - 1e-12


# -- Monte Carlo ---------------------------------------------------------------

def test_mc_matches_exact_explicit(bsc):
    s = cd.build_achievability_scheme(bsc, 8, 0.4, 0.3, 0.05)
    ex = cd.exact_excess_prob(s, bsc).p_e
    mc = cd.mc_excess_prob(s, bsc, 10**6, seed=1)
    assert abs(mc.p_e - ex) <= 4 * mc.stderr


def test_mc_matches_exact_type_level():
    m = SourceModel.lossless([0.1, 0.9])
    s = cd.build_achievability_scheme(m, 12, 0.3, 0.2, method="type")
    ex = cd.exact_excess_prob(s, m).p_e
    mc = cd.mc_excess_prob(s, m, 400_000, seed=5)
    assert abs(mc.p_e - ex) <= 4 * mc.stderr


def test_mc_deterministic_and_chunk_independent(bsc, n6_scheme):
    a = cd.mc_excess_prob(n6_scheme, bsc, 30_000, seed=7)
    b = cd.mc_excess_prob(n6_scheme, bsc, 30_000, seed=7)
    assert a.p_e == b.p_e
    c = cd.mc_excess_prob(n6_scheme, bsc, 30_000, seed=8)
    assert c.p_e != a.p_e
    with pytest.raises(ValueError):
        cd.mc_excess_prob(n6_scheme, bsc, 0)


# -- optimal decoder and brute force ------------------------------------------

def test_optimal_decoder_examples(bsc):
    n = 2
    enc = np.zeros(4, dtype=int)
    assert cd.optimal_decoder_excess_prob(enc, bsc, n, LN2).p_e == pytest.approx(0.0, abs=1e-15)
    m = SourceModel.from_array([[0.1, 0.3], [0.2, 0.4]])
    rep = cd.optimal_decoder_excess_prob(np.zeros(2, dtype=int), m, 1, 0.0)
    assert rep.p_e == pytest.approx(1 - m.p_x.max())


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_optimal_decoder_dominates_random_decoders(seed):
    rng = np.random.default_rng(seed)
    model = SourceModel.from_array(rng.dirichlet(np.ones(4)).reshape(2, 2))
    n, delta = 3, 0.5
    cap = cd.list_cap(n, delta)
    enc = rng.integers(1, 4, 2**n)
    best = cd.optimal_decoder_excess_prob(enc, model, n, delta).p_e
    mass = _pair_mass(model, n)
    for _ in range(20):
        lists = {m: rng.choice(2**n, size=rng.integers(1, cap + 1), replace=False) for m in range(1, 4)}
        assert best <= _error_of(enc, lists, mass) + 1e-12


def test_brute_force_examples():
    m = SourceModel.from_array([[0.1, 0.35], [0.3, 0.25]])
    # n = 1, two messages, delta = 0: the identity encoder with MAP lists is optimal
    closed = 1 - sum(m.probs[:, y].max() for y in range(2))
    assert cd.brute_force_optimal_pe(m, 1, LN2, 0.0) == pytest.approx(closed, abs=1e-15)
    ident = cd.optimal_decoder_excess_prob(np.arange(4), m, 2, 0.3).p_e
    assert cd.brute_force_optimal_pe(m, 2, 0.0, 0.3, messages=4) <= ident + 1e-15


def test_brute_force_monotone():
    m = SourceModel.from_array([[0.1, 0.35], [0.3, 0.25]])
    prev = math.inf
    for delta in np.linspace(0, LN2, 8):
        v = cd.brute_force_optimal_pe(m, 2, 0.0, delta, messages=2)
        assert v <= prev + 1e-15
        prev = v
    by_m = [cd.brute_force_optimal_pe(m, 2, 0.0, 0.3, messages=k) for k in (1, 2, 3, 4)]
    assert all(b <= a + 1e-15 for a, b in zip(by_m, by_m[1:]))
    with pytest.raises(SizeCapError):
        cd.brute_force_optimal_pe(m, 4, 0.0, 0.3, messages=2)


# -- slope ---------------------------------------------------------------------

def test_slope_in_strong_converse_regime():
    m = SourceModel.lossless([0.3, 0.7])
    res = cd.empirical_exponent_slope(m, 0.05, 0.1, None, [8, 12, 16, 20], 20_000, seed=2)
    assert all(r[1] > 0.99 for r in res.rows)
    assert abs(res.slope) < 1e-3


def test_slope_band_scales_with_samples():
    m = SourceModel.lossless([0.1, 0.9])
    ns = [10, 14, 18]
    a = cd.empirical_exponent_slope(m, 0.3, 0.2, None, ns, 50_000, seed=4, exact=False)
    b = cd.empirical_exponent_slope(m, 0.3, 0.2, None, ns, 100_000, seed=4, exact=False)
    ratio = (a.band[1] - a.band[0]) / (b.band[1] - b.band[0])
    assert 1.2 <= ratio <= 1.7


def test_slope_drops_zero_counts():
    m = SourceModel.lossless([0.1, 0.9])
    res = cd.empirical_exponent_slope(m, LN2, 0.2, None, [8, 10], 100, seed=0, exact=False)
    assert res.dropped == [8, 10] and math.isnan(res.slope)


# -- single-letter identity ----------------------------------------------------

def test_identity_trivial(bsc):
    n = 3
    q = _pair_mass(bsc, n)
    rep = cd.verify_single_letter_identity(q, np.zeros(2**n, dtype=int), bsc, n)
    assert rep.lhs == pytest.approx(0.0, abs=1e-14)
    assert rep.rhs == pytest.approx(0.0, abs=1e-14)


def test_identity_product(bsc):
    n = 3
    q1 = SourceModel.from_array([[0.3, 0.2], [0.1, 0.4]])
    q = _pair_mass(q1, n)
    rep = cd.verify_single_letter_identity(q, np.zeros(2**n, dtype=int), bsc, n)
    from ibexp.prob import kl
    d = kl(q1.probs.ravel(), bsc.probs.ravel())
    assert rep.lhs == pytest.approx(d, abs=1e-12)
    assert rep.rhs == pytest.approx(d, abs=1e-12)


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1))
def test_identity_random(seed):
    rng = np.random.default_rng(seed)
    model = SourceModel.from_array(rng.dirichlet(np.ones(4)).reshape(2, 2))
    q = rng.dirichlet(np.full(256, 0.5)).reshape(16, 16)
    enc = rng.integers(0, 2, 16)
    rep = cd.verify_single_letter_identity(q, enc, model, 4)
    assert rep.diff <= 1e-10
    assert rep.bound_plain and rep.bound_rate
