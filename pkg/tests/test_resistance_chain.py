import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cutpoints import resistance_chain as rc
from cutpoints.errors import DivergentTail, InvalidArguments, InvalidProfile, OutOfRange


def euler_maclaurin_t2(n=10 ** 4):
    """Sum of 1/(k ln^2 k) over k >= 2: direct sum below n plus the EM tail."""
    mpmath.mp.dps = 30
    f = lambda k: 1 / (k * mpmath.log(k) ** 2)
    head = mpmath.fsum(f(k) for k in range(2, n))
    tail = 1 / mpmath.log(n) + f(n) / 2 - mpmath.diff(f, n) / 12 + mpmath.diff(f, n, 3) / 720
    return head, tail, f(n)


# --- profiles ------------------------------------------------------------------

def test_canonical_value():
    p = rc.make_profile(beta=2)
    assert p.r(4) == pytest.approx(1 / (4 * math.log(4) ** 2), rel=1e-15)
    assert abs(p.r(4) - 0.130093) < 1e-4  # quoted value is rounded loosely
    assert p.r(1) == p.r(2)


def test_explicit_profile():
    p = rc.make_profile(values=[1, 2, 4, 8])
    assert p.r(3) == 4 and p.cutoff == 4
    with pytest.raises(OutOfRange):
        p.r(5)


def test_recurrent_profile_flag():
    p = rc.make_profile(beta=0.5)
    assert not p.transient
    with pytest.raises(DivergentTail):
        rc.tails(p, 10)


@pytest.mark.parametrize("kw", [dict(beta=0), dict(beta=-1), dict(values=[]),
                                dict(values=[1, 0]), dict(values=[1, -2]), dict(ratio=1.5),
                                dict()])
def test_invalid_profiles(kw):
    with pytest.raises(InvalidProfile):
        rc.make_profile(**kw)


def test_read_profile(tmp_path):
    f = tmp_path / "p.txt"
    f.write_text("# uniform\n1\n\n1  # second\n1\n")
    p = rc.read_profile(f)
    assert p.values == (1.0, 1.0, 1.0)


@given(st.floats(1.01, 6), st.integers(2, 10 ** 6))
def test_canonical_defining_identity(beta, k):
    p = rc.canonical(beta)
    assert p.r(k) * k * math.log(k) ** beta == pytest.approx(1.0, rel=1e-13)


# --- tails -----------------------------------------------------------------------

def test_geometric_tail_exact(geo):
    _, t = geo
    assert t.t(3) == 0.25
    for k in range(1, 51):
        assert abs(t.t(k) - 2.0 ** (-k + 1)) <= 1e-12 * 2.0 ** (-k + 1)
        assert abs(rc.cutpoint_probability(t, k) - 0.5) <= 1e-12


def test_t2_enclosure_contains_long_sum_oracle(canon):
    _, t = canon
    head, tail, fn = euler_maclaurin_t2()
    em = float(head + tail)
    lo, hi = t.t_bounds(2)
    assert lo <= em <= hi
    # rigorous integral bracket around the same head sum
    assert float(head + tail - fn) < hi and lo < float(head + 1 / mpmath.log(10 ** 4) + fn)
    assert (hi - lo) / lo < 1e-6


def test_t2_frozen_value(canon):
    _, t = canon
    assert t.t(2) == pytest.approx(2.1097428012368917, rel=1e-12)


def test_tail_asymptotics(canon):
    _, t = canon
    j = 10 ** 6
    assert abs(t.t(j) * math.log(j) - 1) <= 0.05
    assert abs(rc.cutpoint_probability(t, j) * j * math.log(j) - 1) <= 0.1


def test_enclosure_width_and_order(canon):
    _, t = canon
    lo, hi = t.tail_lo[1:], t.tail_hi[1:]
    assert np.all(lo <= hi)
    assert np.all(np.diff(lo) < 0) and np.all(np.diff(hi) < 0)
    k = 2 ** 20
    assert np.max((hi[:k] - lo[:k]) / lo[:k]) <= 1e-6


def test_telescoping(canon):
    _, t = canon
    mid = t.tail_mid
    k = np.arange(1, t.k_max + 1)
    gap = np.abs(mid[k] - t.r_values[k] - mid[k + 1])
    assert np.all(gap <= 1e-12 * mid[k])


def test_explicit_tails_finite():
    p = rc.explicit([1, 2, 4, 8])
    t = rc.tails(p, 4)
    assert [t.t(k) for k in (1, 2, 3, 4, 5)] == [15, 14, 12, 8, 0]
    with pytest.raises(OutOfRange):
        rc.tails(p, 5)


# --- probabilities -----------------------------------------------------------------

@pytest.fixture(scope="module")
def uniform():
    return rc.tails(rc.explicit([1.0] * 10), 10)


def test_hit_before_uniform(uniform):
    assert abs(rc.hit_before(uniform, 3, 5) - 0.5) <= 1e-12
    assert rc.hit_before(uniform, 1, 5) == 0.0
    assert rc.hit_before(uniform, 5, 5) == 1.0


def test_hit_before_explicit_value():
    t = rc.tails(rc.explicit([1, 2, 4, 8]), 4)
    assert rc.hit_before(t, 3, 5) == pytest.approx(0.2, abs=1e-15)


def test_hit_before_gamblers_ruin_oracle():
    """Vectorised gambler's ruin on explicit(1,2,4,8) from 3: reach 5 before 1."""
    r = np.array([np.nan, 1, 2, 4, 8])
    up = {k: r[k - 1] / (r[k - 1] + r[k]) for k in (2, 3, 4)}
    g = np.random.default_rng(20240601)
    n = 10 ** 6
    pos = np.full(n, 3)
    live = np.arange(n)
    while live.size:
        x = pos[live]
        u = g.random(live.size)
        pu = np.choose(x - 2, [up[2], up[3], up[4]])
        pos[live] = np.where(u < pu, x + 1, x - 1)
        live = live[(pos[live] != 1) & (pos[live] != 5)]
    freq = np.mean(pos == 5)
    se = math.sqrt(freq * (1 - freq) / n)
    assert abs(freq - 0.2) <= 4 * se


def test_conditional_uniform(uniform):
    assert abs(rc.conditional_cut_probability(uniform, 4, 6) - 1 / 3) <= 1e-12
    for k in range(2, 10):
        assert rc.conditional_cut_probability(uniform, k - 1, k) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(InvalidArguments):
        rc.conditional_cut_probability(uniform, 6, 6)


def test_conditional_geometric_closed_form(geo):
    _, t = geo
    for k in range(3, 40):
        for j in range(1, k):
            want = t.r(j) / (2.0 ** (-j + 1) - 2.0 ** (-k))
            assert abs(rc.conditional_cut_probability(t, j, k) - want) <= 1e-12


def test_return_probability(geo, canon):
    _, t = geo
    assert rc.return_probability(t, 5, 3) == pytest.approx(0.25, abs=1e-15)
    assert rc.return_probability(t, 7, 7) == 1.0
    _, c = canon
    # t_N/t_k with k = 2^m, N = 2^{m+3} approaches m/(m+3)
    for m in (5, 10, 17):
        v = rc.return_probability(c, 2 ** (m + 3), 2 ** m)
        assert abs(v - m / (m + 3)) < 0.005
    assert v > 0.8  # naive censoring at 8k leaves most of the return mass


def test_block_b_geometric_closed_form(geo):
    _, t = geo
    for m in range(1, 8):
        want = math.fsum(2.0 ** i / (2.0 ** (i + 1) - 1) for i in range(1, 2 ** (m - 1) + 1))
        assert rc.block_minimum_b(t, m) == pytest.approx(want, rel=1e-12)


def test_block_b_degenerate_window(canon):
    _, t = canon
    want = min(rc.conditional_cut_probability(t, k - 1, k) for k in (3, 4))
    assert rc.block_minimum_b(t, 1) == pytest.approx(want, rel=1e-14)


def test_block_p_sum(geo, canon):
    _, t = geo
    for m in range(1, 8):
        assert rc.block_p_sum(t, m) == pytest.approx((2 ** (m + 1) - 2 ** (m - 1)) / 2, rel=1e-12)
    _, c = canon
    want = sum(rc.cutpoint_probability(c, j) for j in (2, 3, 4))
    assert rc.block_p_sum(c, 1) == pytest.approx(want, rel=1e-14)


def test_block_spreads(canon):
    _, t = canon
    ms = range(6, 15)
    b = [rc.block_minimum_b(t, m) / m for m in ms]
    s = [m * rc.block_p_sum(t, m) for m in ms]
    assert max(b) / min(b) <= 3
    assert max(s) / min(s) <= 3


def test_divergence_audit_geometric(geo):
    _, t = geo
    a = rc.divergence_audit(t, 1, 10)
    assert a.partial_sum == pytest.approx(5.0, abs=1e-12)
    assert a.lower_bound == pytest.approx(1 - 2.0 ** -10, abs=1e-12)


@pytest.mark.parametrize("m", [2, 10, 100])
def test_divergence_audit_canonical(canon, m):
    _, t = canon
    a = rc.divergence_audit(t, m, 10 ** 6)
    assert a.holds and a.partial_sum > a.lower_bound


@given(st.integers(1, 5000))
def test_single_term_audit_equality(m):
    t = rc.tails(rc.canonical(2.0), 2 ** 20 + 2)
    a = rc.divergence_audit(t, m, m)
    assert a.partial_sum == pytest.approx(a.lower_bound, rel=1e-12)


# --- properties --------------------------------------------------------------------

@settings(max_examples=60)
@given(st.integers(2, 2000), st.integers(1, 2000))
def test_probabilities_in_unit_interval(k, d):
    t = rc.tails(rc.canonical(2.0), 2 ** 20 + 2)
    n = k + d
    for v in (rc.hit_before(t, k, n), rc.cutpoint_probability(t, k),
              rc.conditional_cut_probability(t, k, n), rc.return_probability(t, n, k)):
        assert 0.0 <= v <= 1.0


@settings(max_examples=40)
@given(st.integers(3, 3000))
def test_ruin_strictly_increasing(n):
    t = rc.tails(rc.canonical(2.0), 2 ** 20 + 2)
    vals = [rc.hit_before(t, k, n) for k in range(1, n + 1)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


@settings(max_examples=40)
@given(st.integers(1, 5000))
def test_q_limit(j):
    t = rc.tails(rc.canonical(2.0), 2 ** 20 + 2)
    K = 10 * j
    q = [rc.conditional_cut_probability(t, j, k) for k in (j + 1, 2 * j + 1, K)]
    assert q[0] >= q[1] >= q[2]
    p = rc.cutpoint_probability(t, j)
    gap = t.t(K + 1) / (t.t(j) - t.t(K + 1)) * p
    assert abs(q[2] - p) <= gap * (1 + 1e-9)


@given(st.lists(st.floats(1e-3, 1e3), min_size=2, max_size=40))
def test_explicit_tail_properties(vals):
    t = rc.tails(rc.explicit(vals), len(vals))
    mid = t.tail_mid
    k = np.arange(1, len(vals) + 1)
    assert np.all(np.abs(mid[k] - t.r_values[k] - mid[k + 1]) <= 1e-12 * mid[k])
    assert np.all(np.diff(mid[1:]) < 0)


def test_chain_law(canon):
    chain, _ = canon
    assert chain.up(1) == 1.0 and chain.down(1) == 0.0
    p = chain.profile
    for k in (2, 3, 10, 1000):
        assert chain.up(k) + chain.down(k) == pytest.approx(1.0, abs=1e-15)
        assert chain.up(k) == pytest.approx(p.r(k - 1) / (p.r(k - 1) + p.r(k)), rel=1e-15)


def test_errors_with_bounds(canon):
    _, t = canon
    v, e = rc.cutpoint_probability(t, 10, with_error=True)
    assert 0 < e < 1e-9 * v
    v, e = rc.hit_before(t, 10, 100, with_error=True)
    assert 0 < e < 1e-12
