import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from dprelab.environment import DomainError
from dprelab.walk import (
    CoupledWalkPair,
    PiecewiseLinear,
    coupling_marginal_chi2,
    coupling_marginal_exact,
    exit_probability_enumerated,
    exit_probability_exact,
    exit_rate_estimate,
    grr_bound,
    grr_bound_check,
    grr_integral,
    llt_envelope_check,
    meeting_time_identity_check,
    meeting_time_tail,
    meeting_time_window,
    random_piecewise_linear,
    reflection_coupling_sample,
    srw_pmf,
    srw_pmf_row,
)


def test_pmf_small_values():
    assert srw_pmf(2, 0) == 0.5
    assert srw_pmf(2, 2) == srw_pmf(2, -2) == 0.25
    assert srw_pmf(3, 0) == 0.0
    assert srw_pmf(2, 4) == 0.0


@pytest.mark.parametrize("i", [0, 1, 7, 100, 999, 1000])
def test_pmf_normalized_and_symmetric(i):
    total = math.fsum(srw_pmf(i, d) for d in range(-i, i + 1))
    assert abs(total - 1) < 1e-12
    assert all(srw_pmf(i, d) == srw_pmf(i, -d) for d in range(0, i + 1))
    d, p = srw_pmf_row(i)
    assert abs(math.fsum(p) - 1) < 1e-12
    # log-gamma route loses ~eps * log(2**i) relative precision
    assert np.allclose(p, [srw_pmf(i, int(k)) for k in d], rtol=1e-11, atol=0)


def test_llt_envelope():
    r2 = llt_envelope_check(2)
    assert r2["c"] == pytest.approx(0.5 * math.sqrt(2), rel=1e-15)
    r = llt_envelope_check(1000)
    assert r["c"] < 1.0 and r["c_below_one"]
    # exact mode values scaled by sqrt(i) approach sqrt(2/pi) * sqrt(2)... reported plateau
    assert r["plateau"] == pytest.approx(math.sqrt(2 / math.pi), rel=1e-3)


def test_exit_trivial_cases():
    assert exit_probability_exact(5, 6) == 0.0
    assert exit_probability_exact(1, 1) == 1.0


@pytest.mark.parametrize("N", range(1, 15))
def test_exit_dp_matches_enumeration(N):
    for a in range(1, N + 2):
        assert abs(exit_probability_exact(N, a) - exit_probability_enumerated(N, a)) < 1e-12


def test_exit_hoeffding_reflection_bound():
    cases = [(N, a) for N in range(1, 61) for a in range(1, N + 1)]
    cases += [(N, a) for N in (200, 500, 1000) for a in range(1, N + 1, 7)]
    for N, a in cases:
        assert exit_probability_exact(N, a) <= 4 * math.exp(-a * a / (2 * N)), (N, a)


def test_exit_monotone():
    for N in (10, 40):
        ps = [exit_probability_exact(N, a) for a in range(1, N + 2)]
        assert all(x >= y for x, y in zip(ps, ps[1:]))
    for a in (3, 8):
        ps = [exit_probability_exact(N, a) for N in range(1, 60)]
        assert all(x <= y for x, y in zip(ps, ps[1:]))


def test_exit_dp_size_guard():
    with pytest.raises(DomainError):
        exit_probability_exact(10 ** 6, 10 ** 4)


def test_exit_rate_fields():
    r = exit_rate_estimate(4, 16, 2)
    assert r["N"] == 64 and r["a"] == 32
    assert r["rate"] == pytest.approx(-math.log(r["probability"]) / 4)


def test_reflection_same_start():
    rng = np.random.default_rng(0)
    pair = reflection_coupling_sample(3, 3, 20, rng)
    assert pair.tau == 0
    assert np.array_equal(pair.S, pair.S_tilde)


def test_reflection_identity_pathwise():
    rng = np.random.default_rng(1)
    for _ in range(200):
        pair = reflection_coupling_sample(0, 6, 50, rng)
        assert pair.satisfies_reflection()
        if pair.tau is not None:
            assert np.array_equal(pair.S[pair.tau:], pair.S_tilde[pair.tau:])


def test_reflection_parity_error():
    with pytest.raises(DomainError):
        reflection_coupling_sample(0, 3, 5, np.random.default_rng(0))
    with pytest.raises(DomainError):
        coupling_marginal_exact(0, 1, 5)


@pytest.mark.parametrize("x,y,N", [(0, 4, 10), (0, 2, 14), (-4, 6, 12), (1, 1, 8)])
def test_coupling_marginal_exact(x, y, N):
    assert coupling_marginal_exact(x, y, N)["tv"] < 1e-12


def test_coupling_marginal_chi2():
    r = coupling_marginal_chi2(0, 8, 100, 100_000, seed=3)
    assert r["pvalue"] > 0.01


def test_meeting_tail_trivial():
    assert meeting_time_tail(0, 4, 0) == 1.0
    assert meeting_time_tail(2, 2, 5) == 0.0


def test_meeting_tail_distance_two():
    for i in range(0, 60):
        window = srw_pmf(i, 0) + srw_pmf(i, 1)
        assert abs(meeting_time_tail(0, 2, i) - window) < 1e-12


@given(d=st.integers(1, 20), i=st.integers(0, 200))
@settings(max_examples=100, deadline=None)
def test_meeting_identity_property(d, i):
    assert abs(meeting_time_tail(0, 2 * d, i) - meeting_time_window(0, 2 * d, i)) < 1e-12
    assert abs(meeting_time_tail(2 * d, 0, i) - meeting_time_tail(0, 2 * d, i)) < 1e-15


def test_meeting_identity_full_scan():
    r = meeting_time_identity_check(1000, 40)
    assert r["max_abs_diff"] < 1e-12
    assert r["monotone"]
    assert 0 < r["C4_fit"] < math.inf


def test_grr_constant_function():
    f = PiecewiseLinear(np.array([-1.0, 1.0]), np.array([2.0, 2.0]))
    assert grr_integral(f, 4, 5 / 8) == 0.0
    r = grr_bound_check([f], 4, 5 / 8, pairs=50)
    assert r["violations"] == 0


@pytest.mark.parametrize("p,q", [(3.0, 1.0), (4.0, 5 / 8)])
def test_grr_integral_identity_closed_form(p, q):
    f = PiecewiseLinear(np.array([-1.0, 1.0]), np.array([-1.0, 1.0]))
    r = p * (1 - q)
    exact = 2 * (2 * 2 ** (r + 1) / (r + 1) - 2 ** (r + 2) / (r + 2))
    assert grr_integral(f, p, q) == pytest.approx(exact, rel=1e-12)


def test_grr_integral_against_dblquad():
    rng = np.random.default_rng(5)
    f = random_piecewise_linear(rng, max_knots=4)
    p, q = 4.0, 5 / 8
    g = lambda s, t: (abs(float(f(t)) - float(f(s))) / abs(t - s) ** q) ** p if t != s else 0.0
    ref, _ = integrate.dblquad(g, -1, 1, -1, 1, epsabs=1e-10, epsrel=1e-8)
    assert grr_integral(f, p, q) == pytest.approx(ref, rel=1e-5)


def test_grr_requires_pq_above_two():
    with pytest.raises(DomainError):
        grr_bound(1.0, 0.5, 2.0, 1.0)


def test_grr_identity_function_finite_ratio():
    f = PiecewiseLinear(np.array([-1.0, 1.0]), np.array([-1.0, 1.0]))
    r = grr_bound_check([f], 4, 5 / 8, pairs=1000, seed=2)
    assert r["violations"] == 0 and 0 < r["worst_ratio"] < 1


@pytest.mark.parametrize("p,q", [(4.0, 5 / 8), (3.0, 1.0)])
def test_grr_random_functions(p, q):
    rng = np.random.default_rng(11)
    fns = [random_piecewise_linear(rng) for _ in range(100)]
    r = grr_bound_check(fns, p, q, pairs=1000, seed=12)
    assert r["violations"] == 0
