import math

import numpy as np
import pytest

from dprelab import chaos
from dprelab.chaos import (
    centered_moment,
    centered_moment_quad,
    chaos_expand,
    event_partition,
    kappa_p,
    kappa_p_sup,
    moment_bound_check,
    orthogonality_exact,
    second_moment_decompose,
    second_moment_weight,
)
from dprelab.environment import DisorderLaw, DomainError, EnvironmentField, child_seed, log_mgf, zeta
from dprelab.polymer import Escape, Tube, brute_force_partition

from conftest import ALL_LAWS

TUBE = Tube(0, 3)


def test_beta_zero_only_zeroth_chaos():
    env = EnvironmentField(1, "gaussian")
    dec = chaos_expand(env, 0.0, 6, 0, TUBE)
    p = brute_force_partition(env, 0.0, 6, 0, TUBE)
    assert dec.components[0] == pytest.approx(p, rel=1e-15)
    assert np.all(dec.components[1:] == 0)


def test_one_step_hand_expansion():
    env = EnvironmentField(2, "gaussian")
    b = 0.8
    dec = chaos_expand(env, b, 1)
    z = [float(zeta(env, b, 1, x)) for x in (-1, 1)]
    assert dec.components[0] == 1.0
    assert dec.components[1] == pytest.approx(0.5 * (z[0] - 1) + 0.5 * (z[1] - 1), rel=1e-14)
    assert dec.total == pytest.approx(0.5 * (z[0] + z[1]), rel=1e-14)


@pytest.mark.parametrize("law", ALL_LAWS)
@pytest.mark.parametrize("N", range(1, 9))
def test_completeness(law, N):
    for i in range(10):
        env = EnvironmentField(child_seed(N, i), law)
        w = event_partition(env, 0.6, N)
        assert abs(chaos_expand(env, 0.6, N).total - w) / w < 1e-12


@pytest.mark.parametrize("event", [TUBE, Escape(Tube(0, 1))])
def test_tube_and_escape_events_match_transfer_matrix(event):
    env = EnvironmentField(33, "rademacher")
    w = event_partition(env, 0.5, 4, 0, event)
    assert abs(chaos_expand(env, 0.5, 4, 0, event).total - w) <= 1e-12 * w


def test_expansion_cap():
    with pytest.raises(DomainError):
        chaos_expand(EnvironmentField(1), 0.5, 9)


def test_orthogonality_n3():
    r = orthogonality_exact(0.5, 3, 0, 2)
    assert r["max_offdiag"] < 1e-12
    assert abs(r["cross"][1, 2]) < 1e-12
    assert r["max_mean_k_ge_1"] < 1e-12
    # Theta^(0) is deterministic, so its row is Theta^(0) times a mean-zero variable
    assert np.all(np.abs(r["cross"][0, 1:]) < 1e-12)


def test_orthogonality_same_start_has_nonnegative_diagonal():
    r = orthogonality_exact(0.7, 3, 0, 0, Escape(Tube(0, 1)))
    assert r["diag_nonnegative"]
    assert r["max_offdiag"] < 1e-12


def test_orthogonality_requires_rademacher():
    with pytest.raises(DomainError):
        orthogonality_exact(0.5, 2, 0, 2, law="gaussian")


def test_second_moment_same_start():
    dec = second_moment_decompose(0.5, 3, 0, 0)
    assert np.all(dec.terms == 0) and dec.direct == 0


def test_second_moment_beta_zero():
    event = Tube(0, 1)
    dec = second_moment_decompose(0.0, 3, 0, 2, event)
    env = EnvironmentField(0)
    px = brute_force_partition(env, 0.0, 3, 0, event)
    py = brute_force_partition(env, 0.0, 3, 2, event)
    assert dec.terms[0] == pytest.approx((px - py) ** 2, rel=1e-14)
    assert np.all(dec.terms[1:] == 0)


@pytest.mark.parametrize("N,x,y,event", [
    (3, 0, 2, Tube(0, 3)),
    (3, 0, 2, None),
    (2, -2, 2, Escape(Tube(0, 1))),
    (3, 0, 4, Escape(Tube(1, 2))),
])
def test_second_moment_decomposition(N, x, y, event):
    dec = second_moment_decompose(0.6, N, x, y, event)
    assert np.all(dec.terms >= 0)
    assert dec.relative_error < 1e-10


def test_lambda_decay_report():
    dec = second_moment_decompose(0.5, 3, 0, 2)
    ratios = dec.decay_ratios()
    assert len(ratios) == 2 and np.all(np.isfinite(ratios))


def test_second_moment_weight():
    for law in ALL_LAWS:
        b = 0.4
        assert second_moment_weight(law, b) == pytest.approx(centered_moment(law, b, 2), rel=1e-12)
        if law is not DisorderLaw.RADEMACHER:
            assert second_moment_weight(law, b) == pytest.approx(centered_moment_quad(law, b, 2), rel=1e-8)


def test_kappa_rademacher_p2():
    assert kappa_p("rademacher", 0.5, 2) == pytest.approx(2.0, rel=1e-14)


def test_kappa_rademacher_p4_two_point():
    b = 0.5
    lam = log_mgf("rademacher", b)
    a, c = math.expm1(b - lam), math.expm1(-b - lam)
    m4 = 0.5 * (a ** 4 + c ** 4)
    m2 = 0.5 * (a ** 2 + c ** 2)
    assert kappa_p("rademacher", b, 4) == pytest.approx(2 * math.sqrt(3) * m4 ** 0.25 / m2 ** 0.5, rel=1e-13)


def test_gaussian_moments_quadrature_vs_lognormal():
    b = 0.5
    closed = centered_moment("gaussian", b, 4)
    # lognormal: E[(Z-1)^4] with Z = exp(bG - b^2/2), s = e^{b^2}
    s = math.exp(b * b)
    lognormal = s ** 6 - 4 * s ** 3 + 6 * s - 3
    assert closed == pytest.approx(lognormal, rel=1e-12)
    assert centered_moment_quad("gaussian", b, 4) == pytest.approx(closed, rel=1e-8)
    k = kappa_p("gaussian", b, 4)
    assert 0 < k < math.inf and k >= 2 * math.sqrt(3) * 0.99


# shifted_exponential moments are infinite once p * beta >= 1
@pytest.mark.parametrize("law,p", [(l, p) for l in ALL_LAWS for p in (2.5, 3.0, 4.0)
                                   if l is not DisorderLaw.RADEMACHER
                                   and not (l is DisorderLaw.SHIFTED_EXPONENTIAL and p * 0.3 >= 1)])
def test_moment_closed_forms_match_quadrature(law, p):
    assert centered_moment(law, 0.3, p) == pytest.approx(centered_moment_quad(law, 0.3, p), rel=1e-7)


def test_kappa_beta_zero_refused():
    with pytest.raises(DomainError, match="0/0"):
        kappa_p("gaussian", 0.0, 4)


def test_shifted_exponential_infinite_moment_refused():
    with pytest.raises(DomainError):
        centered_moment("shifted_exponential", 0.3, 4)


def test_kappa_sup_over_scaling_sequence():
    r = kappa_p_sup("gaussian", 4, n_max=200)
    assert r["argmax_n"] == 1
    assert r["kappa"] == pytest.approx(kappa_p("gaussian", 1.0, 4))


def test_moment_bound_beta_zero_equality():
    r = moment_bound_check(0.0, 3, 0, 2, 4, Tube(0, 1))
    assert r["lhs"] == pytest.approx(r["rhs"], rel=1e-12)
    assert r["holds"]


@pytest.mark.parametrize("p", [2, 4])
@pytest.mark.parametrize("N,x,y,event", [(3, 0, 2, None), (3, 0, 2, Tube(0, 2)), (2, 0, 4, Escape(Tube(0, 1)))])
def test_moment_bound(p, N, x, y, event):
    assert moment_bound_check(0.5, N, x, y, p, event)["holds"]


def test_enumeration_site_cap():
    with pytest.raises(DomainError):
        second_moment_decompose(0.5, 5, 0, 2)
