import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from wipslab.bounds import (TransportBoundParams, alpha_star, boissard_tail, ell, entropy_constants,
                            exp_uniform_bound, gamma_term, iid_exp_bound, poly_step_bound,
                            poly_uniform_bound, psi, transport_alpha, truncation_constants, varsigma1)


# --- polynomial ------------------------------------------------------------------

def test_poly_step_examples():
    r = poly_step_bound(1e4, 0.5, 2.0, 1, 1, 1, 1.0, d=1)
    # [TRIVIAL] e^-625 + 1 clamps to 1
    assert r.value == 1.0 and r.vacuous and r.valid
    assert poly_step_bound(1e4, 1e9, 2.0, 1, 1, 1, 1.0).value < 1e-9
    big = poly_step_bound(1e12, 3.0, 2.0, 1, 1, 0.1, 1.0)
    assert big.value == pytest.approx(0.1 * 2.0 ** -1 / 3.0, rel=1e-12)
    assert not poly_step_bound(10, 0.5, 2.0, 1, 1, 1, 1.0).valid
    with pytest.raises(ValueError):
        poly_step_bound(10, 0.0, 1.0, 1, 1, 1, 1.0)


def test_poly_uniform_examples():
    r = poly_uniform_bound(1e6, 1.0, 1.0, 1.0, 1, 0.0)
    assert r.value == pytest.approx(1e-2, abs=1e-15)
    assert poly_uniform_bound(1e6, 1.0, 1.0, 1.0, 1, 0.05).value == pytest.approx(0.06, abs=1e-15)
    assert poly_uniform_bound(1e300, 1.0, 1.0, 1.0, 1, 0.05).value == pytest.approx(0.05, abs=1e-12)
    a = poly_uniform_bound(1e9, 1.0, 1.0, 1.0, 1, 0.0).value
    b = poly_uniform_bound(1e9, 0.5, 1.0, 1.0, 1, 0.0).value
    assert b == pytest.approx(4 * a, rel=1e-12)


def test_exp_uniform_examples():
    assert exp_uniform_bound(1e3, 3.0, 1.0, 1, 0.0).value == pytest.approx(math.exp(-10.0), rel=1e-12)
    assert exp_uniform_bound(256, 1.0, 1.0, 2, 0.0).value == pytest.approx(math.exp(-4.0), rel=1e-12)
    assert not exp_uniform_bound(100, 1e-3, 1.0, 1, 0.0).valid
    with pytest.raises(ValueError):
        exp_uniform_bound(100, 1.0, 1.0, 0, 0.0)


def test_iid_exp_examples():
    assert iid_exp_bound(100, 0.5, 2.0, 0.1, varsigma=1.0).value == pytest.approx(2 * math.exp(-2.5), rel=1e-12)
    assert iid_exp_bound(10, 1.0, 1.0, 0.3, varsigma=1.0).value == pytest.approx(math.exp(-3.0), rel=1e-12)
    assert iid_exp_bound(10, 2.0, 1.0, 0.3, varsigma=1.0).value == pytest.approx(math.exp(-6.0), rel=1e-12)
    assert iid_exp_bound(10, 2.0, 1.0, 0.3, varsigma=1.0, gaussian_moment=True).value == \
        pytest.approx(math.exp(-12.0), rel=1e-12)
    assert not iid_exp_bound(10, 2.0, 1.0, 0.3).valid
    assert not iid_exp_bound(10, 2.0, 1.0, 0.3, varsigma=50.0).valid
    with pytest.raises(ValueError):
        iid_exp_bound(10, 1.0, 1.0, 0.0)


@pytest.mark.parametrize("eps", [0.05, 0.3, 1.0, 4.0])
def test_bounds_nonincreasing_in_N(eps):
    Ns = np.logspace(0, 12, 60)
    for f in (lambda N: poly_step_bound(N, eps, 2.0, 1, 0.01, 1, 0.5),
              lambda N: poly_uniform_bound(N, eps, 1.0, 0.5, 1, 0.01),
              lambda N: exp_uniform_bound(N, eps, 1.0, 1, 0.01),
              lambda N: iid_exp_bound(N, eps, 2.0, 0.1, varsigma=1.0)):
        vals = [f(N).value for N in Ns]
        assert all(0 <= v <= 1 for v in vals)
        assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_truncation_constants_d1():
    c = truncation_constants(1, 0.5, 0.5, 2.0, 1.0)
    k1 = math.log(3) * 16 + 1
    assert c["k1"] == pytest.approx(k1, rel=1e-15)
    assert c["a1"] == pytest.approx(3 * 576 * k1, rel=1e-15)
    assert c["a2"] == 1 / 576
    assert c["B"] == pytest.approx(0.5 * 2.0 + 2.0 / 0.5, rel=1e-15)
    assert c["a3"] == pytest.approx(12 * 5.0, rel=1e-15)
    with pytest.raises(ValueError):
        truncation_constants(1, 0.5, 1.0, 1.0, 1.0)


# --- transport machinery --------------------------------------------------------------

def test_alpha_examples():
    assert transport_alpha(0.0, 3.0) == 0.0
    assert transport_alpha(-1.0, 3.0) == 0.0
    assert transport_alpha(2.0, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert alpha_star(0.0, 2.0) == 0.0
    assert alpha_star(0.5, 2.0) == math.inf


@settings(max_examples=1000, deadline=None)
@given(st.floats(0, 5), st.floats(0, 100), st.floats(0.1, 10))
def test_fenchel_young(s, t, C):
    assert transport_alpha(t, C) + alpha_star(s, C) >= s * t - 1e-9 * (1 + s * t)


@pytest.mark.parametrize("s,C", [(0.1, 1.0), (0.3, 2.0), (0.05, 6.2), (0.9, 1.0)])
def test_alpha_star_against_numeric_sup(s, C):
    # [DERIVED] numerical maximization of the concave supremand
    k = s * C
    t_hi = 100 * C / (1 - k) ** 2
    res = minimize_scalar(lambda t: -(s * t - transport_alpha(t, C)), bounds=(0, t_hi), method="bounded",
                          options={"xatol": 1e-12 * t_hi})
    assert alpha_star(s, C) == pytest.approx(-res.fun, rel=1e-8)


def test_ell_psi_examples():
    assert ell(1.0) == 0.0
    assert ell(math.e) == pytest.approx(1.0, abs=1e-15)
    assert ell(0.0) == 1.0
    assert psi(math.e) == pytest.approx(math.e * math.log(2), abs=1e-15)
    with pytest.raises(ValueError):
        psi(1.0)


def test_entropy_domain_flag():
    e = entropy_constants(50.0, 1.0)
    assert not e.domain_ok and e.C == math.inf
    ok = entropy_constants(10.0, 1.0)
    p = 3.2 * math.log(2 * (3.2 * math.log(3.2) - 3.2 + 1))
    assert ok.psi == pytest.approx(p, rel=1e-14)
    assert ok.log_C == pytest.approx(math.log(2 * (1 + p) * 2 ** p), rel=1e-14)


def _gamma_closed(log_C, N, C):
    # stationary point k = 2r / (1 + 2r), r = sqrt(L / N), gives C (r + r^2)
    r = math.sqrt(max(log_C, 0.0) / N)
    return C * (r + r * r)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 500), st.floats(1, 1e9), st.floats(0.1, 20))
def test_gamma_closed_form_and_monotone(L, N, C):
    g = gamma_term(L, N, C)
    assert g == pytest.approx(_gamma_closed(L, N, C), rel=1e-8)
    assert gamma_term(L, 2 * N, C) <= g * (1 + 1e-9)


def test_gamma_edge_cases():
    assert gamma_term(0.0, 10, 1.0) == 0.0
    assert gamma_term(math.inf, 10, 1.0) == math.inf


# --- Boissard tail -------------------------------------------------------------------------

def test_boissard_vacuous_when_gamma_large():
    p = TransportBoundParams(zeta0=1.0)
    r = boissard_tail(2.0, 10.0, p)
    assert r.value == 1.0 and r.vacuous
    r = boissard_tail(1e6, 50.0, p)
    assert r.vacuous and r.constants["domain_ok"] is False


def test_boissard_vanishes_for_large_N():
    p = TransportBoundParams(zeta0=1.0)
    vals = [boissard_tail(N, 10.0, p).value for N in (1e2, 1e3, 1e5)]
    assert vals[0] < 1 and vals[-1] == 0.0
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_boissard_linear_regime():
    for zeta in (0.5, 1.0, 2.0, 5.0):
        p = TransportBoundParams(zeta0=zeta)
        C0 = p.C0
        assert C0 == pytest.approx(2 * math.sqrt(2) * (1.5 + math.log(2)) / zeta, rel=1e-15)
        for mult in (0.5, 1.0, 2.0, 4.0):
            t = mult * C0
            ent = entropy_constants(t, zeta)
            if not ent.domain_ok:
                continue
            # smallest power of two N with Gamma <= t / 4
            N = 1.0
            while gamma_term(ent.log_C, N, C0) > t / 4:
                N *= 2
            for n in (N, 4 * N, 64 * N):
                lhs = boissard_tail(n, t, p).value
                rhs = math.exp(-n * t / (48 * C0))
                assert lhs <= rhs * (1 + 1e-12)


# --- gate function --------------------------------------------------------------------------

def _log_C_direct(t, zeta):
    x = 32.0 / (zeta * t)
    l = x * math.log(x) - x + 1
    ps = x * math.log(2 * l)
    return math.log(2 * (1 + ps) * 2 ** ps) if ps < 1000 else math.log(2 * (1 + ps)) + ps * math.log(2)


def test_varsigma1_example():
    p = TransportBoundParams(zeta0=1.0)
    m = 0.2 * 1 / 0.1
    assert m == 2.0
    terms = [1.0, _log_C_direct(m, 1.0) / m ** 2, _log_C_direct(0.2, 1.0) / 0.04, 1.0, 1.0]
    assert varsigma1(1.0, 0.2, 0.1, 1.0, p) == pytest.approx(max(terms), rel=1e-12)


def test_varsigma1_limits():
    # a small zeta keeps large t inside the entropy domain
    q = TransportBoundParams(zeta0=1e-3)
    assert varsigma1(1e7, 1.0, 0.1, 1.0, q) == pytest.approx(1.0, abs=1e-12)
    small = [varsigma1(t, 0.2, 0.1, 1.0, TransportBoundParams(zeta0=1e6)) for t in (1e-2, 1e-3, 1e-4)]
    assert small[0] < small[1] < small[2]
    assert small[2] >= 1e8


def test_varsigma1_domain_propagates():
    assert varsigma1(1.0, 0.2, 0.1, 1.0, TransportBoundParams(zeta0=100.0)) == math.inf
    with pytest.raises(ValueError):
        varsigma1(0.0, 0.2, 0.1, 1.0, TransportBoundParams(zeta0=1.0))
