import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from wipslab import model
from wipslab.errors import DegenerateInteractionError, InvalidSpecError, RegimeError, UnsupportedOracleError
from wipslab.model import builtin_model, derived_constants, exact_law_linear, validate_model


def test_default_regime_and_a0(gauss):
    # [TRIVIAL] a0 = (1 - e^-omega) / (2 sigma) with omega = ln 2, sigma = 1
    rep = validate_model(gauss)
    assert rep.omega == pytest.approx(math.log(2), abs=1e-15)
    assert rep.constants.a0 == pytest.approx(0.25, abs=1e-12)
    assert rep.th2_regime


def test_large_step_leaves_regime():
    rep = validate_model(builtin_model("mean-field-gaussian", {"delta": 0.3}))
    assert not rep.th2_regime


def test_missing_M_diagnostic(gauss):
    spec = dataclasses.replace(gauss, lip=dataclasses.replace(gauss.lip, M=None))
    rep = validate_model(spec, gamma0=0.05, gamma=0.2)
    assert not rep.th6_regime and not rep.thm6_regime
    assert "A7 unavailable: no interaction bound M declared" in rep.diagnostics
    assert rep.assumptions["A7"] is False and rep.assumptions["A5"] is None


def test_derived_constants_examples(gauss):
    # [TRIVIAL] chi = e^-omega + 2 delta sigma, theta = (1 - 2 sigma gamma0) / chi
    dc = derived_constants(gauss, gamma0=0.05)
    assert dc.chi == pytest.approx(0.7, abs=1e-12)
    assert dc.a0 == pytest.approx(0.25, abs=1e-12)
    assert dc.theta_rate == pytest.approx(9 / 7, abs=1e-12)


def test_a_alpha_example():
    # [TRIVIAL] omega = ln 4, alpha = 1, sigma1 = 1: (1/4 - 1/16) / 2
    spec = builtin_model("mean-field-gaussian", {"A": 0.25, "alpha": 1.0})
    assert derived_constants(spec).a_alpha == pytest.approx(0.09375, abs=1e-12)


def test_derived_constants_pure(gauss):
    assert derived_constants(gauss, 0.05) == derived_constants(gauss, 0.05)


def test_degenerate_and_regime_errors(gauss):
    with pytest.raises(DegenerateInteractionError):
        derived_constants(builtin_model("independent-gaussian"))
    with pytest.raises(RegimeError):
        derived_constants(gauss, gamma0=0.3)
    with pytest.raises(RegimeError):
        validate_model(gauss, gamma0=0.05, gamma=0.6)


@settings(max_examples=80, deadline=None)
@given(a=st.floats(0.01, 0.99), delta=st.floats(0.0, 2.0), kappa=st.floats(0.05, 3.0))
def test_regime_iff_chi_below_one(a, delta, kappa):
    spec = builtin_model("mean-field-gaussian", {"A": a, "delta": delta, "kappa": kappa})
    assert validate_model(spec).th2_regime == (derived_constants(spec).chi < 1)


def test_gaussian_builtin_c0_by_quadrature(gauss):
    # [DERIVED] half-normal mean by numerical integration
    c0, _ = integrate.quad(lambda z: abs(z) * stats.norm.pdf(z), -np.inf, np.inf)
    assert gauss.lip.c0 == pytest.approx(c0, abs=1e-10)
    assert gauss.lip.sigma == gauss.lip.M == 1.0


def test_bounded_builtin_noise(bounded):
    z = bounded.noise.transform(np.random.default_rng(0).uniform(size=(10_000, 1)))
    assert np.max(np.abs(z)) <= 1.0
    assert validate_model(bounded).assumptions["A7"]
    assert bounded.lip.c0 == pytest.approx(0.5, abs=1e-12)
    for e in (0.01, 5.0, 100.0):
        assert builtin_model("mean-field-bounded", {"exp_alpha": e}).lip.exp_alpha == e


def test_unknown_builtin_and_params():
    with pytest.raises(InvalidSpecError):
        builtin_model("nope")
    with pytest.raises(InvalidSpecError):
        builtin_model("mean-field-gaussian", {"kapa": 1})


def test_exact_law_one_step():
    # [DERIVED] one step of m' = A m, s' = (A - delta kappa)^2 s + delta^2 sigma_eps^2
    spec = builtin_model("mean-field-gaussian", {"s0": 0.0})
    law = exact_law_linear(spec, 1)
    assert law.mean[0] == pytest.approx(0.5, abs=1e-15)
    assert law.cov[0, 0] == pytest.approx(0.01, abs=1e-15)


def test_exact_law_limit_geometric_series(gauss):
    # [DERIVED] stationary variance as the series sum_j 0.16^j * 0.01
    series = sum(0.01 * 0.16 ** j for j in range(200))
    law = exact_law_linear(gauss, math.inf)
    assert law.cov[0, 0] == pytest.approx(series, rel=1e-12)
    assert law.cov[0, 0] == pytest.approx(0.01 / 0.84, rel=1e-12)


def test_exact_law_noise_free():
    A = np.array([[0.5, 0.1], [0.0, 0.3]])
    spec = builtin_model("mean-field-gaussian", {"A": A.tolist(), "d": 2, "delta": 0.0, "m0": [1.0, -2.0]})
    law = exact_law_linear(spec, 4)
    An = np.linalg.matrix_power(A, 4)
    assert np.allclose(law.mean, An @ np.array([1.0, -2.0]), atol=1e-15)
    assert np.allclose(law.cov, An @ np.eye(2) @ An.T, atol=1e-15)


def test_exact_law_unsupported(bounded):
    with pytest.raises(UnsupportedOracleError):
        exact_law_linear(bounded, 3)


def test_lipschitz_audit_within_kappa(gauss):
    assert model.audit_lipschitz(gauss, n_probes=10_000, seed=3) <= gauss.lip.sigma * (1 + 1e-9)


def test_spec_json_round_trip(gauss, bounded):
    for spec in (gauss, bounded):
        back = model.spec_from_dict(model.spec_to_dict(spec))
        assert model.spec_hash(back) == model.spec_hash(spec)


def test_omega_override_checked():
    with pytest.raises(InvalidSpecError):
        builtin_model("mean-field-gaussian", {"omega": 2.0})
    spec = builtin_model("mean-field-gaussian", {"omega": 0.5})
    assert spec.omega == 0.5


def test_exchangeable_initial_law():
    spec = builtin_model("mean-field-gaussian", {"initial_kind": "exchangeable", "shift_sd": 2.0})
    means = np.array([spec.initial.sample(1, r, 50).mean() for r in range(400)])
    # the shared shift keeps cloud means spread out: sd close to 2, not 1/sqrt(50)
    assert 1.6 < means.std() < 2.4
    assert spec.initial.gaussian_law().cov[0, 0] == pytest.approx(5.0)


def test_initial_moment_matches_quadrature(gauss):
    val, _ = integrate.quad(lambda x: abs(x) ** 1.5 * stats.norm.pdf(x, 1, 1), -np.inf, np.inf)
    assert gauss.initial.abs_moment(1.5) == pytest.approx(val, rel=1e-4)


def test_invalid_specs():
    with pytest.raises(InvalidSpecError):
        builtin_model("mean-field-gaussian", {"delta": -0.1})
    with pytest.raises(InvalidSpecError):
        builtin_model("mean-field-gaussian", {"A": float("nan")})
    with pytest.raises(InvalidSpecError):
        model.LipschitzData(sigma=2.0, c0=1.0, alpha=0.5, sigma1_alpha=1.0, c1_alpha=1.0, M=1.0)
