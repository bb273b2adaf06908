import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wipslab import dynamics
from wipslab.dynamics import ParticleCloud, step_auxiliary, step_coupled, step_interacting
from wipslab.errors import NumericOverflowError
from wipslab.model import builtin_model, derived_constants, exact_law_linear, exact_laws_linear
from wipslab.rng import NoiseKey
from wipslab.transport import w1_to_law_1d


def test_noise_free_step_is_linear():
    spec = builtin_model("mean-field-gaussian", {"delta": 0.0, "d": 2, "A": [[0.5, 0.2], [0.1, 0.3]]})
    c = ParticleCloud(np.random.default_rng(0).normal(size=(7, 2)))
    out = step_interacting(c, spec, NoiseKey(1))
    assert np.array_equal(out.points, c.points @ spec.A.T)
    assert out.n == 1


def test_hand_evaluated_step():
    # zero noise: X' = 0.5 x + 0.1 (0 - x)
    spec = builtin_model("mean-field-gaussian", {"sigma_eps": 0.0})
    out = step_interacting(ParticleCloud(np.array([-1.0, 1.0])), spec, NoiseKey(0))
    assert np.allclose(out.points[:, 0], [-0.4, 0.4], atol=1e-15)


def test_single_particle_is_self_consistent(gauss):
    x = np.array([[0.7]])
    out = step_interacting(ParticleCloud(x), gauss, NoiseKey(5, replicate=2))
    z = gauss.noise.sample(NoiseKey(5, replicate=2, particle=0, step=1))
    assert out.points[0, 0] == pytest.approx(0.5 * 0.7 + 0.1 * z[0], abs=1e-15)


def test_input_cloud_unmodified(gauss):
    c = ParticleCloud(np.arange(4.0))
    before = c.points.copy()
    step_interacting(c, gauss, NoiseKey(0))
    assert np.array_equal(c.points, before)
    with pytest.raises(ValueError):
        c.points[0] = 1.0


def test_auxiliary_with_own_law_equals_interacting(gauss):
    c = ParticleCloud(np.random.default_rng(1).normal(size=20))
    key = NoiseKey(3, replicate=1)
    assert np.array_equal(step_auxiliary(c, c, gauss, key).points, step_interacting(c, gauss, key).points)


def test_auxiliary_noise_free_ignores_law():
    spec = builtin_model("mean-field-gaussian", {"delta": 0.0})
    c = ParticleCloud(np.linspace(-1, 1, 5))
    out = step_auxiliary(c, exact_law_linear(spec, 0), spec, NoiseKey(0))
    assert np.array_equal(out.points, 0.5 * c.points)


def test_auxiliary_gap_inequality(gauss):
    # [DERIVED] |X'-Y'| <= (e^-w + delta M)|X-Y| + delta M W1(mu_n^N, mu_n), both sides computed each step
    laws = exact_laws_linear(gauss, 30)
    x0 = gauss.initial.sample(4, 0, 300)
    X, Y = ParticleCloud(x0), ParticleCloud(x0)
    rate = math.exp(-gauss.omega) + gauss.delta * gauss.lip.M
    key = NoiseKey(4)
    for n in range(30):
        w = w1_to_law_1d(X, laws[n]).value
        X2, Y2 = step_interacting(X, gauss, key), step_auxiliary(Y, laws[n], gauss, key)
        lhs = np.abs(X2.points - Y2.points)[:, 0]
        rhs = rate * np.abs(X.points - Y.points)[:, 0] + gauss.delta * gauss.lip.M * w
        assert np.all(lhs <= rhs + 1e-12)
        X, Y = X2, Y2


def test_coupled_equal_states_stay_equal(gauss):
    c = ParticleCloud(np.random.default_rng(2).normal(size=10))
    a, b = step_coupled(c, c, None, None, gauss, NoiseKey(1))
    assert np.array_equal(a.points, b.points)


def test_coupled_noise_free_contracts_by_norm():
    spec = builtin_model("mean-field-gaussian", {"delta": 0.0, "A": 0.6})
    a = ParticleCloud(np.zeros(6))
    b = ParticleCloud(np.linspace(1, 3, 6))
    g0 = np.mean(np.abs(a.points - b.points))
    a, b = step_coupled(a, b, None, None, spec, NoiseKey(0))
    assert np.mean(np.abs(a.points - b.points)) == pytest.approx(0.6 * g0, rel=1e-14)


def test_coupled_gap_decay_below_chi(gauss):
    # [DERIVED] fitted decay of the mean coupled gap vs chi from the constants
    from wipslab.model import InitialLawSpec
    other = InitialLawSpec("iid", [-1.0], [[4.0]])
    gaps = np.zeros((10, 51))

    def obs(n, X, Y):
        gaps[:, n] = np.abs(X - Y).mean(axis=(1, 2))

    dynamics.run_batch(gauss, 200, 50, 6, 10, "coupled", initial_b=other, observer=obs)
    slopes = [np.polyfit(np.arange(51), np.log(g), 1)[0] for g in gaps]
    rate = math.exp(np.mean(slopes))
    se = rate * np.std(slopes, ddof=1) / math.sqrt(len(slopes))
    assert rate <= derived_constants(gauss).chi + 3 * se


def test_zero_horizon(gauss):
    tr = dynamics.simulate(gauss, 10, 0, seed=1)
    assert len(tr) == 1 and tr.clouds[0].n == 0


def test_same_seed_identical_bits(gauss, tmp_path):
    a = dynamics.simulate(gauss, 50, 20, seed=9)
    b = dynamics.simulate(gauss, 50, 20, seed=9)
    assert all(np.array_equal(x.points, y.points) for x, y in zip(a.clouds, b.clouds))
    pa, _ = dynamics.save_trajectories([a], str(tmp_path / "a"))
    pb, _ = dynamics.save_trajectories([b], str(tmp_path / "b"))
    assert open(pa, "rb").read() == open(pb, "rb").read()
    back = dynamics.load_trajectories(pa)
    assert np.array_equal(back[0][20], a[20].points)


def test_batch_matches_single_replicates(gauss):
    st_ = dynamics.run_batch(gauss, 30, 5, 2, [3, 7])
    for k, r in enumerate((3, 7)):
        tr = dynamics.simulate(gauss, 30, 5, 2, replicate=r, keep="last")
        assert np.array_equal(st_.X[k], tr.clouds[-1].points)


def test_moment_bound(gauss):
    # [DERIVED] E|X_n| <= g^n E|X_0| + delta c0 / (1 - g), g = ||A|| + 2 delta sigma
    g = gauss.norm_A + 2 * gauss.delta * gauss.lip.sigma
    m0 = gauss.initial.abs_moment(1.0)
    c0 = gauss.lip.c0
    N, T = 10_000, 100
    prev = None

    def obs(n, X, Y):
        nonlocal prev
        a = np.abs(X[0, :, 0])
        mean, se = a.mean(), a.std(ddof=1) / math.sqrt(N)
        assert mean <= g ** n * m0 + gauss.delta * c0 / (1 - g) + 3 * se
        if prev is not None:
            assert mean <= g * prev[0] + gauss.delta * c0 + 3 * math.hypot(se, g * prev[1])
        prev = (mean, se)

    dynamics.run_batch(gauss, N, T, 0, 1, observer=obs)


def test_reference_cloud_close_to_oracle(gauss):
    # [DERIVED] exact Gaussian law as oracle
    laws = exact_laws_linear(gauss, 100)
    tr = dynamics.propagate_reference(gauss, 100_000, 100, seed=0)
    worst = max(w1_to_law_1d(c, laws[c.n]).value for c in tr.clouds)
    assert worst <= 5 / math.sqrt(100_000)


def test_reference_point_mass_noise_free():
    spec = builtin_model("mean-field-gaussian", {"delta": 0.0, "m0": 2.0, "s0": 0.0})
    tr = dynamics.propagate_reference(spec, 1000, 6, seed=0)
    for c in tr.clouds:
        assert np.all(c.points == 2.0 * 0.5 ** c.n)


def test_reference_single_particle(gauss):
    tr = dynamics.propagate_reference(gauss, 1, 4, seed=0)
    assert all(c.N == 1 for c in tr.clouds)


@settings(max_examples=25, deadline=None)
@given(perm=st.permutations(list(range(8))))
def test_exchangeability(perm):
    spec = builtin_model("mean-field-gaussian", {"d": 2, "A": 0.4})
    base = dynamics.simulate(spec, 8, 6, seed=11)
    permuted = dynamics.simulate(spec, 8, 6, seed=11, particles=np.array(perm))
    for a, b in zip(base.clouds, permuted.clouds):
        assert np.allclose(b.points, a.points[perm], rtol=0, atol=1e-14)


def test_overflow_names_particle_and_step():
    spec = builtin_model("mean-field-gaussian", {"A": 1e200})
    with pytest.raises(NumericOverflowError) as exc:
        dynamics.simulate(spec, 4, 10, seed=0)
    assert exc.value.step >= 1 and 0 <= exc.value.particle < 4
